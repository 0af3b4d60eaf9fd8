#pragma once

// Thin alias so headers do not spell the vendored path everywhere.

#include <json.hpp>

namespace pkde::json {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

}  // namespace pkde::json
