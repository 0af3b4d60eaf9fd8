#pragma once

namespace pkde {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pkde
