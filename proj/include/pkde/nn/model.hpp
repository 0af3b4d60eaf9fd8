#pragma once

// Encoder-decoder dense-prediction model. Each level halves the spatial
// resolution and doubles the channel width; the decoder mirrors it with
// nearest-neighbor upsampling, a 1x1 channel reduction, and a skip join that
// either concatenates or adds the encoder feature. A 1x1 convolution plus
// sigmoid produces the per-pixel probability map.

#include <cstdint>
#include <string>
#include <vector>

#include "pkde/json_compat.hpp"
#include "pkde/nn/ops.hpp"
#include "pkde/nn/tensor.hpp"
#include "pkde/rng.hpp"
#include "pkde/tensor_io.hpp"

namespace pkde::nn {

enum class SkipMode { concat, add };

inline const char* skip_mode_name(SkipMode m) { return m == SkipMode::concat ? "concat" : "add"; }

inline SkipMode skip_mode_from_name(const std::string& s) {
  if (s == "concat") return SkipMode::concat;
  if (s == "add") return SkipMode::add;
  throw_data("unknown skip mode: " + s);
}

struct ModelConfig {
  int in_channels = 2;  // stacked HR and OT
  int depth = 2;        // number of down/up levels
  int base_width = 8;   // channels at the first level
  SkipMode skip_mode = SkipMode::concat;

  int width_at(int level) const { return base_width << level; }

  void validate() const {
    if (in_channels < 1) throw_invalid("ModelConfig: in_channels must be >= 1");
    if (depth < 1) throw_invalid("ModelConfig: depth must be >= 1");
    if (base_width < 1) throw_invalid("ModelConfig: base_width must be >= 1");
  }

  void check_input(int h, int w) const {
    const int div = 1 << depth;
    if (h % div != 0 || w % div != 0)
      throw_invalid("ModelConfig: input " + std::to_string(h) + "x" + std::to_string(w) +
                    " not divisible by 2^depth = " + std::to_string(div));
  }
};

template <typename T>
struct Param {
  std::string name;
  Tensor4<T> value;
  Tensor4<T> grad;
  Tensor4<T> adam_m;
  Tensor4<T> adam_v;
};

// Model weights plus optimizer state; serializable and reloadable losslessly.
template <typename T>
struct ModelState {
  ModelConfig config;
  std::vector<Param<T>> params;
  int64_t step = 0;

  Param<T>& by_name(const std::string& name) {
    for (auto& p : params)
      if (p.name == name) return p;
    throw_invalid("no parameter named " + name);
  }

  void zero_grads() {
    for (auto& p : params) std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
  }

  template <typename U>
  ModelState<U> cast() const {
    ModelState<U> out;
    out.config = config;
    out.step = step;
    for (const auto& p : params) {
      Param<U> q;
      q.name = p.name;
      q.value = p.value.template cast<U>();
      q.grad = p.grad.template cast<U>();
      q.adam_m = p.adam_m.template cast<U>();
      q.adam_v = p.adam_v.template cast<U>();
      out.params.push_back(std::move(q));
    }
    return out;
  }
};

namespace detail {

template <typename T>
void push_conv(ModelState<T>& st, const std::string& name, int oc, int ic, int k) {
  Param<T> w;
  w.name = name + "_w";
  w.value = Tensor4<T>(oc, ic, k, k);
  w.grad = w.adam_m = w.adam_v = Tensor4<T>(oc, ic, k, k);
  st.params.push_back(std::move(w));
  Param<T> b;
  b.name = name + "_b";
  b.value = Tensor4<T>(1, oc, 1, 1);
  b.grad = b.adam_m = b.adam_v = Tensor4<T>(1, oc, 1, 1);
  st.params.push_back(std::move(b));
}

}  // namespace detail

// Parameter skeleton for a config; values all zero.
template <typename T = float>
ModelState<T> make_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState<T> st;
  st.config = cfg;
  int prev = cfg.in_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    detail::push_conv(st, "enc" + std::to_string(i), cfg.width_at(i), prev, 3);
    prev = cfg.width_at(i);
  }
  detail::push_conv(st, "bottleneck", cfg.width_at(cfg.depth), prev, 3);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    detail::push_conv(st, "reduce" + std::to_string(i), cfg.width_at(i), cfg.width_at(i + 1), 1);
    const int join_c = cfg.skip_mode == SkipMode::concat ? 2 * cfg.width_at(i) : cfg.width_at(i);
    detail::push_conv(st, "dec" + std::to_string(i), cfg.width_at(i), join_c, 3);
  }
  detail::push_conv(st, "head", 1, cfg.base_width, 1);
  return st;
}

// Seeded He-style fan-in initialization; biases start at zero. Each
// parameter draws from its own counter stream, so init order is irrelevant.
template <typename T = float>
ModelState<T> init_weights(const ModelConfig& cfg, uint64_t seed) {
  ModelState<T> st = make_model<T>(cfg);
  for (size_t i = 0; i < st.params.size(); ++i) {
    auto& p = st.params[i];
    if (p.name.ends_with("_b")) continue;
    const int fan_in = p.value.c * p.value.h * p.value.w;
    const bool feeds_relu = !p.name.starts_with("head");
    const double stddev = std::sqrt((feeds_relu ? 2.0 : 1.0) / double(fan_in));
    CounterRng rng(seed, stream_key({kStreamInit, uint64_t(i)}));
    for (T& v : p.value.data) v = T(stddev * rng.next_normal());
  }
  return st;
}

// Saved activations needed by the backward pass. Decoder vectors are indexed
// in execution order: position 0 is level depth-1, position depth-1 is level 0.
template <typename T>
struct Tape {
  Tensor4<T> input;
  std::vector<Tensor4<T>> enc_in;   // input to each encoder conv (level order)
  std::vector<Tensor4<T>> enc_act;  // post-ReLU skip sources (level order)
  Tensor4<T> bottleneck_in;
  Tensor4<T> bottleneck_act;
  std::vector<Tensor4<T>> up_out;      // upsampled, input to the reduce conv
  std::vector<Tensor4<T>> reduce_out;  // pre-join decoder feature
  std::vector<Tensor4<T>> join_out;    // input to the decoder conv
  std::vector<Tensor4<T>> dec_act;     // post-ReLU decoder feature
  Tensor4<T> output;                   // post-sigmoid
};

// Forward pass; records activations when `tape` is given. Output values lie
// in (0, 1). Raises a shape error naming the offending layer.
template <typename T>
Tensor4<T> forward(ModelState<T>& st, const Tensor4<T>& input, int threads = 1,
                   Tape<T>* tape = nullptr) {
  const ModelConfig& cfg = st.config;
  cfg.validate();
  if (input.c != cfg.in_channels)
    throw_invalid("forward: input has " + std::to_string(input.c) + " channels, expected " +
                  std::to_string(cfg.in_channels));
  cfg.check_input(input.h, input.w);
  ensure_finite(input, "input");

  if (tape) *tape = Tape<T>{};
  Tensor4<T> a = input;
  if (tape) tape->input = input;
  std::vector<Tensor4<T>> skips;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string name = "enc" + std::to_string(i);
    if (tape) tape->enc_in.push_back(a);
    a = conv2d_forward(a, st.by_name(name + "_w").value, st.by_name(name + "_b").value, threads);
    ensure_finite(a, "encoder conv");
    a = relu_forward(a);
    skips.push_back(a);
    if (tape) tape->enc_act.push_back(a);
    a = maxpool2_forward(a);
  }

  if (tape) tape->bottleneck_in = a;
  a = conv2d_forward(a, st.by_name("bottleneck_w").value, st.by_name("bottleneck_b").value,
                     threads);
  ensure_finite(a, "bottleneck conv");
  a = relu_forward(a);
  if (tape) tape->bottleneck_act = a;

  for (int i = cfg.depth - 1; i >= 0; --i) {
    const std::string rname = "reduce" + std::to_string(i);
    const std::string dname = "dec" + std::to_string(i);
    a = upsample2_forward(a);
    if (tape) tape->up_out.push_back(a);
    a = conv2d_forward(a, st.by_name(rname + "_w").value, st.by_name(rname + "_b").value, threads);
    ensure_finite(a, "reduce conv");
    if (tape) tape->reduce_out.push_back(a);
    const Tensor4<T>& skip = skips[size_t(i)];
    a = cfg.skip_mode == SkipMode::concat ? concat_channels(a, skip) : add_tensors(a, skip);
    if (tape) tape->join_out.push_back(a);
    a = conv2d_forward(a, st.by_name(dname + "_w").value, st.by_name(dname + "_b").value, threads);
    ensure_finite(a, "decoder conv");
    a = relu_forward(a);
    if (tape) tape->dec_act.push_back(a);
  }

  a = conv2d_forward(a, st.by_name("head_w").value, st.by_name("head_b").value, threads);
  ensure_finite(a, "head conv");
  a = sigmoid_forward(a);
  if (tape) tape->output = a;
  return a;
}

// Backward pass from the upstream gradient on the sigmoid output. Fills
// param.grad for every parameter and returns the gradient with respect to
// the input. NaN in any gradient raises a numerical error naming the layer.
template <typename T>
Tensor4<T> backward(ModelState<T>& st, const Tape<T>& tape, const Tensor4<T>& d_output,
                    int threads = 1) {
  const ModelConfig& cfg = st.config;
  st.zero_grads();

  const auto store = [&](const std::string& name, ConvGrads<T> g) {
    ensure_finite(g.dw, name.c_str());
    ensure_finite(g.db, name.c_str());
    ensure_finite(g.dx, name.c_str());
    st.by_name(name + "_w").grad = std::move(g.dw);
    st.by_name(name + "_b").grad = std::move(g.db);
    return std::move(g.dx);
  };

  Tensor4<T> d = sigmoid_backward(tape.output, d_output);
  d = store("head", conv2d_backward(tape.dec_act.back(), st.by_name("head_w").value, d, threads));

  // Walk decoder stages in reverse execution order: level 0 up to depth-1.
  std::vector<Tensor4<T>> skip_grads(size_t(cfg.depth));
  for (int level = 0; level < cfg.depth; ++level) {
    const size_t rec = size_t(cfg.depth - 1 - level);  // execution-order index
    const std::string dname = "dec" + std::to_string(level);
    const std::string rname = "reduce" + std::to_string(level);
    d = relu_backward(tape.dec_act[rec], d);
    d = store(dname,
              conv2d_backward(tape.join_out[rec], st.by_name(dname + "_w").value, d, threads));
    Tensor4<T> d_reduce, d_skip;
    if (cfg.skip_mode == SkipMode::concat) {
      split_channels(d, tape.reduce_out[rec].c, d_reduce, d_skip);
    } else {
      d_reduce = d;
      d_skip = d;
    }
    skip_grads[size_t(level)] = std::move(d_skip);
    d = store(rname,
              conv2d_backward(tape.up_out[rec], st.by_name(rname + "_w").value, d_reduce,
                              threads));
    d = upsample2_backward(d);
  }

  d = relu_backward(tape.bottleneck_act, d);
  d = store("bottleneck",
            conv2d_backward(tape.bottleneck_in, st.by_name("bottleneck_w").value, d, threads));

  for (int i = cfg.depth - 1; i >= 0; --i) {
    const std::string name = "enc" + std::to_string(i);
    d = maxpool2_backward(tape.enc_act[size_t(i)], d);
    d = add_tensors(d, skip_grads[size_t(i)]);  // skip join feeds the same activation
    d = relu_backward(tape.enc_act[size_t(i)], d);
    d = store(name, conv2d_backward(tape.enc_in[size_t(i)], st.by_name(name + "_w").value, d,
                                    threads));
  }
  return d;
}

// --- serialization -----------------------------------------------------

inline constexpr const char* kWeightsSchema = "pkde-weights-v1";

inline std::string weights_to_bytes(const ModelState<float>& st) {
  json::ordered_json header;
  header["schema"] = kWeightsSchema;
  header["config"] = {{"in_channels", st.config.in_channels},
                      {"depth", st.config.depth},
                      {"base_width", st.config.base_width},
                      {"skip_mode", skip_mode_name(st.config.skip_mode)}};
  header["step"] = st.step;
  auto names = json::ordered_json::array();
  for (const auto& p : st.params) names.push_back(p.name);
  header["params"] = names;
  const std::string htext = header.dump();

  std::string out;
  uint64_t hlen = htext.size();
  for (int i = 0; i < 8; ++i) out.push_back(char((hlen >> (8 * i)) & 0xff));
  out += htext;
  const auto append_tensor = [&out](const Tensor4<float>& t) {
    Tensor tens;
    tens.dims = {uint32_t(t.b), uint32_t(t.c), uint32_t(t.h), uint32_t(t.w)};
    tens.data = t.data;
    out += tensor_to_bytes(tens);
  };
  for (const auto& p : st.params) {
    append_tensor(p.value);
    append_tensor(p.adam_m);
    append_tensor(p.adam_v);
  }
  return out;
}

inline ModelState<float> weights_from_bytes(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 8) throw_data("weights file truncated: " + origin);
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= uint64_t(uint8_t(bytes[size_t(i)])) << (8 * i);
  if (bytes.size() < 8 + hlen) throw_data("weights header truncated: " + origin);
  json::json header;
  try {
    header = json::json::parse(bytes.substr(8, hlen));
  } catch (const std::exception& e) {
    throw_data("weights header parse error in " + origin + ": " + e.what());
  }
  if (header.at("schema").get<std::string>() != kWeightsSchema)
    throw_data("unsupported weights schema in " + origin);
  ModelConfig cfg;
  cfg.in_channels = header.at("config").at("in_channels").get<int>();
  cfg.depth = header.at("config").at("depth").get<int>();
  cfg.base_width = header.at("config").at("base_width").get<int>();
  cfg.skip_mode = skip_mode_from_name(header.at("config").at("skip_mode").get<std::string>());

  ModelState<float> st = make_model<float>(cfg);
  st.step = header.at("step").get<int64_t>();
  const auto names = header.at("params");
  if (names.size() != st.params.size()) throw_data("weights param count mismatch in " + origin);

  size_t off = 8 + hlen;
  const auto take_tensor = [&](Tensor4<float>& dst, const std::string& pname) {
    // Each record is self-delimiting: magic + rank + dims + payload.
    if (bytes.size() < off + 12) throw_data("weights tensor truncated in " + origin);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + off);
    const uint32_t rank = pkde::detail::get_u32le(p + 8);
    if (rank == 0 || rank > 8 || bytes.size() < off + 12 + 4 * size_t(rank))
      throw_data("weights tensor header corrupt in " + origin);
    size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i)
      n *= pkde::detail::get_u32le(p + 12 + 4 * i);
    const size_t rec = 12 + 4 * size_t(rank) + 4 * n;
    if (bytes.size() < off + rec) throw_data("weights tensor truncated in " + origin);
    Tensor t = tensor_from_bytes(bytes.substr(off, rec), origin + ":" + pname);
    if (t.dims.size() != 4) throw_data("weights tensor rank mismatch in " + origin);
    Tensor4<float> out(int(t.dims[0]), int(t.dims[1]), int(t.dims[2]), int(t.dims[3]));
    out.data = std::move(t.data);
    if (!out.same_shape(dst))
      throw_data("weights tensor shape mismatch for " + pname + " in " + origin);
    dst = std::move(out);
    off += rec;
  };
  for (size_t i = 0; i < st.params.size(); ++i) {
    if (names[i].get<std::string>() != st.params[i].name)
      throw_data("weights param order mismatch in " + origin);
    take_tensor(st.params[i].value, st.params[i].name);
    take_tensor(st.params[i].adam_m, st.params[i].name);
    take_tensor(st.params[i].adam_v, st.params[i].name);
  }
  if (off != bytes.size()) throw_data("trailing bytes in weights file: " + origin);
  return st;
}

inline void save_weights(const std::string& path, const ModelState<float>& st) {
  write_file_bytes(path, weights_to_bytes(st));
}

inline ModelState<float> load_weights(const std::string& path) {
  return weights_from_bytes(read_file_bytes(path), path);
}

}  // namespace pkde::nn
