#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

namespace pagan::nn {

enum class LayerKind : uint32_t {
  conv2d = 0,
  conv2d_transpose,
  leaky_relu,
  relu,
  tanh,
  sigmoid,
  batch_norm,
  dropout,
  concat_skip,
  add_skip,
  max_pool,
  upsample_nearest,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv2d_transpose: return "conv2d_transpose";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::concat_skip: return "concat_skip";
    case LayerKind::add_skip: return "add_skip";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::upsample_nearest: return "upsample_nearest";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::conv2d;
  int filters = 0;   // conv / conv_transpose output channels
  int kernel = 0;    // conv / conv_transpose / max_pool
  int stride = 1;
  int padding = 0;
  float slope = 0.2f;   // leaky_relu
  float rate = 0.5f;    // dropout
  int factor = 2;       // upsample_nearest
  int skip_from = -1;   // concat_skip / add_skip producer layer index
  int is_output = 0;    // head layer, excluded from the hidden-layer count
};

// A trainable network: an ordered layer list with skip references, plus a
// flat, stable enumeration of parameter tensors (conv w/b, bn gamma/beta)
// and batch-norm running-statistic buffers.
template <typename T>
struct ModelGraph {
  std::vector<LayerSpec> layers;
  std::vector<Tensor<T>> params;
  std::vector<std::vector<T>> buffers;      // bn: [mean, var] per bn layer
  std::vector<int> param_offset;            // per layer; -1 = stateless
  std::vector<int> buffer_offset;           // per layer; -1 = none
  int in_channels = 1;
  int side_multiple = 1;
  bool training = false;
  Rng dropout_rng{0};

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }

  void set_training(bool on) { training = on; }
  void seed_dropout(uint64_t seed) { dropout_rng = make_rng(seed, 0x9d0); }

  int hidden_layer_count() const {
    int n = 0;
    for (const auto& l : layers)
      if ((l.kind == LayerKind::conv2d || l.kind == LayerKind::conv2d_transpose) && !l.is_output)
        ++n;
    return n;
  }

  // Receptive field of one output unit for chain topologies (no skips),
  // e.g. the PatchGAN discriminator.
  int receptive_field() const {
    int rf = 1;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
      if (it->kind == LayerKind::conv2d || it->kind == LayerKind::max_pool)
        rf = (rf - 1) * it->stride + it->kernel;
    }
    return rf;
  }

  Tensor<T> forward(const Tensor<T>& input) {
    if (input.shape().size() != 4 || input.dim(1) != in_channels)
      throw ShapeError("model: expected input (N," + std::to_string(in_channels) +
                       ",H,W), got " + detail::shape_str(input.shape()));
    if (input.dim(2) % side_multiple != 0 || input.dim(3) % side_multiple != 0)
      throw ShapeError("model: input side must be divisible by " +
                       std::to_string(side_multiple));

    std::vector<Tensor<T>> outs(layers.size());
    Tensor<T> cur = input;
    for (size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      try {
        switch (l.kind) {
          case LayerKind::conv2d:
            cur = conv2d(cur, params[param_offset[i]], params[param_offset[i] + 1], l.stride,
                         l.padding);
            break;
          case LayerKind::conv2d_transpose:
            cur = conv2d_transpose(cur, params[param_offset[i]], params[param_offset[i] + 1],
                                   l.stride, l.padding);
            break;
          case LayerKind::leaky_relu:
            cur = leaky_relu(cur, static_cast<T>(l.slope));
            break;
          case LayerKind::relu:
            cur = relu(cur);
            break;
          case LayerKind::tanh:
            cur = tanh_act(cur);
            break;
          case LayerKind::sigmoid:
            cur = sigmoid_act(cur);
            break;
          case LayerKind::batch_norm:
            cur = batch_norm(cur, params[param_offset[i]], params[param_offset[i] + 1],
                             &buffers[buffer_offset[i]], &buffers[buffer_offset[i] + 1],
                             training);
            break;
          case LayerKind::dropout:
            cur = dropout(cur, static_cast<T>(l.rate), training, dropout_rng);
            break;
          case LayerKind::concat_skip:
            cur = concat_channels(cur, outs[l.skip_from]);
            break;
          case LayerKind::add_skip:
            cur = add(cur, l.skip_from >= 0 ? outs[l.skip_from] : input);
            break;
          case LayerKind::max_pool:
            cur = max_pool2d(cur, l.kernel, l.stride);
            break;
          case LayerKind::upsample_nearest:
            cur = upsample_nearest(cur, l.factor);
            break;
        }
      } catch (const ShapeError& e) {
        throw ShapeError("layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) +
                         "): " + e.what());
      }
      outs[i] = cur;
    }
    return cur;
  }

  Tensor<T> operator()(const Tensor<T>& input) { return forward(input); }
};

// ---------------------------------------------------------------------------
// Builder

namespace detail {

template <typename T>
class GraphBuilder {
 public:
  GraphBuilder(int in_channels, int side_multiple, uint64_t seed)
      : rng_(make_rng(seed, 0x6b)), normal_(0.0, 1.0) {
    g_.in_channels = in_channels;
    g_.side_multiple = side_multiple;
    cur_channels_ = in_channels;
  }

  int conv(int filters, int kernel, int stride, int padding, bool output = false) {
    LayerSpec l{LayerKind::conv2d, filters, kernel, stride, padding};
    l.is_output = output ? 1 : 0;
    push_param({filters, cur_channels_, kernel, kernel});
    push_bias(filters);
    cur_channels_ = filters;
    return push_layer(l, static_cast<int>(g_.params.size()) - 2, -1);
  }

  int conv_transpose(int filters, int kernel, int stride, int padding, bool output = false) {
    LayerSpec l{LayerKind::conv2d_transpose, filters, kernel, stride, padding};
    l.is_output = output ? 1 : 0;
    push_param({cur_channels_, filters, kernel, kernel});
    push_bias(filters);
    cur_channels_ = filters;
    return push_layer(l, static_cast<int>(g_.params.size()) - 2, -1);
  }

  int batch_norm() {
    LayerSpec l{LayerKind::batch_norm};
    const int c = cur_channels_;
    std::vector<T> gamma(c), beta(c, T(0));
    for (auto& v : gamma) v = T(1) + static_cast<T>(normal_(rng_) * 0.02);
    g_.params.push_back(Tensor<T>::from_data({c}, std::move(gamma), true));
    g_.params.push_back(Tensor<T>::from_data({c}, std::move(beta), true));
    g_.buffers.emplace_back(c, T(0));  // running mean
    g_.buffers.emplace_back(c, T(1));  // running var
    return push_layer(l, static_cast<int>(g_.params.size()) - 2,
                      static_cast<int>(g_.buffers.size()) - 2);
  }

  int leaky_relu(float slope = 0.2f) {
    LayerSpec l{LayerKind::leaky_relu};
    l.slope = slope;
    return push_layer(l, -1, -1);
  }
  int relu() { return push_layer({LayerKind::relu}, -1, -1); }
  int tanh() { return push_layer({LayerKind::tanh}, -1, -1); }
  int sigmoid() { return push_layer({LayerKind::sigmoid}, -1, -1); }

  int dropout(float rate) {
    LayerSpec l{LayerKind::dropout};
    l.rate = rate;
    return push_layer(l, -1, -1);
  }

  int concat_skip(int from_layer) {
    LayerSpec l{LayerKind::concat_skip};
    l.skip_from = from_layer;
    cur_channels_ += channels_at_[from_layer];
    return push_layer(l, -1, -1);
  }

  int add_skip(int from_layer) {
    LayerSpec l{LayerKind::add_skip};
    l.skip_from = from_layer;
    return push_layer(l, -1, -1);
  }

  int max_pool(int kernel, int stride) {
    LayerSpec l{LayerKind::max_pool};
    l.kernel = kernel;
    l.stride = stride;
    return push_layer(l, -1, -1);
  }

  int upsample(int factor) {
    LayerSpec l{LayerKind::upsample_nearest};
    l.factor = factor;
    return push_layer(l, -1, -1);
  }

  int channels() const { return cur_channels_; }
  int last_layer() const { return static_cast<int>(g_.layers.size()) - 1; }
  ModelGraph<T> take() { return std::move(g_); }

 private:
  int push_layer(LayerSpec l, int param_off, int buffer_off) {
    g_.layers.push_back(l);
    g_.param_offset.push_back(param_off);
    g_.buffer_offset.push_back(buffer_off);
    channels_at_.push_back(cur_channels_);
    return last_layer();
  }
  void push_param(std::vector<int> shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<T> w(static_cast<size_t>(n));
    for (auto& v : w) v = static_cast<T>(normal_(rng_) * 0.02);
    g_.params.push_back(Tensor<T>::from_data(std::move(shape), std::move(w), true));
  }
  void push_bias(int n) {
    g_.params.push_back(Tensor<T>::zeros({n}, true));
  }

  ModelGraph<T> g_;
  std::vector<int> channels_at_;  // output channels per layer index
  int cur_channels_;
  Rng rng_;
  std::normal_distribution<double> normal_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Reference architectures

// Pix2Pix-style U-Net: stride-2 conv encoder with leaky-relu, transpose-conv
// decoder with relu and skip concatenations, tanh head. Dropout in the first
// two decoder blocks doubles as the generator's noise input.
template <typename T>
ModelGraph<T> build_unet_generator(int base_filters = 16, int depth = 4, uint64_t seed = 0,
                                   int in_channels = 1) {
  if (depth < 1) throw InvalidArgument("build_unet_generator: depth must be >= 1");
  if (base_filters < 1) throw InvalidArgument("build_unet_generator: base_filters must be >= 1");
  detail::GraphBuilder<T> b(in_channels, 1 << depth, seed);

  std::vector<int> enc_act;  // post-activation layer index per encoder level
  for (int i = 0; i < depth; ++i) {
    b.conv(base_filters << i, 4, 2, 1);
    if (i > 0) b.batch_norm();
    enc_act.push_back(b.leaky_relu(0.2f));
  }
  for (int i = depth - 1; i >= 1; --i) {
    b.conv_transpose(base_filters << (i - 1), 4, 2, 1);
    b.batch_norm();
    if (i >= depth - 2) b.dropout(0.5f);
    b.relu();
    b.concat_skip(enc_act[i - 1]);
  }
  b.conv_transpose(1, 4, 2, 1, /*output=*/true);
  b.tanh();
  return b.take();
}

// Residual U-Net: pre-activation residual blocks at every scale (so a
// zero-weight block is exactly the identity), max-pool downsampling,
// nearest-neighbor upsampling, skip concatenations across the bottleneck.
// Filter widths start at base_filters and double per encoder level.
template <typename T>
ModelGraph<T> build_residual_unet_generator(int base_filters = 8, int depth = 4,
                                            uint64_t seed = 0, int in_channels = 1) {
  if (depth < 1) throw InvalidArgument("build_residual_unet_generator: depth must be >= 1");
  detail::GraphBuilder<T> b(in_channels, 1 << depth, seed);

  auto res_block = [&](int ch) {
    const int block_in = b.last_layer();
    b.batch_norm();
    b.relu();
    b.conv(ch, 3, 1, 1);
    b.batch_norm();
    b.relu();
    b.conv(ch, 3, 1, 1);
    return b.add_skip(block_in);
  };

  b.conv(base_filters, 3, 1, 1);  // stem
  std::vector<int> enc_act;
  int ch = base_filters;
  for (int i = 0; i < depth; ++i) {
    enc_act.push_back(res_block(ch));
    b.max_pool(2, 2);
    ch *= 2;
    b.conv(ch, 3, 1, 1);
  }
  res_block(ch);  // bottleneck
  for (int i = depth - 1; i >= 0; --i) {
    ch /= 2;
    b.upsample(2);
    b.conv(ch, 3, 1, 1);
    b.concat_skip(enc_act[i]);
    b.conv(ch, 3, 1, 1);
    res_block(ch);
  }
  b.conv(1, 3, 1, 1, /*output=*/true);
  b.tanh();
  return b.take();
}

// PatchGAN discriminator: five hidden conv layers (stride 2 on the first
// three) over the 2-channel (condition, candidate) stack, then a 1-channel
// logit-grid head. No sigmoid; losses work on logits.
template <typename T>
ModelGraph<T> build_patchgan_discriminator(int base_filters = 16, uint64_t seed = 0) {
  detail::GraphBuilder<T> b(2, 8, seed);
  const int f = base_filters;
  b.conv(f, 4, 2, 1);
  b.leaky_relu(0.2f);
  b.conv(2 * f, 4, 2, 1);
  b.batch_norm();
  b.leaky_relu(0.2f);
  b.conv(4 * f, 4, 2, 1);
  b.batch_norm();
  b.leaky_relu(0.2f);
  b.conv(8 * f, 4, 1, 1);
  b.batch_norm();
  b.leaky_relu(0.2f);
  b.conv(8 * f, 4, 1, 1);
  b.batch_norm();
  b.leaky_relu(0.2f);
  b.conv(1, 4, 1, 1, /*output=*/true);
  return b.take();
}

// ---------------------------------------------------------------------------
// Checkpoints (PAMG): magic | u32 version | u32 in_channels | u32
// side_multiple | u32 layer count | per-layer spec | parameter blobs (f32, in
// enumeration order, shape-tagged) | batch-norm running buffers.

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelGraph<T>& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("PAMG: cannot open for writing: " + path.string());
  auto put_u32 = [&](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_i32 = [&](int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_f32 = [&](float v) { os.write(reinterpret_cast<const char*>(&v), 4); };

  os.write("PAMG", 4);
  put_u32(1u);
  put_u32(static_cast<uint32_t>(g.in_channels));
  put_u32(static_cast<uint32_t>(g.side_multiple));
  put_u32(static_cast<uint32_t>(g.layers.size()));
  for (const auto& l : g.layers) {
    put_u32(static_cast<uint32_t>(l.kind));
    put_i32(l.filters);
    put_i32(l.kernel);
    put_i32(l.stride);
    put_i32(l.padding);
    put_f32(l.slope);
    put_f32(l.rate);
    put_i32(l.factor);
    put_i32(l.skip_from);
    put_i32(l.is_output);
  }
  put_u32(static_cast<uint32_t>(g.params.size()));
  for (const auto& p : g.params) {
    put_u32(static_cast<uint32_t>(p.shape().size()));
    for (int d : p.shape()) put_u32(static_cast<uint32_t>(d));
    for (T v : p.values()) put_f32(static_cast<float>(v));
  }
  put_u32(static_cast<uint32_t>(g.buffers.size()));
  for (const auto& buf : g.buffers) {
    put_u32(static_cast<uint32_t>(buf.size()));
    for (T v : buf) put_f32(static_cast<float>(v));
  }
  if (!os) throw IoError("PAMG: write failed: " + path.string());
}

template <typename T>
ModelGraph<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("PAMG: cannot open: " + path.string());
  const std::string p = path.string();
  auto get_u32 = [&]() {
    uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("PAMG: truncated file: " + p);
    return v;
  };
  auto get_i32 = [&]() {
    int32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("PAMG: truncated file: " + p);
    return v;
  };
  auto get_f32 = [&]() {
    float v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("PAMG: truncated file: " + p);
    return v;
  };

  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PAMG", 4) != 0)
    throw IoError("PAMG: bad magic in " + p);
  if (get_u32() != 1u) throw IoError("PAMG: unsupported version in " + p);

  ModelGraph<T> g;
  g.in_channels = static_cast<int>(get_u32());
  g.side_multiple = static_cast<int>(get_u32());
  const uint32_t n_layers = get_u32();
  int param_cursor = 0, buffer_cursor = 0;
  for (uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(get_u32());
    l.filters = get_i32();
    l.kernel = get_i32();
    l.stride = get_i32();
    l.padding = get_i32();
    l.slope = get_f32();
    l.rate = get_f32();
    l.factor = get_i32();
    l.skip_from = get_i32();
    l.is_output = get_i32();
    g.layers.push_back(l);
    const bool has_params = l.kind == LayerKind::conv2d ||
                            l.kind == LayerKind::conv2d_transpose ||
                            l.kind == LayerKind::batch_norm;
    g.param_offset.push_back(has_params ? param_cursor : -1);
    if (has_params) param_cursor += 2;
    const bool has_buffers = l.kind == LayerKind::batch_norm;
    g.buffer_offset.push_back(has_buffers ? buffer_cursor : -1);
    if (has_buffers) buffer_cursor += 2;
  }
  const uint32_t n_params = get_u32();
  if (static_cast<int>(n_params) != param_cursor)
    throw IoError("PAMG: parameter count disagrees with layer specs in " + p);
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint32_t ndim = get_u32();
    std::vector<int> shape(ndim);
    int64_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(get_u32());
      n *= d;
    }
    std::vector<T> data(static_cast<size_t>(n));
    for (auto& v : data) v = static_cast<T>(get_f32());
    g.params.push_back(Tensor<T>::from_data(std::move(shape), std::move(data), true));
  }
  const uint32_t n_buffers = get_u32();
  for (uint32_t i = 0; i < n_buffers; ++i) {
    const uint32_t len = get_u32();
    std::vector<T> buf(len);
    for (auto& v : buf) v = static_cast<T>(get_f32());
    g.buffers.push_back(std::move(buf));
  }
  return g;
}

}  // namespace pagan::nn
