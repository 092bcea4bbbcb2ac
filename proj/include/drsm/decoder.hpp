#pragma once

// Positional encoding and the geometry / color MLPs.
//
// MLPs run column-batched: one column per sample, so a ray batch becomes a
// handful of GEMMs.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "drsm/core.hpp"

namespace drsm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct EncoderConfig {
  int point_frequencies = 4;
  int direction_frequencies = 4;

  void validate() const {
    if (point_frequencies < 0 || direction_frequencies < 0)
      throw ConfigError("encoder config: frequency counts must be >= 0");
  }
};

inline constexpr int kPointDims = 3;      // spatial (x, y, z); time enters only through the planes
inline constexpr int kDirectionDims = 3;  // unit view direction

inline int encoded_width(int dims, int frequencies) { return dims * (2 * frequencies + 1); }

/// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]
/// per component, components concatenated.
template <class S>
void posenc_into(const S* x, int dims, int frequencies, S* out) {
  const int stride = 2 * frequencies + 1;
  for (int j = 0; j < dims; ++j) {
    S* o = out + j * stride;
    o[0] = x[j];
    for (int l = 0; l < frequencies; ++l) {
      const S arg = std::ldexp(std::numbers::pi_v<S>, l) * x[j];
      o[1 + 2 * l] = std::sin(arg);
      o[2 + 2 * l] = std::cos(arg);
    }
  }
}

template <class S>
std::vector<S> posenc(std::span<const S> x, int frequencies) {
  std::vector<S> out(encoded_width(static_cast<int>(x.size()), frequencies));
  posenc_into(x.data(), static_cast<int>(x.size()), frequencies, out.data());
  return out;
}

template <class S>
std::vector<S> posenc_backward(std::span<const S> x, int frequencies, std::span<const S> d_out) {
  const int dims = static_cast<int>(x.size());
  const int stride = 2 * frequencies + 1;
  if (static_cast<int>(d_out.size()) != dims * stride)
    throw InvalidInput("posenc_backward: cotangent width mismatch");
  std::vector<S> dx(dims, S(0));
  for (int j = 0; j < dims; ++j) {
    const S* g = d_out.data() + j * stride;
    S acc = g[0];
    for (int l = 0; l < frequencies; ++l) {
      const S freq = std::ldexp(std::numbers::pi_v<S>, l);
      const S arg = freq * x[j];
      acc += freq * (g[1 + 2 * l] * std::cos(arg) - g[2 + 2 * l] * std::sin(arg));
    }
    dx[j] = acc;
  }
  return dx;
}

template <class S>
S softplus(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}

template <class S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <class S>
struct DenseLayer {
  Mat<S> weight;  // out x in
  Vec<S> bias;    // out
};

/// Fully connected network: ReLU after every layer but the last, which is linear.
template <class S>
struct Mlp {
  std::vector<DenseLayer<S>> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

  void set_zero() {
    for (auto& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  Mlp& operator+=(const Mlp& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }
};

/// Layer inputs recorded by mlp_forward. inputs[0] is the network input,
/// inputs[i] the post-ReLU output of layer i-1.
template <class S>
struct MlpTape {
  std::vector<Mat<S>> inputs;
};

template <class S>
Mat<S> mlp_forward(const Mlp<S>& net, Mat<S> x, MlpTape<S>& tape) {
  const std::size_t n = net.layers.size();
  tape.inputs.resize(n);
  tape.inputs[0] = std::move(x);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& l = net.layers[i];
    tape.inputs[i + 1].noalias() = l.weight * tape.inputs[i];
    tape.inputs[i + 1].colwise() += l.bias;
    tape.inputs[i + 1] = tape.inputs[i + 1].cwiseMax(S(0));
  }
  const auto& last = net.layers.back();
  Mat<S> out;
  out.noalias() = last.weight * tape.inputs[n - 1];
  out.colwise() += last.bias;
  return out;
}

template <class S>
std::uint64_t relu_signature(const MlpTape<S>& tape) {
  std::uint64_t h = 0x5151;
  for (std::size_t i = 1; i < tape.inputs.size(); ++i) {
    const Mat<S>& a = tape.inputs[i];
    for (Eigen::Index k = 0; k < a.size(); ++k) h = hash_combine(h, a.data()[k] > S(0) ? 1 : 0);
  }
  return h;
}

/// Accumulates parameter gradients into `grad`; writes the input cotangent to
/// `d_input` when non-null.
template <class S>
void mlp_backward(const Mlp<S>& net, const MlpTape<S>& tape, Mat<S> d_out, Mlp<S>& grad,
                  Mat<S>* d_input) {
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const Mat<S>& in = tape.inputs[i];
    grad.layers[i].weight.noalias() += d_out * in.transpose();
    grad.layers[i].bias += d_out.rowwise().sum();
    if (i == 0 && d_input == nullptr) break;
    Mat<S> d_in;
    d_in.noalias() = net.layers[i].weight.transpose() * d_out;
    if (i == 0) {
      *d_input = std::move(d_in);
      break;
    }
    // ReLU: the stored post-activation is positive exactly where the unit was active.
    d_out = d_in.cwiseProduct((in.array() > S(0)).template cast<S>().matrix());
  }
}

struct DecoderConfig {
  EncoderConfig encoder;
  int hidden_width = 64;
  int hidden_layers = 2;
  int geometry_feature_dim = 15;

  void validate() const {
    encoder.validate();
    if (hidden_width < 1 || hidden_layers < 0 || geometry_feature_dim < 1)
      throw ConfigError("decoder config: invalid MLP dimensions");
  }

  int point_encoding_width() const { return encoded_width(kPointDims, encoder.point_frequencies); }
  int direction_encoding_width() const {
    return encoded_width(kDirectionDims, encoder.direction_frequencies);
  }
  int geometry_input_dim(int fused_width) const { return fused_width + point_encoding_width(); }
  int geometry_output_dim() const { return 1 + geometry_feature_dim; }
  int color_input_dim() const { return geometry_feature_dim + direction_encoding_width(); }
};

template <class S>
struct DecoderParams {
  DecoderConfig config;
  int fused_width = 0;
  Mlp<S> geometry;  // [fused | enc(v)] -> [density logit | f']
  Mlp<S> color;     // [f' | enc(d)] -> rgb logits

  void set_zero() {
    geometry.set_zero();
    color.set_zero();
  }
  std::size_t parameter_count() const {
    return geometry.parameter_count() + color.parameter_count();
  }
  DecoderParams& operator+=(const DecoderParams& o) {
    geometry += o.geometry;
    color += o.color;
    return *this;
  }
};

template <class S>
Mlp<S> make_mlp(int in, int hidden, int depth, int out) {
  Mlp<S> net;
  int prev = in;
  for (int i = 0; i < depth; ++i) {
    net.layers.push_back({Mat<S>::Zero(hidden, prev), Vec<S>::Zero(hidden)});
    prev = hidden;
  }
  net.layers.push_back({Mat<S>::Zero(out, prev), Vec<S>::Zero(out)});
  return net;
}

/// Zero-filled decoder of the right shape; also used for gradient buffers.
template <class S>
DecoderParams<S> make_decoder(const DecoderConfig& config, int fused_width) {
  config.validate();
  DecoderParams<S> d;
  d.config = config;
  d.fused_width = fused_width;
  d.geometry = make_mlp<S>(config.geometry_input_dim(fused_width), config.hidden_width,
                           config.hidden_layers, config.geometry_output_dim());
  d.color = make_mlp<S>(config.color_input_dim(), config.hidden_width, config.hidden_layers, 3);
  return d;
}

/// Glorot-uniform weights, zero biases.
template <class S>
DecoderParams<S> init_decoder(const DecoderConfig& config, int fused_width, std::uint64_t seed) {
  auto d = make_decoder<S>(config, fused_width);
  std::mt19937_64 rng(seed);
  for (Mlp<S>* net : {&d.geometry, &d.color})
    for (auto& l : net->layers) {
      const double a = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
          l.weight(r, c) = static_cast<S>(dist(rng));
    }
  return d;
}

template <class To, class From>
DecoderParams<To> cast_decoder(const DecoderParams<From>& src) {
  DecoderParams<To> d;
  d.config = src.config;
  d.fused_width = src.fused_width;
  for (auto [dst, from] : {std::pair{&d.geometry, &src.geometry}, std::pair{&d.color, &src.color}})
    for (const auto& l : from->layers)
      dst->layers.push_back({l.weight.template cast<To>(), l.bias.template cast<To>()});
  return d;
}

template <class S>
struct GeometryOutput {
  S sigma = 0;
  std::vector<S> feature;
};

template <class S>
Mat<S> stack_columns(std::span<const S> a, std::span<const S> b) {
  Mat<S> x(static_cast<Eigen::Index>(a.size() + b.size()), 1);
  for (std::size_t i = 0; i < a.size(); ++i) x(i, 0) = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) x(a.size() + i, 0) = b[i];
  return x;
}

/// Density (softplus of the first output) and the geometry feature f'.
template <class S>
GeometryOutput<S> geometry_forward(const DecoderParams<S>& dec, std::span<const S> fused,
                                   std::span<const S> enc_point) {
  if (static_cast<int>(fused.size() + enc_point.size()) != dec.geometry.input_dim())
    throw ConfigError("geometry_forward: input width does not match decoder");
  MlpTape<S> tape;
  const Mat<S> out = mlp_forward(dec.geometry, stack_columns(fused, enc_point), tape);
  GeometryOutput<S> g;
  g.sigma = softplus(out(0, 0));
  g.feature.resize(out.rows() - 1);
  for (Eigen::Index i = 1; i < out.rows(); ++i) g.feature[i - 1] = out(i, 0);
  return g;
}

/// Cotangents of geometry_forward's inputs; parameter gradients go to `grad`.
template <class S>
std::pair<std::vector<S>, std::vector<S>> geometry_backward(
    const DecoderParams<S>& dec, std::span<const S> fused, std::span<const S> enc_point,
    S d_sigma, std::span<const S> d_feature, DecoderParams<S>& grad) {
  MlpTape<S> tape;
  const Mat<S> out = mlp_forward(dec.geometry, stack_columns(fused, enc_point), tape);
  Mat<S> d_out(out.rows(), 1);
  d_out(0, 0) = d_sigma * sigmoid(out(0, 0));
  for (Eigen::Index i = 1; i < out.rows(); ++i) d_out(i, 0) = d_feature[i - 1];
  Mat<S> d_in;
  mlp_backward(dec.geometry, tape, std::move(d_out), grad.geometry, &d_in);
  std::vector<S> d_fused(fused.size()), d_enc(enc_point.size());
  for (std::size_t i = 0; i < fused.size(); ++i) d_fused[i] = d_in(i, 0);
  for (std::size_t i = 0; i < enc_point.size(); ++i) d_enc[i] = d_in(fused.size() + i, 0);
  return {d_fused, d_enc};
}

template <class S>
std::array<S, 3> color_forward(const DecoderParams<S>& dec, std::span<const S> feature,
                               std::span<const S> enc_dir) {
  if (static_cast<int>(feature.size() + enc_dir.size()) != dec.color.input_dim())
    throw ConfigError("color_forward: input width does not match decoder");
  MlpTape<S> tape;
  const Mat<S> out = mlp_forward(dec.color, stack_columns(feature, enc_dir), tape);
  return {sigmoid(out(0, 0)), sigmoid(out(1, 0)), sigmoid(out(2, 0))};
}

template <class S>
std::pair<std::vector<S>, std::vector<S>> color_backward(const DecoderParams<S>& dec,
                                                         std::span<const S> feature,
                                                         std::span<const S> enc_dir,
                                                         const std::array<S, 3>& d_rgb,
                                                         DecoderParams<S>& grad) {
  MlpTape<S> tape;
  const Mat<S> out = mlp_forward(dec.color, stack_columns(feature, enc_dir), tape);
  Mat<S> d_out(3, 1);
  for (int c = 0; c < 3; ++c) {
    const S s = sigmoid(out(c, 0));
    d_out(c, 0) = d_rgb[c] * s * (S(1) - s);
  }
  Mat<S> d_in;
  mlp_backward(dec.color, tape, std::move(d_out), grad.color, &d_in);
  std::vector<S> d_feat(feature.size()), d_enc(enc_dir.size());
  for (std::size_t i = 0; i < feature.size(); ++i) d_feat[i] = d_in(i, 0);
  for (std::size_t i = 0; i < enc_dir.size(); ++i) d_enc[i] = d_in(feature.size() + i, 0);
  return {d_feat, d_enc};
}

}  // namespace drsm
