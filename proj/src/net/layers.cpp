#include "dvr/net/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace dvr::nn {
namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

void activate(Activation a, Scalar* x, std::size_t n) {
  switch (a) {
    case Activation::linear: return;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0 ? x[i] : Scalar{0};
      return;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
      return;
  }
}

// grad <- grad * f'(pre), expressed through the activation output y.
void activation_grad(Activation a, const Scalar* y, Scalar* grad, std::size_t n) {
  switch (a) {
    case Activation::linear: return;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(y[i] > 0)) grad[i] = 0;
      }
      return;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) grad[i] *= (1 - y[i] * y[i]);
      return;
  }
}

}  // namespace

std::string to_string(const Volume& v) {
  return "(" + std::to_string(v.depth) + "," + std::to_string(v.height) + "," +
         std::to_string(v.width) + "," + std::to_string(v.channels) + ")";
}

Param::Param(std::string n, std::vector<std::size_t> d, bool train)
    : name(std::move(n)), dims(std::move(d)), trainable(train) {
  std::size_t count = 1;
  for (auto x : dims) count *= x;
  value.assign(count, Scalar{0});
  grad.assign(count, Scalar{0});
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::maxpool3d: return "maxpool3d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::conv3d, LayerKind::maxpool3d, LayerKind::batchnorm, LayerKind::dense,
                 LayerKind::dropout, LayerKind::flatten}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  for (auto a : {Activation::linear, Activation::relu, Activation::tanh}) {
    if (to_string(a) == s) return a;
  }
  throw InvalidArgument("unknown activation '" + s + "'");
}

std::size_t pooled_extent(std::size_t n, std::size_t stride) { return (n + stride - 1) / stride; }

// ---------------------------------------------------------------------------
// Conv3d
//
// Per sample the input is laid out [D][Cin][H*W]. A spatial-only im2col turns
// it into S = [D][R][H*W] with R = Cin*kh*kw, so the rows feeding output
// slice d for kernel taps a..e-1 form one contiguous block of S, and the
// whole temporal reduction becomes a single GEMM per output slice:
//   out[d] = W[:, a*R:e*R] * S[(d-pd+a)*R : (d-pd+e)*R, :]
// ---------------------------------------------------------------------------

Conv3d::Conv3d(LayerSpec spec, std::size_t in_channels)
    : Layer(std::move(spec)),
      in_channels_(in_channels),
      weight_(spec_.name + ".weight",
              {spec_.units, spec_.kernel[0], in_channels, spec_.kernel[1], spec_.kernel[2]}),
      bias_(spec_.name + ".bias", {spec_.units}) {
  if (spec_.units == 0 || in_channels == 0 || spec_.kernel[0] == 0 || spec_.kernel[1] == 0 ||
      spec_.kernel[2] == 0) {
    throw InvalidArgument("conv3d '" + spec_.name + "': kernel and unit counts must be positive");
  }
}

Volume Conv3d::output_shape(const Volume& in) const {
  if (in.channels != in_channels_) {
    throw InvalidArgument("conv3d '" + spec_.name + "': expected " + std::to_string(in_channels_) +
                          " input channels, got " + std::to_string(in.channels));
  }
  return Volume{in.depth, spec_.units, in.height, in.width};
}

void Conv3d::forward(const Tensor& in, Tensor& out, Mode mode) {
  const Volume os = output_shape(in.shape);
  const std::size_t D = in.shape.depth, H = in.shape.height, W = in.shape.width, HW = H * W;
  const std::size_t kd = spec_.kernel[0], kh = spec_.kernel[1], kw = spec_.kernel[2];
  const std::size_t pd = (kd - 1) / 2, ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const std::size_t R = in_channels_ * kh * kw;
  const std::size_t cout = spec_.units;
  const bool pointwise = kh == 1 && kw == 1;
  const std::size_t per_sample = D * R * HW;

  in_shape_ = in.shape;
  batch_ = in.batch;
  out = Tensor(in.batch, os);
  if (pointwise) {
    columns_ = in.data;
  } else {
    columns_.assign(in.batch * per_sample, Scalar{0});
  }
  ConstMatMap wmat(weight_.value.data(), static_cast<Eigen::Index>(cout),
                   static_cast<Eigen::Index>(kd * R));
  ConstVecMap bias(bias_.value.data(), static_cast<Eigen::Index>(cout));

  for (std::size_t b = 0; b < in.batch; ++b) {
    Scalar* s = columns_.data() + b * per_sample;
    if (!pointwise) {
      const Scalar* x = in.sample(b);
      for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t c = 0; c < in_channels_; ++c) {
          const Scalar* plane = x + (d * in_channels_ + c) * HW;
          for (std::size_t i = 0; i < kh; ++i) {
            const std::size_t y0 = i < ph ? ph - i : 0;
            const std::size_t y1 = std::min(H, H + ph - i);
            for (std::size_t j = 0; j < kw; ++j) {
              const std::size_t x0 = j < pw ? pw - j : 0;
              const std::size_t x1 = std::min(W, W + pw - j);
              Scalar* row = s + (d * R + (c * kh + i) * kw + j) * HW;
              for (std::size_t y = y0; y < y1; ++y) {
                const Scalar* src = plane + (y + i - ph) * W;
                for (std::size_t xx = x0; xx < x1; ++xx) row[y * W + xx] = src[xx + j - pw];
              }
            }
          }
        }
      }
    }
    ConstMatMap smat(s, static_cast<Eigen::Index>(D * R), static_cast<Eigen::Index>(HW));
    Scalar* y = out.sample(b);
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t a = d < pd ? pd - d : 0;
      const std::size_t e = std::min(kd, D + pd - d);
      MatMap od(y + d * cout * HW, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(HW));
      od.colwise() = bias;
      if (e > a) {
        od.noalias() += wmat.middleCols(static_cast<Eigen::Index>(a * R), static_cast<Eigen::Index>((e - a) * R)) *
                        smat.middleRows(static_cast<Eigen::Index>((d + a - pd) * R),
                                        static_cast<Eigen::Index>((e - a) * R));
      }
    }
    activate(spec_.activation, y, os.size());
  }
  if (mode == Mode::train) {
    output_ = out;
  } else {
    output_ = Tensor();
    columns_.clear();
    columns_.shrink_to_fit();
  }
}

void Conv3d::backward(const Tensor& grad_out_in, Tensor* grad_in) {
  if (output_.batch != grad_out_in.batch || output_.data.size() != grad_out_in.data.size()) {
    throw InvalidArgument("conv3d '" + spec_.name + "': backward without a matching train-mode forward");
  }
  Tensor grad_out = grad_out_in;
  activation_grad(spec_.activation, output_.data.data(), grad_out.data.data(), grad_out.data.size());

  const std::size_t D = in_shape_.depth, H = in_shape_.height, W = in_shape_.width, HW = H * W;
  const std::size_t kd = spec_.kernel[0], kh = spec_.kernel[1], kw = spec_.kernel[2];
  const std::size_t pd = (kd - 1) / 2, ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const std::size_t R = in_channels_ * kh * kw;
  const std::size_t cout = spec_.units;
  const bool pointwise = kh == 1 && kw == 1;
  const std::size_t per_sample = D * R * HW;

  ConstMatMap wmat(weight_.value.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kd * R));
  MatMap dw(weight_.grad.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kd * R));

  if (grad_in) *grad_in = Tensor(batch_, in_shape_);
  std::vector<Scalar> dcols(grad_in && !pointwise ? per_sample : 0);

  for (std::size_t b = 0; b < batch_; ++b) {
    ConstMatMap smat(columns_.data() + b * per_sample, static_cast<Eigen::Index>(D * R),
                     static_cast<Eigen::Index>(HW));
    Scalar* dsp = nullptr;
    if (grad_in) {
      dsp = pointwise ? grad_in->sample(b) : dcols.data();
      if (!pointwise) std::fill(dcols.begin(), dcols.end(), Scalar{0});
    }
    const Scalar* g = grad_out.sample(b);
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t a = d < pd ? pd - d : 0;
      const std::size_t e = std::min(kd, D + pd - d);
      ConstMatMap gd(g + d * cout * HW, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(HW));
      // plain loops: Eigen reductions peel by pointer alignment, which would
      // make the summation order depend on the heap layout
      for (std::size_t o = 0; o < cout; ++o) {
        const Scalar* go = g + (d * cout + o) * HW;
        Scalar acc = 0;
        for (std::size_t p = 0; p < HW; ++p) acc += go[p];
        bias_.grad[o] += acc;
      }
      if (e <= a) continue;
      const auto col0 = static_cast<Eigen::Index>(a * R);
      const auto ncol = static_cast<Eigen::Index>((e - a) * R);
      const auto row0 = static_cast<Eigen::Index>((d + a - pd) * R);
      dw.middleCols(col0, ncol).noalias() += gd * smat.middleRows(row0, ncol).transpose();
      if (dsp) {
        MatMap dsm(dsp, static_cast<Eigen::Index>(D * R), static_cast<Eigen::Index>(HW));
        dsm.middleRows(row0, ncol).noalias() += wmat.middleCols(col0, ncol).transpose() * gd;
      }
    }
    if (grad_in && !pointwise) {
      Scalar* dx = grad_in->sample(b);
      for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t c = 0; c < in_channels_; ++c) {
          Scalar* plane = dx + (d * in_channels_ + c) * HW;
          for (std::size_t i = 0; i < kh; ++i) {
            const std::size_t y0 = i < ph ? ph - i : 0;
            const std::size_t y1 = std::min(H, H + ph - i);
            for (std::size_t j = 0; j < kw; ++j) {
              const std::size_t x0 = j < pw ? pw - j : 0;
              const std::size_t x1 = std::min(W, W + pw - j);
              const Scalar* row = dcols.data() + (d * R + (c * kh + i) * kw + j) * HW;
              for (std::size_t y = y0; y < y1; ++y) {
                Scalar* dst = plane + (y + i - ph) * W;
                for (std::size_t xx = x0; xx < x1; ++xx) dst[xx + j - pw] += row[y * W + xx];
              }
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// MaxPool3d
// ---------------------------------------------------------------------------

Volume MaxPool3d::output_shape(const Volume& in) const {
  return Volume{pooled_extent(in.depth, spec_.stride[0]), in.channels,
                pooled_extent(in.height, spec_.stride[1]), pooled_extent(in.width, spec_.stride[2])};
}

void MaxPool3d::forward(const Tensor& in, Tensor& out, Mode mode) {
  const Volume is = in.shape;
  const Volume os = output_shape(is);
  out = Tensor(in.batch, os);
  in_shape_ = is;
  batch_ = in.batch;
  argmax_.assign(mode == Mode::train ? out.size() : 0, 0);
  const std::size_t C = is.channels;
  std::size_t o = 0;
  for (std::size_t b = 0; b < in.batch; ++b) {
    const Scalar* x = in.sample(b);
    for (std::size_t od = 0; od < os.depth; ++od) {
      const std::size_t d0 = od * spec_.stride[0], d1 = std::min(is.depth, d0 + spec_.kernel[0]);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < os.height; ++oy) {
          const std::size_t y0 = oy * spec_.stride[1], y1 = std::min(is.height, y0 + spec_.kernel[1]);
          for (std::size_t ox = 0; ox < os.width; ++ox, ++o) {
            const std::size_t x0 = ox * spec_.stride[2], x1 = std::min(is.width, x0 + spec_.kernel[2]);
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            std::size_t arg = 0;
            for (std::size_t d = d0; d < d1; ++d) {
              for (std::size_t y = y0; y < y1; ++y) {
                for (std::size_t xx = x0; xx < x1; ++xx) {
                  const std::size_t idx = ((d * C + c) * is.height + y) * is.width + xx;
                  if (x[idx] > best) {
                    best = x[idx];
                    arg = idx;
                  }
                }
              }
            }
            out.data[o] = best;
            if (mode == Mode::train) argmax_[o] = b * is.size() + arg;
          }
        }
      }
    }
  }
}

void MaxPool3d::backward(const Tensor& grad_out, Tensor* grad_in) {
  if (argmax_.size() != grad_out.size()) {
    throw InvalidArgument("maxpool3d '" + spec_.name + "': backward without a matching train-mode forward");
  }
  if (!grad_in) return;
  *grad_in = Tensor(batch_, in_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in->data[argmax_[o]] += grad_out.data[o];
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(LayerSpec spec, std::size_t channels)
    : Layer(std::move(spec)),
      gamma_(spec_.name + ".gamma", {channels}),
      beta_(spec_.name + ".beta", {channels}),
      running_mean_(spec_.name + ".running_mean", {channels}, false),
      running_var_(spec_.name + ".running_var", {channels}, false) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), Scalar{1});
  std::fill(running_var_.value.begin(), running_var_.value.end(), Scalar{1});
}

void BatchNorm::forward(const Tensor& in, Tensor& out, Mode mode) {
  const Volume s = in.shape;
  const std::size_t C = s.channels, P = s.plane();
  if (C != gamma_.size()) {
    throw InvalidArgument("batchnorm '" + spec_.name + "': channel count mismatch");
  }
  out = Tensor(in.batch, s);
  shape_ = s;
  batch_ = in.batch;
  std::vector<Scalar> mean(C, 0), var(C, 0);
  const auto count = static_cast<Scalar>(in.batch * s.depth * P);

  auto for_each_plane = [&](auto&& fn) {
    for (std::size_t b = 0; b < in.batch; ++b) {
      for (std::size_t d = 0; d < s.depth; ++d) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = b * s.size() + (d * C + c) * P;
          fn(c, off);
        }
      }
    }
  };

  if (mode == Mode::train) {
    for_each_plane([&](std::size_t c, std::size_t off) {
      for (std::size_t p = 0; p < P; ++p) mean[c] += in.data[off + p];
    });
    for (auto& m : mean) m /= count;
    for_each_plane([&](std::size_t c, std::size_t off) {
      for (std::size_t p = 0; p < P; ++p) {
        const Scalar dv = in.data[off + p] - mean[c];
        var[c] += dv * dv;
      }
    });
    for (auto& v : var) v /= count;
    inv_std_.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      inv_std_[c] = 1 / std::sqrt(var[c] + kEpsilon);
      const Scalar unbiased = count > 1 ? var[c] * count / (count - 1) : var[c];
      running_mean_.value[c] = kMomentum * running_mean_.value[c] + (1 - kMomentum) * mean[c];
      running_var_.value[c] = kMomentum * running_var_.value[c] + (1 - kMomentum) * unbiased;
    }
    xhat_.resize(in.size());
    for_each_plane([&](std::size_t c, std::size_t off) {
      for (std::size_t p = 0; p < P; ++p) {
        const Scalar xh = (in.data[off + p] - mean[c]) * inv_std_[c];
        xhat_[off + p] = xh;
        out.data[off + p] = gamma_.value[c] * xh + beta_.value[c];
      }
    });
  } else {
    xhat_.clear();
    for_each_plane([&](std::size_t c, std::size_t off) {
      const Scalar is = 1 / std::sqrt(running_var_.value[c] + kEpsilon);
      for (std::size_t p = 0; p < P; ++p) {
        out.data[off + p] =
            gamma_.value[c] * (in.data[off + p] - running_mean_.value[c]) * is + beta_.value[c];
      }
    });
  }
}

void BatchNorm::backward(const Tensor& grad_out, Tensor* grad_in) {
  if (xhat_.size() != grad_out.size()) {
    throw InvalidArgument("batchnorm '" + spec_.name + "': backward without a matching train-mode forward");
  }
  const std::size_t C = shape_.channels, P = shape_.plane();
  const auto count = static_cast<Scalar>(batch_ * shape_.depth * P);
  std::vector<Scalar> dgamma(C, 0), dbeta(C, 0);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t d = 0; d < shape_.depth; ++d) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t off = b * shape_.size() + (d * C + c) * P;
        for (std::size_t p = 0; p < P; ++p) {
          dgamma[c] += grad_out.data[off + p] * xhat_[off + p];
          dbeta[c] += grad_out.data[off + p];
        }
      }
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    gamma_.grad[c] += dgamma[c];
    beta_.grad[c] += dbeta[c];
  }
  if (!grad_in) return;
  *grad_in = Tensor(batch_, shape_);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t d = 0; d < shape_.depth; ++d) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t off = b * shape_.size() + (d * C + c) * P;
        const Scalar k = gamma_.value[c] * inv_std_[c] / count;
        for (std::size_t p = 0; p < P; ++p) {
          grad_in->data[off + p] =
              k * (count * grad_out.data[off + p] - dbeta[c] - xhat_[off + p] * dgamma[c]);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

Dense::Dense(LayerSpec spec, std::size_t in_features)
    : Layer(std::move(spec)),
      in_features_(in_features),
      weight_(spec_.name + ".weight", {spec_.units, in_features}),
      bias_(spec_.name + ".bias", {spec_.units}) {
  if (spec_.units == 0 || in_features == 0) {
    throw InvalidArgument("dense '" + spec_.name + "': sizes must be positive");
  }
}

Volume Dense::output_shape(const Volume& in) const {
  if (in.size() != in_features_) {
    throw InvalidArgument("dense '" + spec_.name + "': expected " + std::to_string(in_features_) +
                          " input features, got " + std::to_string(in.size()));
  }
  return Volume{1, spec_.units, 1, 1};
}

void Dense::forward(const Tensor& in, Tensor& out, Mode mode) {
  const Volume os = output_shape(in.shape);
  out = Tensor(in.batch, os);
  ConstMatMap x(in.data.data(), static_cast<Eigen::Index>(in.batch), static_cast<Eigen::Index>(in_features_));
  ConstMatMap w(weight_.value.data(), static_cast<Eigen::Index>(spec_.units),
                static_cast<Eigen::Index>(in_features_));
  MatMap y(out.data.data(), static_cast<Eigen::Index>(in.batch), static_cast<Eigen::Index>(spec_.units));
  ConstVecMap bias(bias_.value.data(), static_cast<Eigen::Index>(spec_.units));
  y.noalias() = x * w.transpose();
  y.rowwise() += bias.transpose();
  activate(spec_.activation, out.data.data(), out.size());
  if (mode == Mode::train) {
    input_ = in;
    output_ = out;
  } else {
    input_ = Tensor();
    output_ = Tensor();
  }
}

void Dense::backward(const Tensor& grad_out_in, Tensor* grad_in) {
  if (output_.size() != grad_out_in.size() || output_.batch != grad_out_in.batch) {
    throw InvalidArgument("dense '" + spec_.name + "': backward without a matching train-mode forward");
  }
  Tensor grad_out = grad_out_in;
  activation_grad(spec_.activation, output_.data.data(), grad_out.data.data(), grad_out.size());
  const auto B = static_cast<Eigen::Index>(input_.batch);
  const auto O = static_cast<Eigen::Index>(spec_.units);
  const auto I = static_cast<Eigen::Index>(in_features_);
  ConstMatMap g(grad_out.data.data(), B, O);
  ConstMatMap x(input_.data.data(), B, I);
  ConstMatMap w(weight_.value.data(), O, I);
  MatMap dw(weight_.grad.data(), O, I);
  dw.noalias() += g.transpose() * x;
  for (std::size_t b = 0; b < grad_out.batch; ++b) {
    for (std::size_t o = 0; o < spec_.units; ++o) bias_.grad[o] += grad_out.sample(b)[o];
  }
  if (grad_in) {
    *grad_in = Tensor(input_.batch, input_.shape);
    MatMap dx(grad_in->data.data(), B, I);
    dx.noalias() = g * w;
  }
}

// ---------------------------------------------------------------------------
// Dropout / Flatten
// ---------------------------------------------------------------------------

Dropout::Dropout(LayerSpec spec, std::uint64_t seed) : Layer(std::move(spec)), rng_(seed) {
  if (spec_.dropout_rate < 0.0 || spec_.dropout_rate >= 1.0) {
    throw InvalidArgument("dropout '" + spec_.name + "': rate must lie in [0,1)");
  }
}

void Dropout::forward(const Tensor& in, Tensor& out, Mode mode) {
  out = in;
  if (mode == Mode::eval || spec_.dropout_rate == 0.0 || frozen_) {
    mask_.assign(mode == Mode::train ? in.size() : 0, Scalar{1});
    return;
  }
  const Scalar keep = 1 - spec_.dropout_rate;
  std::bernoulli_distribution draw(keep);
  mask_.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask_[i] = draw(rng_) ? 1 / keep : Scalar{0};
    out.data[i] *= mask_[i];
  }
}

void Dropout::backward(const Tensor& grad_out, Tensor* grad_in) {
  if (mask_.size() != grad_out.size()) {
    throw InvalidArgument("dropout '" + spec_.name + "': backward without a matching train-mode forward");
  }
  if (!grad_in) return;
  *grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in->size(); ++i) grad_in->data[i] *= mask_[i];
}

void Flatten::forward(const Tensor& in, Tensor& out, Mode) {
  in_shape_ = in.shape;
  out = in;
  out.shape = output_shape(in.shape);
}

void Flatten::backward(const Tensor& grad_out, Tensor* grad_in) {
  if (!grad_in) return;
  *grad_in = grad_out;
  grad_in->shape = in_shape_;
}

}  // namespace dvr::nn
