#include "uiattr/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace uiattr::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& x, std::size_t rank, const char* who) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(who) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(x.shape()));
  }
}

void he_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
}

// Columns per im2col chunk; keeps the column buffer cache-sized.
constexpr std::size_t kChunkColumns = 8192;

}  // namespace

std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// Conv3x3

Conv3x3::Conv3x3(std::size_t in_channels, std::size_t out_channels)
    : in_(in_channels), out_(out_channels) {
  weight_ = {"conv.weight", Tensor({out_, in_ * 9}), Tensor({out_, in_ * 9})};
  bias_ = {"conv.bias", Tensor({out_}), Tensor({out_})};
}

Shape Conv3x3::output_shape(const Shape& in) const {
  if (in.size() != 3 || in[0] != in_) {
    throw ShapeError("conv3x3: expected (" + std::to_string(in_) + ",H,W), got " +
                     shape_string(in));
  }
  return {out_, in[1], in[2]};
}

void Conv3x3::initialize(Rng& rng) {
  he_uniform(weight_.value, in_ * 9, rng);
  bias_.value.fill(0.0);
}

namespace {

void im2col(const Tensor& x, std::size_t n0, std::size_t n1, std::vector<double>& col) {
  const std::size_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t HW = H * W;
  const std::size_t cols = (n1 - n0) * HW;
  col.assign(C * 9 * cols, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col.data() + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * cols;
        const int dy = ky - 1;
        const int dx = kx - 1;
        const std::size_t x_lo = dx < 0 ? 1 : 0;
        const std::size_t x_hi = dx > 0 ? W - 1 : W;
        for (std::size_t n = n0; n < n1; ++n) {
          const double* src = x.data() + (n * C + c) * HW;
          double* dst = row + (n - n0) * HW;
          for (std::size_t y = 0; y < H; ++y) {
            const long sy = static_cast<long>(y) + dy;
            if (sy < 0 || sy >= static_cast<long>(H)) continue;
            const double* s = src + static_cast<std::size_t>(sy) * W + dx;
            double* d = dst + y * W;
            for (std::size_t xx = x_lo; xx < x_hi; ++xx) d[xx] = s[xx];
          }
        }
      }
    }
  }
}

void col2im(const std::vector<double>& col, std::size_t n0, std::size_t n1, Tensor& dx) {
  const std::size_t C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const std::size_t HW = H * W;
  const std::size_t cols = (n1 - n0) * HW;
  for (std::size_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col.data() + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * cols;
        const int dy = ky - 1;
        const int dxo = kx - 1;
        const std::size_t x_lo = dxo < 0 ? 1 : 0;
        const std::size_t x_hi = dxo > 0 ? W - 1 : W;
        for (std::size_t n = n0; n < n1; ++n) {
          double* dst = dx.data() + (n * C + c) * HW;
          const double* src = row + (n - n0) * HW;
          for (std::size_t y = 0; y < H; ++y) {
            const long sy = static_cast<long>(y) + dy;
            if (sy < 0 || sy >= static_cast<long>(H)) continue;
            double* d = dst + static_cast<std::size_t>(sy) * W + dxo;
            const double* s = src + y * W;
            for (std::size_t xx = x_lo; xx < x_hi; ++xx) d[xx] += s[xx];
          }
        }
      }
    }
  }
}

}  // namespace

void Conv3x3::forward(const Tensor& x, Tensor& y, Mode /*mode*/) {
  require_rank(x, 4, "conv3x3");
  const Shape out_shape = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3), HW = H * W;
  input_ = &x;
  y.resize({N, out_, H, W});
  const std::size_t K = in_ * 9;
  const std::size_t chunk = std::max<std::size_t>(1, kChunkColumns / HW);
  ConstMapMat w(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(K));
  RowMat out;
  for (std::size_t n0 = 0; n0 < N; n0 += chunk) {
    const std::size_t n1 = std::min(N, n0 + chunk);
    const auto cols = static_cast<Eigen::Index>((n1 - n0) * HW);
    im2col(x, n0, n1, col_);
    ConstMapMat c(col_.data(), static_cast<Eigen::Index>(K), cols);
    out.noalias() = w * c;
    for (std::size_t n = n0; n < n1; ++n) {
      for (std::size_t o = 0; o < out_; ++o) {
        const double* src = out.data() + o * static_cast<std::size_t>(cols) + (n - n0) * HW;
        double* dst = y.data() + (n * out_ + o) * HW;
        const double b = bias_.value[o];
        for (std::size_t i = 0; i < HW; ++i) dst[i] = src[i] + b;
      }
    }
  }
}

void Conv3x3::backward(const Tensor& dy, Tensor& dx) {
  if (!input_) throw ShapeError("conv3x3 backward before forward");
  const Tensor& input = *input_;
  const std::size_t N = input.dim(0), H = input.dim(2), W = input.dim(3), HW = H * W;
  const std::size_t K = in_ * 9;
  if (dy.shape() != Shape{N, out_, H, W}) throw ShapeError("conv3x3 backward: gradient shape");
  const bool want_dx = input_gradient();
  if (want_dx) {
    dx.resize(input.shape());
    dx.fill(0.0);
  } else {
    dx = Tensor();
  }
  const std::size_t chunk = std::max<std::size_t>(1, kChunkColumns / HW);
  ConstMapMat w(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(K));
  MapMat dw(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(K));
  RowMat g;
  RowMat dcol;
  for (std::size_t n0 = 0; n0 < N; n0 += chunk) {
    const std::size_t n1 = std::min(N, n0 + chunk);
    const auto cols = static_cast<Eigen::Index>((n1 - n0) * HW);
    g.resize(static_cast<Eigen::Index>(out_), cols);
    for (std::size_t n = n0; n < n1; ++n) {
      for (std::size_t o = 0; o < out_; ++o) {
        const double* src = dy.data() + (n * out_ + o) * HW;
        double* dst = g.data() + o * static_cast<std::size_t>(cols) + (n - n0) * HW;
        std::copy(src, src + HW, dst);
      }
    }
    im2col(input, n0, n1, col_);
    ConstMapMat c(col_.data(), static_cast<Eigen::Index>(K), cols);
    dw.noalias() += g * c.transpose();
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += g.row(static_cast<Eigen::Index>(o)).sum();
    if (!want_dx) continue;
    dcol.noalias() = w.transpose() * g;
    col_.assign(dcol.data(), dcol.data() + dcol.size());
    col2im(col_, n0, n1, dx);
  }
}

// ---------------------------------------------------------------------------
// Relu

void Relu::forward(const Tensor& x, Tensor& y, Mode /*mode*/) {
  shape_ = x.shape();
  y.resize(x.shape());
  active_.resize(x.size());
  const double* in = x.data();
  double* out = y.data();
  std::uint8_t* mask = active_.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = in[i] > 0.0;
    out[i] = in[i] > 0.0 ? in[i] : 0.0;
  }
}

void Relu::backward(const Tensor& dy, Tensor& dx) {
  if (dy.shape() != shape_) throw ShapeError("relu backward: gradient shape");
  dx.resize(shape_);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = active_[i] ? dy[i] : 0.0;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(std::size_t channels) : channels_(channels) {
  gamma_ = {"bn.gamma", Tensor({channels}, 1.0), Tensor({channels})};
  beta_ = {"bn.beta", Tensor({channels}), Tensor({channels})};
  running_mean_ = Tensor({channels});
  running_var_ = Tensor({channels}, 1.0);
}

namespace {

// Views an (N, C, ...) tensor as N x C blocks of `inner` contiguous values.
struct ChannelLayout {
  std::size_t n, c, inner;
};

ChannelLayout channel_layout(const Tensor& x, std::size_t channels) {
  if (x.rank() != 4 && x.rank() != 2) throw ShapeError("batchnorm: expected rank 2 or 4");
  if (x.dim(1) != channels) throw ShapeError("batchnorm: channel mismatch " + shape_string(x.shape()));
  const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), channels, inner};
}

}  // namespace

void BatchNorm::forward(const Tensor& x, Tensor& y, Mode mode) {
  const auto L = channel_layout(x, channels_);
  y.resize(x.shape());
  xhat_.resize(x.shape());
  inv_std_.assign(channels_, 0.0);
  last_mode_ = mode;
  const double count = static_cast<double>(L.n * L.inner);
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t n = 0; n < L.n; ++n) {
        const double* p = x.data() + (n * L.c + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) s += p[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (std::size_t n = 0; n < L.n; ++n) {
        const double* p = x.data() + (n * L.c + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / count;
      const double unbiased = count > 1 ? ss / (count - 1) : var;
      running_mean_[c] = (1.0 - kMomentum) * running_mean_[c] + kMomentum * mean;
      running_var_[c] = (1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEpsilon);
    inv_std_[c] = inv;
    const double g = gamma_.value[c];
    const double b = beta_.value[c];
    for (std::size_t n = 0; n < L.n; ++n) {
      const std::size_t off = (n * L.c + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const double h = (x[off + i] - mean) * inv;
        xhat_[off + i] = h;
        y[off + i] = g * h + b;
      }
    }
  }
}

void BatchNorm::backward(const Tensor& dy, Tensor& dx) {
  if (dy.shape() != xhat_.shape()) throw ShapeError("batchnorm backward: gradient shape");
  const auto L = channel_layout(dy, channels_);
  dx.resize(dy.shape());
  const double count = static_cast<double>(L.n * L.inner);
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < L.n; ++n) {
      const std::size_t off = (n * L.c + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat_[off + i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double g = gamma_.value[c];
    const double inv = inv_std_[c];
    for (std::size_t n = 0; n < L.n; ++n) {
      const std::size_t off = (n * L.c + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        if (last_mode_ == Mode::kTrain) {
          dx[off + i] = g * inv / count *
                        (count * dy[off + i] - sum_dy - xhat_[off + i] * sum_dy_xhat);
        } else {
          dx[off + i] = g * inv * dy[off + i];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// MaxPool2

Shape MaxPool2::output_shape(const Shape& in) const {
  if (in.size() != 3 || in[1] < 2 || in[2] < 2) {
    throw ShapeError("maxpool2: needs (C,H,W) with H,W >= 2, got " + shape_string(in));
  }
  return {in[0], in[1] / 2, in[2] / 2};
}

void MaxPool2::forward(const Tensor& x, Tensor& y, Mode /*mode*/) {
  require_rank(x, 4, "maxpool2");
  const Shape os = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  in_shape_ = x.shape();
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = os[1], OW = os[2];
  y.resize({N, C, OH, OW});
  argmax_.resize(y.size());
  std::size_t k = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const std::size_t base = nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++k) {
        std::size_t best = base + (2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t i = base + (2 * oy + dy) * W + 2 * ox + dx;
            if (x[i] > x[best]) best = i;
          }
        }
        argmax_[k] = best;
        y[k] = x[best];
      }
    }
  }
}

void MaxPool2::backward(const Tensor& dy, Tensor& dx) {
  if (dy.size() != argmax_.size()) throw ShapeError("maxpool2 backward: gradient shape");
  dx.resize(in_shape_);
  dx.fill(0.0);
  for (std::size_t k = 0; k < argmax_.size(); ++k) dx[argmax_[k]] += dy[k];
}

// ---------------------------------------------------------------------------
// Flatten

void Flatten::forward(const Tensor& x, Tensor& y, Mode /*mode*/) {
  in_shape_ = x.shape();
  y = x;
  y.reshape({x.dim(0), x.size() / x.dim(0)});
}

void Flatten::backward(const Tensor& dy, Tensor& dx) {
  dx = dy;
  dx.reshape(in_shape_);
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {
  weight_ = {"dense.weight", Tensor({out, in}), Tensor({out, in})};
  bias_ = {"dense.bias", Tensor({out}), Tensor({out})};
}

Shape Dense::output_shape(const Shape& in) const {
  if (in.size() != 1 || in[0] != in_) {
    throw ShapeError("dense: expected (" + std::to_string(in_) + "), got " + shape_string(in));
  }
  return {out_};
}

void Dense::initialize(Rng& rng) {
  he_uniform(weight_.value, in_, rng);
  bias_.value.fill(0.0);
}

void Dense::forward(const Tensor& x, Tensor& y, Mode /*mode*/) {
  require_rank(x, 2, "dense");
  output_shape({x.dim(1)});
  input_ = &x;
  const auto N = static_cast<Eigen::Index>(x.dim(0));
  y.resize({x.dim(0), out_});
  ConstMapMat X(x.data(), N, static_cast<Eigen::Index>(in_));
  ConstMapMat Wt(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapMat Y(y.data(), N, static_cast<Eigen::Index>(out_));
  Y.noalias() = X * Wt.transpose();
  for (Eigen::Index n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < out_; ++o) Y(n, static_cast<Eigen::Index>(o)) += bias_.value[o];
  }
}

void Dense::backward(const Tensor& dy, Tensor& dx) {
  if (!input_) throw ShapeError("dense backward before forward");
  const auto N = static_cast<Eigen::Index>(input_->dim(0));
  if (dy.shape() != Shape{input_->dim(0), out_}) throw ShapeError("dense backward: gradient shape");
  ConstMapMat X(input_->data(), N, static_cast<Eigen::Index>(in_));
  ConstMapMat G(dy.data(), N, static_cast<Eigen::Index>(out_));
  ConstMapMat Wt(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapMat dW(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  dW.noalias() += G.transpose() * X;
  for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += G.col(static_cast<Eigen::Index>(o)).sum();
  if (!input_gradient()) {
    dx = Tensor();
    return;
  }
  dx.resize(input_->shape());
  MapMat dX(dx.data(), N, static_cast<Eigen::Index>(in_));
  dX.noalias() = G * Wt;
}

// ---------------------------------------------------------------------------
// Softmax

Shape Softmax::output_shape(const Shape& in) const {
  if (in.size() != 1 || groups_ < 1 || in[0] % static_cast<std::size_t>(groups_) != 0) {
    throw ShapeError("softmax: features " + shape_string(in) + " not divisible into " +
                     std::to_string(groups_) + " groups");
  }
  return in;
}

void Softmax::apply(const double* x, double* y, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= s;
}

void Softmax::forward(const Tensor& x, Tensor& y, Mode /*mode*/) {
  require_rank(x, 2, "softmax");
  output_shape({x.dim(1)});
  y.resize(x.shape());
  const std::size_t g = static_cast<std::size_t>(groups_);
  const std::size_t width = x.dim(1) / g;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t k = 0; k < g; ++k) {
      const std::size_t off = n * x.dim(1) + k * width;
      apply(x.data() + off, y.data() + off, width);
    }
  }
  output_ = y;
}

void Softmax::backward(const Tensor& dy, Tensor& dx) {
  if (dy.shape() != output_.shape()) throw ShapeError("softmax backward: gradient shape");
  dx.resize(dy.shape());
  const std::size_t g = static_cast<std::size_t>(groups_);
  const std::size_t width = dy.dim(1) / g;
  for (std::size_t n = 0; n < dy.dim(0); ++n) {
    for (std::size_t k = 0; k < g; ++k) {
      const std::size_t off = n * dy.dim(1) + k * width;
      double dot = 0.0;
      for (std::size_t i = 0; i < width; ++i) dot += dy[off + i] * output_[off + i];
      for (std::size_t i = 0; i < width; ++i) dx[off + i] = output_[off + i] * (dy[off + i] - dot);
    }
  }
}

// ---------------------------------------------------------------------------

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in) {
  std::unique_ptr<Layer> layer;
  switch (spec.type) {
    case LayerType::kConv3x3:
      if (in.size() != 3) throw ShapeError("conv3x3 needs a (C,H,W) input, got " + shape_string(in));
      if (spec.units <= 0) throw ShapeError("conv3x3 needs positive channels");
      layer = std::make_unique<Conv3x3>(in[0], static_cast<std::size_t>(spec.units));
      break;
    case LayerType::kRelu: layer = std::make_unique<Relu>(); break;
    case LayerType::kBatchNorm:
      if (in.empty()) throw ShapeError("batchnorm needs a shaped input");
      layer = std::make_unique<BatchNorm>(in[0]);
      break;
    case LayerType::kMaxPool2: layer = std::make_unique<MaxPool2>(); break;
    case LayerType::kFlatten: layer = std::make_unique<Flatten>(); break;
    case LayerType::kDense:
      if (in.size() != 1) throw ShapeError("dense needs a flat input, got " + shape_string(in));
      if (spec.units <= 0) throw ShapeError("dense needs positive units");
      layer = std::make_unique<Dense>(in[0], static_cast<std::size_t>(spec.units));
      break;
    case LayerType::kSoftmax: layer = std::make_unique<Softmax>(std::max(spec.units, 1)); break;
  }
  layer->output_shape(in);  // validates chaining
  return layer;
}

}  // namespace uiattr::nn
