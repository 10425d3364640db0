#include "driveflow/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "driveflow/error.hpp"

namespace driveflow {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using detail::NodePtr;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

bool wants_grad(const NodePtr& n) { return n->requires_grad; }

// Records `fn` when a tape is active and any input tracks gradients.
Tensor finish(Tensor out, std::vector<NodePtr> inputs, Tape::BackwardFn fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return out;
  bool any = false;
  for (const auto& n : inputs) any = any || n->requires_grad;
  if (!any) return out;
  out.set_requires_grad(true);
  tape->record(std::move(inputs), out.node(), std::move(fn));
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_string(x.shape()));
  }
}

// Unfolds a [C x H x W] image into a [(C*kh*kw) x (Ho*Wo)] patch matrix.
void im2col(const double* in, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kh, std::size_t kw, std::size_t stride,
            std::size_t out_h, std::size_t out_w, double* cols) {
  const std::size_t patches = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols + ((c * kh + ky) * kw + kx) * patches;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const double* src = in + (c * height + oy * stride + ky) * width + kx;
          for (std::size_t ox = 0; ox < out_w; ++ox) row[oy * out_w + ox] = src[ox * stride];
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kh, std::size_t kw, std::size_t stride,
            std::size_t out_h, std::size_t out_w, double* in) {
  const std::size_t patches = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols + ((c * kh + ky) * kw + kx) * patches;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          double* dst = in + (c * height + oy * stride + ky) * width + kx;
          for (std::size_t ox = 0; ox < out_w; ++ox) dst[ox * stride] += row[oy * out_w + ox];
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n}, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.mutable_data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    const double* arow = pa + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = arow[p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }

  NodePtr na = a.node(), nb = b.node();
  return finish(out, {na, nb}, [na, nb, m, k, n](const Eigen::VectorXd& g) {
    ConstRowMap dc(g.data(), idx(m), idx(n));
    if (wants_grad(na)) {
      ConstRowMap bm(nb->value.data(), idx(k), idx(n));
      RowMap da(na->grad_buffer().data(), idx(m), idx(k));
      da.noalias() += dc * bm.transpose();
    }
    if (wants_grad(nb)) {
      ConstRowMap am(na->value.data(), idx(m), idx(k));
      RowMap db(nb->grad_buffer().data(), idx(k), idx(n));
      db.noalias() += am.transpose() * dc;
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride) {
  require_rank(input, 3, "conv2d");
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernels must be [F x C x kh x kw], got " +
                         shape_string(kernels.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t filters = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != channels) {
    throw DimensionError("conv2d: kernel channels " + shape_string(kernels.shape()) +
                         " do not match input " + shape_string(input.shape()));
  }
  if (kh > height || kw > width) {
    throw DimensionError("conv2d: kernel " + shape_string(kernels.shape()) +
                         " larger than input " + shape_string(input.shape()));
  }
  const std::size_t out_h = (height - kh) / stride + 1;
  const std::size_t out_w = (width - kw) / stride + 1;
  const std::size_t patch = channels * kh * kw;
  const std::size_t positions = out_h * out_w;

  auto cols = std::make_shared<RowMatrix>(idx(patch), idx(positions));
  im2col(input.data().data(), channels, height, width, kh, kw, stride, out_h, out_w,
         cols->data());
  Tensor out({filters, out_h, out_w}, 0.0);
  ConstRowMap km(kernels.data().data(), idx(filters), idx(patch));
  RowMap om(out.mutable_data().data(), idx(filters), idx(positions));
  om.noalias() = km * (*cols);

  NodePtr ni = input.node(), nk = kernels.node();
  return finish(out, {ni, nk},
                [=](const Eigen::VectorXd& g) {
                  ConstRowMap dout(g.data(), idx(filters), idx(positions));
                  if (wants_grad(nk)) {
                    RowMap dk(nk->grad_buffer().data(), idx(filters), idx(patch));
                    dk.noalias() += dout * cols->transpose();
                  }
                  if (wants_grad(ni)) {
                    ConstRowMap kmat(nk->value.data(), idx(filters), idx(patch));
                    RowMatrix dcols = kmat.transpose() * dout;
                    col2im(dcols.data(), channels, height, width, kh, kw, stride, out_h,
                           out_w, ni->grad_buffer().data());
                  }
                });
}

Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  require_rank(x, 3, "maxpool2d");
  if (window == 0 || stride == 0) throw ContractError("maxpool2d: window and stride must be positive");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (window > height || window > width) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) +
                         " exceeds spatial dims of " + shape_string(x.shape()));
  }
  const std::size_t out_h = (height - window) / stride + 1;
  const std::size_t out_w = (width - window) / stride + 1;
  Tensor out({channels, out_h, out_w}, 0.0);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  const double* in = x.data().data();
  double* o = out.mutable_data().data();
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox, ++k) {
        std::size_t best = (c * height + oy * stride) * width + ox * stride;
        for (std::size_t wy = 0; wy < window; ++wy) {
          for (std::size_t wx = 0; wx < window; ++wx) {
            const std::size_t at = (c * height + oy * stride + wy) * width + ox * stride + wx;
            if (in[at] > in[best]) best = at;
          }
        }
        o[k] = in[best];
        (*argmax)[k] = best;
      }
    }
  }
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx, argmax](const Eigen::VectorXd& g) {
    Eigen::VectorXd& dx = nx->grad_buffer();
    for (std::size_t i = 0; i < argmax->size(); ++i) dx[idx((*argmax)[i])] += g[idx(i)];
  });
}

Tensor global_max_over_points(const Tensor& x) {
  require_rank(x, 2, "global_max_over_points");
  const std::size_t points = x.dim(0), features = x.dim(1);
  Tensor out({features}, 0.0);
  auto argmax = std::make_shared<std::vector<std::size_t>>(features, 0);
  const double* in = x.data().data();
  double* o = out.mutable_data().data();
  for (std::size_t j = 0; j < features; ++j) o[j] = in[j];
  for (std::size_t i = 1; i < points; ++i) {
    const double* row = in + i * features;
    for (std::size_t j = 0; j < features; ++j) {
      if (row[j] > o[j]) {
        o[j] = row[j];
        (*argmax)[j] = i;
      }
    }
  }
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx, argmax, features](const Eigen::VectorXd& g) {
    Eigen::VectorXd& dx = nx->grad_buffer();
    for (std::size_t j = 0; j < features; ++j) dx[idx((*argmax)[j] * features + j)] += g[idx(j)];
  });
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape(), x.values().cwiseMax(0.0));
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx](const Eigen::VectorXd& g) {
    nx->grad_buffer().array() += (nx->value.array() > 0.0).select(g.array(), 0.0);
  });
}

Tensor sigmoid(const Tensor& x) {
  Eigen::VectorXd y = (1.0 + (-x.values().array()).exp()).inverse().matrix();
  Tensor out(x.shape(), y);
  NodePtr nx = x.node(), no = out.node();
  return finish(out, {nx}, [nx, no](const Eigen::VectorXd& g) {
    const auto s = no->value.array();
    nx->grad_buffer().array() += g.array() * s * (1.0 - s);
  });
}

Tensor sqrt(const Tensor& x) {
  if ((x.values().array() < 0.0).any()) throw ContractError("sqrt: negative input");
  Tensor out(x.shape(), x.values().cwiseSqrt());
  NodePtr nx = x.node(), no = out.node();
  return finish(out, {nx}, [nx, no](const Eigen::VectorXd& g) {
    const auto r = no->value.array();
    nx->grad_buffer().array() += (r > 0.0).select(g.array() / (2.0 * r), 0.0);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape(), a.values() + b.values());
  NodePtr na = a.node(), nb = b.node();
  return finish(out, {na, nb}, [na, nb](const Eigen::VectorXd& g) {
    if (wants_grad(na)) na->grad_buffer() += g;
    if (wants_grad(nb)) nb->grad_buffer() += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape(), a.values() - b.values());
  NodePtr na = a.node(), nb = b.node();
  return finish(out, {na, nb}, [na, nb](const Eigen::VectorXd& g) {
    if (wants_grad(na)) na->grad_buffer() += g;
    if (wants_grad(nb)) nb->grad_buffer() -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape(), a.values().cwiseProduct(b.values()));
  NodePtr na = a.node(), nb = b.node();
  return finish(out, {na, nb}, [na, nb](const Eigen::VectorXd& g) {
    if (wants_grad(na)) na->grad_buffer() += g.cwiseProduct(nb->value);
    if (wants_grad(nb)) nb->grad_buffer() += g.cwiseProduct(na->value);
  });
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape(), x.values() * factor);
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx, factor](const Eigen::VectorXd& g) {
    nx->grad_buffer() += g * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.shape().back();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match last dim of " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape(), x.values());
  RowMap om(out.mutable_data().data(), idx(rows), idx(n));
  om.rowwise() += bias.values().transpose();
  NodePtr nx = x.node(), nb = bias.node();
  return finish(out, {nx, nb}, [nx, nb, rows, n](const Eigen::VectorXd& g) {
    if (wants_grad(nx)) nx->grad_buffer() += g;
    if (wants_grad(nb)) {
      ConstRowMap gm(g.data(), idx(rows), idx(n));
      nb->grad_buffer() += gm.colwise().sum().transpose();
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t channels = x.dim(0);
  if (bias.numel() != channels) {
    throw DimensionError("add_channel_bias: bias " + shape_string(bias.shape()) +
                         " does not match channels of " + shape_string(x.shape()));
  }
  const std::size_t per = x.numel() / channels;
  Tensor out(x.shape(), x.values());
  RowMap om(out.mutable_data().data(), idx(channels), idx(per));
  om.colwise() += bias.values();
  NodePtr nx = x.node(), nb = bias.node();
  return finish(out, {nx, nb}, [nx, nb, channels, per](const Eigen::VectorXd& g) {
    if (wants_grad(nx)) nx->grad_buffer() += g;
    if (wants_grad(nb)) {
      ConstRowMap gm(g.data(), idx(channels), idx(per));
      nb->grad_buffer() += gm.rowwise().sum();
    }
  });
}

Tensor sum(const Tensor& x) {
  Tensor out({1}, x.values().sum());
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx](const Eigen::VectorXd& g) {
    nx->grad_buffer().array() += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  Tensor out({1}, x.values().sum() / n);
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx, n](const Eigen::VectorXd& g) {
    nx->grad_buffer().array() += g[0] / n;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  Tensor out(std::move(shape), x.values());
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx](const Eigen::VectorXd& g) { nx->grad_buffer() += g; });
}

Tensor flatten(const Tensor& x) { return reshape(x, {x.numel()}); }

Tensor take(const Tensor& x, std::size_t index) {
  if (index >= x.numel()) {
    throw DimensionError("take: index " + std::to_string(index) + " out of range for " +
                         shape_string(x.shape()));
  }
  Tensor out({1}, x[index]);
  NodePtr nx = x.node();
  return finish(out, {nx}, [nx, index](const Eigen::VectorXd& g) {
    nx->grad_buffer()[idx(index)] += g[0];
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw EmptyInputError("concat: no tensors given");
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t leading = 0, total = 0;
  std::vector<NodePtr> inputs;
  for (const Tensor& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != trailing) {
      throw DimensionError("concat: trailing dims of " + shape_string(p.shape()) +
                           " differ from " + shape_string(parts[0].shape()));
    }
    leading += p.dim(0);
    total += p.numel();
    inputs.push_back(p.node());
  }
  Shape shape{leading};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  Eigen::VectorXd values(idx(total));
  std::size_t at = 0;
  for (const Tensor& p : parts) {
    values.segment(idx(at), idx(p.numel())) = p.values();
    at += p.numel();
  }
  Tensor out(std::move(shape), values);
  return finish(out, inputs, [inputs](const Eigen::VectorXd& g) {
    std::size_t offset = 0;
    for (const NodePtr& n : inputs) {
      const auto len = n->value.size();
      if (wants_grad(n)) n->grad_buffer() += g.segment(idx(offset), len);
      offset += static_cast<std::size_t>(len);
    }
  });
}

}  // namespace driveflow
