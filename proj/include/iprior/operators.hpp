#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/sampling.hpp"

namespace iprior {

/// Linear degradation operator A in y = A x + noise. Two kinds:
/// kMask keeps observed pixels and zeroes the rest (diagonal 0/1, so
/// self-adjoint and idempotent); kConv2d circularly convolves with an
/// odd-sized stencil, with the adjoint given by the flipped stencil.
struct ForwardOperator {
  enum class Kind { kMask, kConv2d };

  Kind kind = Kind::kMask;
  int width = 0;
  int height = 0;

  std::vector<std::uint8_t> keep;  // mask mode, size n

  int kw = 0, kh = 0;            // conv mode, both odd
  std::vector<double> stencil;   // row-major kh x kw, centered

  Index size() const { return Index(width) * Index(height); }
};

inline ForwardOperator make_mask_operator(const SamplingMask& mask) {
  ForwardOperator op;
  op.kind = ForwardOperator::Kind::kMask;
  op.width = mask.width;
  op.height = mask.height;
  op.keep = mask.keep;
  return op;
}

inline ForwardOperator make_conv_operator(int width, int height, int kw, int kh,
                                          std::vector<double> stencil) {
  if (width <= 0 || height <= 0) throw ContractError("make_conv_operator: empty image grid");
  if (kw <= 0 || kh <= 0 || kw % 2 == 0 || kh % 2 == 0)
    throw ContractError("make_conv_operator: stencil must be odd in both dimensions, got " +
                        std::to_string(kw) + "x" + std::to_string(kh));
  if (Index(stencil.size()) != Index(kw) * Index(kh))
    throw ContractError("make_conv_operator: stencil length does not match its dimensions");
  ForwardOperator op;
  op.kind = ForwardOperator::Kind::kConv2d;
  op.width = width;
  op.height = height;
  op.kw = kw;
  op.kh = kh;
  op.stencil = std::move(stencil);
  return op;
}

namespace detail {

inline int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

/// Circular convolution; flip=true applies the 180-degree rotated stencil,
/// which is exactly the adjoint of the unflipped pass.
inline Eigen::VectorXd conv_circular(const ForwardOperator& op, const Eigen::VectorXd& x,
                                     bool flip) {
  const int w = op.width, h = op.height;
  const int cx = op.kw / 2, cy = op.kh / 2;
  Eigen::VectorXd y(x.size());
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      double acc = 0.0;
      for (int qy = 0; qy < op.kh; ++qy) {
        const int oy = qy - cy;
        const int sy = wrap(flip ? py + oy : py - oy, h);
        const double* krow = op.stencil.data() + Index(qy) * op.kw;
        for (int qx = 0; qx < op.kw; ++qx) {
          const int ox = qx - cx;
          const int sx = wrap(flip ? px + ox : px - ox, w);
          acc += krow[qx] * x[Index(sy) * w + sx];
        }
      }
      y[Index(py) * w + px] = acc;
    }
  }
  return y;
}

}  // namespace detail

inline Eigen::VectorXd apply(const ForwardOperator& op, const Eigen::VectorXd& x) {
  if (x.size() != op.size())
    throw ContractError("forward operator: vector length " + std::to_string(x.size()) +
                        " does not match grid " + std::to_string(op.width) + "x" +
                        std::to_string(op.height));
  if (op.kind == ForwardOperator::Kind::kMask) {
    Eigen::VectorXd y = x;
    for (Index i = 0; i < y.size(); ++i)
      if (!op.keep[i]) y[i] = 0.0;
    return y;
  }
  return detail::conv_circular(op, x, false);
}

inline Eigen::VectorXd apply_adjoint(const ForwardOperator& op, const Eigen::VectorXd& y) {
  if (y.size() != op.size())
    throw ContractError("forward operator adjoint: vector length " + std::to_string(y.size()) +
                        " does not match grid " + std::to_string(op.width) + "x" +
                        std::to_string(op.height));
  if (op.kind == ForwardOperator::Kind::kMask) return apply(op, y);
  return detail::conv_circular(op, y, true);
}

inline Image apply(const ForwardOperator& op, const Image& x) {
  return from_vector(op.width, op.height, apply(op, Eigen::VectorXd(x.vec())));
}

inline Image apply_adjoint(const ForwardOperator& op, const Image& y) {
  return from_vector(op.width, op.height, apply_adjoint(op, Eigen::VectorXd(y.vec())));
}

inline Eigen::VectorXd apply_gram(const ForwardOperator& op, const Eigen::VectorXd& x) {
  return apply_adjoint(op, apply(op, x));
}

}  // namespace iprior
