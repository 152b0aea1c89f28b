#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/storage.hpp"

namespace iprior {

/// Search over all pixel pairs instead of a square window.
inline constexpr int kFullSearch = -1;

struct KernelParams {
  int patch_radius = 2;            // patch is (2r+1)^2
  int search_radius = kFullSearch;  // kFullSearch or a window radius in pixels
  double h = 0.5;                  // kernel bandwidth, intensity units
  std::string guide_tag = "oracle";  // provenance: "oracle" | "shepard-init" | "iterate"
};

/// Patch-similarity kernel: K_ij = exp(-||p_i - p_j||^2 / (2h^2)), entries in
/// (0,1], unit diagonal, exactly symmetric.
struct KernelMatrix {
  Index n = 0;
  MatrixStore entries;

  bool dense() const { return store_is_dense(entries); }
};

namespace detail {

/// Mirror (symmetric, edge-inclusive) reflection of coordinate c into [0, size).
inline int reflect(int c, int size) {
  while (c < 0 || c >= size) {
    if (c < 0) c = -c - 1;
    if (c >= size) c = 2 * size - 1 - c;
  }
  return c;
}

/// Rows are flattened (2r+1)^2 patches around each pixel, mirror-padded at
/// the borders.
inline Eigen::MatrixXd patch_matrix(const Image& guide, int patch_radius) {
  const int w = guide.width, h = guide.height, r = patch_radius;
  const int k = 2 * r + 1;
  Eigen::MatrixXd P(Index(w) * h, Index(k) * k);
  Index row = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x, ++row) {
      Index c = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = reflect(y + dy, h);
        for (int dx = -r; dx <= r; ++dx, ++c) P(row, c) = guide.at(reflect(x + dx, w), yy);
      }
    }
  }
  return P;
}

}  // namespace detail

/// Builds the patch kernel of a guide image. Dense mode (full search)
/// evaluates every pair through one Gram product; windowed mode evaluates
/// each unordered pair inside the Chebyshev window once and mirrors it, so
/// K_ij and K_ji are the same bits.
inline KernelMatrix build_kernel(const Image& guide, const KernelParams& params) {
  if (!(params.h > 0.0)) throw ContractError("build_kernel: h must be > 0");
  if (params.patch_radius < 0) throw ContractError("build_kernel: patch_radius must be >= 0");
  if (params.search_radius != kFullSearch && params.search_radius < 1)
    throw ContractError("build_kernel: search_radius must be >= 1 or full");
  if (!guide.all_finite()) throw ContractError("build_kernel: guide has non-finite intensities");

  const int w = guide.width, h = guide.height;
  const Index n = Index(w) * h;
  const double inv2h2 = 1.0 / (2.0 * params.h * params.h);

  KernelMatrix K;
  K.n = n;

  const Eigen::MatrixXd P = detail::patch_matrix(guide, params.patch_radius);

  if (params.search_radius == kFullSearch) {
    // ||p_i - p_j||^2 = g_i + g_j - 2 G_ij with G = P P^T. The Gram matrix is
    // filled from one triangle so the distance expression is bit-symmetric.
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    G.selfadjointView<Eigen::Lower>().rankUpdate(P, 1.0);
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    const Eigen::VectorXd g = G.diagonal();
    Eigen::MatrixXd W(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        const double d2 = std::max(g[i] + g[j] - 2.0 * G(i, j), 0.0);
        W(i, j) = std::exp(-d2 * inv2h2);
      }
    }
    W.diagonal().setOnes();
    K.entries = std::move(W);
    return K;
  }

  const int sr = params.search_radius;
  SparseRows S;
  S.n = n;
  std::vector<std::vector<std::pair<Index, double>>> rows(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Index i = Index(y) * w + x;
      for (int dy = 0; dy <= sr && y + dy < h; ++dy) {
        const int dx0 = (dy == 0) ? 0 : -sr;
        for (int dx = dx0; dx <= sr; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const Index j = Index(y + dy) * w + xx;
          double v;
          if (i == j) {
            v = 1.0;
            rows[i].emplace_back(i, v);
            continue;
          }
          const double d2 = std::max((P.row(i) - P.row(j)).squaredNorm(), 0.0);
          v = std::exp(-d2 * inv2h2);
          rows[i].emplace_back(j, v);
          rows[j].emplace_back(i, v);
        }
      }
    }
  }
  S.row_ptr.resize(n + 1, 0);
  for (Index i = 0; i < n; ++i) {
    std::sort(rows[i].begin(), rows[i].end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    S.row_ptr[i + 1] = S.row_ptr[i] + rows[i].size();
  }
  S.col.reserve(S.row_ptr[n]);
  S.val.reserve(S.row_ptr[n]);
  for (Index i = 0; i < n; ++i) {
    for (const auto& [j, v] : rows[i]) {
      S.col.push_back(j);
      S.val.push_back(v);
    }
  }
  K.entries = std::move(S);
  return K;
}

/// Defaults used when the caller gives no explicit kernel configuration:
/// 5x5 patches, full search at desk scale (n <= 4096) and a 5-pixel window
/// beyond it, bandwidth tied to the noise level as h = 10*sigma.
inline KernelParams default_kernel_params(Index n, double sigma) {
  KernelParams p;
  p.patch_radius = 2;
  p.search_radius = (n <= 4096) ? kFullSearch : 5;
  p.h = (sigma > 0.0) ? 10.0 * sigma : 0.5;
  return p;
}

}  // namespace iprior
