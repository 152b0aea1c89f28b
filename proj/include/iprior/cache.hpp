#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/sinkhorn.hpp"
#include "iprior/spectral.hpp"

// Binary caches for the two expensive artifacts, so a balanced filter or its
// eigendecomposition can be reused across runs. Both formats are
// little-endian regardless of host byte order.
//
// Filter cache (.aipw):
//   bytes 0..3   magic "AIPW"
//   u16          format version (currently 1)
//   u16          flags, bit 0 set = windowed sparse entries
//   u64          n (pixel count; the matrix is n x n)
//   f64          balance_residual
//   entries      dense:  n*n f64, row-major
//                sparse: per row, u64 count then count * (u64 col, f64 val),
//                        columns ascending
//
// Spectral cache (.aips):
//   bytes 0..3   magic "AIPS"
//   u16          format version (currently 1)
//   u64          n, then u64 m (retained eigenpairs)
//   f64          trunc_tol (absolute threshold that produced the truncation)
//   m   f64      eigenvalues, descending
//   n*m f64      eigenvectors, column-major

namespace iprior {

inline constexpr std::uint16_t kCacheVersion = 1;

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

struct CacheReader {
  std::ifstream in;
  std::string path;
  std::uint64_t offset = 0;

  CacheReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError("cannot open " + p);
  }

  void bytes(void* dst, std::size_t count) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
      throw IoError(path + ": truncated at byte " + std::to_string(offset + in.gcount()));
    offset += count;
  }

  std::uint16_t u16() {
    unsigned char b[2];
    bytes(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  void f64_block(double* dst, std::uint64_t count) {
    // Bulk read, then byte-swap only on big-endian hosts.
    bytes(dst, count * 8);
    if constexpr (std::endian::native == std::endian::big) {
      auto* p = reinterpret_cast<unsigned char*>(dst);
      for (std::uint64_t k = 0; k < count; ++k, p += 8)
        for (int i = 0; i < 4; ++i) std::swap(p[i], p[7 - i]);
    }
  }

  void expect_magic(const char* magic) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0)
      throw ParseError(path + ": bad magic, expected " + std::string(magic, 4));
  }
};

inline void f64_block_out(std::ostream& os, const double* src, std::uint64_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::uint64_t k = 0; k < count; ++k) put_f64(os, src[k]);
  }
}

}  // namespace detail

inline void save_filter(const SmoothingFilter& W, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("AIPW", 4);
  detail::put_u16(out, kCacheVersion);
  const bool sparse = !store_is_dense(W.weights);
  detail::put_u16(out, sparse ? 1 : 0);
  detail::put_u64(out, static_cast<std::uint64_t>(W.n));
  detail::put_f64(out, W.balance_residual);
  if (!sparse) {
    const auto& M = std::get<Eigen::MatrixXd>(W.weights);
    for (Index i = 0; i < W.n; ++i)
      for (Index j = 0; j < W.n; ++j) detail::put_f64(out, M(i, j));
  } else {
    const auto& S = std::get<SparseRows>(W.weights);
    for (Index i = 0; i < W.n; ++i) {
      const Index lo = S.row_ptr[i], hi = S.row_ptr[i + 1];
      detail::put_u64(out, static_cast<std::uint64_t>(hi - lo));
      for (Index k = lo; k < hi; ++k) {
        detail::put_u64(out, static_cast<std::uint64_t>(S.col[k]));
        detail::put_f64(out, S.val[k]);
      }
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

inline SmoothingFilter load_filter(const std::string& path) {
  detail::CacheReader r(path);
  r.expect_magic("AIPW");
  const std::uint16_t version = r.u16();
  if (version != kCacheVersion)
    throw ParseError(path + ": unsupported filter cache version " + std::to_string(version));
  const std::uint16_t flags = r.u16();
  const std::uint64_t n = r.u64();
  if (n == 0 || n > (1u << 24))
    throw ParseError(path + ": implausible dimension " + std::to_string(n));

  SmoothingFilter W;
  W.n = static_cast<Index>(n);
  W.balance_residual = r.f64();
  W.iterations = 0;
  W.converged = true;
  W.params.guide_tag = "cached";
  if ((flags & 1) == 0) {
    Eigen::MatrixXd M(W.n, W.n);
    for (Index i = 0; i < W.n; ++i)
      for (Index j = 0; j < W.n; ++j) M(i, j) = r.f64();
    W.weights = std::move(M);
  } else {
    SparseRows S;
    S.n = W.n;
    S.row_ptr.resize(n + 1, 0);
    for (Index i = 0; i < W.n; ++i) {
      const std::uint64_t count = r.u64();
      if (count > n) throw ParseError(path + ": row " + std::to_string(i) + " overfull");
      S.row_ptr[i + 1] = S.row_ptr[i] + static_cast<Index>(count);
      for (std::uint64_t k = 0; k < count; ++k) {
        const std::uint64_t col = r.u64();
        if (col >= n)
          throw ParseError(path + ": column " + std::to_string(col) + " out of range in row " +
                           std::to_string(i));
        S.col.push_back(static_cast<Index>(col));
        S.val.push_back(r.f64());
      }
    }
    W.weights = std::move(S);
  }
  return W;
}

inline void save_spectral(const SpectralFilter& F, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("AIPS", 4);
  detail::put_u16(out, kCacheVersion);
  detail::put_u64(out, static_cast<std::uint64_t>(F.n));
  detail::put_u64(out, static_cast<std::uint64_t>(F.m));
  detail::put_f64(out, F.trunc_tol);
  detail::f64_block_out(out, F.eigvals.data(), static_cast<std::uint64_t>(F.m));
  detail::f64_block_out(out, F.eigvecs.data(),
                        static_cast<std::uint64_t>(F.n) * static_cast<std::uint64_t>(F.m));
  if (!out) throw IoError("write failed for " + path);
}

inline SpectralFilter load_spectral(const std::string& path) {
  detail::CacheReader r(path);
  r.expect_magic("AIPS");
  const std::uint16_t version = r.u16();
  if (version != kCacheVersion)
    throw ParseError(path + ": unsupported spectral cache version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint64_t m = r.u64();
  if (n == 0 || n > (1u << 24) || m > n)
    throw ParseError(path + ": implausible dimensions n=" + std::to_string(n) +
                     " m=" + std::to_string(m));
  SpectralFilter F;
  F.n = static_cast<Index>(n);
  F.m = static_cast<Index>(m);
  F.trunc_tol = r.f64();
  F.eigvals.resize(F.m);
  F.eigvecs.resize(F.n, F.m);
  r.f64_block(F.eigvals.data(), m);
  r.f64_block(F.eigvecs.data(), n * m);
  if (F.m > 0) F.min_eigenvalue = F.eigvals[F.m - 1];
  return F;
}

}  // namespace iprior
