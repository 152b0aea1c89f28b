#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"

namespace iprior {

namespace detail {

struct PgmCursor {
  const std::string& bytes;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("pgm: " + msg + " at byte offset " + std::to_string(pos));
  }

  bool eof() const { return pos >= bytes.size(); }

  // Whitespace and '#' comments separate header tokens.
  void skip_separators() {
    while (!eof()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (!eof() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long next_int(const char* what) {
    skip_separators();
    if (eof()) fail(std::string("missing ") + what);
    if (!std::isdigit(static_cast<unsigned char>(bytes[pos])))
      fail(std::string("expected digit for ") + what);
    long v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000L) fail(std::string(what) + " out of range");
      ++pos;
    }
    return v;
  }
};

}  // namespace detail

/// Reads a P2 (ASCII) or P5 (binary) PGM file with maxval 255 or 65535.
/// Intensities are mapped to [0,1] by dividing by maxval. 16-bit binary
/// samples are big-endian, as the format requires.
inline Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  detail::PgmCursor cur{bytes};
  if (bytes.size() < 2) cur.fail("missing magic");
  const char m0 = bytes[0], m1 = bytes[1];
  if (m0 != 'P' || (m1 != '2' && m1 != '5')) cur.fail("bad magic, expected P2 or P5");
  const bool binary = (m1 == '5');
  cur.pos = 2;

  const long width = cur.next_int("width");
  const long height = cur.next_int("height");
  const long maxval = cur.next_int("maxval");
  if (width <= 0 || height <= 0) cur.fail("non-positive dimensions");
  if (maxval != 255 && maxval != 65535) cur.fail("maxval must be 255 or 65535");

  const std::size_t n = std::size_t(width) * std::size_t(height);
  std::vector<double> data(n);
  // True division: k/maxval must reproduce the exact double a writer computed.
  const double maxd = static_cast<double>(maxval);

  if (binary) {
    // Exactly one whitespace byte separates the header from the raster.
    if (cur.eof() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos])))
      cur.fail("missing raster separator");
    ++cur.pos;
    const std::size_t sample_bytes = (maxval == 255) ? 1 : 2;
    if (bytes.size() - cur.pos < n * sample_bytes)
      throw IoError("pgm: truncated raster in '" + path + "': expected " +
                    std::to_string(n * sample_bytes) + " bytes, got " +
                    std::to_string(bytes.size() - cur.pos));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + cur.pos;
    if (sample_bytes == 1) {
      for (std::size_t i = 0; i < n; ++i) data[i] = p[i] / maxd;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        data[i] = (double(p[2 * i]) * 256.0 + double(p[2 * i + 1])) / maxd;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      long v;
      try {
        v = cur.next_int("sample");
      } catch (const ParseError&) {
        if (cur.eof())
          throw IoError("pgm: truncated raster in '" + path + "': got " + std::to_string(i) +
                        " of " + std::to_string(n) + " samples");
        throw;
      }
      if (v > maxval) cur.fail("sample exceeds maxval");
      data[i] = static_cast<double>(v) / maxd;
    }
  }
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

/// Writes binary P5 with maxval 255. Intensities are clamped to [0,1] and
/// quantized with round-half-up, so a load/save round trip moves each pixel
/// by at most 1/510.
inline void save_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot open '" + path + "' for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::string raster(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    raster[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("pgm: write failed for '" + path + "'");
}

}  // namespace iprior
