#pragma once

// Text and image helpers for the command-line driver: complex literals,
// comma lists, 16-bit PGM slices.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "artkit/errors.hpp"
#include "artkit/tensor.hpp"

namespace artkit {

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

} // namespace detail

/// Parses "a", "bi", "a+bi", "a-bi" (also "i", "-i"); no spaces, '.' as the
/// decimal point whatever the locale.
inline cplx parse_complex(std::string_view s) {
  const std::string orig(s);
  auto fail = [&] { return ArgumentError("bad complex number '" + orig + "' (expected a+bi)"); };
  if (s.empty()) throw fail();
  if (s.back() != 'i') {
    double re = 0.0;
    if (!detail::parse_double(s, re)) throw fail();
    return {re, 0.0};
  }
  s.remove_suffix(1);
  // split at the last sign that is not the leading one or an exponent sign
  std::size_t cut = std::string_view::npos;
  for (std::size_t i = s.size(); i-- > 1;) {
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') {
      cut = i;
      break;
    }
  }
  std::string_view re_part = cut == std::string_view::npos ? std::string_view{} : s.substr(0, cut);
  std::string_view im_part = cut == std::string_view::npos ? s : s.substr(cut);
  double re = 0.0, im = 0.0;
  if (!re_part.empty() && !detail::parse_double(re_part, re)) throw fail();
  if (im_part.empty() || im_part == "+")
    im = 1.0;
  else if (im_part == "-")
    im = -1.0;
  else if (!detail::parse_double(im_part, im))
    throw fail();
  return {re, im};
}

inline std::string format_complex(cplx z) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g%+.17gi", z.real(), z.imag());
  return buf;
}

/// "a,b,c" → {a, b, c}.
inline std::vector<double> parse_list(std::string_view s) {
  std::vector<double> out;
  const std::string orig(s);
  while (true) {
    std::size_t comma = s.find(',');
    double v = 0.0;
    if (!detail::parse_double(s.substr(0, comma), v)) throw ArgumentError("bad number list '" + orig + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

/// |component c| on the plane k = nz/2, x along columns, y along rows
/// (row 0 is the largest y).
inline std::vector<double> midplane_magnitude(const SymTensorGridField& f, std::size_t c = 0) {
  if (c >= f.components()) throw ArgumentError("component index out of range");
  const auto& g = f.geometry();
  const std::size_t nx = g.dims[0], ny = g.dims[1], k = g.dims[2] / 2;
  std::vector<double> out(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) out[(ny - 1 - j) * nx + i] = std::abs(f(c, g.index(i, j, k)));
  return out;
}

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples), values scaled so
/// the largest maps to 65535.
inline std::vector<unsigned char> encode_pgm16(const std::vector<double>& v, std::size_t width, std::size_t height) {
  if (v.size() != width * height) throw ArgumentError("slice size does not match width x height");
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  double top = 0.0;
  for (double x : v) top = std::max(top, x);
  for (double x : v) {
    auto q = static_cast<std::uint16_t>(top > 0.0 ? std::lround(65535.0 * x / top) : 0);
    out.push_back(static_cast<unsigned char>(q >> 8));
    out.push_back(static_cast<unsigned char>(q & 0xff));
  }
  return out;
}

inline void write_bytes(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

} // namespace artkit
