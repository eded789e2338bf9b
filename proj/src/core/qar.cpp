#include "qmri/core/qar.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace qmri {

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'A', 'R', '1'};

template <class T>
struct Scalar {
  using type = T;
};
template <class T>
struct Scalar<std::complex<T>> {
  using type = T;
};

template <class T>
constexpr DType dtype_for() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else if constexpr (std::is_same_v<T, std::complex<float>>) return DType::c64;
  else return DType::c128;
}

template <class U>
void put_le(std::string& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<char, sizeof(U)> b;
  std::memcpy(b.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.append(b.data(), b.size());
}

template <class U>
U get_le(const char* p) {
  std::array<char, sizeof(U)> b;
  std::memcpy(b.data(), p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  U v;
  std::memcpy(&v, b.data(), sizeof(U));
  return v;
}

template <class T>
bool all_finite(const Grid<T>& g) {
  for (const auto& v : g.vec()) {
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(v)) return false;
    } else {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
  }
  return true;
}

template <class T>
std::string encode(const Grid<T>& g) {
  require(g.ndim() >= 1 && g.ndim() <= 4, ErrorKind::shape,
          "unsupported-shape: QAR1 supports 1..4 dims, got " + std::to_string(g.ndim()));
  require(all_finite(g), ErrorKind::domain, "write_array: non-finite values");
  using S = typename Scalar<T>::type;
  std::string out;
  out.reserve(8 + 8 * g.ndim() + g.size() * sizeof(T));
  out.append(kMagic.data(), kMagic.size());
  out.push_back(static_cast<char>(dtype_for<T>()));
  out.push_back(static_cast<char>(g.ndim()));
  out.push_back(0);
  out.push_back(0);
  for (auto d : g.dims()) put_le<std::uint64_t>(out, d);
  for (const auto& v : g.vec()) {
    if constexpr (std::is_floating_point_v<T>) {
      put_le<S>(out, v);
    } else {
      put_le<S>(out, v.real());
      put_le<S>(out, v.imag());
    }
  }
  return out;
}

template <class T>
Grid<T> decode_payload(const Dims& dims, const char* p, std::size_t avail,
                       const std::string& where) {
  using S = typename Scalar<T>::type;
  const std::size_t n = dims_product(dims);
  if (avail < n * sizeof(T)) fail(ErrorKind::io, "truncated-payload: " + where);
  if (avail > n * sizeof(T)) fail(ErrorKind::io, "trailing bytes after payload: " + where);
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (std::is_floating_point_v<T>) {
      data[i] = get_le<S>(p + i * sizeof(S));
    } else {
      data[i] = T(get_le<S>(p + 2 * i * sizeof(S)), get_le<S>(p + (2 * i + 1) * sizeof(S)));
    }
  }
  return Grid<T>(dims, std::move(data));
}

}  // namespace

std::string dims_to_string(const Dims& d) {
  std::string s = "(";
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(d[i]);
  }
  return s + ")";
}

DType dtype_of(const AnyGrid& a) {
  return std::visit([](const auto& g) { return dtype_for<typename std::decay_t<decltype(g)>::value_type>(); }, a);
}

const Dims& dims_of(const AnyGrid& a) {
  return std::visit([](const auto& g) -> const Dims& { return g.dims(); }, a);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot open for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorKind::io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "rename failed: " + path.string() + ": " + ec.message());
}

void write_array(const std::filesystem::path& path, const AnyGrid& a) {
  const std::string bytes = std::visit([](const auto& g) { return encode(g); }, a);
  write_file_atomic(path, bytes);
}

AnyGrid read_array(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "missing input file: " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (buf.size() < 8) fail(ErrorKind::io, "truncated-header: " + where);
  if (std::memcmp(buf.data(), kMagic.data(), 4) != 0) fail(ErrorKind::io, "bad-magic: " + where);
  const auto code = static_cast<std::uint8_t>(buf[4]);
  const auto ndim = static_cast<std::uint8_t>(buf[5]);
  if (code < 1 || code > 4)
    fail(ErrorKind::io, "unknown-dtype-code " + std::to_string(code) + ": " + where);
  if (buf[6] != 0 || buf[7] != 0) fail(ErrorKind::io, "nonzero header padding: " + where);
  if (ndim < 1 || ndim > 4)
    fail(ErrorKind::io, "unsupported-shape: ndim " + std::to_string(ndim) + ": " + where);
  if (buf.size() < 8 + 8u * ndim) fail(ErrorKind::io, "truncated-header: " + where);
  Dims dims(ndim);
  for (std::size_t i = 0; i < ndim; ++i) dims[i] = get_le<std::uint64_t>(buf.data() + 8 + 8 * i);
  const char* p = buf.data() + 8 + 8 * ndim;
  const std::size_t avail = buf.size() - (8 + 8 * ndim);
  switch (static_cast<DType>(code)) {
    case DType::f32: return decode_payload<float>(dims, p, avail, where);
    case DType::f64: return decode_payload<double>(dims, p, avail, where);
    case DType::c64: return decode_payload<std::complex<float>>(dims, p, avail, where);
    case DType::c128: return decode_payload<std::complex<double>>(dims, p, avail, where);
  }
  fail(ErrorKind::io, "unknown-dtype-code: " + where);
}

RealGrid read_real(const std::filesystem::path& path) {
  auto a = read_array(path);
  if (auto* g = std::get_if<Grid<double>>(&a)) return std::move(*g);
  if (auto* g = std::get_if<Grid<float>>(&a)) {
    std::vector<double> v(g->vec().begin(), g->vec().end());
    return RealGrid(g->dims(), std::move(v));
  }
  fail(ErrorKind::usage, "expected a real array: " + path.string());
}

ComplexGrid read_complex(const std::filesystem::path& path) {
  auto a = read_array(path);
  return std::visit(
      [](auto& g) {
        std::vector<cplx> v(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) v[i] = cplx(g[i]);
        return ComplexGrid(g.dims(), std::move(v));
      },
      a);
}

MaskGrid read_mask(const std::filesystem::path& path) {
  const RealGrid r = read_real(path);
  MaskGrid m(r.dims());
  for (std::size_t i = 0; i < r.size(); ++i) m[i] = r[i] != 0.0 ? 1 : 0;
  return m;
}

void write_real(const std::filesystem::path& path, const RealGrid& g) { write_array(path, g); }

void write_complex(const std::filesystem::path& path, const ComplexGrid& g) { write_array(path, g); }

void write_mask(const std::filesystem::path& path, const MaskGrid& m) {
  Grid<float> f(m.dims());
  for (std::size_t i = 0; i < m.size(); ++i) f[i] = m[i] ? 1.0f : 0.0f;
  write_array(path, f);
}

}  // namespace qmri
