#pragma once

// QAR1 array container.
//
//   bytes 0-3   magic "QAR1"
//   byte  4     dtype code: 1=f32 2=f64 3=complex64 4=complex128
//   byte  5     ndim (1..4)
//   bytes 6-7   zero
//   ndim x u64  dims
//   payload     row-major, little-endian, complex as interleaved (re, im)

#include <complex>
#include <cstdint>
#include <filesystem>
#include <variant>

#include "qmri/core/grid.hpp"

namespace qmri {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, c64 = 3, c128 = 4 };

using AnyGrid = std::variant<Grid<float>, Grid<double>, Grid<std::complex<float>>,
                             Grid<std::complex<double>>>;

DType dtype_of(const AnyGrid& a);
const Dims& dims_of(const AnyGrid& a);

void write_array(const std::filesystem::path& path, const AnyGrid& a);
AnyGrid read_array(const std::filesystem::path& path);

// Convenience readers that widen to the f64 working precision.
RealGrid read_real(const std::filesystem::path& path);
ComplexGrid read_complex(const std::filesystem::path& path);
MaskGrid read_mask(const std::filesystem::path& path);

void write_real(const std::filesystem::path& path, const RealGrid& g);
void write_complex(const std::filesystem::path& path, const ComplexGrid& g);
// Masks are stored as f32 0/1.
void write_mask(const std::filesystem::path& path, const MaskGrid& m);

// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace qmri
