#pragma once

#include <optional>

#include "qmri/core/grid.hpp"

namespace qmri::metrics {

// Returned by snr_db when est == ref.
constexpr double kPerfectSnrDb = 300.0;

// 20·log10(‖ref‖₂ / ‖ref − est‖₂).
double snr_db(const RealGrid& ref, const RealGrid& est);
double snr_db(const ComplexGrid& ref, const ComplexGrid& est);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean local SSIM over the valid window positions of a 2-D real image.
// Dynamic range defaults to max(ref) − min(ref).
double ssim(const RealGrid& ref, const RealGrid& est, std::optional<double> dynamic_range = std::nullopt,
            const SsimParams& p = {});

// Mean SSIM over the leading axis of (N, H, W) stacks; range taken from the whole ref stack.
double ssim_stack(const RealGrid& ref, const RealGrid& est, const SsimParams& p = {});

RealGrid magnitude(const ComplexGrid& g);
// Zeroes voxels outside a (H, W) mask.
RealGrid apply_mask(const RealGrid& g, const MaskGrid& mask);

}  // namespace qmri::metrics
