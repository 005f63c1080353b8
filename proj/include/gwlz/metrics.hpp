#pragma once

#include <string>

#include "gwlz/container.hpp"
#include "gwlz/volume.hpp"

namespace gwlz {

/// Mean squared difference, accumulated in double.
double mse(const Volume& x, const Volume& y);

/// 20 log10(vrange(x)) - 10 log10(mse(x, y)); +inf when mse is 0.
/// The range always comes from the reference `x`.
double psnr(const Volume& x, const Volume& y);
double psnr_from_mse(double range, double mse);

/// (enh - base) / base * 100. Throws DataError if base is not finite and positive.
double improvement_pct(double psnr_base, double psnr_enh);

/// Largest |x - y|.
double max_abs_error(const Volume& x, const Volume& y);

struct QualityReport {
  double mse = 0.0;
  double psnr = 0.0;  ///< of the enhanced output
  double cr = 0.0;
  double overhead = 0.0;
  double improvement_pct = 0.0;
};

/// Improvement is 0 when both PSNRs agree (including both infinite) and NaN
/// when the base PSNR is infinite but the enhanced one is not. PSNRs that are
/// undefined (constant reference, nonzero error) are reported as NaN.
QualityReport report(const Volume& original, const Volume& decompressed, const Volume& enhanced, const GwlzArchive& archive);

/// "inf", "-inf", "nan" or a round-trippable decimal.
std::string format_number(double v);

/// key=value lines: mse, psnr_db, cr, overhead, improvement_pct.
std::string format_report(const QualityReport& r);

}  // namespace gwlz
