#include "gwlz/metrics.hpp"

#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "gwlz/error.hpp"

namespace gwlz {

namespace {

void check_same_dims(const Volume& x, const Volume& y) {
  if (x.dims() != y.dims())
    throw DimensionError(fmt::format("volumes differ in shape: {} vs {}", to_string(x.dims()), to_string(y.dims())));
}

}  // namespace

double mse(const Volume& x, const Volume& y) {
  check_same_dims(x, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = double(x[i]) - double(y[i]);
    acc += d * d;
  }
  return acc / double(x.size());
}

double psnr_from_mse(double range, double m) {
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  if (!(range > 0.0)) throw DataError("PSNR undefined: reference range is 0 but the error is not");
  return 20.0 * std::log10(range) - 10.0 * std::log10(m);
}

double psnr(const Volume& x, const Volume& y) { return psnr_from_mse(vrange(x), mse(x, y)); }

double improvement_pct(double psnr_base, double psnr_enh) {
  if (!std::isfinite(psnr_base) || !(psnr_base > 0.0))
    throw DataError(fmt::format("improvement undefined for base PSNR {}", format_number(psnr_base)));
  return (psnr_enh - psnr_base) / psnr_base * 100.0;
}

double max_abs_error(const Volume& x, const Volume& y) {
  check_same_dims(x, y);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(double(x[i]) - double(y[i])));
  return worst;
}

QualityReport report(const Volume& original, const Volume& decompressed, const Volume& enhanced, const GwlzArchive& archive) {
  check_same_dims(original, decompressed);
  check_same_dims(original, enhanced);
  QualityReport r;
  r.mse = mse(original, enhanced);
  const double range = vrange(original);
  // A constant reference with nonzero error has no PSNR; report NaN rather than fail.
  auto psnr_or_nan = [range](double m) {
    return (range > 0.0 || m == 0.0) ? psnr_from_mse(range, m) : std::numeric_limits<double>::quiet_NaN();
  };
  r.psnr = psnr_or_nan(r.mse);
  const double base = psnr_or_nan(mse(original, decompressed));
  r.cr = ratio(4 * original.size(), archive.payload_bytes);
  r.overhead = overhead_ratio(archive);
  if (base == r.psnr)
    r.improvement_pct = 0.0;
  else if (!std::isfinite(base) || !(base > 0.0))
    r.improvement_pct = std::numeric_limits<double>::quiet_NaN();
  else
    r.improvement_pct = improvement_pct(base, r.psnr);
  return r;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.10g}", v);
}

std::string format_report(const QualityReport& r) {
  return fmt::format("mse={}\npsnr_db={}\ncr={}\noverhead={}\nimprovement_pct={}\n", format_number(r.mse), format_number(r.psnr),
                     format_number(r.cr), format_number(r.overhead), format_number(r.improvement_pct));
}

}  // namespace gwlz
