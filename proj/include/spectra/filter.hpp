#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <string>
#include <vector>

#include "spectra/errors.hpp"

namespace spectra {

using cplx = std::complex<double>;

/// Binomial filter coefficient c_m = C(M, M/2 - m) / 2^M, computed in log
/// space so that M up to 10^6 stays finite. Zero outside |m| <= M/2.
inline double filter_coefficient(long cos_power, long m) {
  const long half = cos_power / 2;
  const long mm = std::labs(m);  // c_m = c_{-m} exactly
  if (mm > half) return 0.0;
  const double lg = std::lgamma(static_cast<double>(cos_power) + 1.0) -
                    std::lgamma(static_cast<double>(half - mm) + 1.0) -
                    std::lgamma(static_cast<double>(half + mm) + 1.0) -
                    static_cast<double>(cos_power) * std::log(2.0);
  return std::exp(lg);
}

/// Complete recipe for the truncated cosine filter
///   F(E) = sum_{|m| <= radius} c_m exp(-i (H - E) t_m),
/// approximating the Gaussian filter of the given width. The cosine power is
/// the closest smaller even integer of (period/width)^2 and the series radius
/// is min(floor(tail_param * period / width), cos_power / 2).
struct FilterParams {
  double center = 0.0;      // filter center energy
  double width = 1.0;       // target Gaussian width
  double period = 2.0;      // cosine period scale (energy)
  double tail_param = 3.0;  // truncation constant
  long cos_power = 2;       // even power of the cosine
  long radius = 1;          // number of retained positive times
  std::vector<double> coeff_pos;  // c_m for m = 0..radius

  double time_step() const { return 2.0 / period; }
  double time(long m) const { return 2.0 * static_cast<double>(m) / period; }
  double coeff(long m) const { return coeff_pos[static_cast<size_t>(std::labs(m))]; }

  /// sum of the retained coefficients, sum_{|m| <= radius} c_m
  double coeff_sum() const {
    double s = coeff_pos[0];
    for (long m = 1; m <= radius; ++m) s += 2.0 * coeff_pos[static_cast<size_t>(m)];
    return s;
  }

  /// operator-norm bound on the discarded tail, 2 exp(-x^2/2)
  double truncation_bound() const { return 2.0 * std::exp(-0.5 * tail_param * tail_param); }
};

inline FilterParams make_filter_params(double center, double width, double period,
                                       double tail_param = 3.0) {
  if (!(width > 0.0)) throw NonPositiveParameter("filter width must be positive");
  if (!(period > 0.0)) throw NonPositiveParameter("filter period must be positive");
  if (!(tail_param > 0.0)) throw NonPositiveParameter("truncation constant must be positive");
  const double ratio2 = (period / width) * (period / width);
  const long cos_power = 2 * static_cast<long>(std::floor(0.5 * ratio2 + 1e-12));
  if (cos_power < 2)
    throw WidthTooLarge("width too large for the period: cosine power would be " +
                        std::to_string(cos_power));
  const long r_max = static_cast<long>(std::floor(tail_param * period / width + 1e-12));
  FilterParams fp;
  fp.center = center;
  fp.width = width;
  fp.period = period;
  fp.tail_param = tail_param;
  fp.cos_power = cos_power;
  fp.radius = std::min(r_max, cos_power / 2);
  fp.coeff_pos.resize(static_cast<size_t>(fp.radius) + 1);
  for (long m = 0; m <= fp.radius; ++m)
    fp.coeff_pos[static_cast<size_t>(m)] = filter_coefficient(cos_power, m);
  return fp;
}

/// Practical period choice 3 max(sigma_state sqrt(N), width).
inline double choose_alpha(double sigma_state, long n_sites, double width) {
  if (!(sigma_state > 0.0) || n_sites < 1 || !(width > 0.0))
    throw NonPositiveParameter("choose_alpha needs positive inputs");
  return 3.0 * std::max(sigma_state * std::sqrt(static_cast<double>(n_sites)), width);
}

/// Scalar value of the truncated series at eigenvalue lambda,
///   c_0 + 2 sum_{m=1..radius} c_m cos((lambda - center) t_m).
inline double truncated_filter_weight(const FilterParams& fp, double lambda) {
  const double u = lambda - fp.center;
  double s = fp.coeff_pos[0];
  for (long m = 1; m <= fp.radius; ++m)
    s += 2.0 * fp.coeff_pos[static_cast<size_t>(m)] * std::cos(u * fp.time(m));
  return s;
}

/// Untruncated cosine filter cos^M((lambda - center)/period), the
/// tail_param -> infinity limit of the series. Computed in log space.
inline double cosine_filter_weight(const FilterParams& fp, double lambda) {
  const double c = std::cos((lambda - fp.center) / fp.period);
  if (c == 0.0) return 0.0;
  const double mag = std::exp(static_cast<double>(fp.cos_power) * std::log(std::abs(c)));
  return (c < 0.0 && fp.cos_power % 2 != 0) ? -mag : mag;  // even power: positive
}

/// Gaussian filter weight exp(-(lambda - center)^2 / 2 width^2).
inline double gaussian_filter_weight(double center, double width, double lambda) {
  const double u = (lambda - center) / width;
  return std::exp(-0.5 * u * u);
}

// ---------------------------------------------------------------------------
// amplitude series
// ---------------------------------------------------------------------------

/// Loschmidt-type amplitudes z_m on the filter time grid, m = -radius..radius.
struct AmplitudeSeries {
  enum class Symmetry { ConjugateSymmetric, General };

  long radius = 0;
  double time_step = 0.0;
  std::vector<cplx> z;  // size 2 radius + 1, index m + radius
  Symmetry tag = Symmetry::General;

  cplx at(long m) const { return z[static_cast<size_t>(m + radius)]; }

  /// Build a conjugate-symmetric series from values at m >= 0.
  static AmplitudeSeries from_nonnegative(std::vector<cplx> pos, double t1) {
    AmplitudeSeries s;
    s.radius = static_cast<long>(pos.size()) - 1;
    s.time_step = t1;
    s.tag = Symmetry::ConjugateSymmetric;
    s.z.resize(2 * pos.size() - 1);
    for (long m = 0; m <= s.radius; ++m) {
      s.z[static_cast<size_t>(s.radius + m)] = pos[static_cast<size_t>(m)];
      s.z[static_cast<size_t>(s.radius - m)] = std::conj(pos[static_cast<size_t>(m)]);
    }
    return s;
  }
};

/// Weighted sum  sum_m c_m exp(i center t_m) z_m  over the retained window.
inline cplx series_combine(const FilterParams& fp, const AmplitudeSeries& s) {
  if (s.radius != fp.radius)
    throw IndexMismatch("series radius " + std::to_string(s.radius) + " != filter radius " +
                        std::to_string(fp.radius));
  if (std::abs(s.time_step - fp.time_step()) > 1e-9 * std::max(1.0, fp.time_step()))
    throw IndexMismatch("series time grid does not match the filter");
  cplx acc = 0.0;
  for (long m = -fp.radius; m <= fp.radius; ++m) {
    const double t = fp.time(m);
    acc += fp.coeff(m) * std::polar(1.0, fp.center * t) * s.at(m);
  }
  return acc;
}

}  // namespace spectra
