#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "spectra/filter.hpp"
#include "spectra/tensor_train.hpp"

namespace spectra {

/// Uniform time grid t_m = m * t1, m = 0..m_max (negative times by symmetry).
struct TimeGrid {
  double t1 = 0.0;
  long m_max = 0;
};

inline TimeGrid filter_grid(const FilterParams& fp) { return {fp.time_step(), fp.radius}; }

/// Source of Loschmidt-type amplitudes on a filter time grid. Implementations
/// either contract against cached evolution-operator MPOs, evolve the state
/// on demand as an MPS, or evaluate exactly from a dense spectrum.
class AmplitudeBackend {
 public:
  virtual ~AmplitudeBackend() = default;

  /// a(t_m) = <state| e^{-i H t_m} |state> for m = 0..m_max.
  virtual std::vector<cplx> loschmidt(const TensorTrain& state, const TimeGrid& g) = 0;

  /// <state| O e^{-i H t_m} |state> for m = -m_max..m_max (index m + m_max).
  virtual std::vector<cplx> observable_series(const TensorTrain& state, const OperatorTrain& obs,
                                              const TimeGrid& g) = 0;

  /// a_O(t_m, t_n) = <state| e^{i H t_m} O e^{-i H t_n} |state>,
  /// (2 m_max + 1)^2 matrix with row m + m_max, column n + m_max.
  virtual Eigen::MatrixXcd observable_matrix(const TensorTrain& state, const OperatorTrain& obs,
                                             const TimeGrid& g) = 0;

  /// Truncation error accumulated across all calls so far (0 for exact).
  virtual double accumulated_truncation_error() const { return 0.0; }
};

// ---------------------------------------------------------------------------
// amplitude extraction and filter evaluation on a state
// ---------------------------------------------------------------------------

struct StateAmplitudes {
  AmplitudeSeries a;                        // conjugate-symmetric Loschmidt series
  std::optional<AmplitudeSeries> a_obs;     // <O U(t_m)>, general symmetry
};

inline StateAmplitudes state_amplitudes(const TensorTrain& state, const FilterParams& fp,
                                        const OperatorTrain* observable, AmplitudeBackend& backend) {
  const TimeGrid g = filter_grid(fp);
  StateAmplitudes out;
  out.a = AmplitudeSeries::from_nonnegative(backend.loschmidt(state, g), g.t1);
  if (observable) {
    AmplitudeSeries s;
    s.radius = g.m_max;
    s.time_step = g.t1;
    s.tag = AmplitudeSeries::Symmetry::General;
    s.z = backend.observable_series(state, *observable, g);
    out.a_obs = std::move(s);
  }
  return out;
}

/// The double-sum inputs: the full a_O(t_m, t_n) grid plus the single-time
/// series on the doubled range that the denominator reuses.
struct DoubleSumData {
  Eigen::MatrixXcd obs_matrix;   // (2R+1)^2
  AmplitudeSeries a_doubled;     // radius 2R
};

inline DoubleSumData double_sum_data(const TensorTrain& state, const FilterParams& fp,
                                     const OperatorTrain& observable, AmplitudeBackend& backend) {
  const TimeGrid g = filter_grid(fp);
  const TimeGrid gd{g.t1, 2 * g.m_max};
  DoubleSumData out;
  out.obs_matrix = backend.observable_matrix(state, observable, g);
  out.a_doubled = AmplitudeSeries::from_nonnegative(backend.loschmidt(state, gd), gd.t1);
  return out;
}

struct LdosValue {
  double value = 0.0;
  double imag_residue = 0.0;  // |Im| of the combined sum relative to its scale
};

/// Broadened local density of states of a normalized state,
///   (1 / (sqrt(2 pi) width)) Re sum_m c_m e^{i E t_m} a(t_m).
inline LdosValue ldos_of_state(const TensorTrain& state, const FilterParams& fp,
                               AmplitudeBackend& backend) {
  StateAmplitudes amps = state_amplitudes(state, fp, nullptr, backend);
  const cplx combined = series_combine(fp, amps.a);
  double scale = 0.0;
  for (long m = -fp.radius; m <= fp.radius; ++m) scale += fp.coeff(m) * std::abs(amps.a.at(m));
  LdosValue out;
  const double pref = 1.0 / (std::sqrt(2.0 * M_PI) * fp.width);
  out.value = pref * combined.real();
  out.imag_residue = std::abs(combined.imag()) / std::max(scale, 1e-300);
  return out;
}

struct FilteredExpectation {
  double value = 0.0;
  double imag_residue = 0.0;
  double denominator = 0.0;  // <state| F^dag F |state> estimate (series algebra)
};

/// Filtered-state expectation via the double sum
///   Re[ sum_{m,n} c_m c_n a_O(t_m, t_n) e^{iE(t_n - t_m)}
///       / sum_{m,n} c_m c_n a(t_{n-m}) e^{iE(t_n - t_m)} ].
/// The denominator floor is relative to sum_m c_m^2.
inline FilteredExpectation filtered_observable_of_state(const TensorTrain& state,
                                                        const FilterParams& fp,
                                                        const OperatorTrain& observable,
                                                        AmplitudeBackend& backend,
                                                        double denom_floor_rel = 1e-12) {
  DoubleSumData data = double_sum_data(state, fp, observable, backend);
  const long r = fp.radius;
  cplx num = 0.0, den = 0.0;
  for (long m = -r; m <= r; ++m) {
    for (long n = -r; n <= r; ++n) {
      const cplx w = fp.coeff(m) * fp.coeff(n) * std::polar(1.0, fp.center * (fp.time(n) - fp.time(m)));
      num += w * data.obs_matrix(m + r, n + r);
      den += w * data.a_doubled.at(n - m);
    }
  }
  double c2 = 0.0;
  for (long m = -r; m <= r; ++m) c2 += fp.coeff(m) * fp.coeff(m);
  if (std::abs(den) < denom_floor_rel * c2)
    throw VanishingDenominator("filter window holds no spectral weight of the state");
  const cplx ratio = num / den;
  FilteredExpectation out;
  out.value = ratio.real();
  out.imag_residue = std::abs(ratio.imag()) / std::max(std::abs(ratio), 1e-300);
  out.denominator = den.real();
  return out;
}

}  // namespace spectra
