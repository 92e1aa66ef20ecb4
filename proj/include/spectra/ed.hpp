#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spectra/backend.hpp"
#include "spectra/errors.hpp"
#include "spectra/evolution.hpp"
#include "spectra/filter.hpp"
#include "spectra/hashing.hpp"
#include "spectra/ising.hpp"

namespace spectra {

// ---------------------------------------------------------------------------
// dense builders, assembled straight from bit arithmetic (deliberately
// independent of the MPO route so the two can cross-check each other)
// ---------------------------------------------------------------------------

/// z eigenvalue of site i in basis index b; site 0 is the most significant bit.
inline double z_eigenvalue(long b, long site, long n) {
  return ((b >> (n - 1 - site)) & 1L) ? -1.0 : 1.0;
}

inline Eigen::MatrixXd dense_hamiltonian(const IsingSpec& spec) {
  const long n = spec.sites;
  const long dim = 1L << n;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (long b = 0; b < dim; ++b) {
    double diag = 0.0;
    for (long i = 0; i + 1 < n; ++i)
      diag += spec.zz_coupling * z_eigenvalue(b, i, n) * z_eigenvalue(b, i + 1, n);
    for (long i = 0; i < n; ++i) diag += spec.longitudinal_field * z_eigenvalue(b, i, n);
    h(b, b) = diag;
    for (long i = 0; i < n; ++i) h(b ^ (1L << (n - 1 - i)), b) += spec.transverse_field;
  }
  return h;
}

/// (1/N) sum_i A_i as a dense matrix for a registered observable.
inline Eigen::MatrixXd dense_observable(const IsingSpec& spec, const std::string& name) {
  const Eigen::Matrix2cd a = observable_site_operator(name);
  if (a.imag().cwiseAbs().maxCoeff() > 0)
    throw UnknownObservable("complex-valued observables are not supported by the dense oracle");
  const long n = spec.sites;
  const long dim = 1L << n;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  for (long b = 0; b < dim; ++b)
    for (long i = 0; i < n; ++i) {
      const long bit = (b >> (n - 1 - i)) & 1L;
      for (long p = 0; p < 2; ++p) {
        const double amp = a(p, bit).real();
        if (amp == 0.0) continue;
        const long target = (p == bit) ? b : (b ^ (1L << (n - 1 - i)));
        out(target, b) += amp;
      }
    }
  return out / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// spectrum data
// ---------------------------------------------------------------------------

/// Full spectrum with diagonal matrix elements of one observable; optionally
/// the eigenbasis, the dense observable, and the coefficients of a state.
struct SpectrumData {
  IsingSpec spec;
  std::string observable_name;
  std::vector<double> eigenvalues;  // ascending
  std::vector<double> obs_diag;     // <E_k|O|E_k>
  std::optional<Eigen::VectorXcd> state_coeffs;  // <E_k|phi>
  std::optional<Eigen::VectorXd> overlaps;       // |<E_k|phi>|^2
  std::shared_ptr<const Eigen::MatrixXd> basis;  // eigenvectors as columns
  std::shared_ptr<const Eigen::MatrixXd> obs_dense;

  long dim() const { return static_cast<long>(eigenvalues.size()); }
};

/// Dense diagonalization, hard-capped by max_sites (default 14).
inline SpectrumData ed_spectrum(const IsingSpec& spec, const std::string& observable = "m_z",
                                const TensorTrain* state = nullptr, bool keep_basis = true,
                                long max_sites = 14) {
  if (spec.sites > max_sites)
    throw SizeTooLarge("dense diagonalization capped at " + std::to_string(max_sites) + " sites");
  SpectrumData sd;
  sd.spec = spec;
  sd.observable_name = observable;
  Eigen::MatrixXd h = dense_hamiltonian(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const long dim = h.rows();
  sd.eigenvalues.resize(static_cast<size_t>(dim));
  for (long k = 0; k < dim; ++k) sd.eigenvalues[static_cast<size_t>(k)] = es.eigenvalues()(k);

  auto obs = std::make_shared<Eigen::MatrixXd>(dense_observable(spec, observable));
  const Eigen::MatrixXd& v = es.eigenvectors();
  sd.obs_diag.resize(static_cast<size_t>(dim));
  const bool diagonal = (obs->cwiseAbs().sum() - obs->diagonal().cwiseAbs().sum()) < 1e-14;
  if (diagonal) {
    Eigen::VectorXd d = obs->diagonal();
    Eigen::VectorXd od = (v.cwiseAbs2().transpose() * d);
    for (long k = 0; k < dim; ++k) sd.obs_diag[static_cast<size_t>(k)] = od(k);
  } else {
    Eigen::MatrixXd ov = (*obs) * v;
    for (long k = 0; k < dim; ++k) sd.obs_diag[static_cast<size_t>(k)] = v.col(k).dot(ov.col(k));
  }
  if (state) {
    Eigen::VectorXcd dense = to_dense_vector(*state);
    Eigen::VectorXcd c = v.transpose().cast<cplx>() * dense;
    sd.state_coeffs = c;
    sd.overlaps = c.cwiseAbs2();
  }
  if (keep_basis) {
    sd.basis = std::make_shared<Eigen::MatrixXd>(v);
    sd.obs_dense = obs;
  }
  return sd;
}

// ---------------------------------------------------------------------------
// filtered spectral sums
// ---------------------------------------------------------------------------

struct EdFilterValues {
  double trace_ratio = 0.0;
  double dos = 0.0;  // sum_k w_k / (sqrt(2 pi) width 2^N)
  std::optional<double> state_filter_value;
};

namespace detail {

inline EdFilterValues ed_filter_from_weights(const SpectrumData& sd,
                                             const std::vector<double>& w, double width) {
  double wsum = 0.0, osum = 0.0;
  for (long k = 0; k < sd.dim(); ++k) {
    wsum += w[static_cast<size_t>(k)];
    osum += w[static_cast<size_t>(k)] * sd.obs_diag[static_cast<size_t>(k)];
  }
  EdFilterValues out;
  if (std::abs(wsum) < 1e-280)
    throw VanishingDenominator("filter captures no spectral weight");
  out.trace_ratio = osum / wsum;
  out.dos = wsum / (std::sqrt(2.0 * M_PI) * width * static_cast<double>(sd.dim()));
  if (sd.state_coeffs && sd.basis && sd.obs_dense) {
    // filtered state, off-diagonal contributions included
    Eigen::VectorXcd fc = *sd.state_coeffs;
    for (long k = 0; k < sd.dim(); ++k) fc(k) *= w[static_cast<size_t>(k)];
    Eigen::VectorXcd psi = sd.basis->cast<cplx>() * fc;
    const double nrm2 = psi.squaredNorm();
    if (nrm2 < 1e-280) throw VanishingDenominator("filtered state has vanishing norm");
    out.state_filter_value = psi.dot(sd.obs_dense->cast<cplx>() * psi).real() / nrm2;
  }
  return out;
}

}  // namespace detail

/// Gaussian-filter weighted sums over the exact spectrum.
inline EdFilterValues ed_filter_values(const SpectrumData& sd, double center, double width) {
  std::vector<double> w(static_cast<size_t>(sd.dim()));
  for (long k = 0; k < sd.dim(); ++k)
    w[static_cast<size_t>(k)] = gaussian_filter_weight(center, width, sd.eigenvalues[static_cast<size_t>(k)]);
  return detail::ed_filter_from_weights(sd, w, width);
}

/// Truncated-cosine weighted sums over the exact spectrum.
inline EdFilterValues ed_filter_values(const SpectrumData& sd, const FilterParams& fp) {
  std::vector<double> w(static_cast<size_t>(sd.dim()));
  for (long k = 0; k < sd.dim(); ++k)
    w[static_cast<size_t>(k)] = truncated_filter_weight(fp, sd.eigenvalues[static_cast<size_t>(k)]);
  return detail::ed_filter_from_weights(sd, w, fp.width);
}

/// Unweighted average of O_kk over |E_k - E| <= window / 2.
inline double ed_microcanonical(const SpectrumData& sd, double center, double window) {
  double sum = 0.0;
  long count = 0;
  for (long k = 0; k < sd.dim(); ++k) {
    if (std::abs(sd.eigenvalues[static_cast<size_t>(k)] - center) <= 0.5 * window) {
      sum += sd.obs_diag[static_cast<size_t>(k)];
      ++count;
    }
  }
  if (count == 0) throw EmptyWindow("no levels within the microcanonical window");
  return sum / static_cast<double>(count);
}

/// Diagonal (infinite-time averaged) ensemble of the stored state.
inline double ed_diagonal_ensemble(const SpectrumData& sd) {
  if (!sd.overlaps) throw MissingOverlaps("spectrum carries no state overlaps");
  double out = 0.0;
  for (long k = 0; k < sd.dim(); ++k)
    out += (*sd.overlaps)(k) * sd.obs_diag[static_cast<size_t>(k)];
  return out;
}

struct GibbsValues {
  double energy = 0.0;
  double value = 0.0;
};

/// Boltzmann averages at inverse temperature beta (either sign), stabilized
/// by referencing the dominant end of the spectrum.
inline GibbsValues ed_gibbs(const SpectrumData& sd, double beta) {
  const double ref = (beta >= 0) ? sd.eigenvalues.front() : sd.eigenvalues.back();
  double z = 0.0, esum = 0.0, osum = 0.0;
  for (long k = 0; k < sd.dim(); ++k) {
    const double e = sd.eigenvalues[static_cast<size_t>(k)];
    const double w = std::exp(-beta * (e - ref));
    z += w;
    esum += w * e;
    osum += w * sd.obs_diag[static_cast<size_t>(k)];
  }
  return {esum / z, osum / z};
}

// ---------------------------------------------------------------------------
// exact amplitude backend
// ---------------------------------------------------------------------------

/// Bitwise content hash of an operator train, for small observable MPOs.
inline std::uint64_t mpo_content_hash(const OperatorTrain& op) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t bytes) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < bytes; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(&op.log_norm, sizeof(double));
  for (const auto& s : op.sites) {
    long dims[4] = {s.dl, s.dout, s.din, s.dr};
    mix(dims, sizeof dims);
    mix(s.v.data(), s.v.size() * sizeof(cplx));
  }
  return h;
}

/// Amplitudes evaluated from the dense spectrum; exact up to rounding.
class ExactBackend final : public AmplitudeBackend {
 public:
  explicit ExactBackend(const SpectrumData& sd) : sd_(sd) {
    if (!sd_.basis) throw MissingOverlaps("exact backend needs the eigenbasis");
  }

  std::vector<cplx> loschmidt(const TensorTrain& state, const TimeGrid& g) override {
    Eigen::VectorXcd c = coeffs(state);
    Eigen::VectorXd p = c.cwiseAbs2();
    std::vector<cplx> out(static_cast<size_t>(g.m_max) + 1);
    for (long m = 0; m <= g.m_max; ++m) {
      cplx acc = 0.0;
      const double t = g.t1 * static_cast<double>(m);
      for (long k = 0; k < sd_.dim(); ++k)
        acc += p(k) * std::polar(1.0, -sd_.eigenvalues[static_cast<size_t>(k)] * t);
      out[static_cast<size_t>(m)] = acc;
    }
    return out;
  }

  std::vector<cplx> observable_series(const TensorTrain& state, const OperatorTrain& obs,
                                      const TimeGrid& g) override {
    const Eigen::MatrixXcd& w = obs_in_eigenbasis(obs);
    Eigen::VectorXcd c = coeffs(state);
    Eigen::VectorXcd u = w.adjoint() * c;
    std::vector<cplx> out(static_cast<size_t>(2 * g.m_max) + 1);
    for (long m = -g.m_max; m <= g.m_max; ++m) {
      const double t = g.t1 * static_cast<double>(m);
      cplx acc = 0.0;
      for (long k = 0; k < sd_.dim(); ++k)
        acc += std::conj(u(k)) * c(k) * std::polar(1.0, -sd_.eigenvalues[static_cast<size_t>(k)] * t);
      out[static_cast<size_t>(m + g.m_max)] = acc;
    }
    return out;
  }

  Eigen::MatrixXcd observable_matrix(const TensorTrain& state, const OperatorTrain& obs,
                                     const TimeGrid& g) override {
    const Eigen::MatrixXcd& w = obs_in_eigenbasis(obs);
    Eigen::VectorXcd c = coeffs(state);
    const long r = g.m_max;
    const long dim = sd_.dim();
    Eigen::MatrixXcd phased(dim, 2 * r + 1);
    for (long n = -r; n <= r; ++n) {
      const double t = g.t1 * static_cast<double>(n);
      for (long k = 0; k < dim; ++k)
        phased(k, n + r) = c(k) * std::polar(1.0, -sd_.eigenvalues[static_cast<size_t>(k)] * t);
    }
    Eigen::MatrixXcd wy = w * phased;
    return phased.adjoint() * wy;
  }

  const SpectrumData& spectrum() const { return sd_; }

 private:
  Eigen::VectorXcd coeffs(const TensorTrain& state) const {
    // one-hot product states read a basis row directly
    if (long idx = one_hot_index(state); idx >= 0)
      return sd_.basis->row(idx).transpose().cast<cplx>() * std::exp(state.log_norm);
    Eigen::VectorXcd dense = to_dense_vector(state);
    if (dense.size() != sd_.dim()) throw LengthMismatch("state size does not match the spectrum");
    return sd_.basis->transpose().cast<cplx>() * dense;
  }

  static long one_hot_index(const TensorTrain& state) {
    long idx = 0;
    for (const auto& s : state.sites) {
      if (s.dl != 1 || s.dr != 1 || s.d != 2) return -1;
      const cplx a = s.at(0, 0, 0), b = s.at(0, 1, 0);
      if (a == cplx(1.0) && b == cplx(0.0)) idx = 2 * idx;
      else if (a == cplx(0.0) && b == cplx(1.0)) idx = 2 * idx + 1;
      else return -1;
    }
    return idx;
  }

  const Eigen::MatrixXcd& obs_in_eigenbasis(const OperatorTrain& obs) {
    if (obs.length() != sd_.spec.sites)
      throw LengthMismatch("observable length does not match the spectrum");
    const std::uint64_t h = mpo_content_hash(obs);
    if (!w_cache_ || w_hash_ != h) {
      Eigen::MatrixXcd dense = to_dense_matrix(obs);
      w_cache_ = sd_.basis->transpose().cast<cplx>() * dense * sd_.basis->cast<cplx>();
      w_hash_ = h;
    }
    return *w_cache_;
  }

  SpectrumData sd_;
  std::optional<Eigen::MatrixXcd> w_cache_;
  std::uint64_t w_hash_ = 0;
};

/// Evolution family whose operators are dense matrix exponentials converted
/// to exact MPOs; the Trotter-free reference for the trace estimators.
inline EvolutionFamily build_exact_evolution_family(const SpectrumData& sd, const FilterParams& fp,
                                                    long m_max = -1) {
  if (!sd.basis) throw MissingOverlaps("exact family needs the eigenbasis");
  EvolutionFamily fam;
  fam.source = EvolutionFamily::Source::MpoCache;
  fam.cfg.spec = sd.spec;
  fam.t1 = fp.time_step();
  fam.dt_used = fam.t1;
  const long top = (m_max < 0) ? fp.radius : m_max;
  const long dim = sd.dim();
  const Eigen::MatrixXcd v = sd.basis->cast<cplx>();
  for (long m = 0; m <= top; ++m) {
    const double t = fam.t1 * static_cast<double>(m);
    Eigen::VectorXcd ph(dim);
    for (long k = 0; k < dim; ++k)
      ph(k) = std::polar(1.0, -sd.eigenvalues[static_cast<size_t>(k)] * t);
    Eigen::MatrixXcd u = v * ph.asDiagonal() * v.adjoint();
    fam.operators.push_back(mpo_from_dense(u, sd.spec.sites));
    fam.times.push_back(t);
    fam.trunc_errors.push_back(0.0);
  }
  return fam;
}

// ---------------------------------------------------------------------------
// spectrum cache: magic "FESD1", u64 count, f64 eigenvalues, f64 obs_diag
// ---------------------------------------------------------------------------

inline std::string spectrum_cache_key(const IsingSpec& spec, const std::string& observable) {
  std::string s = std::to_string(spec.sites) + "," + canon(spec.zz_coupling) + "," +
                  canon(spec.transverse_field) + "," + canon(spec.longitudinal_field) + ";" +
                  observable;
  return hex16(fnv1a64(s));
}

inline void save_spectrum(const std::string& path, const SpectrumData& sd) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CorruptCache("cannot open " + path + " for writing");
  os.write("FESD1", 5);
  detail::write_u64(os, static_cast<std::uint64_t>(sd.dim()));
  for (double e : sd.eigenvalues) detail::write_f64(os, e);
  for (double o : sd.obs_diag) detail::write_f64(os, o);
}

/// Loads eigenvalues and diagonal elements only (no basis, no overlaps).
inline SpectrumData load_spectrum(const std::string& path, const IsingSpec& spec,
                                  const std::string& observable) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptCache("cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "FESD1", 5) != 0) throw CorruptCache("bad magic in " + path);
  const std::uint64_t count = detail::read_u64(is);
  if (count != (1ULL << spec.sites)) throw HashMismatch("cached spectrum has the wrong size");
  SpectrumData sd;
  sd.spec = spec;
  sd.observable_name = observable;
  sd.eigenvalues.resize(count);
  sd.obs_diag.resize(count);
  for (auto& e : sd.eigenvalues) e = detail::read_f64(is);
  for (auto& o : sd.obs_diag) o = detail::read_f64(is);
  return sd;
}

/// Diagonalize with a directory cache keyed by the spec and observable.
inline SpectrumData ed_spectrum_cached(const std::string& cache_dir, const IsingSpec& spec,
                                       const std::string& observable = "m_z") {
  namespace fs = std::filesystem;
  fs::create_directories(cache_dir);
  const std::string path = cache_dir + "/fesd_" + spectrum_cache_key(spec, observable) + ".bin";
  if (fs::exists(path)) return load_spectrum(path, spec, observable);
  SpectrumData sd = ed_spectrum(spec, observable, nullptr, /*keep_basis=*/false);
  save_spectrum(path, sd);
  return sd;
}

}  // namespace spectra
