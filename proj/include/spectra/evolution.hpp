#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spectra/errors.hpp"
#include "spectra/filter.hpp"
#include "spectra/hashing.hpp"
#include "spectra/ising.hpp"
#include "spectra/tensor_train.hpp"

namespace spectra {

struct EvolutionConfig {
  enum class Direction { Forward, Backward };

  IsingSpec spec;
  double dt = 0.02;
  TruncationPolicy policy{64, 1e-10, true};
  Direction direction = Direction::Forward;
  double max_cumulative_error = 1e-3;  // hard ceiling, not a warning
};

namespace detail {

inline void ensure_center_exists(TensorTrain& t) {
  if (t.canonical_center) return;
  double err = compress_sites(t.sites, exact_policy(), t.log_norm);
  (void)err;  // exact pass
  t.canonical_center = t.length() - 1;
}

/// One QR step moving the center right (c -> c+1), no truncation.
inline void center_right(TensorTrain& t, long c) {
  SiteTensor& a = t.sites[static_cast<size_t>(c)];
  Eigen::MatrixXcd m = a.fused_left();
  const long k = std::min<long>(a.dl * a.d, a.dr);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
  Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(m.rows(), k);
  Eigen::MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  SiteTensor repl(a.dl, a.d, k);
  repl.fused_left() = q;
  SiteTensor& right = t.sites[static_cast<size_t>(c + 1)];
  Eigen::MatrixXcd merged = r * Eigen::MatrixXcd(right.fused_right());
  SiteTensor newright(k, right.d, right.dr);
  newright.fused_right() = merged;
  t.sites[static_cast<size_t>(c)] = std::move(repl);
  t.sites[static_cast<size_t>(c + 1)] = std::move(newright);
}

/// One QR step moving the center left (c -> c-1).
inline void center_left(TensorTrain& t, long c) {
  SiteTensor& a = t.sites[static_cast<size_t>(c)];
  Eigen::MatrixXcd m = a.fused_right();
  const long k = std::min<long>(a.dl, a.d * a.dr);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m.adjoint());
  Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(m.cols(), k);
  Eigen::MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  SiteTensor repl(k, a.d, a.dr);
  repl.fused_right() = q.adjoint();
  SiteTensor& left = t.sites[static_cast<size_t>(c - 1)];
  Eigen::MatrixXcd merged = Eigen::MatrixXcd(left.fused_left()) * r.adjoint();
  SiteTensor newleft(left.dl, left.d, k);
  newleft.fused_left() = merged;
  t.sites[static_cast<size_t>(c)] = std::move(repl);
  t.sites[static_cast<size_t>(c - 1)] = std::move(newleft);
}

inline void move_center(TensorTrain& t, long target) {
  ensure_center_exists(t);
  long c = *t.canonical_center;
  while (c < target) center_right(t, c++);
  while (c > target) center_left(t, c--);
  t.canonical_center = c;
}

/// Two-site gate at (i, i+1) with the center parked at i; SVD truncation per
/// policy; leaves the center at i+1. Returns the relative discarded weight.
inline double apply_two_site_gate(TensorTrain& t, long i, const Eigen::MatrixXcd& gate,
                                  const TruncationPolicy& pol) {
  move_center(t, i);
  const SiteTensor& a = t.sites[static_cast<size_t>(i)];
  const SiteTensor& b = t.sites[static_cast<size_t>(i + 1)];
  const long dl = a.dl, dr = b.dr, d = a.d;
  // theta[l, p1, p2, r]
  std::vector<cplx> theta(static_cast<size_t>(dl * d * d * dr));
  RowMap(theta.data(), dl * d, d * dr) =
      Eigen::MatrixXcd(a.fused_left()) * Eigen::MatrixXcd(b.fused_right());
  // gate on (p1 p2): per-l block (d^2, dr)
  std::vector<cplx> rotated(theta.size());
  for (long l = 0; l < dl; ++l) {
    ConstRowMap block(theta.data() + l * d * d * dr, d * d, dr);
    RowMap out(rotated.data() + l * d * d * dr, d * d, dr);
    out = gate * block;
  }
  SvdCut cut = svd_truncate(ConstRowMap(rotated.data(), dl * d, d * dr), pol);
  const long k = cut.s.size();
  SiteTensor na(dl, d, k);
  na.fused_left() = cut.u;
  SiteTensor nb(k, d, dr);
  nb.fused_right() = cut.s.asDiagonal() * cut.vh;
  t.sites[static_cast<size_t>(i)] = std::move(na);
  t.sites[static_cast<size_t>(i + 1)] = std::move(nb);
  t.canonical_center = i + 1;
  return cut.discarded_rel;
}

inline void apply_single_site_gate(TensorTrain& t, long i, const Eigen::MatrixXcd& gate) {
  SiteTensor& a = t.sites[static_cast<size_t>(i)];
  SiteTensor out(a.dl, a.d, a.dr);
  for (long l = 0; l < a.dl; ++l)
    for (long p = 0; p < a.d; ++p)
      for (long q = 0; q < a.d; ++q) {
        if (gate(p, q) == cplx(0.0)) continue;
        for (long r = 0; r < a.dr; ++r) out.at(l, p, r) += gate(p, q) * a.at(l, q, r);
      }
  a = std::move(out);
}

inline double apply_gate_layer(TensorTrain& t, const GateLayer& layer,
                               const TruncationPolicy& pol) {
  double err = 0.0;
  if (layer.placement == GateLayer::Placement::SingleSite) {
    for (size_t k = 0; k < layer.gates.size(); ++k)
      apply_single_site_gate(t, layer.first_site(k), layer.gates[k]);
    return 0.0;
  }
  for (size_t k = 0; k < layer.gates.size(); ++k)
    err += apply_two_site_gate(t, layer.first_site(k), layer.gates[k], pol);
  return err;
}

}  // namespace detail

/// e^{-i H t} |state> by second-order TEBD (Backward gives e^{+i H t}).
/// t must be an integer multiple of cfg.dt. Returns the evolved state and
/// the accumulated truncation error; exceeding the configured ceiling throws.
inline std::pair<TensorTrain, double> evolve_mps(const TensorTrain& state, double t,
                                                 const EvolutionConfig& cfg) {
  const double steps_real = t / cfg.dt;
  const long steps = std::lround(steps_real);
  if (std::abs(static_cast<double>(steps) * cfg.dt - t) > 1e-12 * std::max(1.0, std::abs(t)))
    throw NonCommensurateTime("t = " + std::to_string(t) + " is not a multiple of dt");
  TensorTrain out = state;
  if (steps == 0) return {std::move(out), 0.0};
  double sign = (cfg.direction == EvolutionConfig::Direction::Backward) ? -1.0 : 1.0;
  const double dt_signed = sign * (steps > 0 ? cfg.dt : -cfg.dt);
  auto layers = detail::trotter_layers_complex(cfg.spec, cplx(dt_signed, 0.0));
  double err = 0.0;
  for (long s = 0; s < std::labs(steps); ++s) {
    for (const auto& layer : layers) err += detail::apply_gate_layer(out, layer, cfg.policy);
    if (err > cfg.max_cumulative_error)
      throw TruncationBudgetExceeded("cumulative truncation error " + std::to_string(err));
  }
  return {std::move(out), err};
}

// ---------------------------------------------------------------------------
// evolution-operator families on the filter time grid
// ---------------------------------------------------------------------------

/// Largest step <= dt_max that divides the grid spacing t1 exactly.
inline double commensurate_dt(double t1, double dt_max) {
  const long k = std::max(1L, static_cast<long>(std::ceil(t1 / dt_max - 1e-9)));
  return t1 / static_cast<double>(k);
}

namespace detail {

/// A single gate layer as an exact MPO (bond <= 4 across gate cuts).
inline OperatorTrain layer_to_mpo(const GateLayer& layer, long n) {
  OperatorTrain out = identity_mpo(n);
  if (layer.placement == GateLayer::Placement::SingleSite) {
    for (size_t k = 0; k < layer.gates.size(); ++k) {
      const long i = layer.first_site(k);
      OpSiteTensor w(1, 2, 2, 1);
      for (long p = 0; p < 2; ++p)
        for (long q = 0; q < 2; ++q) w.at(0, p, q, 0) = layer.gates[k](p, q);
      out.sites[static_cast<size_t>(i)] = std::move(w);
    }
    return out;
  }
  for (size_t k = 0; k < layer.gates.size(); ++k) {
    const long i = layer.first_site(k);
    // G[(p1' p2'), (p1 p2)] -> T[(p1' p1), (p2' p2)], then split by SVD
    const Eigen::MatrixXcd& g = layer.gates[k];
    std::vector<cplx> flat(16);
    for (long r = 0; r < 4; ++r)
      for (long c = 0; c < 4; ++c) flat[static_cast<size_t>(r * 4 + c)] = g(r, c);
    std::vector<long> dims{2, 2, 2, 2};  // p1', p2', p1, p2
    std::vector<int> perm{0, 2, 1, 3};
    std::vector<cplx> grouped(16);
    permute_into(flat.data(), dims, perm, grouped.data());
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(ConstRowMap(grouped.data(), 4, 4),
                                           Eigen::ComputeThinU | Eigen::ComputeThinV);
    long rank = 0;
    for (long s = 0; s < 4; ++s)
      if (svd.singularValues()(s) > 1e-14 * svd.singularValues()(0)) ++rank;
    OpSiteTensor wl(1, 2, 2, rank), wr(rank, 2, 2, 1);
    for (long s = 0; s < rank; ++s) {
      const double root = std::sqrt(svd.singularValues()(s));
      for (long po = 0; po < 2; ++po)
        for (long pi = 0; pi < 2; ++pi) {
          wl.at(0, po, pi, s) = root * svd.matrixU()(po * 2 + pi, s);
          wr.at(s, po, pi, 0) = root * std::conj(svd.matrixV()(po * 2 + pi, s));
        }
    }
    out.sites[static_cast<size_t>(i)] = std::move(wl);
    out.sites[static_cast<size_t>(i + 1)] = std::move(wr);
  }
  return out;
}

/// Exact (to 1e-14) MPO of one Trotter step built from its gate layers.
inline OperatorTrain step_mpo(const IsingSpec& spec, cplx tau) {
  auto layers = trotter_layers_complex(spec, tau);
  OperatorTrain acc = layer_to_mpo(layers.front(), spec.sites);
  TruncationPolicy tight{1L << 30, 1e-14, false};
  for (size_t l = 1; l < layers.size(); ++l) {
    auto [next, err] = mpo_multiply(layer_to_mpo(layers[l], spec.sites), acc, tight);
    acc = std::move(next);
  }
  return acc;
}

inline double train_bytes(const OperatorTrain& op) {
  double b = 0;
  for (const auto& s : op.sites) b += static_cast<double>(s.v.size()) * sizeof(cplx);
  return b;
}

}  // namespace detail

/// Evolution operators (or just the grid) for t_m = m * t1, m = 0..m_max.
struct EvolutionFamily {
  enum class Source { MpoCache, MpsOnDemand };

  Source source = Source::MpoCache;
  EvolutionConfig cfg;
  double t1 = 0.0;
  double dt_used = 0.0;                 // commensurate refinement of cfg.dt
  std::vector<double> times;            // m * t1
  std::vector<OperatorTrain> operators; // MpoCache only; operators[m] = U(t_m)
  std::vector<double> trunc_errors;     // cumulative truncation error per time

  long m_max() const { return static_cast<long>(times.size()) - 1; }
};

/// Build U(t_m) = e^{-i H t_m} for the filter grid. In mpo-cache mode the
/// Trotter step MPO is iterated and compressed; in mps-on-demand mode only
/// the grid is recorded and states are evolved when amplitudes are requested.
/// Negative times are never stored: U(-t) = U(t)^dagger.
inline EvolutionFamily build_evolution_family(const FilterParams& fp, const EvolutionConfig& cfg,
                                              EvolutionFamily::Source source, long m_max = -1,
                                              double memory_budget_bytes = 4e9) {
  EvolutionFamily fam;
  fam.source = source;
  fam.cfg = cfg;
  fam.t1 = fp.time_step();
  fam.dt_used = commensurate_dt(fam.t1, cfg.dt);
  const long top = (m_max < 0) ? fp.radius : m_max;
  for (long m = 0; m <= top; ++m) fam.times.push_back(static_cast<double>(m) * fam.t1);
  fam.trunc_errors.assign(static_cast<size_t>(top) + 1, 0.0);
  if (source == EvolutionFamily::Source::MpsOnDemand) return fam;

  const long steps_per = std::lround(fam.t1 / fam.dt_used);
  OperatorTrain step = detail::step_mpo(cfg.spec, cplx(fam.dt_used, 0.0));
  OperatorTrain u = identity_mpo(cfg.spec.sites);
  fam.operators.push_back(u);
  double err = 0.0, bytes = detail::train_bytes(u);
  for (long m = 1; m <= top; ++m) {
    for (long s = 0; s < steps_per; ++s) {
      auto [next, e] = mpo_multiply(step, u, cfg.policy);
      u = std::move(next);
      err += e;
    }
    bytes += detail::train_bytes(u);
    if (bytes > memory_budget_bytes)
      throw MemoryBudgetExceeded("operator cache would exceed the memory budget");
    fam.operators.push_back(u);
    fam.trunc_errors[static_cast<size_t>(m)] = err;
  }
  return fam;
}

// ---------------------------------------------------------------------------
// Gibbs operator by imaginary-time steps
// ---------------------------------------------------------------------------

/// M(beta) ~ e^{-beta H / 2}; thermal values follow from
/// tr(M O M^dagger) / tr(M M^dagger). beta of either sign is accepted
/// (negative beta weights the top of the spectrum).
inline OperatorTrain build_gibbs_mpo(const IsingSpec& spec, double beta, double dbeta,
                                     const TruncationPolicy& pol) {
  if (!(dbeta > 0.0)) throw NonPositiveParameter("dbeta must be positive");
  const long steps = std::lround(std::abs(beta) / dbeta);
  if (std::abs(static_cast<double>(steps) * dbeta - std::abs(beta)) >
      1e-9 * std::max(1.0, std::abs(beta)))
    throw NonCommensurateTime("beta is not a multiple of dbeta");
  OperatorTrain acc = identity_mpo(spec.sites);
  if (steps == 0) return acc;
  const double per_step = beta / static_cast<double>(steps);
  // e^{-(per_step/2) H} == e^{-i tau H} with tau = -i per_step / 2
  OperatorTrain step = detail::step_mpo(spec, cplx(0.0, -0.5 * per_step));
  for (long s = 0; s < steps; ++s) {
    auto [next, e] = mpo_multiply(step, acc, pol);
    acc = std::move(next);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// on-disk cache for MPO families
// ---------------------------------------------------------------------------

inline std::string family_manifest_key(const FilterParams& fp, const EvolutionConfig& cfg,
                                        long m_max) {
  std::string s = "spec:" + std::to_string(cfg.spec.sites) + "," + canon(cfg.spec.zz_coupling) +
                  "," + canon(cfg.spec.transverse_field) + "," + canon(cfg.spec.longitudinal_field);
  s += ";grid:" + canon(fp.time_step()) + "," + std::to_string(m_max);
  s += ";dt:" + canon(cfg.dt);
  s += ";policy:" + std::to_string(cfg.policy.max_bond) + "," + canon(cfg.policy.sv_cutoff) + "," +
       (cfg.policy.renormalize ? std::string("1") : std::string("0"));
  return s;
}

/// Persist an MPO family: one file per time plus a manifest with the config
/// hash and per-file truncation errors.
inline void save_family(const std::string& dir, const EvolutionFamily& fam,
                        const FilterParams& fp) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream man(dir + "/manifest.txt");
  if (!man) throw CorruptCache("cannot write manifest in " + dir);
  man << "key_hash = " << hex16(fnv1a64(family_manifest_key(fp, fam.cfg, fam.m_max()))) << "\n";
  man << "dt_used = " << canon(fam.dt_used) << "\n";
  man << "t1 = " << canon(fam.t1) << "\n";
  man << "count = " << fam.operators.size() << "\n";
  for (size_t m = 0; m < fam.operators.size(); ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "U_%06zu.fett", m);
    save_train(dir + "/" + name, fam.operators[m]);
    man << name << " trunc_error = " << canon(fam.trunc_errors[m]) << "\n";
  }
}

/// Load a cached family; a key mismatch against the requesting parameters
/// throws HashMismatch (callers rebuild on that), a damaged file throws
/// CorruptCache.
inline EvolutionFamily load_family(const std::string& dir, const FilterParams& fp,
                                   const EvolutionConfig& cfg, long m_max = -1) {
  std::ifstream man(dir + "/manifest.txt");
  if (!man) throw CorruptCache("missing manifest in " + dir);
  const long top = (m_max < 0) ? fp.radius : m_max;
  std::string line;
  EvolutionFamily fam;
  fam.source = EvolutionFamily::Source::MpoCache;
  fam.cfg = cfg;
  fam.t1 = fp.time_step();
  fam.dt_used = commensurate_dt(fam.t1, cfg.dt);
  size_t count = 0;
  std::vector<std::pair<std::string, double>> files;
  while (std::getline(man, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "key_hash") {
      if (val != hex16(fnv1a64(family_manifest_key(fp, cfg, top))))
        throw HashMismatch("cached family was built with different parameters");
    } else if (key == "count") {
      count = static_cast<size_t>(std::stoul(val));
    } else if (key.size() > 5 && key.substr(0, 2) == "U_") {
      const auto sp = key.find(' ');
      files.emplace_back(key.substr(0, sp), std::stod(val));
    }
  }
  if (files.size() != count || count != static_cast<size_t>(top) + 1)
    throw CorruptCache("manifest in " + dir + " lists the wrong number of files");
  for (const auto& [name, err] : files) {
    fam.operators.push_back(load_mpo(dir + "/" + name));
    fam.trunc_errors.push_back(err);
  }
  for (long m = 0; m <= top; ++m) fam.times.push_back(static_cast<double>(m) * fam.t1);
  return fam;
}

}  // namespace spectra
