#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "spectra/errors.hpp"
#include "spectra/tensor_train.hpp"

namespace spectra {

/// Non-integrable Ising chain with open boundaries:
///   H = J sum_i z_i z_{i+1} + sum_i (g x_i + h z_i)
struct IsingSpec {
  long sites = 2;
  double zz_coupling = 1.0;       // J
  double transverse_field = -1.05;  // g
  double longitudinal_field = 0.5;  // h
};

namespace pauli {

inline Eigen::Matrix2cd id() { return Eigen::Matrix2cd::Identity(); }
inline Eigen::Matrix2cd x() {
  Eigen::Matrix2cd m;
  m << 0, 1, 1, 0;
  return m;
}
inline Eigen::Matrix2cd y() {
  Eigen::Matrix2cd m;
  m << 0, cplx(0, -1), cplx(0, 1), 0;
  return m;
}
inline Eigen::Matrix2cd z() {
  Eigen::Matrix2cd m;
  m << 1, 0, 0, -1;
  return m;
}

}  // namespace pauli

namespace detail {

inline void put_op(OpSiteTensor& w, long l, long r, const Eigen::Matrix2cd& op) {
  for (long po = 0; po < 2; ++po)
    for (long pi = 0; pi < 2; ++pi) w.at(l, po, pi, r) += op(po, pi);
}

}  // namespace detail

/// Exact bond-3 MPO of H - shift * identity.
inline OperatorTrain build_hamiltonian_mpo(const IsingSpec& spec, double shift = 0.0) {
  if (spec.sites < 1) throw StructurallyInvalid("need at least one site");
  const long n = spec.sites;
  const Eigen::Matrix2cd onsite = spec.transverse_field * pauli::x() +
                                  spec.longitudinal_field * pauli::z() -
                                  (shift / static_cast<double>(n)) * pauli::id();
  OperatorTrain out;
  if (n == 1) {
    OpSiteTensor w(1, 2, 2, 1);
    detail::put_op(w, 0, 0, onsite);
    out.sites.push_back(std::move(w));
    return out;
  }
  for (long i = 0; i < n; ++i) {
    const bool first = (i == 0), last = (i == n - 1);
    OpSiteTensor w(first ? 1 : 3, 2, 2, last ? 1 : 3);
    if (first) {
      detail::put_op(w, 0, 0, pauli::id());
      detail::put_op(w, 0, 1, pauli::z());
      detail::put_op(w, 0, 2, onsite);
      if (last) { /* unreachable for n >= 2 */ }
    } else if (last) {
      detail::put_op(w, 0, 0, onsite);
      detail::put_op(w, 1, 0, spec.zz_coupling * pauli::z());
      detail::put_op(w, 2, 0, pauli::id());
    } else {
      detail::put_op(w, 0, 0, pauli::id());
      detail::put_op(w, 0, 1, pauli::z());
      detail::put_op(w, 0, 2, onsite);
      detail::put_op(w, 1, 2, spec.zz_coupling * pauli::z());
      detail::put_op(w, 2, 2, pauli::id());
    }
    out.sites.push_back(std::move(w));
  }
  // first site was built as the top row, last as the rightmost column
  return out;
}

/// Registered site-averaged observables (1/N) sum_i A_i.
inline Eigen::Matrix2cd observable_site_operator(const std::string& name) {
  if (name == "m_z") return pauli::z();
  if (name == "m_x") return pauli::x();
  throw UnknownObservable("unknown observable: " + name);
}

/// Exact bond-2 MPO of (1/N) sum_i A_i for a registered observable.
inline OperatorTrain build_observable_mpo(const IsingSpec& spec, const std::string& name) {
  const long n = spec.sites;
  const Eigen::Matrix2cd local = observable_site_operator(name) / static_cast<double>(n);
  OperatorTrain out;
  if (n == 1) {
    OpSiteTensor w(1, 2, 2, 1);
    detail::put_op(w, 0, 0, local);
    out.sites.push_back(std::move(w));
    return out;
  }
  for (long i = 0; i < n; ++i) {
    const bool first = (i == 0), last = (i == n - 1);
    OpSiteTensor w(first ? 1 : 2, 2, 2, last ? 1 : 2);
    if (first) {
      detail::put_op(w, 0, 0, pauli::id());
      detail::put_op(w, 0, 1, local);
    } else if (last) {
      detail::put_op(w, 0, 0, local);
      detail::put_op(w, 1, 0, pauli::id());
    } else {
      detail::put_op(w, 0, 0, pauli::id());
      detail::put_op(w, 0, 1, local);
      detail::put_op(w, 1, 1, pauli::id());
    }
    out.sites.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trotter gate layers
// ---------------------------------------------------------------------------

/// One layer of mutually commuting gates. Gate k of an even layer acts on
/// sites (2k, 2k+1); of an odd layer on (2k+1, 2k+2).
struct GateLayer {
  enum class Placement { EvenBond, OddBond, SingleSite };
  Placement placement = Placement::EvenBond;
  std::vector<Eigen::MatrixXcd> gates;  // 4x4 two-site, or 2x2 single-site
  double timestep = 0.0;

  long first_site(size_t k) const {
    switch (placement) {
      case Placement::EvenBond: return static_cast<long>(2 * k);
      case Placement::OddBond: return static_cast<long>(2 * k + 1);
      case Placement::SingleSite: return static_cast<long>(k);
    }
    return 0;
  }
};

namespace detail {

/// Two-site bond Hamiltonian with the field terms folded in symmetrically:
/// half strength on interior sites, full strength at the chain ends.
inline Eigen::Matrix4cd bond_hamiltonian(const IsingSpec& spec, long bond) {
  const long n = spec.sites;
  const Eigen::Matrix2cd field =
      spec.transverse_field * pauli::x() + spec.longitudinal_field * pauli::z();
  const double wl = (bond == 0) ? 1.0 : 0.5;
  const double wr = (bond + 1 == n - 1) ? 1.0 : 0.5;
  Eigen::Matrix4cd h = Eigen::Matrix4cd::Zero();
  auto kron2 = [](const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
    Eigen::Matrix4cd out;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
  };
  h += spec.zz_coupling * kron2(pauli::z(), pauli::z());
  h += wl * kron2(field, pauli::id());
  h += wr * kron2(pauli::id(), field);
  return h;
}

/// exp(-i tau h) for Hermitian h; tau may be complex (imaginary time).
inline Eigen::MatrixXcd gate_exponential(const Eigen::MatrixXcd& h, cplx tau) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  Eigen::VectorXcd w(h.rows());
  for (long i = 0; i < h.rows(); ++i)
    w(i) = std::exp(cplx(0, -1) * tau * es.eigenvalues()(i));
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
}

/// Symmetric splitting exp(-i tau H) ~ even(tau/2) odd(tau) even(tau/2),
/// for real or imaginary tau.
inline std::vector<GateLayer> trotter_layers_complex(const IsingSpec& spec, cplx tau) {
  const long n = spec.sites;
  std::vector<GateLayer> layers;
  if (n == 1) {
    GateLayer l;
    l.placement = GateLayer::Placement::SingleSite;
    l.timestep = tau.real();
    Eigen::Matrix2cd h = spec.transverse_field * pauli::x() + spec.longitudinal_field * pauli::z();
    l.gates.push_back(gate_exponential(h, tau));
    layers.push_back(std::move(l));
    return layers;
  }
  auto make_layer = [&](GateLayer::Placement pl, cplx step) {
    GateLayer l;
    l.placement = pl;
    l.timestep = step.real();
    const long start = (pl == GateLayer::Placement::EvenBond) ? 0 : 1;
    for (long b = start; b + 1 < n; b += 2) l.gates.push_back(gate_exponential(bond_hamiltonian(spec, b), step));
    return l;
  };
  if (n == 2) {
    layers.push_back(make_layer(GateLayer::Placement::EvenBond, tau));
    return layers;
  }
  layers.push_back(make_layer(GateLayer::Placement::EvenBond, tau / 2.0));
  layers.push_back(make_layer(GateLayer::Placement::OddBond, tau));
  layers.push_back(make_layer(GateLayer::Placement::EvenBond, tau / 2.0));
  return layers;
}

}  // namespace detail

/// Second-order Trotter layers for exp(-i H dt).
inline std::vector<GateLayer> trotter_layers(const IsingSpec& spec, double dt, int order = 2) {
  if (order != 2) throw UnsupportedOrder("only second-order splitting is implemented");
  if (dt < 0) throw NonPositiveParameter("dt must be non-negative");
  return detail::trotter_layers_complex(spec, cplx(dt, 0));
}

/// (tr H / 2^N, tr H^2 / 2^N), exact by Pauli-string orthogonality.
inline std::pair<double, double> pauli_moments(const IsingSpec& spec) {
  const double n = static_cast<double>(spec.sites);
  const double j = spec.zz_coupling, g = spec.transverse_field, h = spec.longitudinal_field;
  return {0.0, j * j * (n - 1.0) + (g * g + h * h) * n};
}

/// Filter period covering the whole spectrum: sqrt(J^2 + g^2 + h^2) * N.
inline double full_spectrum_alpha(const IsingSpec& spec) {
  const double j = spec.zz_coupling, g = spec.transverse_field, h = spec.longitudinal_field;
  return std::sqrt(j * j + g * g + h * h) * static_cast<double>(spec.sites);
}

}  // namespace spectra
