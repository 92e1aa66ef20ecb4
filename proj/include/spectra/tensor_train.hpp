#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectra/errors.hpp"

namespace spectra {

using cplx = std::complex<double>;

using RowMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

/// Bond-truncation knobs shared by every compression-type operation.
/// Cut rule: drop singular values below sv_cutoff * (largest), then cap the
/// count at max_bond; ties keep the earlier index. With renormalize the kept
/// values are rescaled so the Frobenius weight of the cut is preserved.
struct TruncationPolicy {
  long max_bond = 1L << 30;
  double sv_cutoff = 1e-10;
  bool renormalize = false;
};

inline TruncationPolicy exact_policy() { return TruncationPolicy{1L << 30, 0.0, false}; }

// ---------------------------------------------------------------------------
// Site tensors. Flat row-major storage so that both matricizations used by
// canonicalization, (l p) x r and l x (p r), are plain Eigen maps.
// ---------------------------------------------------------------------------

/// Rank-3 MPS site tensor A(l, p, r).
struct SiteTensor {
  long dl = 1, d = 2, dr = 1;
  std::vector<cplx> v;

  SiteTensor() = default;
  SiteTensor(long dl_, long d_, long dr_)
      : dl(dl_), d(d_), dr(dr_), v(static_cast<size_t>(dl_ * d_ * dr_), cplx(0)) {}

  cplx& at(long l, long p, long r) { return v[static_cast<size_t>((l * d + p) * dr + r)]; }
  const cplx& at(long l, long p, long r) const { return v[static_cast<size_t>((l * d + p) * dr + r)]; }

  RowMap fused_left() { return RowMap(v.data(), dl * d, dr); }    // (l p) x r
  ConstRowMap fused_left() const { return ConstRowMap(v.data(), dl * d, dr); }
  RowMap fused_right() { return RowMap(v.data(), dl, d * dr); }   // l x (p r)
  ConstRowMap fused_right() const { return ConstRowMap(v.data(), dl, d * dr); }
};

/// Rank-4 MPO site tensor W(l, p_out, p_in, r).
struct OpSiteTensor {
  long dl = 1, dout = 2, din = 2, dr = 1;
  std::vector<cplx> v;

  OpSiteTensor() = default;
  OpSiteTensor(long dl_, long dout_, long din_, long dr_)
      : dl(dl_), dout(dout_), din(din_), dr(dr_),
        v(static_cast<size_t>(dl_ * dout_ * din_ * dr_), cplx(0)) {}

  cplx& at(long l, long po, long pi, long r) {
    return v[static_cast<size_t>(((l * dout + po) * din + pi) * dr + r)];
  }
  const cplx& at(long l, long po, long pi, long r) const {
    return v[static_cast<size_t>(((l * dout + po) * din + pi) * dr + r)];
  }
};

/// Matrix product state. The represented vector is exp(log_norm) times the
/// contraction of the site tensors; tensors are kept at order-one scale so
/// 2^N-sized norms never overflow.
struct TensorTrain {
  std::vector<SiteTensor> sites;
  std::optional<long> canonical_center;
  double log_norm = 0.0;

  long length() const { return static_cast<long>(sites.size()); }
};

/// Matrix product operator, same scale conventions as TensorTrain.
struct OperatorTrain {
  std::vector<OpSiteTensor> sites;
  double log_norm = 0.0;

  long length() const { return static_cast<long>(sites.size()); }
};

namespace detail {

inline void validate_mps(const TensorTrain& t) {
  if (t.sites.empty()) throw StructurallyInvalid("empty tensor train");
  if (t.sites.front().dl != 1 || t.sites.back().dr != 1)
    throw StructurallyInvalid("boundary bonds must be 1");
  for (size_t i = 0; i + 1 < t.sites.size(); ++i)
    if (t.sites[i].dr != t.sites[i + 1].dl)
      throw StructurallyInvalid("bond mismatch at site " + std::to_string(i));
  for (const auto& s : t.sites)
    if (s.dl < 1 || s.d < 1 || s.dr < 1 || static_cast<long>(s.v.size()) != s.dl * s.d * s.dr)
      throw StructurallyInvalid("bad site tensor shape");
}

inline void validate_mpo(const OperatorTrain& t) {
  if (t.sites.empty()) throw StructurallyInvalid("empty operator train");
  if (t.sites.front().dl != 1 || t.sites.back().dr != 1)
    throw StructurallyInvalid("boundary bonds must be 1");
  for (size_t i = 0; i + 1 < t.sites.size(); ++i)
    if (t.sites[i].dr != t.sites[i + 1].dl)
      throw StructurallyInvalid("bond mismatch at site " + std::to_string(i));
  for (const auto& s : t.sites)
    if (s.dl < 1 || s.dout < 1 || s.din < 1 || s.dr < 1 ||
        static_cast<long>(s.v.size()) != s.dl * s.dout * s.din * s.dr)
      throw StructurallyInvalid("bad operator site tensor shape");
}

struct SvdCut {
  Eigen::MatrixXcd u;          // rows x k
  Eigen::VectorXd s;           // k
  Eigen::MatrixXcd vh;         // k x cols
  double discarded_rel = 0.0;  // sqrt(discarded weight / total weight)
};

inline SvdCut svd_truncate(const Eigen::MatrixXcd& m, const TruncationPolicy& pol) {
  Eigen::VectorXd sv;
  Eigen::MatrixXcd u, vm;
  if (std::min(m.rows(), m.cols()) <= 16) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    sv = svd.singularValues();
    u = svd.matrixU();
    vm = svd.matrixV();
  } else {
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    sv = svd.singularValues();
    u = svd.matrixU();
    vm = svd.matrixV();
  }
  const double total2 = sv.squaredNorm();
  if (!(total2 > 0.0)) throw ZeroNorm("all singular values vanish");
  const double floor_sv = pol.sv_cutoff * sv(0);
  long k = 0;
  for (long i = 0; i < sv.size(); ++i) {
    if (i > 0 && !(sv(i) >= floor_sv && sv(i) > 0.0)) break;
    ++k;
  }
  k = std::max<long>(1, std::min<long>(k, pol.max_bond));

  const double kept2 = sv.head(k).squaredNorm();
  SvdCut out;
  out.u = u.leftCols(k);
  out.s = sv.head(k);
  out.vh = vm.leftCols(k).adjoint();
  out.discarded_rel = std::sqrt(std::max(0.0, 1.0 - kept2 / total2));
  if (pol.renormalize && kept2 > 0.0) out.s *= std::sqrt(total2 / kept2);
  return out;
}

// Generic canonical compression over rank-3 sites (an MPO is compressed with
// its two physical legs fused). Two passes: a right-to-left QR sweep into
// right-canonical form, then a left-to-right truncating SVD sweep. On return
// all sites but the last are left isometries, the last has unit Frobenius
// norm, and the extracted scale has been folded into log_norm.
inline double compress_sites(std::vector<SiteTensor>& sites, const TruncationPolicy& pol,
                             double& log_norm) {
  const long n = static_cast<long>(sites.size());
  for (long i = n - 1; i > 0; --i) {
    Eigen::MatrixXcd m = sites[i].fused_right();  // dl x (d dr)
    const long k = std::min<long>(sites[i].dl, sites[i].d * sites[i].dr);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m.adjoint());
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(m.cols(), k);
    Eigen::MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    SiteTensor repl(k, sites[i].d, sites[i].dr);
    repl.fused_right() = q.adjoint();
    SiteTensor& left = sites[i - 1];
    Eigen::MatrixXcd merged = Eigen::MatrixXcd(left.fused_left()) * r.adjoint();
    SiteTensor newleft(left.dl, left.d, k);
    newleft.fused_left() = merged;
    sites[i] = std::move(repl);
    sites[i - 1] = std::move(newleft);
  }
  {
    double nrm = std::sqrt(sites[0].fused_left().squaredNorm());
    if (!(nrm > 0.0)) throw ZeroNorm("train contracted to zero");
    sites[0].fused_left() /= nrm;
    log_norm += std::log(nrm);
  }
  double err2 = 0.0;
  for (long i = 0; i + 1 < n; ++i) {
    Eigen::MatrixXcd m = sites[i].fused_left();  // (dl d) x dr
    SvdCut cut = svd_truncate(m, pol);
    err2 += cut.discarded_rel * cut.discarded_rel;
    const long k = cut.s.size();
    SiteTensor repl(sites[i].dl, sites[i].d, k);
    repl.fused_left() = cut.u;
    Eigen::MatrixXcd carry = cut.s.asDiagonal() * cut.vh;  // k x dr
    SiteTensor& right = sites[i + 1];
    Eigen::MatrixXcd merged = carry * Eigen::MatrixXcd(right.fused_right());
    SiteTensor newright(k, right.d, right.dr);
    newright.fused_right() = merged;
    sites[i] = std::move(repl);
    sites[i + 1] = std::move(newright);
  }
  {
    double nrm = std::sqrt(sites[n - 1].fused_left().squaredNorm());
    if (!(nrm > 0.0)) throw ZeroNorm("train contracted to zero");
    sites[n - 1].fused_left() /= nrm;
    log_norm += std::log(nrm);
  }
  return std::sqrt(err2);
}

/// out(idx[perm[0]], ...) = in(idx[0], ...), flat row-major tensors.
inline void permute_into(const cplx* in, std::span<const long> dims, std::span<const int> perm,
                         cplx* out) {
  const int rank = static_cast<int>(dims.size());
  long total = 1;
  for (long d : dims) total *= d;
  std::vector<long> out_dims(rank), out_strides(rank), axis_out_stride(rank);
  for (int i = 0; i < rank; ++i) out_dims[i] = dims[perm[i]];
  out_strides[rank - 1] = 1;
  for (int i = rank - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_dims[i + 1];
  for (int i = 0; i < rank; ++i) axis_out_stride[perm[i]] = out_strides[i];
  std::vector<long> idx(rank, 0);
  long out_pos = 0;
  for (long p = 0; p < total; ++p) {
    out[out_pos] = in[p];
    for (int ax = rank - 1; ax >= 0; --ax) {
      ++idx[ax];
      out_pos += axis_out_stride[ax];
      if (idx[ax] < dims[ax]) break;
      out_pos -= axis_out_stride[ax] * dims[ax];
      idx[ax] = 0;
    }
  }
}

/// Small dense tensor with flat row-major storage; just enough machinery for
/// the chain contractions below.
struct Env {
  std::vector<cplx> v{cplx(1.0)};
  std::vector<long> dims;  // empty = scalar

  long total() const {
    long t = 1;
    for (long d : dims) t *= d;
    return t;
  }

  /// Contract the axes listed in `ca` (in that index order) against a matrix
  /// of shape (prod dims[ca], prod new_dims); the contracted axes are removed
  /// and new_dims are appended at the tail. Remaining axes keep their order.
  void contract_axes(std::span<const int> ca, const cplx* mat, std::span<const long> new_dims) {
    const int rank = static_cast<int>(dims.size());
    std::vector<int> perm;
    perm.reserve(rank);
    for (int ax = 0; ax < rank; ++ax)
      if (std::find(ca.begin(), ca.end(), ax) == ca.end()) perm.push_back(ax);
    const size_t n_keep = perm.size();
    for (int ax : ca) perm.push_back(ax);
    std::vector<cplx> tmp(v.size());
    permute_into(v.data(), dims, perm, tmp.data());
    long rest = 1, con = 1, fresh = 1;
    std::vector<long> kept;
    for (size_t i = 0; i < n_keep; ++i) {
      kept.push_back(dims[perm[i]]);
      rest *= dims[perm[i]];
    }
    for (int ax : ca) con *= dims[ax];
    for (long d : new_dims) fresh *= d;
    std::vector<cplx> prod(static_cast<size_t>(rest * fresh));
    RowMap(prod.data(), rest, fresh) =
        ConstRowMap(tmp.data(), rest, con) * ConstRowMap(mat, con, fresh);
    v.swap(prod);
    dims = std::move(kept);
    dims.insert(dims.end(), new_dims.begin(), new_dims.end());
  }

  /// Reorder axes to the given permutation (perm[i] = current axis that goes
  /// to position i).
  void reorder(std::span<const int> perm) {
    // permute_into takes the inverse convention: out axis i <- in axis perm[i]
    std::vector<cplx> tmp(v.size());
    permute_into(v.data(), dims, perm, tmp.data());
    std::vector<long> nd(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) nd[i] = dims[perm[i]];
    v.swap(tmp);
    dims = std::move(nd);
  }

  /// Rescale to keep entries at order one; returns the extracted log factor.
  double extract_scale() {
    double mx = 0.0;
    for (const cplx& z : v) mx = std::max(mx, std::abs(z));
    if (mx == 0.0) return std::numeric_limits<double>::quiet_NaN();  // exactly zero
    if (mx > 1e50 || mx < 1e-50) {
      for (cplx& z : v) z /= mx;
      return std::log(mx);
    }
    return 0.0;
  }
};

/// W(l, po, pi, r) permuted to a ((l pi), (po r)) matrix.
inline std::vector<cplx> w_lpi_por(const OpSiteTensor& w) {
  std::vector<long> wdims{w.dl, w.dout, w.din, w.dr};
  std::vector<int> wperm{0, 2, 1, 3};
  std::vector<cplx> out(w.v.size());
  permute_into(w.v.data(), wdims, wperm, out.data());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// canonical compression
// ---------------------------------------------------------------------------

/// Compress a state into left-canonical form (center at the last site).
/// Returns the compressed train and the relative truncation error,
/// sqrt(sum over cuts of discarded weight / total weight at the cut).
inline std::pair<TensorTrain, double> canonical_compress(const TensorTrain& tt,
                                                         const TruncationPolicy& pol) {
  detail::validate_mps(tt);
  TensorTrain out = tt;
  double err = detail::compress_sites(out.sites, pol, out.log_norm);
  out.canonical_center = out.length() - 1;
  return {std::move(out), err};
}

/// Compress an operator train; same sweeps with the physical legs fused.
inline std::pair<OperatorTrain, double> canonical_compress(const OperatorTrain& op,
                                                           const TruncationPolicy& pol) {
  detail::validate_mpo(op);
  std::vector<SiteTensor> fused(op.sites.size());
  for (size_t i = 0; i < op.sites.size(); ++i) {
    fused[i].dl = op.sites[i].dl;
    fused[i].d = op.sites[i].dout * op.sites[i].din;
    fused[i].dr = op.sites[i].dr;
    fused[i].v = op.sites[i].v;
  }
  OperatorTrain out;
  out.log_norm = op.log_norm;
  double err = detail::compress_sites(fused, pol, out.log_norm);
  out.sites.resize(fused.size());
  for (size_t i = 0; i < fused.size(); ++i) {
    out.sites[i].dl = fused[i].dl;
    out.sites[i].dout = op.sites[i].dout;
    out.sites[i].din = op.sites[i].din;
    out.sites[i].dr = fused[i].dr;
    out.sites[i].v = std::move(fused[i].v);
  }
  return {std::move(out), err};
}

// ---------------------------------------------------------------------------
// contractions
// ---------------------------------------------------------------------------

/// A scalar tracked as log-magnitude and phase, for 2^N-scale results.
struct LogScalar {
  double log_abs = -std::numeric_limits<double>::infinity();
  cplx phase = 0.0;  // unit modulus, or 0 for an exact zero

  cplx value() const {
    if (phase == cplx(0.0)) return 0.0;
    return std::exp(log_abs) * phase;
  }
};

namespace detail {

inline LogScalar make_log_scalar(cplx v, double extra_log) {
  LogScalar out;
  double a = std::abs(v);
  if (a == 0.0 || std::isnan(a)) return out;
  out.log_abs = std::log(a) + extra_log;
  out.phase = v / a;
  return out;
}

}  // namespace detail

/// <bra| ops[0] ops[1] ... |ket> as a log-scaled scalar; ops[0] acts last
/// (nearest the bra). Empty ops gives the plain overlap <bra|ket>.
inline LogScalar sandwich_log(const TensorTrain& bra,
                              const std::vector<const OperatorTrain*>& ops,
                              const TensorTrain& ket) {
  detail::validate_mps(bra);
  detail::validate_mps(ket);
  const long n = ket.length();
  if (bra.length() != n) throw LengthMismatch("bra/ket length mismatch");
  for (const auto* op : ops) {
    detail::validate_mpo(*op);
    if (op->length() != n) throw LengthMismatch("operator length mismatch");
  }
  const int k = static_cast<int>(ops.size());

  // environment axes kept in the fixed order [b, w_0, ..., w_{k-1}, q]
  detail::Env env;
  env.dims.assign(static_cast<size_t>(k) + 2, 1);
  double log_scale = 0.0;

  for (long site = 0; site < n; ++site) {
    // ket site over q -> axes [b, w_0..w_{k-1}, p, q']
    {
      const SiteTensor& a = ket.sites[site];
      const int q_axis = k + 1;
      const std::array<int, 1> ca{q_axis};
      const std::array<long, 2> nd{a.d, a.dr};
      env.contract_axes(ca, a.v.data(), nd);
    }
    // operators bottom-up: contract (w_j, p), append (p', w_j'), restore order
    for (int j = k - 1; j >= 0; --j) {
      const OpSiteTensor& w = ops[j]->sites[site];
      std::vector<cplx> wmat = detail::w_lpi_por(w);
      const int rank = static_cast<int>(env.dims.size());
      const std::array<int, 2> ca{1 + j, rank - 2};
      const std::array<long, 2> nd{w.dout, w.dr};
      env.contract_axes(ca, wmat.data(), nd);
      // current order: [b, w_0..w_{j-1}, w_{j+1}'..w_{k-1}', q', p', w_j']
      // target order:  [b, w_0..w_{j-1}, w_j', w_{j+1}'..w_{k-1}', p', q']
      const int rr = static_cast<int>(env.dims.size());
      std::vector<int> perm;
      perm.reserve(rr);
      for (int i = 0; i <= j; ++i) perm.push_back(i);
      perm.push_back(rr - 1);
      for (int i = j + 1; i < k; ++i) perm.push_back(i);
      perm.push_back(rr - 2);  // p'
      perm.push_back(k);       // q'
      env.reorder(perm);
    }
    // bra site over (b, p); conjugated
    {
      const SiteTensor& b = bra.sites[site];
      RowMatrix bmat = ConstRowMap(b.v.data(), b.dl * b.d, b.dr).conjugate();
      const int rank = static_cast<int>(env.dims.size());
      const std::array<int, 2> ca{0, rank - 2};
      const std::array<long, 1> nd{b.dr};
      env.contract_axes(ca, bmat.data(), nd);
      // current order: [w_0'..w_{k-1}', q', b'] -> [b', w', q']
      const int rr = static_cast<int>(env.dims.size());
      std::vector<int> perm(static_cast<size_t>(rr));
      perm[0] = rr - 1;
      for (int i = 1; i < rr; ++i) perm[i] = i - 1;
      env.reorder(perm);
    }
    double s = env.extract_scale();
    if (std::isnan(s)) return LogScalar{};
    log_scale += s;
  }
  double logs = log_scale + bra.log_norm + ket.log_norm;
  for (const auto* op : ops) logs += op->log_norm;
  return detail::make_log_scalar(env.v[0], logs);
}

inline cplx sandwich(const TensorTrain& bra, const TensorTrain& ket) {
  return sandwich_log(bra, {}, ket).value();
}

inline cplx sandwich(const TensorTrain& bra, const OperatorTrain& op, const TensorTrain& ket) {
  return sandwich_log(bra, {&op}, ket).value();
}

/// tr(ops[0] ops[1] ...) as a log-scaled scalar.
inline LogScalar mpo_chain_trace_log(const std::vector<const OperatorTrain*>& ops) {
  if (ops.empty()) throw StructurallyInvalid("empty operator product");
  const long n = ops[0]->length();
  for (const auto* op : ops) {
    detail::validate_mpo(*op);
    if (op->length() != n) throw LengthMismatch("operator length mismatch in trace");
  }
  const int k = static_cast<int>(ops.size());

  // environment axes in fixed order [w_0, ..., w_{k-1}]
  detail::Env env;
  env.dims.assign(static_cast<size_t>(k), 1);
  double log_scale = 0.0;

  for (long site = 0; site < n; ++site) {
    // open the loop at the bottom operator; axes become
    // [w_0..w_{k-2}, p_up, p0, w_{k-1}'] then reorder to
    // [p0, w_0..w_{k-2}, w_{k-1}', p_up]
    {
      const OpSiteTensor& w = ops[k - 1]->sites[site];
      const std::array<int, 1> ca{k - 1};
      const std::array<long, 3> nd{w.dout, w.din, w.dr};
      env.contract_axes(ca, w.v.data(), nd);
      const int rr = k + 2;
      std::vector<int> perm;
      perm.reserve(rr);
      perm.push_back(rr - 2);  // p0
      for (int i = 0; i < k - 1; ++i) perm.push_back(i);
      perm.push_back(rr - 1);  // w_{k-1}'
      perm.push_back(rr - 3);  // p_up
      env.reorder(perm);
    }
    // contract remaining operators over (w_j, p_up); axes invariant
    // [p0, w_0..w_{j-1}, w_j'.., p_up]
    for (int j = k - 2; j >= 0; --j) {
      const OpSiteTensor& w = ops[j]->sites[site];
      std::vector<cplx> wmat = detail::w_lpi_por(w);
      const int rank = static_cast<int>(env.dims.size());
      const std::array<int, 2> ca{1 + j, rank - 1};
      const std::array<long, 2> nd{w.dout, w.dr};
      env.contract_axes(ca, wmat.data(), nd);
      // current: [p0, w_0..w_{j-1}, w_{j+1}'..w_{k-1}', p_up', w_j']
      // target:  [p0, w_0..w_{j-1}, w_j', w_{j+1}'..w_{k-1}', p_up']
      const int rr = static_cast<int>(env.dims.size());
      std::vector<int> perm;
      perm.reserve(rr);
      for (int i = 0; i <= j; ++i) perm.push_back(i);
      perm.push_back(rr - 1);
      for (int i = j + 1; i < k; ++i) perm.push_back(i);
      perm.push_back(rr - 2);
      env.reorder(perm);
    }
    // close the loop: contract (p0, p_up) with vec(identity)
    {
      const int rank = static_cast<int>(env.dims.size());
      const long dp = env.dims[0];
      if (dp != env.dims[rank - 1])
        throw StructurallyInvalid("physical dimension mismatch in trace");
      std::vector<cplx> eye(static_cast<size_t>(dp * dp), cplx(0));
      for (long p = 0; p < dp; ++p) eye[static_cast<size_t>(p * dp + p)] = 1.0;
      const std::array<int, 2> ca{0, rank - 1};
      const std::array<long, 1> nd{1};
      env.contract_axes(ca, eye.data(), nd);
      env.dims.pop_back();  // drop the trailing singleton
    }
    double s = env.extract_scale();
    if (std::isnan(s)) return LogScalar{};
    log_scale += s;
  }
  double logs = log_scale;
  for (const auto* op : ops) logs += op->log_norm;
  return detail::make_log_scalar(env.v[0], logs);
}

/// tr(op); may be 2^N-sized, still fits a double for the sizes in scope.
inline cplx mpo_trace(const OperatorTrain& op) { return mpo_chain_trace_log({&op}).value(); }

/// tr(op) / 2^N, numerically safe at any N.
inline cplx mpo_trace_scaled(const OperatorTrain& op) {
  LogScalar t = mpo_chain_trace_log({&op});
  if (t.phase == cplx(0.0)) return 0.0;
  return std::exp(t.log_abs - static_cast<double>(op.length()) * std::log(2.0)) * t.phase;
}

/// tr(ops[0] ops[1] ...) / 2^N.
inline cplx mpo_chain_trace_scaled(const std::vector<const OperatorTrain*>& ops) {
  LogScalar t = mpo_chain_trace_log(ops);
  if (t.phase == cplx(0.0)) return 0.0;
  return std::exp(t.log_abs - static_cast<double>(ops[0]->length()) * std::log(2.0)) * t.phase;
}

// ---------------------------------------------------------------------------
// operator application and products
// ---------------------------------------------------------------------------

/// op |state>, compressed by policy. Exact site-by-site contraction followed
/// by one canonical compression sweep; returns the result and the truncation
/// error of the sweep.
inline std::pair<TensorTrain, double> apply_mpo(const OperatorTrain& op, const TensorTrain& state,
                                                const TruncationPolicy& pol) {
  detail::validate_mpo(op);
  detail::validate_mps(state);
  const long n = state.length();
  if (op.length() != n) throw LengthMismatch("apply_mpo length mismatch");
  TensorTrain out;
  out.log_norm = state.log_norm + op.log_norm;
  out.sites.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    const OpSiteTensor& w = op.sites[i];
    const SiteTensor& a = state.sites[i];
    if (w.din != a.d) throw LengthMismatch("physical dimension mismatch");
    SiteTensor b(w.dl * a.dl, w.dout, w.dr * a.dr);
    for (long lw = 0; lw < w.dl; ++lw)
      for (long po = 0; po < w.dout; ++po)
        for (long pi = 0; pi < w.din; ++pi)
          for (long rw = 0; rw < w.dr; ++rw) {
            const cplx wv = w.at(lw, po, pi, rw);
            if (wv == cplx(0.0)) continue;
            for (long ls = 0; ls < a.dl; ++ls)
              for (long rs = 0; rs < a.dr; ++rs)
                b.at(lw * a.dl + ls, po, rw * a.dr + rs) += wv * a.at(ls, pi, rs);
          }
    out.sites[i] = std::move(b);
  }
  return canonical_compress(out, pol);
}

/// a * b (apply b first), compressed by policy.
inline std::pair<OperatorTrain, double> mpo_multiply(const OperatorTrain& a,
                                                     const OperatorTrain& b,
                                                     const TruncationPolicy& pol) {
  detail::validate_mpo(a);
  detail::validate_mpo(b);
  const long n = a.length();
  if (b.length() != n) throw LengthMismatch("mpo_multiply length mismatch");
  OperatorTrain out;
  out.log_norm = a.log_norm + b.log_norm;
  out.sites.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    const OpSiteTensor& wa = a.sites[i];
    const OpSiteTensor& wb = b.sites[i];
    if (wa.din != wb.dout) throw LengthMismatch("physical dimension mismatch in product");
    OpSiteTensor c(wa.dl * wb.dl, wa.dout, wb.din, wa.dr * wb.dr);
    for (long la = 0; la < wa.dl; ++la)
      for (long po = 0; po < wa.dout; ++po)
        for (long q = 0; q < wa.din; ++q)
          for (long ra = 0; ra < wa.dr; ++ra) {
            const cplx av = wa.at(la, po, q, ra);
            if (av == cplx(0.0)) continue;
            for (long lb = 0; lb < wb.dl; ++lb)
              for (long pi = 0; pi < wb.din; ++pi)
                for (long rb = 0; rb < wb.dr; ++rb)
                  c.at(la * wb.dl + lb, po, pi, ra * wb.dr + rb) += av * wb.at(lb, q, pi, rb);
          }
    out.sites[i] = std::move(c);
  }
  return canonical_compress(out, pol);
}

}  // namespace spectra

#include "spectra/tensor_train_util.hpp"
