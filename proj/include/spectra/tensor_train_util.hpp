#pragma once

// Constructors, dense converters and serialization for tensor trains.
// Included at the end of tensor_train.hpp; not meant to be used standalone.

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "spectra/rng.hpp"

namespace spectra {

// ---------------------------------------------------------------------------
// constructors
// ---------------------------------------------------------------------------

/// Product state from per-site local vectors.
inline TensorTrain product_state(const std::vector<Eigen::VectorXcd>& locals) {
  TensorTrain out;
  out.sites.reserve(locals.size());
  for (const auto& loc : locals) {
    SiteTensor s(1, loc.size(), 1);
    for (long p = 0; p < loc.size(); ++p) s.at(0, p, 0) = loc(p);
    out.sites.push_back(std::move(s));
  }
  out.canonical_center.reset();
  return out;
}

/// Computational basis state; bit 0 = up = (1,0).
inline TensorTrain basis_state(const std::vector<uint8_t>& bits) {
  std::vector<Eigen::VectorXcd> locals;
  locals.reserve(bits.size());
  for (uint8_t b : bits) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2);
    v(b ? 1 : 0) = 1.0;
    locals.push_back(v);
  }
  return product_state(locals);
}

inline TensorTrain all_up_state(long n) { return basis_state(std::vector<uint8_t>(n, 0)); }

/// Haar-ish random normalized MPS of the given bond dimension.
inline TensorTrain random_mps(long n, long bond, CounterRng& rng, long d = 2) {
  TensorTrain out;
  out.sites.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    long dl = (i == 0) ? 1 : std::min(bond, (long)std::pow((double)d, (double)std::min(i, n - i)));
    long dr = (i == n - 1) ? 1 : std::min(bond, (long)std::pow((double)d, (double)std::min(i + 1, n - 1 - i)));
    dl = std::max<long>(1, dl);
    dr = std::max<long>(1, dr);
    SiteTensor s(dl, d, dr);
    for (auto& z : s.v) z = cplx(rng.next_normal(), rng.next_normal());
    out.sites.push_back(std::move(s));
  }
  auto [c, err] = canonical_compress(out, exact_policy());
  (void)err;
  c.log_norm = 0.0;  // normalized
  return c;
}

inline OperatorTrain identity_mpo(long n, long d = 2) {
  OperatorTrain out;
  out.sites.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    OpSiteTensor w(1, d, d, 1);
    for (long p = 0; p < d; ++p) w.at(0, p, p, 0) = 1.0;
    out.sites.push_back(std::move(w));
  }
  return out;
}

/// Hermitian adjoint: swap the physical legs and conjugate.
inline OperatorTrain mpo_adjoint(const OperatorTrain& op) {
  OperatorTrain out;
  out.log_norm = op.log_norm;
  out.sites.reserve(op.sites.size());
  for (const auto& w : op.sites) {
    OpSiteTensor c(w.dl, w.din, w.dout, w.dr);
    for (long l = 0; l < w.dl; ++l)
      for (long po = 0; po < w.dout; ++po)
        for (long pi = 0; pi < w.din; ++pi)
          for (long r = 0; r < w.dr; ++r)
            c.at(l, pi, po, r) = std::conj(w.at(l, po, pi, r));
    out.sites.push_back(std::move(c));
  }
  return out;
}

/// Multiply an operator by a complex scalar; magnitude goes to log_norm,
/// the phase into the first site tensor.
inline OperatorTrain mpo_scale(OperatorTrain op, cplx factor) {
  double a = std::abs(factor);
  if (a == 0.0) throw ZeroNorm("scaling an operator train by zero");
  op.log_norm += std::log(a);
  cplx ph = factor / a;
  for (auto& z : op.sites.front().v) z *= ph;
  return op;
}

/// alpha * a + beta * b by bond direct sum (no compression).
inline OperatorTrain mpo_add(const OperatorTrain& a, const OperatorTrain& b, cplx alpha = 1.0,
                             cplx beta = 1.0) {
  detail::validate_mpo(a);
  detail::validate_mpo(b);
  const long n = a.length();
  if (b.length() != n) throw LengthMismatch("mpo_add length mismatch");
  const cplx fa = alpha * std::exp(a.log_norm);
  const cplx fb = beta * std::exp(b.log_norm);
  OperatorTrain out;
  out.sites.reserve(static_cast<size_t>(n));
  if (n == 1) {
    const auto& wa = a.sites[0];
    const auto& wb = b.sites[0];
    OpSiteTensor c(1, wa.dout, wa.din, 1);
    for (long po = 0; po < wa.dout; ++po)
      for (long pi = 0; pi < wa.din; ++pi)
        c.at(0, po, pi, 0) = fa * wa.at(0, po, pi, 0) + fb * wb.at(0, po, pi, 0);
    out.sites.push_back(std::move(c));
    return out;
  }
  for (long i = 0; i < n; ++i) {
    const auto& wa = a.sites[i];
    const auto& wb = b.sites[i];
    if (wa.dout != wb.dout || wa.din != wb.din)
      throw LengthMismatch("mpo_add physical dimension mismatch");
    const bool first = (i == 0), last = (i == n - 1);
    const long dl = first ? 1 : wa.dl + wb.dl;
    const long dr = last ? 1 : wa.dr + wb.dr;
    OpSiteTensor c(dl, wa.dout, wa.din, dr);
    const cplx ca = first ? fa : cplx(1.0);
    const cplx cb = first ? fb : cplx(1.0);
    for (long po = 0; po < wa.dout; ++po)
      for (long pi = 0; pi < wa.din; ++pi) {
        for (long l = 0; l < wa.dl; ++l)
          for (long r = 0; r < wa.dr; ++r)
            c.at(first ? 0 : l, po, pi, last ? 0 : r) += ca * wa.at(l, po, pi, r);
        for (long l = 0; l < wb.dl; ++l)
          for (long r = 0; r < wb.dr; ++r)
            c.at(first ? 0 : wa.dl + l, po, pi, last ? 0 : wa.dr + r) += cb * wb.at(l, po, pi, r);
      }
    out.sites.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// canonical-form checks
// ---------------------------------------------------------------------------

/// Max-absolute deviation from the isometry conditions implied by
/// canonical_center: left isometries strictly left of the center, right
/// isometries strictly right of it. Returns 0 for a center-less train.
inline double isometry_deviation(const TensorTrain& t) {
  if (!t.canonical_center) return 0.0;
  const long c = *t.canonical_center;
  double worst = 0.0;
  for (long i = 0; i < t.length(); ++i) {
    if (i == c) continue;
    const SiteTensor& s = t.sites[i];
    if (i < c) {
      Eigen::MatrixXcd m = s.fused_left();
      Eigen::MatrixXcd g = m.adjoint() * m - Eigen::MatrixXcd::Identity(s.dr, s.dr);
      worst = std::max(worst, g.cwiseAbs().maxCoeff());
    } else {
      Eigen::MatrixXcd m = s.fused_right();
      Eigen::MatrixXcd g = m * m.adjoint() - Eigen::MatrixXcd::Identity(s.dl, s.dl);
      worst = std::max(worst, g.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// norms and fidelities
// ---------------------------------------------------------------------------

inline double state_norm(const TensorTrain& t) {
  LogScalar s = sandwich_log(t, {}, t);
  if (s.phase == cplx(0.0)) return 0.0;
  return std::exp(0.5 * s.log_abs);
}

/// |<a|b>| / (|a| |b|), robust to log-scale norms.
inline double fidelity(const TensorTrain& a, const TensorTrain& b) {
  LogScalar ab = sandwich_log(a, {}, b);
  if (ab.phase == cplx(0.0)) return 0.0;
  LogScalar aa = sandwich_log(a, {}, a);
  LogScalar bb = sandwich_log(b, {}, b);
  return std::exp(ab.log_abs - 0.5 * aa.log_abs - 0.5 * bb.log_abs);
}

/// <state|op|state> / <state|state>.
inline cplx expectation(const TensorTrain& state, const OperatorTrain& op) {
  LogScalar num = sandwich_log(state, {&op}, state);
  LogScalar den = sandwich_log(state, {}, state);
  if (num.phase == cplx(0.0)) return 0.0;
  return std::exp(num.log_abs - den.log_abs) * num.phase / den.phase;
}

/// <bits| op |bits> for a computational basis state; cheap transfer product.
inline cplx mpo_expectation_bits(const OperatorTrain& op, const std::vector<uint8_t>& bits) {
  if (static_cast<long>(bits.size()) != op.length())
    throw LengthMismatch("bitstring length mismatch");
  Eigen::RowVectorXcd env = Eigen::RowVectorXcd::Ones(1);
  for (long i = 0; i < op.length(); ++i) {
    const OpSiteTensor& w = op.sites[i];
    const long p = bits[static_cast<size_t>(i)] ? 1 : 0;
    Eigen::MatrixXcd m(w.dl, w.dr);
    for (long l = 0; l < w.dl; ++l)
      for (long r = 0; r < w.dr; ++r) m(l, r) = w.at(l, p, p, r);
    env = env * m;
  }
  return env(0) * std::exp(op.log_norm);
}

// ---------------------------------------------------------------------------
// dense conversions (small N only; guard is the caller's responsibility)
// ---------------------------------------------------------------------------

/// Full 2^N vector; site 0 is the most significant bit.
inline Eigen::VectorXcd to_dense_vector(const TensorTrain& t) {
  detail::validate_mps(t);
  Eigen::Matrix<cplx, 1, Eigen::Dynamic> row(1);
  RowMatrix acc(1, 1);
  acc(0, 0) = 1.0;
  for (const auto& s : t.sites) {
    // (X, dl) x (dl, d dr) -> (X d, dr)
    RowMatrix next = acc * ConstRowMap(s.v.data(), s.dl, s.d * s.dr);
    acc = RowMap(next.data(), next.rows() * s.d, s.dr);
  }
  Eigen::VectorXcd out = acc.col(0);
  out *= std::exp(t.log_norm);
  return out;
}

/// Full 2^N x 2^N matrix of an operator train.
inline Eigen::MatrixXcd to_dense_matrix(const OperatorTrain& op) {
  detail::validate_mpo(op);
  // accumulate T[(rows_out, rows_in), l] as flat row-major [o][i][l]
  std::vector<cplx> acc{cplx(1.0)};
  long dim_o = 1, dim_i = 1;
  for (const auto& w : op.sites) {
    // contract over l: (o i, l) x (l, po pi r)
    std::vector<cplx> prod(static_cast<size_t>(dim_o * dim_i * w.dout * w.din * w.dr));
    RowMap(prod.data(), dim_o * dim_i, w.dout * w.din * w.dr) =
        ConstRowMap(acc.data(), dim_o * dim_i, w.dl) *
        ConstRowMap(w.v.data(), w.dl, w.dout * w.din * w.dr);
    // [o][i][po][pi][r] -> [o][po][i][pi][r]
    std::vector<long> dims{dim_o, dim_i, w.dout, w.din, w.dr};
    std::vector<int> perm{0, 2, 1, 3, 4};
    acc.resize(prod.size());
    detail::permute_into(prod.data(), dims, perm, acc.data());
    dim_o *= w.dout;
    dim_i *= w.din;
  }
  Eigen::MatrixXcd out(dim_o, dim_i);
  for (long o = 0; o < dim_o; ++o)
    for (long i = 0; i < dim_i; ++i) out(o, i) = acc[static_cast<size_t>(o * dim_i + i)];
  out *= std::exp(op.log_norm);
  return out;
}

/// Exact MPS from a dense vector by successive SVD splits.
inline TensorTrain mps_from_dense(const Eigen::VectorXcd& vec, long n, long d = 2,
                                  double cutoff = 1e-14) {
  long total = 1;
  for (long i = 0; i < n; ++i) total *= d;
  if (vec.size() != total) throw LengthMismatch("dense vector size is not d^n");
  TensorTrain out;
  out.sites.reserve(static_cast<size_t>(n));
  TruncationPolicy pol;
  pol.sv_cutoff = cutoff;
  RowMatrix carry(1, total);
  for (long i = 0; i < total; ++i) carry(0, i) = vec(i);
  long chi = 1;
  for (long i = 0; i < n; ++i) {
    long rest = total;
    for (long j = 0; j <= i; ++j) rest /= d;
    RowMatrix m = RowMap(carry.data(), chi * d, rest);
    if (i == n - 1) {
      SiteTensor s(chi, d, 1);
      s.fused_left() = m;
      double nrm = std::sqrt(s.fused_left().squaredNorm());
      if (!(nrm > 0.0)) throw ZeroNorm("zero dense vector");
      s.fused_left() /= nrm;
      out.log_norm += std::log(nrm);
      out.sites.push_back(std::move(s));
      break;
    }
    detail::SvdCut cut = detail::svd_truncate(m, pol);
    SiteTensor s(chi, d, cut.s.size());
    s.fused_left() = cut.u;
    out.sites.push_back(std::move(s));
    RowMatrix next = cut.s.asDiagonal() * cut.vh;
    carry = next;
    chi = cut.s.size();
  }
  out.canonical_center = n - 1;
  return out;
}

/// Exact MPO from a dense matrix by successive SVD splits.
inline OperatorTrain mpo_from_dense(const Eigen::MatrixXcd& mat, long n, long d = 2,
                                    double cutoff = 1e-14) {
  long total = 1;
  for (long i = 0; i < n; ++i) total *= d;
  if (mat.rows() != total || mat.cols() != total)
    throw LengthMismatch("dense matrix size is not d^n x d^n");
  // reorder [(p_1..p_n), (q_1..q_n)] -> [(p_1 q_1), ..., (p_n q_n)]
  std::vector<long> dims(static_cast<size_t>(2 * n), d);
  std::vector<int> perm(static_cast<size_t>(2 * n));
  for (long i = 0; i < n; ++i) {
    perm[static_cast<size_t>(2 * i)] = static_cast<int>(i);
    perm[static_cast<size_t>(2 * i + 1)] = static_cast<int>(n + i);
  }
  std::vector<cplx> flat(static_cast<size_t>(total) * total);
  for (long r = 0; r < total; ++r)
    for (long c = 0; c < total; ++c) flat[static_cast<size_t>(r * total + c)] = mat(r, c);
  std::vector<cplx> interleaved(flat.size());
  detail::permute_into(flat.data(), dims, perm, interleaved.data());
  Eigen::VectorXcd as_vec(static_cast<long>(interleaved.size()));
  for (size_t i = 0; i < interleaved.size(); ++i) as_vec(static_cast<long>(i)) = interleaved[i];
  TensorTrain fused = mps_from_dense(as_vec, n, d * d, cutoff);
  OperatorTrain out;
  out.log_norm = fused.log_norm;
  out.sites.resize(fused.sites.size());
  for (size_t i = 0; i < fused.sites.size(); ++i) {
    out.sites[i].dl = fused.sites[i].dl;
    out.sites[i].dout = d;
    out.sites[i].din = d;
    out.sites[i].dr = fused.sites[i].dr;
    out.sites[i].v = std::move(fused.sites[i].v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// serialization: magic "FETT1", version byte, u64 site count, per site four
// u64 dims (MPS stored as (l, d, 1, r)) + row-major complex doubles, then
// a trailing f64 log_norm. Little-endian throughout.
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little, "serialization assumes little-endian");

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t x) {
  os.write(reinterpret_cast<const char*>(&x), 8);
}
inline void write_f64(std::ostream& os, double x) {
  os.write(reinterpret_cast<const char*>(&x), 8);
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t x = 0;
  is.read(reinterpret_cast<char*>(&x), 8);
  if (!is) throw CorruptCache("unexpected end of tensor file");
  return x;
}
inline double read_f64(std::istream& is) {
  double x = 0;
  is.read(reinterpret_cast<char*>(&x), 8);
  if (!is) throw CorruptCache("unexpected end of tensor file");
  return x;
}

inline void write_train_header(std::ostream& os, std::uint64_t n_sites) {
  os.write("FETT1", 5);
  char version = 1;
  os.write(&version, 1);
  write_u64(os, n_sites);
}

inline std::uint64_t read_train_header(std::istream& is, const std::string& path) {
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "FETT1", 5) != 0)
    throw CorruptCache("bad magic in " + path);
  char version = 0;
  is.read(&version, 1);
  if (!is || version != 1) throw CorruptCache("unsupported version in " + path);
  return read_u64(is);
}

}  // namespace detail

inline void save_train(const std::string& path, const TensorTrain& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CorruptCache("cannot open " + path + " for writing");
  detail::write_train_header(os, static_cast<std::uint64_t>(t.length()));
  for (const auto& s : t.sites) {
    detail::write_u64(os, static_cast<std::uint64_t>(s.dl));
    detail::write_u64(os, static_cast<std::uint64_t>(s.d));
    detail::write_u64(os, 1);
    detail::write_u64(os, static_cast<std::uint64_t>(s.dr));
    for (const cplx& z : s.v) {
      detail::write_f64(os, z.real());
      detail::write_f64(os, z.imag());
    }
  }
  detail::write_f64(os, t.log_norm);
}

inline void save_train(const std::string& path, const OperatorTrain& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CorruptCache("cannot open " + path + " for writing");
  detail::write_train_header(os, static_cast<std::uint64_t>(t.length()));
  for (const auto& s : t.sites) {
    detail::write_u64(os, static_cast<std::uint64_t>(s.dl));
    detail::write_u64(os, static_cast<std::uint64_t>(s.dout));
    detail::write_u64(os, static_cast<std::uint64_t>(s.din));
    detail::write_u64(os, static_cast<std::uint64_t>(s.dr));
    for (const cplx& z : s.v) {
      detail::write_f64(os, z.real());
      detail::write_f64(os, z.imag());
    }
  }
  detail::write_f64(os, t.log_norm);
}

inline TensorTrain load_mps(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptCache("cannot open " + path);
  const std::uint64_t n = detail::read_train_header(is, path);
  TensorTrain out;
  out.sites.resize(n);
  for (auto& s : out.sites) {
    const long dl = static_cast<long>(detail::read_u64(is));
    const long d = static_cast<long>(detail::read_u64(is));
    const long one = static_cast<long>(detail::read_u64(is));
    const long dr = static_cast<long>(detail::read_u64(is));
    if (one != 1) throw CorruptCache(path + " holds an operator train, not a state");
    if (dl < 1 || d < 1 || dr < 1 || dl * d * dr > (1L << 34))
      throw CorruptCache("implausible dimensions in " + path);
    s = SiteTensor(dl, d, dr);
    for (auto& z : s.v) {
      double re = detail::read_f64(is);
      double im = detail::read_f64(is);
      z = cplx(re, im);
    }
  }
  out.log_norm = detail::read_f64(is);
  detail::validate_mps(out);
  return out;
}

inline OperatorTrain load_mpo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptCache("cannot open " + path);
  const std::uint64_t n = detail::read_train_header(is, path);
  OperatorTrain out;
  out.sites.resize(n);
  for (auto& s : out.sites) {
    const long dl = static_cast<long>(detail::read_u64(is));
    const long dout = static_cast<long>(detail::read_u64(is));
    const long din = static_cast<long>(detail::read_u64(is));
    const long dr = static_cast<long>(detail::read_u64(is));
    if (dl < 1 || dout < 1 || din < 1 || dr < 1 || dl * dout * din * dr > (1L << 34))
      throw CorruptCache("implausible dimensions in " + path);
    s = OpSiteTensor(dl, dout, din, dr);
    for (auto& z : s.v) {
      double re = detail::read_f64(is);
      double im = detail::read_f64(is);
      z = cplx(re, im);
    }
  }
  out.log_norm = detail::read_f64(is);
  detail::validate_mpo(out);
  return out;
}

}  // namespace spectra
