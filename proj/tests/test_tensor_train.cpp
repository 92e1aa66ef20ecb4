#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dense_reference.hpp"
#include "spectra/tensor_train.hpp"

using namespace spectra;
using Catch::Approx;

namespace {

TensorTrain ghz_state(long n) {
  // bond-2 train: (|00...0> + |11...1>) / sqrt(2)
  TensorTrain t;
  for (long i = 0; i < n; ++i) {
    long dl = (i == 0) ? 1 : 2;
    long dr = (i == n - 1) ? 1 : 2;
    SiteTensor s(dl, 2, dr);
    if (n == 1) {
      s.at(0, 0, 0) = 1.0 / std::sqrt(2.0);
      s.at(0, 1, 0) = 1.0 / std::sqrt(2.0);
    } else if (i == 0) {
      s.at(0, 0, 0) = 1.0 / std::sqrt(2.0);
      s.at(0, 1, 1) = 1.0 / std::sqrt(2.0);
    } else if (i == n - 1) {
      s.at(0, 0, 0) = 1.0;
      s.at(1, 1, 0) = 1.0;
    } else {
      s.at(0, 0, 0) = 1.0;
      s.at(1, 1, 1) = 1.0;
    }
    t.sites.push_back(std::move(s));
  }
  return t;
}

OperatorTrain random_mpo(long n, long bond, CounterRng& rng) {
  OperatorTrain out;
  for (long i = 0; i < n; ++i) {
    long dl = (i == 0) ? 1 : bond;
    long dr = (i == n - 1) ? 1 : bond;
    OpSiteTensor w(dl, 2, 2, dr);
    for (auto& z : w.v) z = cplx(rng.next_normal(), rng.next_normal());
    out.sites.push_back(std::move(w));
  }
  auto [c, err] = canonical_compress(out, exact_policy());
  return std::move(c);
}

}  // namespace

TEST_CASE("compressing a product state is exact") {
  CounterRng rng(11);
  std::vector<Eigen::VectorXcd> locals;
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXcd v(2);
    v << cplx(rng.next_normal(), rng.next_normal()), cplx(rng.next_normal(), rng.next_normal());
    locals.push_back(v.normalized());
  }
  TensorTrain t = product_state(locals);
  auto [c, err] = canonical_compress(t, TruncationPolicy{4, 1e-10, false});
  REQUIRE(err == 0.0);
  for (const auto& s : c.sites) {
    REQUIRE(s.dl == 1);
    REQUIRE(s.dr == 1);
  }
  REQUIRE(fidelity(t, c) == Approx(1.0).margin(1e-12));
}

TEST_CASE("lossless compression preserves a random bond-8 state") {
  CounterRng rng(42);
  TensorTrain t = random_mps(6, 8, rng);
  auto [c, err] = canonical_compress(t, TruncationPolicy{8, 0.0, false});
  REQUIRE(std::abs(sandwich(t, c)) == Approx(1.0).margin(1e-12));
  REQUIRE(isometry_deviation(c) < 1e-10);
}

TEST_CASE("GHZ truncated to bond 1 discards half the weight") {
  TensorTrain ghz = ghz_state(6);
  // oracle: dense SVD across the half-chain bipartition
  Eigen::VectorXcd dense = to_dense_vector(ghz);
  Eigen::MatrixXcd half(8, 8);
  for (long r = 0; r < 8; ++r)
    for (long c = 0; c < 8; ++c) half(r, c) = dense(r * 8 + c);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(half);
  const double total2 = svd.singularValues().squaredNorm();
  const double kept2 = svd.singularValues()(0) * svd.singularValues()(0);
  const double expected = std::sqrt(1.0 - kept2 / total2);
  REQUIRE(expected == Approx(1.0 / std::sqrt(2.0)).margin(1e-12));

  auto [c, err] = canonical_compress(ghz, TruncationPolicy{1, 0.0, false});
  REQUIRE(err == Approx(expected).margin(1e-10));
  for (const auto& s : c.sites) REQUIRE(s.dr <= 1);
}

TEST_CASE("compression throws on structural defects and zero norm") {
  TensorTrain t = all_up_state(4);
  t.sites[1].dl = 3;  // break the bond matching
  t.sites[1].v.resize(static_cast<size_t>(3 * 2 * 1));
  REQUIRE_THROWS_AS(canonical_compress(t, exact_policy()), StructurallyInvalid);

  TensorTrain z = all_up_state(4);
  for (auto& s : z.sites) std::fill(s.v.begin(), s.v.end(), cplx(0));
  REQUIRE_THROWS_AS(canonical_compress(z, exact_policy()), ZeroNorm);
}

TEST_CASE("sandwich matches dense contractions, up to three operators") {
  CounterRng rng(7);
  const long n = 5;
  TensorTrain bra = random_mps(n, 4, rng);
  TensorTrain ket = random_mps(n, 4, rng);
  OperatorTrain a = random_mpo(n, 3, rng);
  OperatorTrain b = random_mpo(n, 2, rng);
  OperatorTrain c = random_mpo(n, 3, rng);

  Eigen::VectorXcd vb = to_dense_vector(bra);
  Eigen::VectorXcd vk = to_dense_vector(ket);
  Eigen::MatrixXcd ma = to_dense_matrix(a);
  Eigen::MatrixXcd mb = to_dense_matrix(b);
  Eigen::MatrixXcd mc = to_dense_matrix(c);

  auto check = [&](cplx got, cplx want) {
    REQUIRE(std::abs(got - want) < 1e-10 * (1.0 + std::abs(want)));
  };
  check(sandwich(bra, ket), vb.dot(vk));
  check(sandwich(bra, a, ket), vb.dot(ma * vk));
  check(sandwich_log(bra, {&a, &b}, ket).value(), vb.dot(ma * mb * vk));
  check(sandwich_log(bra, {&a, &b, &c}, ket).value(), vb.dot(ma * mb * mc * vk));
}

TEST_CASE("sandwich rejects mismatched lengths") {
  CounterRng rng(3);
  TensorTrain a = random_mps(4, 2, rng);
  TensorTrain b = random_mps(5, 2, rng);
  REQUIRE_THROWS_AS(sandwich(a, b), LengthMismatch);
}

TEST_CASE("mpo_trace: identity, scaling, dense equivalence") {
  REQUIRE(mpo_trace(identity_mpo(10)).real() == Approx(1024.0));
  REQUIRE(std::abs(mpo_trace_scaled(identity_mpo(10)) - cplx(1.0)) < 1e-13);

  CounterRng rng(5);
  const long n = 5;
  OperatorTrain a = random_mpo(n, 3, rng);
  OperatorTrain b = random_mpo(n, 2, rng);
  Eigen::MatrixXcd ma = to_dense_matrix(a);
  Eigen::MatrixXcd mb = to_dense_matrix(b);
  cplx want1 = ma.trace();
  cplx want2 = (ma * mb).trace();
  cplx want3 = (ma * mb * ma).trace();
  REQUIRE(std::abs(mpo_trace(a) - want1) < 1e-9 * (1 + std::abs(want1)));
  REQUIRE(std::abs(mpo_chain_trace_scaled({&a, &b}) - want2 / 32.0) < 1e-9 * (1 + std::abs(want2)));
  REQUIRE(std::abs(mpo_chain_trace_scaled({&a, &b, &a}) - want3 / 32.0) <
          1e-9 * (1 + std::abs(want3)));
}

TEST_CASE("trace is linear over direct sums") {
  CounterRng rng(19);
  const long n = 4;
  OperatorTrain a = random_mpo(n, 2, rng);
  OperatorTrain b = random_mpo(n, 3, rng);
  cplx alpha(0.7, -0.3), beta(-1.2, 0.4);
  OperatorTrain sum = mpo_add(a, b, alpha, beta);
  cplx want = alpha * mpo_trace(a) + beta * mpo_trace(b);
  REQUIRE(std::abs(mpo_trace(sum) - want) <= 1e-12 * (1.0 + std::abs(want)));
  // the direct sum also represents the right operator
  Eigen::MatrixXcd dense = to_dense_matrix(sum);
  Eigen::MatrixXcd wantm = alpha.real() * to_dense_matrix(a) + beta.real() * to_dense_matrix(b);
  wantm += cplx(0, 1) * (alpha.imag() * to_dense_matrix(a) + beta.imag() * to_dense_matrix(b));
  REQUIRE((dense - wantm).cwiseAbs().maxCoeff() < 1e-10 * wantm.cwiseAbs().maxCoeff());
}

TEST_CASE("apply_mpo: identity is exact, dense equivalence, associativity") {
  CounterRng rng(23);
  const long n = 6;
  TensorTrain psi = random_mps(n, 4, rng);
  auto [same, err0] = apply_mpo(identity_mpo(n), psi, exact_policy());
  REQUIRE(fidelity(same, psi) == Approx(1.0).margin(1e-12));
  REQUIRE(err0 < 1e-12);

  OperatorTrain a = random_mpo(n, 3, rng);
  auto [applied, err1] = apply_mpo(a, psi, exact_policy());
  Eigen::VectorXcd want = to_dense_matrix(a) * to_dense_vector(psi);
  Eigen::VectorXcd got = to_dense_vector(applied);
  REQUIRE((got - want).norm() < 1e-10 * want.norm());

  // applying twice agrees with applying the squared operator
  auto [aa, e2] = mpo_multiply(a, a, exact_policy());
  auto [one, e3] = apply_mpo(a, applied, exact_policy());
  auto [two, e4] = apply_mpo(aa, psi, exact_policy());
  REQUIRE(fidelity(one, two) == Approx(1.0).margin(1e-10));
}

TEST_CASE("mpo_multiply: identity algebra and dense equivalence") {
  const long n = 5;
  auto [ii, err] = mpo_multiply(identity_mpo(n), identity_mpo(n), exact_policy());
  for (const auto& s : ii.sites) {
    REQUIRE(s.dl == 1);
    REQUIRE(s.dr == 1);
  }
  REQUIRE(std::abs(mpo_trace_scaled(ii) - cplx(1.0)) < 1e-12);

  CounterRng rng(29);
  OperatorTrain a = random_mpo(n, 2, rng);
  OperatorTrain b = random_mpo(n, 3, rng);
  auto [ab, e] = mpo_multiply(a, b, exact_policy());
  Eigen::MatrixXcd want = to_dense_matrix(a) * to_dense_matrix(b);
  Eigen::MatrixXcd got = to_dense_matrix(ab);
  REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-10 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("lossless round trip leaves sandwich values unchanged") {
  CounterRng rng(31);
  const long n = 6;
  TensorTrain psi = random_mps(n, 5, rng);
  OperatorTrain a = random_mpo(n, 3, rng);
  cplx before = sandwich(psi, a, psi);
  auto [c, err] = canonical_compress(psi, TruncationPolicy{16, 0.0, false});
  cplx after = sandwich(c, a, c);
  REQUIRE(std::abs(after - before) <= 1e-12 * std::abs(before));
  REQUIRE(isometry_deviation(c) <= 1e-10);
}

TEST_CASE("mpo adjoint and scale behave like dense counterparts") {
  CounterRng rng(37);
  OperatorTrain a = random_mpo(4, 3, rng);
  Eigen::MatrixXcd ma = to_dense_matrix(a);
  REQUIRE((to_dense_matrix(mpo_adjoint(a)) - ma.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  cplx f(0.3, -2.0);
  REQUIRE((to_dense_matrix(mpo_scale(a, f)) - f * ma).cwiseAbs().maxCoeff() <
          1e-12 * std::abs(f) * ma.cwiseAbs().maxCoeff());
}

TEST_CASE("dense conversions invert each other") {
  CounterRng rng(41);
  const long n = 5;
  TensorTrain psi = random_mps(n, 4, rng);
  Eigen::VectorXcd v = to_dense_vector(psi);
  TensorTrain back = mps_from_dense(v, n);
  REQUIRE(fidelity(psi, back) == Approx(1.0).margin(1e-12));
  REQUIRE((to_dense_vector(back) - v).norm() < 1e-10 * v.norm());

  OperatorTrain a = random_mpo(n, 3, rng);
  Eigen::MatrixXcd m = to_dense_matrix(a);
  OperatorTrain opback = mpo_from_dense(m, n);
  REQUIRE((to_dense_matrix(opback) - m).cwiseAbs().maxCoeff() < 1e-10 * m.cwiseAbs().maxCoeff());
}

TEST_CASE("bitstring expectation agrees with dense diagonal") {
  CounterRng rng(43);
  const long n = 5;
  OperatorTrain a = random_mpo(n, 3, rng);
  Eigen::MatrixXcd m = to_dense_matrix(a);
  std::vector<uint8_t> bits{1, 0, 1, 1, 0};
  long idx = 0;
  for (uint8_t b : bits) idx = idx * 2 + (b ? 1 : 0);
  REQUIRE(std::abs(mpo_expectation_bits(a, bits) - m(idx, idx)) < 1e-10 * (1 + std::abs(m(idx, idx))));
}

TEST_CASE("serialization round trips states and operators") {
  namespace fs = std::filesystem;
  CounterRng rng(47);
  const long n = 4;
  TensorTrain psi = random_mps(n, 3, rng);
  psi.log_norm = 0.25;
  OperatorTrain a = random_mpo(n, 2, rng);

  fs::path dir = fs::temp_directory_path() / "fett_roundtrip";
  fs::create_directories(dir);
  save_train((dir / "state.fett").string(), psi);
  save_train((dir / "op.fett").string(), a);

  TensorTrain psi2 = load_mps((dir / "state.fett").string());
  REQUIRE(psi2.log_norm == Approx(0.25));
  REQUIRE(fidelity(psi, psi2) == Approx(1.0).margin(1e-14));
  OperatorTrain a2 = load_mpo((dir / "op.fett").string());
  REQUIRE((to_dense_matrix(a2) - to_dense_matrix(a)).cwiseAbs().maxCoeff() < 1e-14);

  // loading a state file as an operator must fail, as must a truncated file
  REQUIRE_THROWS_AS(load_mps((dir / "op.fett").string()), CorruptCache);
  {
    std::ifstream in((dir / "state.fett").string(), std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out((dir / "broken.fett").string(), std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size()));
  }
  REQUIRE_THROWS_AS(load_mps((dir / "broken.fett").string()), CorruptCache);
  fs::remove_all(dir);
}
