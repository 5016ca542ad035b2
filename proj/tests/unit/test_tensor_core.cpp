#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <vector>

#include "mfh/errors.hpp"
#include "mfh/random_states.hpp"
#include "mfh/symmetric_sector.hpp"
#include "mfh/tensor_core.hpp"

using namespace mfh;

namespace {

const SiteSpace C2(SiteKind::classical, 2);
const SiteSpace C3(SiteKind::classical, 3);
const SiteSpace Q2(SiteKind::quantum, 2);

// Density-matrix partial trace of site k by explicit index arithmetic.
Eigen::MatrixXcd matrix_partial_trace(const Eigen::MatrixXcd& rho, int m, int n, int k) {
  const int outer = static_cast<int>(std::pow(m, k - 1));
  const int inner = static_cast<int>(std::pow(m, n - k));
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(outer * inner, outer * inner);
  for (int ro = 0; ro < outer; ++ro)
    for (int ri = 0; ri < inner; ++ri)
      for (int co = 0; co < outer; ++co)
        for (int ci = 0; ci < inner; ++ci)
          for (int a = 0; a < m; ++a)
            out(ro * inner + ri, co * inner + ci) +=
                rho((ro * m + a) * inner + ri, (co * m + a) * inner + ci);
  return out;
}

// Classical marginal over site k by nested loops.
std::vector<double> vector_partial_trace(const std::vector<double>& w, int m, int n, int k) {
  const int outer = static_cast<int>(std::pow(m, k - 1));
  const int inner = static_cast<int>(std::pow(m, n - k));
  std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
  for (int o = 0; o < outer; ++o)
    for (int a = 0; a < m; ++a)
      for (int i = 0; i < inner; ++i) out[static_cast<std::size_t>(o * inner + i)] += w[static_cast<std::size_t>((o * m + a) * inner + i)];
  return out;
}

NBodyState full_symmetrize(const NBodyState& f) {
  std::vector<int> perm(static_cast<std::size_t>(f.sites()));
  std::iota(perm.begin(), perm.end(), 1);
  NBodyState acc(f.space(), f.sites());
  int count = 0;
  do {
    acc += permute_sites(f, perm);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  acc *= Complex(1.0 / count);
  return acc;
}

}  // namespace

TEST_CASE("site space validates its dimension") {
  CHECK_THROWS_AS(SiteSpace(SiteKind::classical, 1), ValidationError);
  CHECK(Q2.local_dim() == 4);
  CHECK(C3.local_dim() == 3);
}

TEST_CASE("tensor product of point mass and uniform") {
  const double a[] = {1.0, 0.0}, b[] = {0.5, 0.5};
  const auto p = tensor_product(NBodyState::from_weights(C2, 1, a), NBodyState::from_weights(C2, 1, b));
  const std::vector<double> expect{0.5, 0.5, 0.0, 0.0};
  CHECK(p.weights() == expect);
}

TEST_CASE("maximally mixed quantum states factorize") {
  const auto half = NBodyState::from_matrix(Q2, 1, Eigen::MatrixXcd::Identity(2, 2) / 2.0);
  const auto p = tensor_product(half, half);
  CHECK((p.to_matrix() - Eigen::MatrixXcd::Identity(4, 4) / 4.0).norm() < 1e-15);
}

TEST_CASE("trace is multiplicative and mismatched spaces are rejected") {
  Rng rng(1);
  for (const auto& sp : {C3, Q2}) {
    const auto a = random_physical(sp, 2, rng), b = random_physical(sp, 1, rng);
    CHECK(std::abs(trace(tensor_product(a, b)) - Complex(1.0)) < 1e-14);
    CHECK(is_physical(tensor_product(a, b)));
  }
  CHECK_THROWS_AS(tensor_product(NBodyState(C2, 1), NBodyState(C3, 1)), StructuralError);
}

TEST_CASE("partial trace of factorized input and of one site") {
  Rng rng(2);
  for (const auto& sp : {C2, Q2}) {
    const auto a = random_hermitian(sp, 2, rng), b = random_hermitian(sp, 1, rng);
    const auto r = partial_trace_site(tensor_product(a, b), 3);
    CHECK(max_abs_diff(r, a * trace(b)) < 1e-13);
    const auto one = random_physical(sp, 1, rng);
    const auto s = partial_trace_site(one, 1);
    CHECK(s.sites() == 0);
    CHECK(std::abs(s[0] - trace(one)) < 1e-15);
  }
  CHECK_THROWS_AS(partial_trace_site(NBodyState(C2, 2), 3), StructuralError);
  CHECK_THROWS_AS(partial_trace_site(NBodyState(C2, 0), 1), StructuralError);
}

TEST_CASE("partial trace matches brute-force contraction") {
  Rng rng(3);
  for (int n = 1; n <= 4; ++n)
    for (int k = 1; k <= n; ++k) {
      const auto fq = random_generic(Q2, n, rng);
      const auto ref = matrix_partial_trace(fq.to_matrix(), 2, n, k);
      const auto got = partial_trace_site(fq, k);
      if (n > 1) {
        CHECK((got.to_matrix() - ref).cwiseAbs().maxCoeff() < 1e-13);
      } else {
        CHECK(std::abs(got[0] - ref(0, 0)) < 1e-13);
      }
      const auto fc = random_hermitian(C3, n, rng);
      const auto refc = vector_partial_trace(fc.weights(), 3, n, k);
      const auto gotc = partial_trace_site(fc, k);
      for (std::size_t x = 0; x < refc.size(); ++x) CHECK(std::abs(gotc[x] - refc[x]) < 1e-13);
    }
}

TEST_CASE("symmetric three-site state: tracing site 1 or 3 agrees") {
  Rng rng(4);
  for (const auto& sp : {C3, Q2}) {
    const auto f = random_symmetric_physical(sp, 3, rng);
    CHECK(max_abs_diff(partial_trace_site(f, 1), partial_trace_site(f, 3)) < 1e-14);
  }
}

TEST_CASE("partial_trace_last is repeated tracing of the last site") {
  Rng rng(5);
  for (const auto& sp : {C2, Q2}) {
    const auto f = random_generic(sp, 4, rng);
    CHECK(max_abs_diff(partial_trace_last(f, 0), f) == 0.0);
    for (int c = 0; c < 4; ++c) {
      const auto lhs = partial_trace_last(f, c + 1);
      const auto rhs = partial_trace_site(partial_trace_last(f, c), 4 - c);
      CHECK(max_abs_diff(lhs, rhs) < 1e-13);
    }
    CHECK(std::abs(partial_trace_last(f, 4)[0] - trace(f)) < 1e-13);
    CHECK_THROWS_AS(partial_trace_last(f, 5), StructuralError);
    const auto g = random_physical(sp, 1, rng);
    CHECK(max_abs_diff(partial_trace_last(tensor_power(g, 4), 2), tensor_power(g, 2)) < 1e-14);
  }
}

TEST_CASE("partial trace norm contract") {
  Rng rng(6);
  for (const auto& sp : {C2, Q2})
    for (int trial = 0; trial < 10; ++trial) {
      const auto f = random_generic(sp, 3, rng);
      for (int k = 1; k <= 3; ++k) {
        const auto r = partial_trace_site(f, k);
        CHECK(std::abs(trace(r) - trace(f)) <= 1e-13 * std::max(1.0, std::abs(trace(f))));
        CHECK(trace_norm(r) <= trace_norm(f) + 1e-12);
      }
      const auto p = random_physical(sp, 3, rng);
      CHECK(std::abs(trace_norm(partial_trace_site(p, 2)) - trace_norm(p)) <= 1e-12);
    }
}

TEST_CASE("swap sites") {
  Rng rng(7);
  for (const auto& sp : {C3, Q2}) {
    const auto a = random_generic(sp, 1, rng), b = random_generic(sp, 1, rng);
    CHECK(max_abs_diff(swap_sites(tensor_product(a, b), 1, 2), tensor_product(b, a)) < 1e-15);
    const auto f = random_generic(sp, 3, rng);
    CHECK(max_abs_diff(swap_sites(swap_sites(f, 1, 3), 1, 3), f) == 0.0);
    CHECK(std::abs(trace_norm(swap_sites(f, 1, 3)) - trace_norm(f)) <= 1e-13 * trace_norm(f));
  }
  CHECK_THROWS_AS(swap_sites(NBodyState(C2, 2), 0, 1), StructuralError);
}

TEST_CASE("quantum swap conjugates rows and columns") {
  Rng rng(8);
  const auto f = random_generic(Q2, 2, rng);
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) s(b * 2 + a, a * 2 + b) = 1.0;
  CHECK((swap_sites(f, 1, 2).to_matrix() - s * f.to_matrix() * s).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("place basic cases") {
  Rng rng(9);
  const auto F = random_generic(C3, 1, rng), G = random_generic(C3, 1, rng);
  const int one[] = {1}, two[] = {2};
  CHECK(max_abs_diff(place(2, F, one, G), tensor_product(F, G)) == 0.0);
  CHECK(max_abs_diff(place(2, F, two, G), tensor_product(G, F)) == 0.0);
  CHECK(max_abs_diff(place(1, F, one, NBodyState::scalar(C3, 1.0)), F) == 0.0);
  CHECK_THROWS_AS(place(3, F, one, F), StructuralError);
}

TEST_CASE("place composes over disjoint slot sets") {
  Rng rng(10);
  for (const auto& sp : {C2, Q2}) {
    const auto F = random_generic(sp, 1, rng);
    for (int j = 1; j <= 4; ++j)
      for (std::uint32_t K = 0; K < (1u << j); ++K) {
        const int jr = j - std::popcount(K);
        // free slots of K in increasing order
        std::vector<int> free;
        for (int s = 1; s <= j; ++s)
          if (!(K & (1u << (s - 1)))) free.push_back(s);
        for (std::uint32_t Kp = 0; Kp < (1u << jr); ++Kp) {
          const auto E = random_generic(sp, jr - std::popcount(Kp), rng);
          std::uint32_t image = 0;
          for (int s = 1; s <= jr; ++s)
            if (Kp & (1u << (s - 1))) image |= 1u << (free[static_cast<std::size_t>(s - 1)] - 1);
          const auto lhs = place_mask(j, F, K, place_mask(jr, F, Kp, E));
          const auto rhs = place_mask(j, F, K | image, E);
          CHECK(max_abs_diff(lhs, rhs) < 1e-14);
        }
      }
  }
}

TEST_CASE("place with distinct fillers commutes") {
  Rng rng(11);
  const auto F = random_generic(Q2, 1, rng), G = random_generic(Q2, 1, rng), E = random_generic(Q2, 2, rng);
  const SlotFiller a[] = {{4, &G}, {2, &F}};
  const int s2[] = {2}, s3[] = {3};
  // F at 2 then G at 4, equivalently G at 3 of the body then F at 2
  const auto lhs = place_fillers(4, a, E);
  const auto rhs = place(4, F, s2, place(3, G, s3, E));
  CHECK(max_abs_diff(lhs, rhs) < 1e-14);
}

TEST_CASE("trace norm") {
  Rng rng(12);
  const auto p = random_physical(Q2, 2, rng);
  CHECK(std::abs(trace_norm(p) - 1.0) < 1e-13);
  CHECK(std::abs(trace(p) - Complex(1.0)) < 1e-13);
  CHECK(trace_norm(p - p) == 0.0);
  Eigen::MatrixXcd z(2, 2);
  z << 1, 0, 0, -1;
  CHECK(std::abs(trace_norm(NBodyState::from_matrix(Q2, 1, z)) - 2.0) < 1e-14);
  // non-Hermitian: singular values of [[0, 2], [0, 0]] sum to 2
  Eigen::MatrixXcd nil = Eigen::MatrixXcd::Zero(2, 2);
  nil(0, 1) = 2.0;
  CHECK(std::abs(trace_norm(NBodyState::from_matrix(Q2, 1, nil)) - 2.0) < 1e-14);
  const double w[] = {0.5, -0.25, 0.25};
  CHECK(std::abs(trace_norm(NBodyState::from_weights(C3, 1, w)) - 1.0) < 1e-15);
}

TEST_CASE("symmetrize") {
  Rng rng(13);
  for (const auto& sp : {C3, Q2}) {
    const auto a = random_generic(sp, 1, rng), b = random_generic(sp, 1, rng);
    const auto ab = tensor_product(a, b);
    CHECK(max_abs_diff(symmetrize(ab), (ab + tensor_product(b, a)) * Complex(0.5)) < 1e-15);
    for (int n = 2; n <= 4; ++n) {
      const auto f = random_generic(sp, n, rng);
      const auto s = symmetrize(f);
      CHECK(max_abs_diff(s, full_symmetrize(f)) < 1e-14);
      CHECK(max_abs_diff(symmetrize(s), s) < 1e-14);
      CHECK(is_symmetric(s, 1e-13));
    }
    CHECK(is_symmetric(tensor_power(a, 4), 1e-14));
    CHECK_FALSE(is_symmetric(random_generic(sp, 3, rng), 1e-3));
  }
}

TEST_CASE("positivity classification") {
  Rng rng(14);
  CHECK(is_physical(random_physical(Q2, 2, rng)));
  const double neg[] = {1.2, -0.2};
  CHECK_FALSE(is_physical(NBodyState::from_weights(C2, 1, neg)));
  Eigen::MatrixXcd m(2, 2);
  m << 1.1, 0, 0, -0.1;
  const auto rep = positivity(NBodyState::from_matrix(Q2, 1, m));
  CHECK(rep.floor == doctest::Approx(-0.1));
}

TEST_CASE("occupation basis ordering and ranking") {
  const OccupationBasis b(2, 2);
  REQUIRE(b.size() == 3);
  CHECK(b.occupation(0)[0] == 2);
  CHECK(b.occupation(1)[0] == 1);
  CHECK(b.occupation(2)[0] == 0);
  for (int m = 2; m <= 4; ++m)
    for (int N = 0; N <= 7; ++N) {
      const OccupationBasis basis(m, N);
      CHECK(basis.size() == occupation_class_count(m, N));
      for (std::size_t c = 0; c < basis.size(); ++c) CHECK(basis.index(basis.occupation(c)) == c);
    }
}

TEST_CASE("compress uniform two-site state") {
  const double u[] = {0.25, 0.25, 0.25, 0.25};
  const auto s = compress_symmetric(NBodyState::from_weights(C2, 2, u));
  REQUIRE(s.mass().size() == 3);
  CHECK(s.mass()[0] == doctest::Approx(0.25));
  CHECK(s.mass()[1] == doctest::Approx(0.5));
  CHECK(s.mass()[2] == doctest::Approx(0.25));
}

TEST_CASE("compressed product states carry multinomial weights") {
  const double g[] = {0.5, 0.3, 0.2};
  const auto G = NBodyState::from_weights(C3, 1, g);
  const auto s = compress_symmetric(tensor_power(G, 3));
  const auto closed = SymmetricClassicalState::product(G, 3);
  for (std::size_t c = 0; c < s.basis().size(); ++c) {
    const auto n = s.basis().occupation(c);
    const double fact[] = {1, 1, 2, 6};
    const double multinom = 6.0 / (fact[n[0]] * fact[n[1]] * fact[n[2]]);
    const double expect = multinom * std::pow(0.5, n[0]) * std::pow(0.3, n[1]) * std::pow(0.2, n[2]);
    CHECK(s.mass()[c] == doctest::Approx(expect).epsilon(1e-13));
    CHECK(closed.mass()[c] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("compress round trip and rejection") {
  Rng rng(15);
  const auto f = random_symmetric_physical(C2, 4, rng);
  const auto s = compress_symmetric(f);
  CHECK(max_abs_diff(decompress(s), f) < 1e-15);
  CHECK(std::abs(s.total_mass() - trace(f).real()) < 1e-14);
  CHECK_THROWS_AS(compress_symmetric(random_physical(C2, 3, rng)), PreconditionError);
}

TEST_CASE("symmetric marginals match the dense path") {
  Rng rng(16);
  for (const auto& sp : {C2, C3})
    for (int N = 2; N <= 5; ++N) {
      const auto f = random_symmetric_physical(sp, N, rng);
      const auto s = compress_symmetric(f);
      for (int j = 0; j <= N; ++j)
        CHECK(max_abs_diff(marginal_symmetric(s, j), partial_trace_last(f, N - j)) < 1e-13);
    }
}
