#include <doctest.h>

#include "bkrylov/salgebra.hpp"
#include "oracles.hpp"

using namespace bkrylov;

namespace {

std::vector<AlgebraSpec> all_variants(int s, int p) {
  return {AlgebraSpec::parallel(s), AlgebraSpec::global(s), AlgebraSpec::block(s),
          AlgebraSpec::block_parallel(s, p), AlgebraSpec::block_global(s, p)};
}

SElement random_element(AlgebraSpec a, std::uint64_t seed) {
  SElement e(a);
  const int p = a.p;
  const int groups = a.replicated() ? 1 : a.q();
  std::uint64_t c = 0;
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) e.at(g * p + i, g * p + j) = uniform_pm1(seed, c++);
  if (a.replicated())
    for (int g = 1; g < a.q(); ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) e.at(g * p + i, g * p + j) = e.at(i, j);
  return e;
}

}  // namespace

TEST_CASE("algebra spec validation and parsing") {
  CHECK_THROWS_AS(AlgebraSpec::block_parallel(8, 3), ConfigError);
  CHECK(AlgebraSpec::parse("p", 8) == AlgebraSpec::parallel(8));
  CHECK(AlgebraSpec::parse("bp:4", 8) == AlgebraSpec::block_parallel(8, 4));
  CHECK(AlgebraSpec::parse("bg:2", 8).q() == 4);
  CHECK(AlgebraSpec::block(8).p == 8);
  CHECK_THROWS_AS(AlgebraSpec::parse("zz", 8), ConfigError);
}

TEST_CASE("block inner product matches the dense transpose-multiply oracle") {
  BlockVector x(2, 2), y(2, 2);
  x(0, 0) = 1;
  x(0, 1) = 2;
  x(1, 0) = 3;
  x(1, 1) = 4;
  y(0, 0) = 5;
  y(0, 1) = 6;
  y(1, 0) = 7;
  y(1, 1) = 8;
  const Eigen::MatrixXd dense = oracles::dense_inner(x, y);  // [[26,30],[38,44]]
  CHECK(dense(0, 0) == doctest::Approx(26.0));
  CHECK(dense(1, 1) == doctest::Approx(44.0));

  const SElement par = block_inner_product(x, y, AlgebraSpec::parallel(2));
  CHECK(par.at(0, 0) == doctest::Approx(26.0));
  CHECK(par.at(1, 1) == doctest::Approx(44.0));
  CHECK(par.at(0, 1) == 0.0);

  const SElement glob = block_inner_product(x, y, AlgebraSpec::global(2));
  CHECK(glob.at(0, 0) == doctest::Approx(35.0));  // (26+44)/2
  CHECK(glob.at(1, 1) == doctest::Approx(35.0));
  CHECK(glob.at(0, 1) == 0.0);

  const SElement blk = block_inner_product(x, y, AlgebraSpec::block(2));
  CHECK((oracles::to_eigen(blk) - dense).norm() == doctest::Approx(0.0));
}

TEST_CASE("normalizer: orthonormal input, rank deficiency, block-global scaling") {
  SUBCASE("orthonormal columns come back unchanged with identity sigma") {
    BlockVector x(4, 2);
    x(0, 0) = 1.0;
    x(1, 1) = 1.0;
    auto [q, sigma] = normalize(x, AlgebraSpec::block(2));
    CHECK(sigma.deviation_from_identity() < 1e-14);
    CHECK((oracles::to_eigen(q) - oracles::to_eigen(x)).norm() < 1e-14);
  }
  SUBCASE("duplicated column: orthonormal Q, singular upper-triangular sigma") {
    BlockVector x(5, 2);
    for (int i = 0; i < 5; ++i) x(i, 0) = x(i, 1) = 1.0 + i;
    auto [q, sigma] = normalize(x, AlgebraSpec::block(2));
    const Eigen::MatrixXd g = oracles::dense_inner(q, q);
    CHECK((g - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);
    CHECK(std::abs(sigma.at(1, 1)) < 1e-12);
    CHECK(sigma.at(1, 0) == 0.0);
    const Eigen::MatrixXd recon = oracles::to_eigen(q) * oracles::to_eigen(sigma);
    CHECK((recon - oracles::to_eigen(x)).norm() < 1e-12 * oracles::to_eigen(x).norm());
  }
  SUBCASE("block-global q=2: replicated sigma blocks and exact S-orthonormality") {
    const AlgebraSpec a = AlgebraSpec::block_global(4, 2);
    BlockVector x = oracles::random_bv(16, 4, 3);
    auto [q, sigma] = normalize(x, a);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(sigma.at(i, j) == sigma.at(2 + i, 2 + j));
    const SElement gram = block_inner_product(q, q, a);
    CHECK(gram.deviation_from_identity() < 1e-12);
    const Eigen::MatrixXd recon = oracles::to_eigen(q) * oracles::to_eigen(sigma);
    CHECK((recon - oracles::to_eigen(x)).norm() < 1e-12 * oracles::to_eigen(x).norm());
  }
  SUBCASE("non-finite input is rejected") {
    BlockVector x(3, 1);
    x(1, 0) = std::nan("");
    CHECK_THROWS_AS(normalize(x, AlgebraSpec::parallel(1)), ConfigError);
  }
}

TEST_CASE("element arithmetic against dense oracles") {
  SUBCASE("identity times c is c") {
    const AlgebraSpec a = AlgebraSpec::block_parallel(4, 2);
    const SElement c = random_element(a, 5);
    CHECK((oracles::to_eigen(SElement::identity(a).multiply(c)) - oracles::to_eigen(c)).norm() ==
          0.0);
  }
  SUBCASE("parallel inverse is elementwise") {
    const AlgebraSpec a = AlgebraSpec::parallel(2);
    SElement c(a);
    c.at(0, 0) = 2.0;
    c.at(1, 1) = 4.0;
    const SElement inv = c.inverse();
    CHECK(inv.at(0, 0) == doctest::Approx(0.5));
    CHECK(inv.at(1, 1) == doctest::Approx(0.25));
  }
  SUBCASE("block inverse composed with itself: identity to 1e-14 (LU oracle)") {
    const AlgebraSpec a = AlgebraSpec::block(2);
    SElement c(a);
    c.at(0, 0) = 2.0;
    c.at(0, 1) = 1.0;
    c.at(1, 1) = 3.0;
    const SElement prod = c.inverse().multiply(c);
    CHECK(prod.deviation_from_identity() < 1e-14);
    const Eigen::MatrixXd oracle = oracles::to_eigen(c).inverse();
    CHECK((oracles::to_eigen(c.inverse()) - oracle).norm() < 1e-14);
  }
  SUBCASE("singular inverse reports the pivot") {
    const AlgebraSpec a = AlgebraSpec::block(2);
    SElement c(a);
    c.at(0, 0) = 1.0;
    c.at(0, 1) = 1.0;
    c.at(1, 0) = 1.0;
    c.at(1, 1) = 1.0;
    CHECK_THROWS_AS(c.inverse(), SingularError);
  }
}

TEST_CASE("diagonally scaled condition number") {
  SUBCASE("any diagonal matrix gives exactly 1") {
    const AlgebraSpec a = AlgebraSpec::block(3);
    SElement c(a);
    c.at(0, 0) = 2.0;
    c.at(1, 1) = 9.0;
    c.at(2, 2) = 0.25;
    CHECK(kappa_diag_scaled(c) == doctest::Approx(1.0));
    CHECK(kappa_diag_scaled(SElement::identity(a)) == 1.0);
  }
  SUBCASE("[[1,.5],[.5,1]] gives 3 (2x2 eigenvalue oracle)") {
    const AlgebraSpec a = AlgebraSpec::block(2);
    SElement c(a);
    c.at(0, 0) = c.at(1, 1) = 1.0;
    c.at(0, 1) = c.at(1, 0) = 0.5;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracles::to_eigen(c));
    const double oracle = es.eigenvalues()(1) / es.eigenvalues()(0);
    CHECK(oracle == doctest::Approx(3.0));
    CHECK(kappa_diag_scaled(c) == doctest::Approx(3.0).epsilon(1e-10));
  }
  SUBCASE("nonpositive diagonal raises") {
    const AlgebraSpec a = AlgebraSpec::block(2);
    SElement c(a);
    c.at(0, 0) = 1.0;
    c.at(1, 1) = -1.0;
    CHECK_THROWS_AS(kappa_diag_scaled(c), SingularError);
  }
}

TEST_CASE("embedding lattice") {
  CHECK(contains(AlgebraSpec::parallel(8), AlgebraSpec::block_parallel(8, 4)));
  CHECK_FALSE(contains(AlgebraSpec::block(8), AlgebraSpec::parallel(8)));
  CHECK(contains(AlgebraSpec::block_global(4, 2), AlgebraSpec::block_parallel(4, 2)));
  CHECK(contains(AlgebraSpec::global(8), AlgebraSpec::block_global(8, 4)));
  CHECK(contains(AlgebraSpec::global(8), AlgebraSpec::parallel(8)));
  CHECK_FALSE(contains(AlgebraSpec::parallel(8), AlgebraSpec::global(8)));
  CHECK_FALSE(contains(AlgebraSpec::block_parallel(8, 2), AlgebraSpec::block_global(8, 4)));
  CHECK(contains(AlgebraSpec::block_global(8, 8), AlgebraSpec::block(8)));
  CHECK(contains(AlgebraSpec::block_parallel(12, 2), AlgebraSpec::block_parallel(12, 6)));
  CHECK_FALSE(contains(AlgebraSpec::block_parallel(12, 4), AlgebraSpec::block_parallel(12, 6)));

  const AlgebraSpec small = AlgebraSpec::block_global(4, 2);
  const SElement c = random_element(small, 11);
  const SElement e = embed(c, AlgebraSpec::block_parallel(4, 2));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(e.at(i, j) == c.at(i, j));  // bit-exact
  CHECK_THROWS_AS(embed(c, AlgebraSpec::parallel(4)), ConfigError);
}

TEST_CASE("framework property suite over all variants") {
  const int trials = 40;  // the acceptance suite runs the full 1000
  int t = 0;
  for (int s : {4, 6, 8}) {
    for (const AlgebraSpec& a : all_variants(s, s == 6 ? 3 : s / 2)) {
      for (int rep = 0; rep < trials / 4; ++rep) {
        const std::uint64_t seed = 1000 * s + 10 * rep + static_cast<int>(a.variant);
        const int n = 12 + (rep % 3) * 7;
        BlockVector x = oracles::random_bv(n, s, seed);
        BlockVector y = oracles::random_bv(n, s, seed + 7777);
        const double scale = oracles::to_eigen(x).norm() * oracles::to_eigen(y).norm();

        // symmetry
        const SElement xy = block_inner_product(x, y, a);
        const SElement yxT = block_inner_product(y, x, a).transposed();
        CHECK(xy.sub(yxT).frobenius_norm() <= 1e-13 * scale);

        // normality: trace equals the Frobenius inner product
        const double frob = (oracles::to_eigen(x).array() * oracles::to_eigen(y).array()).sum();
        CHECK(std::abs(xy.trace() - frob) <= 1e-12 * scale);

        // definiteness
        const SElement xx = block_inner_product(x, x, a);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracles::to_eigen(xx));
        CHECK(es.eigenvalues()(0) > 0.0);

        // S-linearity: <X+Y, Z gamma> = <X,Z>gamma + <Y,Z>gamma
        const SElement gamma = random_element(a, seed + 3);
        BlockVector z = oracles::random_bv(n, s, seed + 9);
        BlockVector zg = z;
        apply_right(zg, gamma, zg.all_rows());
        BlockVector xpy = x;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < s; ++j) xpy(i, j) += y(i, j);
        const SElement lhs = block_inner_product(xpy, zg, a);
        const SElement rhs = block_inner_product(x, z, a)
                                 .multiply(gamma)
                                 .add(block_inner_product(y, z, a).multiply(gamma));
        CHECK(lhs.sub(rhs).frobenius_norm() <= 1e-12 * (lhs.frobenius_norm() + 1.0));

        // normalizer reconstruction, including a rank-deficient case
        for (int defect = 0; defect < 2; ++defect) {
          BlockVector w = x;
          if (defect) {
            for (int i = 0; i < n; ++i) w(i, s - 1) = w(i, 0);  // duplicate a column
          }
          auto [q, sg] = normalize(w, a);
          CHECK(sg.pattern_ok());
          const Eigen::MatrixXd recon = oracles::to_eigen(q) * oracles::to_eigen(sg);
          CHECK((recon - oracles::to_eigen(w)).norm() <= 1e-12 * (oracles::to_eigen(w).norm()));
          CHECK(block_inner_product(q, q, a).deviation_from_identity() <= 1e-12);
        }

        // closure under the pattern, exactly
        const SElement c1 = random_element(a, seed + 21);
        const SElement c2 = random_element(a, seed + 22);
        CHECK(c1.multiply(c2).pattern_ok());
        CHECK(c1.add(c2).pattern_ok());
        CHECK(c1.transposed().pattern_ok());

        // parallel product equals the diagonal of the block product, exactly
        if (a.variant == Variant::Parallel) {
          const SElement blk = block_inner_product(x, y, AlgebraSpec::block(s));
          for (int i = 0; i < s; ++i) CHECK(xy.at(i, i) == blk.at(i, i));
        }
        ++t;
      }
    }
  }
  CHECK(t > 0);
}
