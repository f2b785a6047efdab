#include <doctest.h>

#include <cmath>

#include "spheremap/linalg.hpp"
#include "test_util.hpp"

using namespace spheremap;
using test_util::random_matrix;
using test_util::random_orthogonal;

TEST_SUITE_BEGIN("linalg");

TEST_CASE("svd of identity and diagonal matrices") {
  const auto id = linalg::svd(Matrix::Identity(3, 3));
  CHECK(id.singular_values.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(id.singular_values(i) == doctest::Approx(1.0).epsilon(1e-14));

  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 3.0, 2.0, 1.0;
  const auto dec = linalg::svd(d);
  CHECK(dec.singular_values(0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(dec.singular_values(1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(dec.singular_values(2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("svd reconstructs a random matrix and has orthonormal factors") {
  const Matrix a = random_matrix(5, 3, 11);
  const auto dec = linalg::svd(a);
  const Matrix rec = dec.u * dec.singular_values.asDiagonal() * dec.vt;
  CHECK((rec - a).cwiseAbs().maxCoeff() < 1e-8 * a.cwiseAbs().maxCoeff());

  const Matrix utu = dec.u.transpose() * dec.u;
  const Matrix vvt = dec.vt * dec.vt.transpose();
  CHECK((utu - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((vvt - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  for (Index i = 0; i + 1 < dec.singular_values.size(); ++i)
    CHECK(dec.singular_values(i) >= dec.singular_values(i + 1));
}

TEST_CASE("svd sign convention pins the largest entry of each left vector") {
  const Matrix a = random_matrix(6, 4, 99);
  const auto dec = linalg::svd(a);
  for (Index j = 0; j < dec.u.cols(); ++j) {
    Index imax = 0;
    dec.u.col(j).cwiseAbs().maxCoeff(&imax);
    CHECK(dec.u(imax, j) > 0.0);
  }
}

TEST_CASE("svd rejects non-finite input") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)linalg::svd(a), InvalidInputError);
}

TEST_CASE("polar factor of the identity is the identity") {
  const Matrix r = linalg::polar_factor(Matrix::Identity(4, 4));
  CHECK((r - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("polar factor of a scaled rotation recovers the rotation") {
  // a = 5 R(30 deg); a (a'a)^{-1/2} = R by hand.
  const double c = std::cos(3.14159265358979323846 / 6.0);
  const double s = std::sin(3.14159265358979323846 / 6.0);
  Matrix rot(2, 2);
  rot << c, -s, s, c;
  const Matrix r = linalg::polar_factor((5.0 * rot).eval());
  CHECK((r - rot).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("polar factor of a symmetric positive definite matrix is identity") {
  const Matrix q = random_orthogonal(2, 5);
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 2.0, 3.0;
  const Matrix a = q * d * q.transpose();
  const Matrix r = linalg::polar_factor(a);
  CHECK((r - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("polar factor equals u*vt and is scale invariant") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const Matrix a = random_matrix(6, 6, seed);
    const auto dec = linalg::svd(a);
    const Matrix r = linalg::polar_factor(a);
    CHECK((r - dec.u * dec.vt).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((r * r.transpose() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
    const Matrix r_scaled = linalg::polar_factor((7.5 * a).eval());
    CHECK((r - r_scaled).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("polar factor reports rank deficiency") {
  Matrix a(2, 2);
  a << 1.0, 1.0, 1.0, 1.0;
  CHECK_THROWS_AS((void)linalg::polar_factor(a), NumericalError);
  CHECK_THROWS_AS((void)linalg::polar_factor(random_matrix(3, 2, 1)), InvalidInputError);
}

TEST_CASE("pseudo inverse of diagonal and zero matrices") {
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 2.0, 4.0;
  const Matrix pinv = linalg::pseudo_inverse(d);
  CHECK(pinv(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(pinv(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(std::abs(pinv(0, 1)) < 1e-15);

  const Matrix z = linalg::pseudo_inverse(Matrix::Zero(3, 2));
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 3);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pseudo inverse of the rank-1 all-ones matrix") {
  Matrix a(2, 2);
  a << 1.0, 1.0, 1.0, 1.0;
  const Matrix pinv = linalg::pseudo_inverse(a);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) CHECK(pinv(i, j) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("pseudo inverse satisfies the four Penrose identities") {
  for (std::uint64_t seed : {10u, 20u, 30u}) {
    const Matrix a = random_matrix(6, 4, seed);
    const Matrix g = linalg::pseudo_inverse(a);
    CHECK((a * g * a - a).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((g * a * g - g).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(((a * g).transpose() - a * g).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(((g * a).transpose() - g * a).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("cosine on coordinate vectors and a hand-computed pair") {
  Vector e1 = Vector::Zero(3), e2 = Vector::Zero(3);
  e1(0) = 1.0;
  e2(1) = 1.0;
  CHECK(linalg::cosine(e1, e1) == doctest::Approx(1.0));
  CHECK(linalg::cosine(e1, e2) == doctest::Approx(0.0));

  Vector u(2), v(2);
  u << 1.0, 1.0;
  v << 1.0, 0.0;
  CHECK(linalg::cosine(u, v) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS((void)linalg::cosine(Vector::Zero(3), e1), InvalidInputError);
}

TEST_CASE("cosine stays clamped to [-1, 1]") {
  test_util::SplitMix64 rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    Vector u(4), v(4);
    for (int i = 0; i < 4; ++i) {
      u(i) = rng.normal() * 1e8;
      v(i) = rng.normal() * 1e-8;
    }
    const double c = linalg::cosine(u, v);
    CHECK(c <= 1.0);
    CHECK(c >= -1.0);
  }
}

TEST_CASE("row normalize scales rows and is idempotent") {
  Matrix a(2, 2);
  a << 3.0, 4.0, 1.0, 0.0;
  const Matrix n = linalg::row_normalize(a);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  Matrix ones(1, 4);
  ones.setConstant(1.0);
  const Matrix q = linalg::row_normalize(ones);
  for (Index j = 0; j < 4; ++j) CHECK(q(0, j) == doctest::Approx(0.5).epsilon(1e-15));

  const Matrix again = linalg::row_normalize(n);
  CHECK((again - n).cwiseAbs().maxCoeff() < 1e-15);

  Matrix with_zero = Matrix::Zero(2, 2);
  with_zero(0, 0) = 1.0;
  CHECK_THROWS_WITH_AS((void)linalg::row_normalize(with_zero),
                       doctest::Contains("index 1"), InvalidInputError);
}

TEST_SUITE_END();
