#include <doctest.h>

#include <cmath>
#include <random>

#include "layersynth/errors.hpp"
#include "layersynth/mat_core.hpp"
#include "test_support.hpp"

using namespace layersynth;
using namespace test_support;

TEST_SUITE("mat_core") {
  TEST_CASE("sym_sqrt examples") {
    CHECK(rel_diff(mat::sym_sqrt(Mat::Identity(3, 3)), Mat::Identity(3, 3)) < 1e-14);
    const Mat d = Eigen::Vector2d(4, 9).asDiagonal();
    CHECK(rel_diff(mat::sym_sqrt(d), Mat(Eigen::Vector2d(2, 3).asDiagonal())) < 1e-14);
    Mat s(2, 2);
    s << 2, 1, 1, 2;
    const Mat x = mat::sym_sqrt(s);
    CHECK((x - x.transpose()).norm() == 0.0);
    CHECK((x * x - s).norm() <= 1e-10 * s.norm());
  }

  TEST_CASE("sym_sqrt rejects asymmetric and indefinite input") {
    Mat a(2, 2);
    a << 1, 2, 0, 1;
    CHECK_THROWS_AS(mat::sym_sqrt(a), InputError);
    const Mat b = Eigen::Vector2d(1, -1).asDiagonal();
    CHECK_THROWS_AS(mat::sym_sqrt(b), InputError);
    // Tiny negative eigenvalues within tolerance are clamped.
    const Mat c = Eigen::Vector2d(1, -1e-12).asDiagonal();
    CHECK(mat::sym_sqrt(c)(1, 1) == 0.0);
  }

  TEST_CASE("sym_sqrt property on random PSD matrices") {
    std::mt19937_64 rng(7);
    for (int n = 1; n <= 12; ++n) {
      const Mat s = random_psd(rng, n);
      const Mat x = mat::sym_sqrt(s);
      CHECK((x * x - s).norm() <= 1e-9 * s.norm());
    }
  }

  TEST_CASE("spectral_radius examples") {
    CHECK(mat::spectral_radius(Eigen::Vector2d(0.5, -0.9).asDiagonal().toDenseMatrix()) ==
          doctest::Approx(0.9).epsilon(1e-12));
    CHECK(mat::spectral_radius(Mat::Zero(2, 2)) == 0.0);
    Mat a(2, 2);
    a << 0, 1, -0.25, 0;
    CHECK(mat::spectral_radius(a) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK_THROWS_AS(mat::spectral_radius(Mat::Zero(2, 3)), InputError);
  }

  TEST_CASE("solve_discrete_lyapunov examples") {
    CHECK(mat::solve_discrete_lyapunov(mat1(0.0), mat1(3.0))(0, 0) ==
          doctest::Approx(3.0).epsilon(1e-12));
    CHECK(mat::solve_discrete_lyapunov(mat1(0.5), mat1(3.0))(0, 0) ==
          doctest::Approx(4.0).epsilon(1e-12));
    const Mat f = Eigen::Vector2d(0.5, 0.2).asDiagonal();
    const Mat n = mat::solve_discrete_lyapunov(f, Mat::Identity(2, 2));
    Mat expected = Mat::Zero(2, 2);
    expected(0, 0) = 4.0 / 3.0;
    expected(1, 1) = 25.0 / 24.0;
    CHECK(rel_diff(n, expected) < 1e-12);
    CHECK_THROWS_AS(mat::solve_discrete_lyapunov(mat1(1.0), mat1(1.0)), NumericError);
  }

  TEST_CASE("solve_discrete_lyapunov residual on random stable systems") {
    std::mt19937_64 rng(11);
    for (int n = 1; n <= 8; ++n) {
      Mat f = random_mat(rng, n, n);
      f *= 0.95 / std::max(1e-3, mat::spectral_radius(f));
      const Mat qc = random_psd(rng, n);
      const Mat x = mat::solve_discrete_lyapunov(f, qc);
      CHECK((f.transpose() * x * f - x + qc).norm() <= 1e-9 * (1.0 + qc.norm()));
      CHECK(mat::min_eigenvalue(x) >= -1e-9);
    }
  }

  TEST_CASE("solve_filter_dare scalar examples") {
    const auto zero = mat::solve_filter_dare(mat1(0.0), mat1(1.0), mat1(1.0), mat1(1.0));
    CHECK(zero.error_cov(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(zero.gain(0, 0) == 0.0);

    const auto& ref = oracle()["scalar"];
    const auto half = mat::solve_filter_dare(mat1(0.5), mat1(1.0), mat1(1.0), mat1(1.0));
    CHECK(half.error_cov(0, 0) == doctest::Approx(ref["dare_sigma"].get<double>()).epsilon(1e-10));
    CHECK(half.gain(0, 0) == doctest::Approx(ref["dare_gain"].get<double>()).epsilon(1e-10));
    CHECK(half.error_cov(0, 0) == doctest::Approx(1.1328).epsilon(1e-4));
    CHECK(half.gain(0, 0) == doctest::Approx(0.2656).epsilon(1e-3));
  }

  TEST_CASE("solve_filter_dare matches the reference on the case studies") {
    for (const char* name : {"uav", "hexacopter"}) {
      CAPTURE(name);
      const Architecture arch = bundled(name);
      const auto& ref = oracle()[name];
      int idx = 1;
      for (const LinearSystem* sys : {&arch.upper, &arch.lower}) {
        const auto r = mat::solve_filter_dare(sys->A, sys->C, sys->sigma_w, sys->sigma_v);
        const std::string suffix = std::to_string(idx++);
        CHECK(rel_diff(r.error_cov, to_mat(ref["Sigma_e" + suffix])) < 1e-7);
        CHECK(rel_diff(r.gain, to_mat(ref["L" + suffix])) < 1e-7);
        CHECK(mat::filter_dare_residual(sys->A, sys->C, sys->sigma_w, sys->sigma_v, r.error_cov,
                                        r.gain) <= 1e-8 * (1.0 + r.error_cov.norm()));
        CHECK(mat::spectral_radius(sys->A - r.gain * sys->C) < 1.0);
      }
    }
  }

  TEST_CASE("solve_filter_dare rejects singular measurement noise") {
    CHECK_THROWS_AS(mat::solve_filter_dare(mat1(0.5), mat1(1.0), mat1(1.0), mat1(0.0)),
                    NumericError);
  }

  TEST_CASE("solve_control_dare golden ratio") {
    const auto& ref = oracle()["scalar"];
    const auto r = mat::solve_control_dare(mat1(1.0), mat1(1.0), mat1(1.0), mat1(1.0));
    CHECK(r.cost(0, 0) == doctest::Approx(ref["lqr_cost"].get<double>()).epsilon(1e-10));
    CHECK(r.gain(0, 0) == doctest::Approx(ref["lqr_gain"].get<double>()).epsilon(1e-10));
    CHECK(mat::control_dare_residual(mat1(1.0), mat1(1.0), mat1(1.0), mat1(1.0), r.cost) < 1e-10);
  }

  TEST_CASE("minnorm_lstsq examples") {
    std::mt19937_64 rng(3);
    const Mat b = random_mat(rng, 3, 2);
    CHECK(rel_diff(mat::minnorm_lstsq(Mat::Identity(3, 3), b), b) < 1e-14);
    Mat a(2, 1);
    a << 1, 1;
    Mat y(2, 1);
    y << 1, 3;
    CHECK(mat::minnorm_lstsq(a, y)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(mat::minnorm_lstsq(Mat::Zero(3, 2), b).norm() == 0.0);
  }

  TEST_CASE("minnorm_lstsq normal equations and minimum norm") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      // Rank-deficient 6x5 operator.
      const Mat a = random_mat(rng, 6, 3) * random_mat(rng, 3, 5);
      const Mat b = random_mat(rng, 6, 2);
      const Mat x = mat::minnorm_lstsq(a, b);
      CHECK((a.transpose() * a * x - a.transpose() * b).norm() <= 1e-9 * (1.0 + b.norm()));
      // Minimum norm: x lies in the row space of a.
      const Mat proj = a.transpose() * (a * a.transpose()).completeOrthogonalDecomposition()
                                           .pseudoInverse() * a;
      CHECK((proj * x - x).norm() <= 1e-9 * (1.0 + x.norm()));
    }
  }

  TEST_CASE("kron examples and vec identity") {
    Mat m(2, 2);
    m << 1, 2, 3, 4;
    Mat bd = Mat::Zero(4, 4);
    bd.topLeftCorner(2, 2) = m;
    bd.bottomRightCorner(2, 2) = m;
    CHECK(rel_diff(mat::kron(Mat::Identity(2, 2), m), bd) == 0.0);
    CHECK(rel_diff(mat::kron(mat1(2.0), m), 2.0 * m) == 0.0);
    Mat swap(2, 2);
    swap << 0, 1, 1, 0;
    Mat expected(4, 4);
    expected << 0, 1, 0, 2, 1, 0, 2, 0, 0, 3, 0, 4, 3, 0, 4, 0;
    CHECK(rel_diff(mat::kron(m, swap), expected) == 0.0);

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const Mat a = random_mat(rng, 3, 4), x = random_mat(rng, 4, 2), b = random_mat(rng, 2, 5);
      const Vec lhs = mat::vec(a * x * b);
      const Vec rhs = mat::kron(b.transpose(), a) * mat::vec(x);
      CHECK((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
      CHECK(rel_diff(mat::unvec(mat::vec(x), 4, 2), x) == 0.0);
    }
  }
}
