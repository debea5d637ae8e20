#include <doctest.h>

#include <cmath>

#include "besse/realize.hpp"
#include "besse/random_gen.hpp"

using namespace besse;
using namespace besse::geo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
const double PI = std::acos(-1.0);
}

TEST_CASE("realize_poincare: identity target is the fixed point") {
    auto res = realize_poincare(MatrixXd::Identity(4, 4), 2);
    CHECK(res.residual < 1e-7);
    CHECK(res.coefficients.cwiseAbs().maxCoeff() < 1e-6);
    // re-integrate to confirm
    FormalGeodesic fg(res.profile, MatrixXd::Identity(2, 2));
    MatrixXd p = poincare_map(fg).map.mat();
    CHECK((p - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("realize_poincare: random small targets exp(eps X)") {
    Rng rng(301);
    for (int trial = 0; trial < 4; ++trial) {
        int m = 1 + trial % 2;
        MatrixXd target = rng.symplectic(m, 1e-2);
        auto res = realize_poincare(target, m);
        CHECK(res.residual <= 1e-7);
        FormalGeodesic fg(res.profile, MatrixXd::Identity(m, m));
        MatrixXd p = poincare_map(fg).map.mat();
        CHECK((p - target).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("realize_poincare: moderate-distance targets converge or fail loudly") {
    Rng rng(307);
    int converged = 0, failed = 0;
    for (int trial = 0; trial < 4; ++trial) {
        MatrixXd target = rng.symplectic(1, 0.5);
        try {
            auto res = realize_poincare(target, 1);
            CHECK(res.residual <= 1e-7);
            ++converged;
        } catch (const numerical_failure&) {
            ++failed;
        }
    }
    CHECK(converged + failed == 4);
    CHECK(converged >= 1);
}

TEST_CASE("realize_poincare: rejects non-symplectic targets") {
    MatrixXd bad = 2.0 * MatrixXd::Identity(4, 4);
    CHECK_THROWS_AS(realize_poincare(bad, 2), invalid_input);
}

TEST_CASE("realize_far: reaches a far rotation target") {
    // quarter-turn pair well outside the Newton chart around Id
    MatrixXd b = MatrixXd::Zero(4, 4);
    b(0, 2) = -1;
    b(1, 3) = 1;
    b(2, 0) = 1;
    b(3, 1) = -1;
    CurvatureProfile base = CurvatureProfile::constant_scalar(2, 1.0, 2 * PI);
    auto res = realize_far(b, base, 6);
    CHECK(res.residual < 1e-6);
    FormalGeodesic fg(res.profile, MatrixXd::Identity(2, 2));
    MatrixXd p = poincare_map(fg).map.mat();
    CHECK((p - b).cwiseAbs().maxCoeff() < 1e-6);
}
