#include <doctest.h>

#include <cmath>

#include "besse/formal_geodesic.hpp"
#include "besse/random_gen.hpp"

using namespace besse;
using namespace besse::geo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
const double PI = std::acos(-1.0);

FormalGeodesic round_block(int m, int k = 1) {
    // R = Id on [0, 2 pi k], A = Id: the great-circle model
    return FormalGeodesic(CurvatureProfile::constant_scalar(m, 1.0, 2 * PI * k),
                          MatrixXd::Identity(m, m), "round");
}

FormalGeodesic random_pc_geodesic(Rng& rng, int m, int pieces, bool twist) {
    std::vector<std::pair<double, MatrixXd>> parts;
    for (int i = 0; i < pieces; ++i)
        parts.emplace_back(2 * PI / pieces,
                           MatrixXd(rng.symmetric(m, 0.3) + 1.2 * MatrixXd::Identity(m, m)));
    MatrixXd a = twist ? rng.rotation(m) : MatrixXd::Identity(m, m);
    return FormalGeodesic(CurvatureProfile::piecewise(m, parts), a);
}

}  // namespace

TEST_CASE("propagate: harmonic oscillator and flat line") {
    FormalGeodesic fg(CurvatureProfile::constant_scalar(1, 1.0, 2 * PI),
                      MatrixXd::Identity(1, 1));
    VectorXd init(2);
    init << 0.0, 1.0;  // J(0)=0, J'(0)=1 -> J = sin t
    VectorXd at_pi = propagate(fg, init, 0.0, PI);
    CHECK(std::abs(at_pi(0)) < 1e-10);
    CHECK(at_pi(1) == doctest::Approx(-1.0).epsilon(1e-10));
    for (double t : {0.3, 1.1, 2.9, 5.0}) {
        VectorXd y = propagate(fg, init, 0.0, t);
        CHECK(y(0) == doctest::Approx(std::sin(t)).epsilon(1e-10));
        CHECK(y(1) == doctest::Approx(std::cos(t)).epsilon(1e-10));
    }

    FormalGeodesic flat(CurvatureProfile::constant_scalar(1, 0.0, 2 * PI),
                        MatrixXd::Identity(1, 1));
    VectorXd cst(2);
    cst << 1.0, 0.0;
    VectorXd y = propagate(flat, cst, 0.0, 2 * PI);
    CHECK(y(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(y(1)) < 1e-12);
}

TEST_CASE("propagate: backwards solve inverts forward") {
    Rng rng(5);
    FormalGeodesic fg = random_pc_geodesic(rng, 2, 3, true);
    VectorXd y0 = rng.gaussian_matrix(4, 1);
    VectorXd y1 = propagate(fg, y0, 0.0, fg.period());
    VectorXd back = propagate(fg, y1, fg.period(), 0.0);
    CHECK((back - y0).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fundamental_solution: 9/4 block closes to -Id at 2 pi") {
    FormalGeodesic fg(CurvatureProfile::constant_scalar(2, 2.25, 2 * PI),
                      MatrixXd::Identity(2, 2));
    JacobiFlow flow = fundamental_solution(fg);
    CHECK((flow.terminal() + MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(flow.symplectic_drift() < 1e-9);
    // dense output against the closed form cos(3t/2), (2/3) sin(3t/2)
    for (double t : {0.4, 1.7, 3.3, 6.0}) {
        MatrixXd y = flow.at(t);
        CHECK(y(0, 0) == doctest::Approx(std::cos(1.5 * t)).epsilon(1e-7));
        CHECK(y(0, 2) == doctest::Approx(std::sin(1.5 * t) / 1.5).epsilon(1e-7));
        MatrixXd ye = flow.at_exact(t);
        CHECK(ye(0, 0) == doctest::Approx(std::cos(1.5 * t)).epsilon(1e-11));
    }
}

TEST_CASE("poincare_map: round block is the identity, 9/4 block is -Id") {
    for (int m : {1, 2, 3}) {
        auto p = poincare_map(round_block(m));
        CHECK((p.map.mat() - MatrixXd::Identity(2 * m, 2 * m)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(p.flow_drift < 1e-9);
    }
    auto p = poincare_map(FormalGeodesic(CurvatureProfile::constant_scalar(2, 2.25, 2 * PI),
                                         MatrixXd::Identity(2, 2)));
    CHECK((p.map.mat() + MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("poincare_matrix_exp agrees with the integrator") {
    Rng rng(17);
    for (int trial = 0; trial < 6; ++trial) {
        int m = 1 + trial % 3;
        FormalGeodesic fg = random_pc_geodesic(rng, m, 2 + trial % 3, true);
        MatrixXd fast = poincare_matrix_exp(fg.curvature(), fg.twist());
        MatrixXd slow = poincare_map(fg).map.mat();
        CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("concat: twisted propagators compose") {
    Rng rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        int m = 1 + trial % 3;
        FormalGeodesic f1 = random_pc_geodesic(rng, m, 2, true);
        FormalGeodesic f2 = random_pc_geodesic(rng, m, 3, true);
        MatrixXd a3 = rng.rotation(m);
        FormalGeodesic f3 = concat({f1, f2}, a3);
        CHECK(f3.period() == doctest::Approx(f1.period() + f2.period()));
        MatrixXd lhs = f3.delta_twist() * poincare_map(f3).map.mat();
        MatrixXd rhs = (f2.delta_twist() * poincare_map(f2).map.mat()) *
                       (f1.delta_twist() * poincare_map(f1).map.mat());
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("concat: free block composes with the shear propagator") {
    Rng rng(31);
    FormalGeodesic fg = random_pc_geodesic(rng, 2, 2, false);
    double tail = PI;
    FormalGeodesic free_block(CurvatureProfile::constant_scalar(2, 0.0, tail),
                              MatrixXd::Identity(2, 2));
    FormalGeodesic joined = concat({fg, free_block}, MatrixXd::Identity(2, 2));
    MatrixXd shear = MatrixXd::Identity(4, 4);
    shear.topRightCorner(2, 2) = tail * MatrixXd::Identity(2, 2);
    MatrixXd expect = shear * poincare_map(fg).map.mat();
    CHECK((poincare_map(joined).map.mat() - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("concat: associativity at the Poincare level") {
    Rng rng(37);
    FormalGeodesic a = random_pc_geodesic(rng, 2, 2, true);
    FormalGeodesic b = random_pc_geodesic(rng, 2, 3, true);
    FormalGeodesic c = random_pc_geodesic(rng, 2, 2, true);
    MatrixXd atot = rng.rotation(2);
    FormalGeodesic left = concat({concat({a, b}, MatrixXd::Identity(2, 2)), c}, atot);
    FormalGeodesic right = concat({a, concat({b, c}, MatrixXd::Identity(2, 2))}, atot);
    MatrixXd pl = poincare_map(left).map.mat();
    MatrixXd pr = poincare_map(right).map.mat();
    CHECK((pl - pr).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("iterate: round block stays at Id, 9/4 block squares to Id") {
    for (int k = 1; k <= 4; ++k) {
        auto p = poincare_map(iterate(round_block(2), k));
        CHECK((p.map.mat() - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
    }
    FormalGeodesic nine(CurvatureProfile::constant_scalar(2, 2.25, 2 * PI),
                        MatrixXd::Identity(2, 2));
    auto p2 = poincare_map(iterate(nine, 2));
    CHECK((p2.map.mat() - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("iterate: P(c^q) = P(c)^q with a nontrivial twist") {
    Rng rng(43);
    for (int trial = 0; trial < 6; ++trial) {
        int m = 1 + trial % 3;
        int q = 2 + trial % 3;
        FormalGeodesic fg = random_pc_geodesic(rng, m, 2, true);
        MatrixXd p = poincare_map(fg).map.mat();
        MatrixXd pq = MatrixXd::Identity(2 * m, 2 * m);
        for (int i = 0; i < q; ++i) pq = p * pq;
        MatrixXd direct = poincare_map(iterate(fg, q)).map.mat();
        CHECK((direct - pq).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("FormalGeodesic validates the twist") {
    CHECK_THROWS_AS(FormalGeodesic(CurvatureProfile::constant_scalar(2, 1.0, 2 * PI),
                                   2.0 * MatrixXd::Identity(2, 2)),
                    invalid_input);
}

TEST_CASE("CurvatureProfile: polynomial and sampled rules evaluate") {
    // polynomial rule: R(t) = (1 + 0.5 t) Id on [0, 2pi]
    Segment s;
    s.t0 = 0;
    s.t1 = 2 * PI;
    s.kind = Segment::Kind::Polynomial;
    s.coeffs = {MatrixXd::Identity(2, 2), 0.5 * MatrixXd::Identity(2, 2)};
    CurvatureProfile poly(2, {s});
    CHECK(poly.eval(2.0)(0, 0) == doctest::Approx(2.0));

    std::vector<double> grid;
    std::vector<MatrixXd> vals;
    for (int i = 0; i <= 32; ++i) {
        double t = 2 * PI * i / 32.0;
        grid.push_back(t);
        vals.push_back(std::sin(t) * MatrixXd::Identity(1, 1));
    }
    CurvatureProfile smp = CurvatureProfile::sampled(1, grid, vals);
    for (double t : {0.5, 2.2, 4.9})
        CHECK(smp.eval(t)(0, 0) == doctest::Approx(std::sin(t)).epsilon(1e-4));
}
