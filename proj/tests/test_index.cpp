#include <doctest.h>

#include <cmath>

#include "besse/index_report.hpp"
#include "besse/random_gen.hpp"

using namespace besse;
using namespace besse::geo;
using Eigen::MatrixXd;

namespace {
const double PI = std::acos(-1.0);

FormalGeodesic round_block(int m) {
    return FormalGeodesic(CurvatureProfile::constant_scalar(m, 1.0, 2 * PI),
                          MatrixXd::Identity(m, m));
}

FormalGeodesic nine_quarter_block() {
    return FormalGeodesic(CurvatureProfile::constant_scalar(2, 2.25, 2 * PI),
                          MatrixXd::Identity(2, 2));
}

// constant diagonal profile with rational frequencies p_i / q, trivial twist:
// P^q = Id exactly
FormalGeodesic rational_rotation_block(const std::vector<int>& p, int q) {
    int m = static_cast<int>(p.size());
    MatrixXd r = MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        double w = double(p[i]) / q;
        r(i, i) = w * w;
    }
    return FormalGeodesic(CurvatureProfile::constant(m, r, 2 * PI), MatrixXd::Identity(m, m));
}

}  // namespace

TEST_CASE("conjugate_points: round block has one zero at pi with full multiplicity") {
    for (int m : {1, 2, 3}) {
        auto conj = conjugate_points(round_block(m));
        REQUIRE(conj.points.size() == 1);
        CHECK(conj.points[0].t == doctest::Approx(PI).epsilon(1e-9));
        CHECK(conj.points[0].multiplicity == m);
        CHECK(conj.ind_omega == m);
    }
}

TEST_CASE("conjugate_points: 9/4 block and its third iterate") {
    auto conj = conjugate_points(nine_quarter_block());
    REQUIRE(conj.points.size() == 2);
    CHECK(conj.points[0].t == doctest::Approx(2 * PI / 3).epsilon(1e-9));
    CHECK(conj.points[1].t == doctest::Approx(4 * PI / 3).epsilon(1e-9));
    CHECK(conj.points[0].multiplicity == 2);
    CHECK(conj.ind_omega == 4);

    auto c3 = conjugate_points(iterate(nine_quarter_block(), 3));
    // zeros of sin(3t/2) interior to (0, 6 pi): t = 2 pi k / 3, k = 1..8
    CHECK(c3.points.size() == 8);
    CHECK(c3.ind_omega == 16);
}

TEST_CASE("conjugate_points: flat block has none") {
    FormalGeodesic flat(CurvatureProfile::constant_scalar(2, 0.0, 2 * PI),
                        MatrixXd::Identity(2, 2));
    auto conj = conjugate_points(flat);
    CHECK(conj.points.empty());
}

TEST_CASE("index_report: round sphere blocks") {
    for (int m : {1, 2, 3}) {
        auto rep = index_report(round_block(m));
        CHECK(rep.ind_omega == m);
        CHECK(rep.ind_p == 0);
        CHECK(rep.ind == m);
        CHECK(rep.nullity == 2 * m);
        CHECK(rep.ind0 == 3 * m);
    }
    for (int k = 1; k <= 4; ++k) {
        auto rep = index_report(iterate(round_block(2), k));
        CHECK(rep.ind == (2 * k - 1) * 2);
        CHECK(rep.nullity == 4);
    }
}

TEST_CASE("index_report: the 9/4 family 6, 10, 18 with nullities 0, 4, 0") {
    auto r1 = index_report(nine_quarter_block());
    CHECK(r1.ind == 6);
    CHECK(r1.nullity == 0);
    auto r2 = index_report(iterate(nine_quarter_block(), 2));
    CHECK(r2.ind == 10);
    CHECK(r2.nullity == 4);
    CHECK(r2.ind0 == 14);
    auto r3 = index_report(iterate(nine_quarter_block(), 3));
    CHECK(r3.ind == 18);
    CHECK(r3.nullity == 0);
}

TEST_CASE("discretized_hessian_index: frozen counts") {
    auto o1 = discretized_hessian_index(round_block(2));
    CHECK(o1.negative_count == 2);
    CHECK(o1.null_count == 4);

    FormalGeodesic flat(CurvatureProfile::constant_scalar(2, 0.0, 2 * PI),
                        MatrixXd::Identity(2, 2));
    auto o2 = discretized_hessian_index(flat);
    CHECK(o2.negative_count == 0);

    auto o3 = discretized_hessian_index(nine_quarter_block());
    CHECK(o3.negative_count == 6);
    CHECK(o3.null_count == 0);
}

TEST_CASE("oracle agreement on random elliptic data") {
    Rng rng(101);
    for (int trial = 0; trial < 8; ++trial) {
        int m = 1 + trial % 3;
        std::vector<std::pair<double, MatrixXd>> parts;
        for (int i = 0; i < 2; ++i)
            parts.emplace_back(PI, MatrixXd(rng.symmetric(m, 0.3) +
                                            1.3 * MatrixXd::Identity(m, m)));
        FormalGeodesic fg(CurvatureProfile::piecewise(m, parts), rng.rotation(m));
        auto rep = index_report(fg);
        verify_index_report_fem(fg, rep);
    }
}

TEST_CASE("bott_check: the worked 9/4 instance") {
    auto bc = bott_check(nine_quarter_block(), 2, 1);
    CHECK(bc.iteration.lhs == 18);
    CHECK(bc.iteration.rhs == 18);  // 10 + 6 + 2
    CHECK(bc.iteration.holds);
    CHECK(bc.extended.lhs == 14);
    CHECK(bc.extended.rhs == 14);  // 6 + 0 + 6 + 2
    CHECK(bc.extended.holds);
}

TEST_CASE("bott_check: random rational rotation profiles") {
    Rng rng(211);
    int done = 0;
    for (int trial = 0; trial < 12; ++trial) {
        int m = 1 + trial % 3;
        int q = 2 + trial % 2;
        std::vector<int> p(m);
        for (int i = 0; i < m; ++i) p[i] = 1 + rng.uniform_int(0, 2 * q - 1);
        FormalGeodesic fg = rational_rotation_block(p, q);
        int l = 1 + trial % (q - 1 > 0 ? q - 1 : 1);
        auto bc = bott_check(fg, q, l);
        CHECK(bc.iteration.holds);
        CHECK(bc.extended.holds);
        ++done;
    }
    CHECK(done == 12);
}

TEST_CASE("bott_check: regularity precondition enforced") {
    // generic elliptic block: P^2 far from Id
    FormalGeodesic fg(CurvatureProfile::constant_scalar(1, 2.0, 2 * PI),
                      MatrixXd::Identity(1, 1));
    CHECK_THROWS_AS(bott_check(fg, 2, 1), precondition_violation);
}

TEST_CASE("index_gap_bounds: round sphere equality clause") {
    for (int m : {2, 3}) {
        auto g = index_gap_bounds(round_block(m), 1, 2, m);
        CHECK(g.lhs == 3 * m);
        CHECK(g.rhs == 3 * m);
        CHECK(g.holds);
        CHECK(!g.strict);
        CHECK(g.equality_clause);  // k = q+1 and ind(c) = i(M)
    }
}

TEST_CASE("index_gap_bounds: 9/4 block strict cases") {
    auto up = index_gap_bounds(nine_quarter_block(), 2, 3, 2);
    CHECK(up.lhs == 18);
    CHECK(up.rhs == 14);
    CHECK(up.holds);
    CHECK(up.strict);
    CHECK(!up.equality_clause);

    auto down = index_gap_bounds(nine_quarter_block(), 2, 1, 2);
    CHECK(down.lhs == 6);
    CHECK(down.rhs == 10);
    CHECK(down.holds);
}
