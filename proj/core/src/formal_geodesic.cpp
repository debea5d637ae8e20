#include "besse/formal_geodesic.hpp"

#include <algorithm>
#include <cmath>

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>
#include <unsupported/Eigen/MatrixFunctions>

namespace besse::geo {

namespace odeint = boost::numeric::odeint;

namespace {

// The state is the column-flattened (J, J') block; odeint works on VectorXd.
struct JacobiSystem {
    const CurvatureProfile* r;
    int m;
    int cols;
    void operator()(const VectorXd& y, VectorXd& dy, double t) const {
        dy.resize(y.size());
        Eigen::Map<const MatrixXd> Y(y.data(), 2 * m, cols);
        Eigen::Map<MatrixXd> dY(dy.data(), 2 * m, cols);
        dY.topRows(m) = Y.bottomRows(m);
        dY.bottomRows(m) = -(r->eval(t) * Y.topRows(m));
    }
};

using ErrorStepper = odeint::runge_kutta_dopri5<VectorXd, double, VectorXd, double,
                                                odeint::vector_space_algebra>;

// Integrate one segment-respecting sweep from t0 to t1 (t0 < t1), invoking
// the sink at every accepted step. Segment boundaries are forced step points
// because R may jump there.
template <typename Sink>
void integrate_sweep(const CurvatureProfile& r, MatrixXd& y_mat, double t0, double t1,
                     const Tolerances& tol, Sink&& sink) {
    const int m = r.m();
    const int cols = static_cast<int>(y_mat.cols());
    JacobiSystem sys{&r, m, cols};
    auto stepper = odeint::make_controlled<ErrorStepper>(tol.ode_abs, tol.ode_rel);
    const double max_step = 0.02;

    VectorXd y = Eigen::Map<const VectorXd>(y_mat.data(), y_mat.size());

    std::vector<double> bounds;
    for (double b : r.breakpoints())
        if (b > t0 + 1e-14 && b < t1 - 1e-14) bounds.push_back(b);
    bounds.push_back(t1);

    double t = t0;
    for (double stop : bounds) {
        double dt = std::min(max_step, stop - t);
        while (t < stop - 1e-14) {
            dt = std::min({dt, max_step, stop - t});
            odeint::controlled_step_result res;
            int attempts = 0;
            do {
                res = stepper.try_step(sys, y, t, dt);
                if (++attempts > 200)
                    throw numerical_failure("integration-failed: step control stalled at t=" +
                                            std::to_string(t));
            } while (res == odeint::fail);
            sink(t, Eigen::Map<const MatrixXd>(y.data(), 2 * m, cols));
        }
        t = stop;
    }
    y_mat = Eigen::Map<const MatrixXd>(y.data(), 2 * m, cols);
}

}  // namespace

FormalGeodesic::FormalGeodesic(CurvatureProfile r, MatrixXd a, std::string label)
    : r_(std::move(r)), a_(std::move(a)), label_(std::move(label)) {
    const int m = r_.m();
    if (a_.rows() != m || a_.cols() != m)
        throw invalid_input("FormalGeodesic: twist must be m x m");
    double orth = (a_.transpose() * a_ - MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
    if (orth > 1e-10)
        throw invalid_input("FormalGeodesic: twist is not orthogonal (defect " +
                            std::to_string(orth) + ")");
}

MatrixXd FormalGeodesic::delta_twist() const {
    const int m = this->m();
    MatrixXd d = MatrixXd::Zero(2 * m, 2 * m);
    d.topLeftCorner(m, m) = a_;
    d.bottomRightCorner(m, m) = a_;
    return d;
}

JacobiFlow::JacobiFlow(const CurvatureProfile& r, MatrixXd y0, const Tolerances& tol)
    : r_(&r), tol_(tol) {
    const int m = r.m();
    if (y0.rows() != 2 * m) throw invalid_input("JacobiFlow: state must have 2m rows");
    auto push = [&](double t, const MatrixXd& y) {
        MatrixXd dy(y.rows(), y.cols());
        dy.topRows(m) = y.bottomRows(m);
        dy.bottomRows(m) = -(r.eval(t) * y.topRows(m));
        nodes_.push_back({t, y, dy});
        times_.push_back(t);
    };
    push(0.0, y0);
    MatrixXd y = std::move(y0);
    integrate_sweep(r, y, 0.0, r.length(), tol, push);
    if (std::abs(times_.back() - r.length()) > 1e-12) push(r.length(), y);
}

MatrixXd JacobiFlow::at(double t) const {
    if (t <= nodes_.front().t) return nodes_.front().y;
    if (t >= nodes_.back().t) return nodes_.back().y;
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    size_t hi = static_cast<size_t>(it - times_.begin());
    size_t lo = hi - 1;
    const Node& a = nodes_[lo];
    const Node& b = nodes_[hi];
    double h = b.t - a.t;
    double s = (t - a.t) / h;
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    double h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s);
    double h11 = s * s * (s - 1);
    return h00 * a.y + (h10 * h) * a.dy + h01 * b.y + (h11 * h) * b.dy;
}

MatrixXd JacobiFlow::at_exact(double t) const {
    if (t <= nodes_.front().t) return nodes_.front().y;
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    size_t hi = std::min<size_t>(static_cast<size_t>(it - times_.begin()), nodes_.size() - 1);
    size_t lo = hi - 1;
    if (std::abs(nodes_[hi].t - t) < 1e-14) return nodes_[hi].y;
    MatrixXd y = nodes_[lo].y;
    if (t > nodes_[lo].t + 1e-14)
        integrate_sweep(*r_, y, nodes_[lo].t, t, tol_, [](double, const MatrixXd&) {});
    return y;
}

double JacobiFlow::symplectic_drift() const {
    const int n = static_cast<int>(nodes_.front().y.rows());
    if (nodes_.front().y.cols() != n) return 0.0;
    MatrixXd om = symp::standard_omega(n / 2);
    double worst = 0.0;
    for (const auto& node : nodes_)
        worst = std::max(worst,
                         (node.y.transpose() * om * node.y - om).cwiseAbs().maxCoeff());
    return worst;
}

VectorXd propagate(const FormalGeodesic& fg, const VectorXd& init, double t0, double t1,
                   const Tolerances& tol) {
    const double T = fg.period();
    if (t0 < -1e-12 || t1 < -1e-12 || t0 > T + 1e-12 || t1 > T + 1e-12)
        throw invalid_input("propagate: times outside [0, T]");
    if (init.size() != 2 * fg.m()) throw invalid_input("propagate: state must have 2m entries");
    if (std::abs(t1 - t0) < 1e-15) return init;
    if (t1 < t0) {
        // solve backwards by flowing the reversed profile... integrate forward
        // from t1 and invert the local fundamental solution instead
        MatrixXd phi = MatrixXd::Identity(2 * fg.m(), 2 * fg.m());
        integrate_sweep(fg.curvature(), phi, t1, t0, tol, [](double, const MatrixXd&) {});
        return phi.partialPivLu().solve(init);
    }
    MatrixXd y = init;
    integrate_sweep(fg.curvature(), y, t0, t1, tol, [](double, const MatrixXd&) {});
    return y;
}

JacobiFlow fundamental_solution(const FormalGeodesic& fg, const Tolerances& tol) {
    const int n = 2 * fg.m();
    JacobiFlow flow(fg.curvature(), MatrixXd::Identity(n, n), tol);
    double drift = flow.symplectic_drift();
    if (drift > tol.tol_flow_sp)
        throw numerical_failure("integration-failed: symplectic drift " + std::to_string(drift));
    return flow;
}

PoincareMap poincare_map(const FormalGeodesic& fg, const Tolerances& tol) {
    JacobiFlow flow = fundamental_solution(fg, tol);
    MatrixXd p = fg.delta_twist().transpose() * flow.terminal();  // A orthogonal: A^{-1} = A^T
    Tolerances lax = tol;
    lax.tol_sp = std::max(tol.tol_sp, 10 * tol.tol_flow_sp);
    PoincareMap out{symp::SymplecticMatrix(p, lax), fg.label(), flow.steps(),
                    flow.symplectic_drift()};
    return out;
}

MatrixXd poincare_matrix_exp(const CurvatureProfile& r, const MatrixXd& a) {
    if (!r.is_piecewise_constant())
        throw invalid_input("poincare_matrix_exp: profile is not piecewise constant");
    const int m = r.m();
    MatrixXd phi = MatrixXd::Identity(2 * m, 2 * m);
    for (const auto& seg : r.segments()) {
        MatrixXd k = MatrixXd::Zero(2 * m, 2 * m);
        k.topRightCorner(m, m) = MatrixXd::Identity(m, m);
        k.bottomLeftCorner(m, m) = -seg.coeffs[0];
        phi = (k * (seg.t1 - seg.t0)).exp() * phi;
    }
    MatrixXd da = MatrixXd::Zero(2 * m, 2 * m);
    da.topLeftCorner(m, m) = a;
    da.bottomRightCorner(m, m) = a;
    return da.transpose() * phi;
}

FormalGeodesic concat(const std::vector<FormalGeodesic>& parts, MatrixXd a_total) {
    if (parts.empty()) throw invalid_input("concat: empty list");
    const int m = parts.front().m();
    std::vector<CurvatureProfile> rs;
    for (const auto& p : parts) {
        if (p.m() != m) throw invalid_input("concat: dimension mismatch");
        rs.push_back(p.curvature());
    }
    return FormalGeodesic(CurvatureProfile::concat(rs), std::move(a_total));
}

FormalGeodesic iterate(const FormalGeodesic& fg, int q) {
    if (q < 1) throw invalid_input("iterate: q must be >= 1");
    if (q == 1) return fg;
    const int m = fg.m();
    // lap j carries A^j R A^{-j} in the continued parallel frame
    std::vector<CurvatureProfile> laps;
    MatrixXd aj = MatrixXd::Identity(m, m);
    for (int j = 0; j < q; ++j) {
        laps.push_back(fg.curvature().conjugated(aj));
        aj = fg.twist() * aj;
    }
    return FormalGeodesic(CurvatureProfile::concat(laps), aj,
                          fg.label().empty() ? "" : fg.label() + "^" + std::to_string(q));
}

}  // namespace besse::geo
