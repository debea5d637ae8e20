#include "besse/geodesic_engine.hpp"

#include <algorithm>
#include <cmath>

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>

namespace besse::engine {

namespace odeint = boost::numeric::odeint;

namespace {

const double PI = std::acos(-1.0);

using Stepper = odeint::runge_kutta_dopri5<VectorXd, double, VectorXd, double,
                                           odeint::vector_space_algebra>;

// ambient sphere system: state (x, v) in R^{2(n+1)}, x'' = -|v|^2 x
struct SphereSystem {
    int n1;  // ambient dimension n+1
    void operator()(const VectorXd& y, VectorXd& dy, double) const {
        dy.resize(y.size());
        auto x = y.head(n1);
        auto v = y.tail(n1);
        dy.head(n1) = v;
        dy.tail(n1) = -v.squaredNorm() * x;
    }
};

// revolution chart system: state (theta, phi, theta', phi')
struct RevolutionSystem {
    const MetricSpec* metric;
    void operator()(const VectorXd& y, VectorXd& dy, double) const {
        dy.resize(4);
        double th = y(0), dth = y(2), dph = y(3);
        double f = metric->f(th), ft = metric->f_theta(th);
        double s = std::sin(th), c = std::cos(th);
        dy(0) = dth;
        dy(1) = dph;
        dy(2) = (-f * ft * dth * dth + s * c * dph * dph) / (f * f);
        dy(3) = (std::abs(s) < 1e-300) ? 0.0 : -2.0 * (c / s) * dth * dph;
    }
};

void project_sphere(VectorXd& y, int n1, double speed) {
    auto x = y.head(n1);
    auto v = y.tail(n1);
    x /= x.norm();
    v -= v.dot(x) * x;
    v *= speed / v.norm();
}

double revolution_energy(const MetricSpec& metric, const VectorXd& y) {
    double f = metric.f(y(0)), s = std::sin(y(0));
    return f * f * y(2) * y(2) + s * s * y(3) * y(3);
}

// Integrate the geodesic state from t0 by (t1 - t0) > 0, with the sphere
// constraint re-projected after each accepted step.
template <typename Sink>
void sweep(const MetricSpec& metric, VectorXd& y, double t0, double t1, const Tolerances& tol,
           double& drift, Sink&& sink) {
    auto stepper = odeint::make_controlled<Stepper>(tol.ode_abs, tol.ode_rel);
    const double max_step = 0.02;
    const bool sphere = !metric.is_revolution();
    const int n1 = metric.dim() + 1;
    double t = t0;
    double dt = max_step;
    while (t < t1 - 1e-13) {
        dt = std::min({dt, max_step, t1 - t});
        odeint::controlled_step_result res;
        int attempts = 0;
        do {
            if (sphere) {
                SphereSystem sys{n1};
                res = stepper.try_step(sys, y, t, dt);
            } else {
                RevolutionSystem sys{&metric};
                res = stepper.try_step(sys, y, t, dt);
            }
            if (++attempts > 400)
                throw numerical_failure("integrate_geodesic: integration-failed at t=" +
                                        std::to_string(t));
        } while (res == odeint::fail);
        if (sphere) {
            double before = y.tail(n1).norm();
            drift = std::max(drift, std::abs(y.head(n1).norm() - 1.0) + std::abs(before - 1.0));
            project_sphere(y, n1, 1.0);
        }
        sink(t, y);
    }
}

// exact state at time t, re-integrated from the nearest stored sample
VectorXd exact_state(const GeodesicRecord& rec, double t, const Tolerances& tol) {
    auto it = std::upper_bound(rec.ts.begin(), rec.ts.end(), t);
    size_t hi = std::min<size_t>(static_cast<size_t>(it - rec.ts.begin()), rec.ts.size() - 1);
    size_t lo = hi > 0 ? hi - 1 : 0;
    VectorXd y = rec.states[lo];
    double dummy = 0.0;
    if (t > rec.ts[lo] + 1e-13)
        sweep(rec.metric, y, rec.ts[lo], t, tol, dummy, [](double, const VectorXd&) {});
    return y;
}

double phase_distance(const MetricSpec& metric, const VectorXd& a, const VectorXd& b) {
    if (!metric.is_revolution()) {
        int n1 = metric.dim() + 1;
        return (a.head(n1) - b.head(n1)).norm() + (a.tail(n1) - b.tail(n1)).norm();
    }
    double f0 = metric.f(b(0)), s0 = std::sin(b(0));
    double dphi = std::remainder(a(1) - b(1), 2 * PI);
    double pos = std::sqrt(std::pow(f0 * (a(0) - b(0)), 2) + std::pow(s0 * dphi, 2));
    double vel = std::sqrt(std::pow(f0 * (a(2) - b(2)), 2) + std::pow(s0 * (a(3) - b(3)), 2));
    return pos + vel;
}

double golden_minimize(const std::function<double(double)>& f, double a, double b, double xtol) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

VectorXd GeodesicRecord::state_at(double t) const {
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    size_t hi = std::clamp<size_t>(static_cast<size_t>(it - ts.begin()), 1, ts.size() - 1);
    size_t lo = hi - 1;
    double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    return (1 - w) * states[lo] + w * states[hi];
}

GeodesicRecord integrate_geodesic(const MetricSpec& metric, const VectorXd& init,
                                  double max_length, const Tolerances& tol) {
    GeodesicRecord rec{metric, init, {}, {}, max_length};
    VectorXd y = init;
    if (!metric.is_revolution()) {
        int n1 = metric.dim() + 1;
        if (init.size() != 2 * n1)
            throw invalid_input("integrate_geodesic: sphere state must be (x, v)");
        if (std::abs(init.head(n1).norm() - 1.0) > 1e-9 ||
            std::abs(init.tail(n1).norm() - 1.0) > 1e-9 ||
            std::abs(init.head(n1).dot(init.tail(n1))) > 1e-9)
            throw invalid_input("integrate_geodesic: init must be unit-speed on the sphere");
    } else {
        if (init.size() != 4)
            throw invalid_input("integrate_geodesic: revolution state must be 4-dim");
        if (std::abs(revolution_energy(metric, init) - 1.0) > 1e-9)
            throw invalid_input("integrate_geodesic: init must be unit-speed");
    }
    rec.ts.push_back(0.0);
    rec.states.push_back(y);
    double e0 = metric.is_revolution() ? revolution_energy(metric, y) : 1.0;
    double c0 = metric.is_revolution() ? std::pow(std::sin(y(0)), 2) * y(3) : 0.0;
    double drift = 0.0, cdrift = 0.0, edrift = 0.0;
    sweep(metric, y, 0.0, max_length, tol, drift, [&](double t, const VectorXd& s) {
        rec.ts.push_back(t);
        rec.states.push_back(s);
        if (metric.is_revolution()) {
            edrift = std::max(edrift, std::abs(revolution_energy(metric, s) - e0));
            cdrift = std::max(cdrift,
                              std::abs(std::pow(std::sin(s(0)), 2) * s(3) - c0));
        }
    });
    rec.energy_drift = metric.is_revolution() ? edrift : drift;
    rec.clairaut_drift = cdrift;
    return rec;
}

ClosureResult detect_closure(const GeodesicRecord& rec, const Tolerances& tol) {
    ClosureResult out;
    if (rec.ts.size() < 8) return out;
    const VectorXd& ref = rec.states.front();
    std::vector<double> dist(rec.ts.size());
    for (size_t i = 0; i < rec.ts.size(); ++i)
        dist[i] = phase_distance(rec.metric, rec.states[i], ref);
    const double t_min = 0.25;
    for (size_t i = 1; i + 1 < rec.ts.size(); ++i) {
        if (rec.ts[i] < t_min) continue;
        if (dist[i] <= dist[i - 1] && dist[i] <= dist[i + 1] && dist[i] < 0.08) {
            auto f = [&](double t) {
                return phase_distance(rec.metric, exact_state(rec, t, tol), ref);
            };
            double t_star = golden_minimize(f, rec.ts[i - 1], rec.ts[i + 1], 1e-11);
            double r = f(t_star);
            if (r <= tol.tol_close) {
                out.closed = true;
                out.period = t_star;
                out.residual = r;
                return out;  // smallest return wins
            }
        }
    }
    return out;
}

FrameTransport transport_frame(const MetricSpec& metric, const GeodesicRecord& record,
                               const Tolerances& tol) {
    if (!record.closed)
        throw precondition_violation("transport_frame: record is not marked closed");
    FrameTransport out;
    const double L = record.period;
    if (!metric.is_revolution()) {
        const int n1 = metric.dim() + 1;
        const int m = metric.dim() - 1;
        VectorXd x0 = record.state0.head(n1), v0 = record.state0.tail(n1);
        // frame: Gram-Schmidt of coordinate vectors against {x0, v0}
        MatrixXd f0(n1, m);
        int built = 0;
        for (int k = 0; k < n1 && built < m; ++k) {
            VectorXd e = VectorXd::Zero(n1);
            e(k) = 1.0;
            e -= e.dot(x0) * x0 + e.dot(v0) * v0;
            for (int j = 0; j < built; ++j) e -= e.dot(f0.col(j)) * f0.col(j);
            if (e.norm() > 1e-3) {
                f0.col(built++) = e / e.norm();
            }
        }
        if (built < m) throw numerical_failure("transport_frame: frame seeding failed");

        // joint state (x, v, E_1..E_m); parallel transport: E' = -(E.v) x
        VectorXd big(n1 * (2 + m));
        big.head(n1) = x0;
        big.segment(n1, n1) = v0;
        for (int j = 0; j < m; ++j) big.segment(n1 * (2 + j), n1) = f0.col(j);
        auto stepper = odeint::make_controlled<Stepper>(tol.ode_abs, tol.ode_rel);
        auto sys = [&](const VectorXd& y, VectorXd& dy, double) {
            dy.resize(y.size());
            auto x = y.head(n1);
            auto v = y.segment(n1, n1);
            dy.head(n1) = v;
            dy.segment(n1, n1) = -v.squaredNorm() * x;
            for (int j = 0; j < m; ++j) {
                auto e = y.segment(n1 * (2 + j), n1);
                dy.segment(n1 * (2 + j), n1) = -e.dot(v) * x;
            }
        };
        double t = 0.0, dt = 0.02;
        out.ts.push_back(0.0);
        out.frames.push_back(f0);
        while (t < L - 1e-13) {
            dt = std::min({dt, 0.02, L - t});
            odeint::controlled_step_result res;
            int attempts = 0;
            do {
                res = stepper.try_step(sys, big, t, dt);
                if (++attempts > 400)
                    throw numerical_failure("transport_frame: step control stalled");
            } while (res == odeint::fail);
            MatrixXd fr(n1, m);
            for (int j = 0; j < m; ++j) fr.col(j) = big.segment(n1 * (2 + j), n1);
            out.ts.push_back(t);
            out.frames.push_back(fr);
        }
        out.holonomy = f0.transpose() * out.frames.back();
    } else {
        // single normal vector on the surface, Christoffel transport
        VectorXd y0 = record.state0;
        double f = metric.f(y0(0)), s = std::sin(y0(0));
        // g-unit normal to c' = (theta', phi'): nu = (-s phi'/f, f theta'/s)
        Eigen::Vector2d nu(-s * y0(3) / f, f * y0(2) / s);
        VectorXd big(6);
        big << y0, nu;
        auto stepper = odeint::make_controlled<Stepper>(tol.ode_abs, tol.ode_rel);
        auto sys = [&](const VectorXd& y, VectorXd& dy, double) {
            dy.resize(6);
            RevolutionSystem geo{&metric};
            VectorXd base = y.head(4), dbase;
            geo(base, dbase, 0.0);
            dy.head(4) = dbase;
            double th = y(0), dth = y(2), dph = y(3);
            double ff = metric.f(th), ft = metric.f_theta(th);
            double ss = std::sin(th), cc = std::cos(th);
            double vth = y(4), vph = y(5);
            dy(4) = -(ft / ff) * dth * vth + (ss * cc / (ff * ff)) * dph * vph;
            dy(5) = -(cc / ss) * (dth * vph + dph * vth);
        };
        double t = 0.0, dt = 0.02;
        out.ts.push_back(0.0);
        MatrixXd fr0(2, 1);
        fr0 << nu(0), nu(1);
        out.frames.push_back(fr0);
        while (t < L - 1e-13) {
            dt = std::min({dt, 0.02, L - t});
            odeint::controlled_step_result res;
            int attempts = 0;
            do {
                res = stepper.try_step(sys, big, t, dt);
                if (++attempts > 400)
                    throw numerical_failure("transport_frame: step control stalled");
            } while (res == odeint::fail);
            MatrixXd fr(2, 1);
            fr << big(4), big(5);
            out.ts.push_back(t);
            out.frames.push_back(fr);
        }
        // holonomy in the g-inner product at the (closed) endpoint
        double th = big(0);
        double ge = metric.f(th) * metric.f(th), gp = std::sin(th) * std::sin(th);
        double inner = ge * nu(0) * big(4) + gp * nu(1) * big(5);
        out.holonomy = MatrixXd::Constant(1, 1, inner);
    }
    MatrixXd ata = out.holonomy.transpose() * out.holonomy;
    out.orthogonality_defect =
        (ata - MatrixXd::Identity(ata.rows(), ata.cols())).cwiseAbs().maxCoeff();
    if (out.orthogonality_defect > tol.tol_orth)
        throw numerical_failure("transport_frame: holonomy orthogonality defect " +
                                std::to_string(out.orthogonality_defect));
    return out;
}

geo::FormalGeodesic extract_formal(const MetricSpec& metric, const GeodesicRecord& record,
                                   const Tolerances& tol, int samples) {
    FrameTransport ft = transport_frame(metric, record, tol);
    const double L = record.period;
    const int m = metric.is_revolution() ? 1 : metric.dim() - 1;

    std::vector<double> grid;
    std::vector<MatrixXd> values;
    // frames are stored on the integrator nodes; interpolate to a uniform grid
    auto frame_at = [&](double t) -> MatrixXd {
        auto it = std::upper_bound(ft.ts.begin(), ft.ts.end(), t);
        size_t hi = std::clamp<size_t>(static_cast<size_t>(it - ft.ts.begin()), 1,
                                       ft.ts.size() - 1);
        size_t lo = hi - 1;
        double w = (t - ft.ts[lo]) / (ft.ts[hi] - ft.ts[lo]);
        return (1 - w) * ft.frames[lo] + w * ft.frames[hi];
    };
    for (int i = 0; i <= samples; ++i) {
        double t = L * i / samples;
        grid.push_back(t);
        if (!metric.is_revolution()) {
            const int n1 = metric.dim() + 1;
            VectorXd st = record.state_at(t);
            VectorXd v = st.tail(n1);
            MatrixXd fr = frame_at(t);
            // Gauss equation at curvature one: <R(E_i, c')c', E_j>
            MatrixXd r = fr.transpose() * fr -
                         (fr.transpose() * v) * (v.transpose() * fr);
            values.push_back(0.5 * (r + r.transpose()));
        } else {
            VectorXd st = record.state_at(t);
            values.push_back(MatrixXd::Constant(1, 1, metric.gauss_curvature(st(0))));
        }
    }
    MatrixXd a = ft.holonomy;
    // polar-project the holonomy onto the orthogonal group before packaging
    Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    a = svd.matrixU() * svd.matrixV().transpose();
    return geo::FormalGeodesic(geo::CurvatureProfile::sampled(m, grid, values), a,
                               metric.label());
}

ManifoldProbe probe_critical_manifold(const MetricSpec& metric, const GeodesicRecord& record,
                                      double length, const Tolerances& tol) {
    ManifoldProbe out;
    const bool rev = metric.is_revolution();
    const int state_dim = static_cast<int>(record.state0.size());
    const VectorXd y0 = record.state0;

    // tangent basis of T^1 M at y0 = null space of the constraint gradients
    MatrixXd constraints;
    if (!rev) {
        int n1 = metric.dim() + 1;
        constraints = MatrixXd::Zero(3, state_dim);
        constraints.block(0, 0, 1, n1) = y0.head(n1).transpose();
        constraints.block(1, n1, 1, n1) = y0.tail(n1).transpose();
        constraints.block(2, 0, 1, n1) = y0.tail(n1).transpose();
        constraints.block(2, n1, 1, n1) = y0.head(n1).transpose();
    } else {
        constraints = MatrixXd::Zero(1, 4);
        double th = y0(0), dth = y0(2), dph = y0(3);
        double f = metric.f(th), ftd = metric.f_theta(th);
        double s = std::sin(th), c = std::cos(th);
        constraints(0, 0) = 2 * f * ftd * dth * dth + 2 * s * c * dph * dph;
        constraints(0, 2) = 2 * f * f * dth;
        constraints(0, 3) = 2 * s * s * dph;
    }
    MatrixXd q = symp::kernel_of(constraints, tol, 1.0);
    const int tdim = static_cast<int>(q.cols());
    out.ambient_dim = tdim;

    auto project = [&](VectorXd y) {
        if (!rev) {
            project_sphere(y, metric.dim() + 1, 1.0);
        } else {
            double e = revolution_energy(metric, y);
            y(2) /= std::sqrt(e);
            y(3) /= std::sqrt(e);
        }
        return y;
    };
    auto flow_to = [&](VectorXd y) {
        double drift = 0.0;
        sweep(metric, y, 0.0, length, tol, drift, [](double, const VectorXd&) {});
        return y;
    };

    const double h = 1e-5;
    MatrixXd diff(tdim, tdim);
    for (int i = 0; i < tdim; ++i) {
        VectorXd plus = flow_to(project(y0 + h * q.col(i)));
        VectorXd minus = flow_to(project(y0 - h * q.col(i)));
        VectorXd d = (plus - minus) / (2 * h) - q.col(i);
        diff.col(i) = q.transpose() * d;
    }
    Eigen::JacobiSVD<MatrixXd> svd(diff);
    Eigen::VectorXd sv = svd.singularValues();
    const double cut = 1e-3 * std::max(1.0, sv(0));
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++rank;
    if (rank < sv.size() && rank > 0 && sv(rank - 1) / std::max(sv(rank), 1e-300) < 50)
        out.degraded = true;
    out.dimension = tdim - rank;
    return out;
}

VectorXd random_unit_tangent(const MetricSpec& metric, Rng& rng) {
    if (!metric.is_revolution()) {
        int n1 = metric.dim() + 1;
        VectorXd x = rng.gaussian_matrix(n1, 1);
        x /= x.norm();
        VectorXd v = rng.gaussian_matrix(n1, 1);
        v -= v.dot(x) * x;
        v /= v.norm();
        VectorXd y(2 * n1);
        y << x, v;
        return y;
    }
    double u = rng.uniform(-0.995, 0.995);
    double theta = std::acos(u);
    double phi = rng.uniform(0.0, 2 * PI);
    double psi = rng.uniform(0.0, 2 * PI);
    double f = metric.f(theta), s = std::sin(theta);
    VectorXd y(4);
    y << theta, phi, std::cos(psi) / f, std::sin(psi) / s;
    return y;
}

}  // namespace besse::engine
