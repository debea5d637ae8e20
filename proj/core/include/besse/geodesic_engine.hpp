#pragma once

#include <optional>

#include "besse/formal_geodesic.hpp"
#include "besse/metrics.hpp"
#include "besse/random_gen.hpp"
#include "besse/tolerances.hpp"

namespace besse::engine {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One integrated geodesic. For spheres the state is ambient (x, v) in
/// R^{2(n+1)}; for revolution surfaces it is (theta, phi, theta', phi').
struct GeodesicRecord {
    MetricSpec metric;
    VectorXd state0;
    std::vector<double> ts;
    std::vector<VectorXd> states;
    double max_length = 0.0;
    double energy_drift = 0.0;    // relative |c'| drift before projection
    double clairaut_drift = 0.0;  // revolution only
    bool closed = false;
    double period = 0.0;
    double residual = std::numeric_limits<double>::infinity();

    VectorXd state_at(double t) const;  // linear interpolation on the sample grid
};

/// Arc-length geodesic integration with conserved-quantity bookkeeping.
GeodesicRecord integrate_geodesic(const MetricSpec& metric, const VectorXd& init,
                                  double max_length, const Tolerances& tol = {});

struct ClosureResult {
    bool closed = false;
    double period = 0.0;
    double residual = std::numeric_limits<double>::infinity();
};

/// Smallest phase-space return within the integrated horizon; residual is the
/// metric-weighted position error plus the velocity error.
ClosureResult detect_closure(const GeodesicRecord& record, const Tolerances& tol = {});

struct FrameTransport {
    std::vector<double> ts;
    std::vector<MatrixXd> frames;  // columns: parallel orthonormal normal frame
    MatrixXd holonomy;             // frame(L) = frame(0) * A
    double orthogonality_defect = 0.0;
};

/// Parallel-transport an orthonormal basis of c'(0)-perp along a closed
/// geodesic and read off the holonomy.
FrameTransport transport_frame(const MetricSpec& metric, const GeodesicRecord& record,
                               const Tolerances& tol = {});

/// Sample the curvature operator in the parallel frame and package the
/// algebraic data (R, A) on [0, period].
geo::FormalGeodesic extract_formal(const MetricSpec& metric, const GeodesicRecord& record,
                                   const Tolerances& tol = {}, int samples = 256);

struct ManifoldProbe {
    int dimension = 0;  // estimated dim of the critical set in T^1 M
    int ambient_dim = 0;
    bool degraded = false;
};

/// Empirical dimension of {closed geodesics of length L} near the record's
/// orbit, from the rank of the linearized return map minus the identity.
ManifoldProbe probe_critical_manifold(const MetricSpec& metric, const GeodesicRecord& record,
                                      double length, const Tolerances& tol = {});

/// Draw a uniform unit tangent vector (ambient for spheres, chart otherwise).
VectorXd random_unit_tangent(const MetricSpec& metric, Rng& rng);

/// Tolerance profile for index computations on engine-extracted data: the
/// extracted (R, A) carry closure and sampling error around 1e-6, so rank
/// decisions get a floor above that budget instead of the crisp 1e-8 used on
/// exact algebraic data.
inline Tolerances extraction_tolerances(Tolerances base = {}) {
    base.tol_rank_rel = 3e-5;
    base.conj_guard = 1e-4;  // endpoint zeros shift by the extraction error
    return base;
}

}  // namespace besse::engine
