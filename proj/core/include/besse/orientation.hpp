#pragma once

#include <functional>
#include <map>
#include <optional>

#include "besse/clifford.hpp"
#include "besse/formal_geodesic.hpp"
#include "besse/index_form.hpp"
#include "besse/random_gen.hpp"
#include "besse/realize.hpp"

namespace besse::orient {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A closed one-parameter family s in [0,1) of formal geodesics with shared
/// (m, T). Samples come from a generator so the loop can be resampled for
/// mesh-stability checks. Lift safety (consecutive twists within rotation
/// angle pi/2) is validated on construction.
class DataLoop {
  public:
    static DataLoop make(std::function<geo::FormalGeodesic(double)> generator, int samples,
                         const Tolerances& tol = {});

    int size() const { return static_cast<int>(cache_.size()); }
    int m() const { return m_; }
    double period() const { return period_; }
    const geo::FormalGeodesic& at(int k) const { return cache_[static_cast<size_t>(k)]; }
    DataLoop resampled(int samples, const Tolerances& tol = {}) const;
    std::vector<MatrixXd> twists() const;
    const std::function<geo::FormalGeodesic(double)>& generator() const { return generator_; }

  private:
    std::function<geo::FormalGeodesic(double)> generator_;
    std::vector<geo::FormalGeodesic> cache_;
    int m_ = 0;
    double period_ = 0.0;
};

/// pi_1 class of the holonomy loop s -> A_s.
SpinClass loop_spin_class(const DataLoop& loop);

struct TransitionEvent {
    enum class Kind { GainPair, LosePair, TransferToE, TransferToN, Collision, Birth };
    Kind kind;
    double location = 0.0;      // path parameter
    double h_eigenvalue = 0.0;  // smallest |H eigenvalue| at the event
    double p_gap = 0.0;         // distance of the nearest P eigenvalue to 1
    double pairing_angle = 0.0; // angle between phi(ker H) and E_1(P), radians
    int dim_n_before = 0, dim_n_after = 0;
    int dim_e_before = 0, dim_e_after = 0;
};

struct TransitionLedger {
    std::vector<TransitionEvent> events;
};

enum class TransportMethod { PlainLoop, ModifiedBundle };

struct OrientationTransportResult {
    int sign = +1;
    TransportMethod method = TransportMethod::PlainLoop;
    TransitionLedger ledger;
    int loop_samples = 0;
    int fem_nodes = 0;
    double worst_pairing = 1.0;  // smallest sigma_min over consecutive projections
};

/// Orientation transport of the negative bundle around a constant-index loop:
/// eigenbases of the discretized index form are chained by projection and the
/// loop-closure determinant sign is returned. The sign is recomputed under
/// doubled sample count and doubled mesh before being emitted.
OrientationTransportResult transport_negative_orientation(const DataLoop& loop,
                                                          const Tolerances& tol = {},
                                                          int fem_nodes = 64,
                                                          bool stability_check = true);

/// Nullhomotopy convention: h(0, s) = A_s, h(1, s) = Id.
using Nullhomotopy = std::function<MatrixXd(double u, double s)>;

/// The two-parameter deformation over C = S^1 x [0,1]:
/// R(s,tau) = ((1-phi) R_s + phi Id) * ((4-3 tau) Id) * tail, A = h(phi(tau), s),
/// with the tail reserved for the genericity correction (identity by default).
class Deformation {
  public:
    Deformation(DataLoop base, Nullhomotopy h, std::function<double(double)> phi,
                const Tolerances& tol = {});

    geo::FormalGeodesic data(double s, double tau) const;
    MatrixXd poincare(double s, double tau) const;
    int m() const { return base_.m(); }
    const DataLoop& base() const { return base_; }

    /// smallest |Im lambda| of the Poincare spectrum over an s-grid at fixed tau
    double min_imag_at(double tau, int s_grid = 16) const;

    /// closed-form boundary Poincare map dA^{-1} (cos th + sin th J_w) dA P_s,
    /// th = 2 pi sqrt(4 - 3 tau); valid while phi(tau) = 0 and the tail is
    /// trivial
    MatrixXd boundary_closed_form(double s, double tau) const;

    /// genericity correction: multiply the interior Poincare family by
    /// exp(eps bump(tau) X0) realized as an appended curvature tail
    void set_perturbation(const MatrixXd& x0, double eps);
    bool perturbed() const { return eps_ != 0.0; }
    double perturbation_magnitude() const;

  private:
    DataLoop base_;
    Nullhomotopy h_;
    std::function<double(double)> phi_;
    Tolerances tol_;
    geo::CurvatureProfile tail_template_;  // identity values on the realize window mesh
    std::vector<geo::CurvatureProfile> family_;
    geo::CurvatureProfile family_base_;
    MatrixXd x0_;
    double eps_ = 0.0;
    mutable std::map<long long, geo::CurvatureProfile> tail_cache_;

    double bump(double tau) const;
    geo::CurvatureProfile tail_at(double s, double tau) const;
};

/// Construct the deformation, requiring a trivial holonomy class. The
/// nullhomotopy is synthesized through the exponential chart when possible,
/// otherwise it must be supplied. Certifies numerically that the Poincare
/// maps near the boundary have no real eigenvalues.
Deformation build_variation(const DataLoop& loop, std::optional<Nullhomotopy> h = std::nullopt,
                            const Tolerances& tol = {});

/// Rejection-sample small interior perturbations until every probe grid point
/// lies in Sp_1; throws after 100 rounds.
Deformation make_generic(Deformation def, Rng& rng, const Tolerances& tol = {},
                         int s_grid = 9, int tau_grid = 9);

/// A one-parameter path of formal geodesics for modified transport.
struct PathData {
    std::function<geo::FormalGeodesic(double)> at;
    double t0 = 0.0;
    double t1 = 1.0;
    int grid = 17;
};

/// Transport a basis of N + E along the path, carrying orientation through
/// index transitions via the canonical ker H = E_1(P) identification. Returns
/// the endpoint sign relative to deterministic reference eigenbases at both
/// ends, plus the transition ledger.
OrientationTransportResult modified_transport(const PathData& path, const Tolerances& tol = {},
                                              int fem_nodes = 96);

/// Path {s} x [tau0, tau1] inside a deformation.
OrientationTransportResult modified_transport(const Deformation& def, double s, double tau0,
                                              double tau1, const Tolerances& tol = {},
                                              int fem_nodes = 96, int grid = 17);

/// class(iterate) = q * class(base) in pi_1(SO(m)).
SpinClass iterate_orientability_class(const SpinClass& base, int q);

/// Iterated data loop: slice k-iterates, holonomy loop s -> A_s^q.
DataLoop iterate_loop(const DataLoop& base, int q, const Tolerances& tol = {});

struct Exemplar {
    DataLoop loop;
    geo::CurvatureProfile q_profile;
    /// analytic W_s line: (J(0), J'(0)) = (sin(-s/2), cos(-s/2), cos(-s/2), sin(-s/2))
    std::function<VectorXd(double)> w_line;
};

/// The non-orientable example: data (Q_s = Q, Rot_{-s}) whose per-slice
/// Poincare map is diag(Rot_s, Rot_s) B with spectrum {+-i}.
Exemplar exemplar_nonorientable(int samples, const Tolerances& tol = {});

}  // namespace besse::orient
