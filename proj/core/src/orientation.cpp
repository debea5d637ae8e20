#include "besse/orientation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace besse::orient {

namespace {

const double PI = std::acos(-1.0);

// ---------------------------------------------------------------- profiles

geo::CurvatureProfile blend_with_identity(const geo::CurvatureProfile& r, double w) {
    const int m = r.m();
    MatrixXd id = MatrixXd::Identity(m, m);
    if (r.is_piecewise_constant()) {
        std::vector<std::pair<double, MatrixXd>> pieces;
        for (const auto& seg : r.segments())
            pieces.emplace_back(seg.t1 - seg.t0, MatrixXd((1 - w) * seg.coeffs[0] + w * id));
        return geo::CurvatureProfile::piecewise(m, pieces);
    }
    const int n = 256;
    std::vector<double> grid;
    std::vector<MatrixXd> vals;
    for (int i = 0; i <= n; ++i) {
        double t = r.length() * i / n;
        grid.push_back(t);
        vals.push_back((1 - w) * r.eval(std::min(t, r.length())) + w * id);
    }
    return geo::CurvatureProfile::sampled(m, grid, vals);
}

// eigenvalues of a real matrix, no symplectic validation
Eigen::VectorXcd spectrum(const MatrixXd& p) { return Eigen::EigenSolver<MatrixXd>(p).eigenvalues(); }

// real eigenpairs with eigenvalue in (0,1): (lambda, unit eigenvector)
std::vector<std::pair<double, VectorXd>> real_unit_interval_eigs(const MatrixXd& p) {
    Eigen::EigenSolver<MatrixXd> es(p);
    std::vector<std::pair<double, VectorXd>> out;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        std::complex<double> lam = es.eigenvalues()(i);
        if (std::abs(lam.imag()) > 1e-6 * (1.0 + std::abs(lam))) continue;
        double lr = lam.real();
        if (lr <= 1e-9 || lr >= 1.0 - 1e-9) continue;
        Eigen::VectorXcd vc = es.eigenvectors().col(i);
        if (vc.imag().cwiseAbs().maxCoeff() > 1e-6 * vc.norm()) continue;
        VectorXd v = vc.real();
        v.normalize();
        out.emplace_back(lr, v);
    }
    // collapse numerically duplicated eigenpairs (conjugate pair remnants)
    std::vector<std::pair<double, VectorXd>> dedup;
    for (auto& e : out) {
        bool dup = false;
        for (auto& d : dedup)
            if (std::abs(d.first - e.first) < 1e-9 && std::abs(d.second.dot(e.second)) > 0.99)
                dup = true;
        if (!dup) dedup.push_back(e);
    }
    return dedup;
}

int count_e(const MatrixXd& p) { return static_cast<int>(real_unit_interval_eigs(p).size()); }

// deterministic sign convention: largest-magnitude entry positive
void fix_sign(VectorXd& v) {
    int idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    if (v(idx) < 0) v = -v;
}
void fix_sign(Eigen::Ref<MatrixXd> b) {
    for (int j = 0; j < b.cols(); ++j) {
        int idx = 0;
        b.col(j).cwiseAbs().maxCoeff(&idx);
        if (b(idx, j) < 0) b.col(j) *= -1.0;
    }
}

// boundary data of a PL field: (X(0), X'(0)) with the curvature-corrected
// one-sided derivative X'(0) = (x_1 - x_0)/h + (h/2) R(0) x_0
VectorXd boundary_data(const geo::DiscretizedIndexForm& form, const geo::FormalGeodesic& fg,
                       const VectorXd& coeffs) {
    const int m = fg.m();
    VectorXd x0 = coeffs.segment(0, m);
    VectorXd x1 = coeffs.segment(m, m);
    double h = form.mesh[1] - form.mesh[0];
    VectorXd d = (x1 - x0) / h + 0.5 * h * (fg.curvature().eval(0.5 * h) * x0);
    VectorXd out(2 * m);
    out << x0, d;
    return out;
}

// FEM coefficients of the Jacobi field with initial data (u, w)
VectorXd jacobi_to_fem(const geo::DiscretizedIndexForm& form, const geo::FormalGeodesic& fg,
                       const VectorXd& init, const Tolerances& tol) {
    const int m = fg.m();
    geo::JacobiFlow flow(fg.curvature(), init, tol);
    const int n = form.nodes();
    VectorXd coeffs(n * m);
    for (int i = 0; i < n; ++i) coeffs.segment(i * m, m) = flow.at(form.mesh[i]).topRows(m);
    return coeffs;
}

}  // namespace

// ------------------------------------------------------------------ DataLoop

DataLoop DataLoop::make(std::function<geo::FormalGeodesic(double)> generator, int samples,
                        const Tolerances& tol) {
    if (samples < 4) throw invalid_input("DataLoop: need at least 4 samples");
    DataLoop loop;
    loop.generator_ = std::move(generator);
    for (int k = 0; k < samples; ++k)
        loop.cache_.push_back(loop.generator_(double(k) / samples));
    loop.m_ = loop.cache_.front().m();
    loop.period_ = loop.cache_.front().period();
    for (const auto& fg : loop.cache_) {
        if (fg.m() != loop.m_ || std::abs(fg.period() - loop.period_) > 1e-10)
            throw invalid_input("DataLoop: samples must share m and T");
    }
    // lift safety: consecutive twists within rotation angle pi/2
    for (int k = 0; k < samples; ++k) {
        MatrixXd d = loop.cache_[static_cast<size_t>(k)].twist().transpose() *
                     loop.cache_[static_cast<size_t>((k + 1) % samples)].twist();
        Eigen::VectorXcd ev = d.eigenvalues();
        double ang = ev.imag().cwiseAbs().maxCoeff();
        double re_min = ev.real().minCoeff();
        if (ang >= PI / 2 || re_min < 0)
            throw numerical_failure("DataLoop: refine-sampling, twist step angle too large");
    }
    (void)tol;
    return loop;
}

DataLoop DataLoop::resampled(int samples, const Tolerances& tol) const {
    return make(generator_, samples, tol);
}

std::vector<MatrixXd> DataLoop::twists() const {
    std::vector<MatrixXd> out;
    for (const auto& fg : cache_) out.push_back(fg.twist());
    return out;
}

SpinClass loop_spin_class(const DataLoop& loop) { return spin_lift_sign(loop.twists(), loop.m()); }

// --------------------------------------------------- plain orientation loop

namespace {

struct LoopSignOutcome {
    int sign;
    double worst;
    int nodes;
};

LoopSignOutcome loop_sign_once(const DataLoop& loop, int fem_nodes, const Tolerances& tol) {
    const int s_count = loop.size();
    // converge the mesh on sample 0, then share the node parameter
    geo::HessianIndex ref = geo::discretized_hessian_index(loop.at(0), fem_nodes, tol, 1 << 14);
    const int n_nodes = ref.form.nodes();
    const size_t mesh_size = geo::assemble_index_form(loop.at(0), n_nodes).mesh.size();
    std::vector<MatrixXd> bases;
    MatrixXd mass;
    const int k = ref.negative_count;
    if (k == 0)
        throw precondition_violation("transport_negative_orientation: empty negative space");
    for (int s = 0; s < s_count; ++s) {
        geo::DiscretizedIndexForm form = geo::assemble_index_form(loop.at(s), n_nodes);
        if (s == 0) mass = form.mass;
        if (form.mesh.size() != mesh_size)
            throw contract_violation("transport: loop samples produced different meshes");
        Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(form.h, form.mass);
        int neg = 0;
        while (neg < es.eigenvalues().size() && es.eigenvalues()(neg) < -tol.eps_neg) ++neg;
        if (neg != k)
            throw precondition_violation(
                "transport_negative_orientation: index-not-constant along the loop (" +
                std::to_string(k) + " vs " + std::to_string(neg) + ")");
        bases.push_back(es.eigenvectors().leftCols(k));
    }
    double sign_acc = 1.0;
    double worst = 1.0;
    for (int s = 0; s < s_count; ++s) {
        const MatrixXd& a = bases[static_cast<size_t>(s)];
        const MatrixXd& b = bases[static_cast<size_t>((s + 1) % s_count)];
        MatrixXd pairing = a.transpose() * mass * b;
        Eigen::JacobiSVD<MatrixXd> svd(pairing);
        worst = std::min(worst, svd.singularValues().minCoeff());
        double det = pairing.determinant();
        if (std::abs(det) < 1e-6)
            throw numerical_failure(
                "transport_negative_orientation: refine-sampling, projection nearly singular");
        sign_acc *= det > 0 ? 1.0 : -1.0;
    }
    return {sign_acc > 0 ? +1 : -1, worst, n_nodes};
}

}  // namespace

OrientationTransportResult transport_negative_orientation(const DataLoop& loop,
                                                          const Tolerances& tol, int fem_nodes,
                                                          bool stability_check) {
    LoopSignOutcome first = loop_sign_once(loop, fem_nodes, tol);
    OrientationTransportResult out;
    out.method = TransportMethod::PlainLoop;
    out.sign = first.sign;
    out.loop_samples = loop.size();
    out.fem_nodes = first.nodes;
    out.worst_pairing = first.worst;
    if (stability_check) {
        LoopSignOutcome finer_mesh = loop_sign_once(loop, 2 * first.nodes, tol);
        DataLoop dense = loop.resampled(2 * loop.size(), tol);
        LoopSignOutcome finer_loop = loop_sign_once(dense, fem_nodes, tol);
        if (finer_mesh.sign != first.sign || finer_loop.sign != first.sign)
            throw numerical_failure(
                "transport_negative_orientation: sign unstable under mesh doubling");
    }
    return out;
}

// -------------------------------------------------------------- Deformation

Deformation::Deformation(DataLoop base, Nullhomotopy h, std::function<double(double)> phi,
                         const Tolerances& tol)
    : base_(std::move(base)),
      h_(std::move(h)),
      phi_(std::move(phi)),
      tol_(tol),
      tail_template_(geo::CurvatureProfile::constant_scalar(base_.m(), 1.0, 2 * PI)),
      family_base_(geo::CurvatureProfile::constant_scalar(base_.m(), 1.0, 2 * PI)),
      x0_(MatrixXd::Zero(2 * base_.m(), 2 * base_.m())) {
    const int m = base_.m();
    // tail default: identity values laid out on the realization window mesh,
    // so perturbed and unperturbed slices share one FEM mesh
    std::vector<std::pair<double, MatrixXd>> pieces;
    const double frac[6] = {0.11, 0.17, 0.13, 0.19, 0.23, 0.17};
    for (double fr : frac) pieces.emplace_back(2 * PI * fr, MatrixXd::Identity(m, m));
    tail_template_ = geo::CurvatureProfile::piecewise(m, pieces);
    family_ = geo::realize_candidates(m, family_base_);
}

double Deformation::bump(double tau) const {
    double d = std::min(tau, 1.0 - tau);
    double x = std::clamp(d / 0.25, 0.0, 1.0);
    return x * x * (3 - 2 * x);
}

geo::CurvatureProfile Deformation::tail_at(double, double tau) const {
    double c = eps_ * bump(tau);
    if (std::abs(c) < 1e-15) return tail_template_;
    long long key = llround(c * 1e15);
    auto it = tail_cache_.find(key);
    if (it != tail_cache_.end()) return it->second;
    MatrixXd target = MatrixXd((c * x0_).exp());
    geo::RealizeOptions opts;
    opts.residual_tol = 1e-9;
    geo::RealizeResult res = geo::realize_poincare_from(target, family_base_, family_, opts, tol_);
    tail_cache_.emplace(key, res.profile);
    return res.profile;
}

geo::FormalGeodesic Deformation::data(double s, double tau) const {
    const int m = base_.m();
    double w = phi_(tau);
    geo::FormalGeodesic fg_s = base_.generator()(s);
    geo::CurvatureProfile head = blend_with_identity(fg_s.curvature(), w);
    geo::CurvatureProfile mid =
        geo::CurvatureProfile::constant_scalar(m, 4.0 - 3.0 * tau, 2 * PI);
    geo::CurvatureProfile tail = tail_at(s, tau);
    MatrixXd a = h_(w, s);
    return geo::FormalGeodesic(geo::CurvatureProfile::concat({head, mid, tail}), a);
}

MatrixXd Deformation::poincare(double s, double tau) const {
    geo::FormalGeodesic fg = data(s, tau);
    if (fg.curvature().is_piecewise_constant())
        return geo::poincare_matrix_exp(fg.curvature(), fg.twist());
    return geo::poincare_map(fg, tol_).map.mat();
}

double Deformation::min_imag_at(double tau, int s_grid) const {
    double worst = std::numeric_limits<double>::max();
    for (int i = 0; i < s_grid; ++i) {
        Eigen::VectorXcd ev = spectrum(poincare(double(i) / s_grid, tau));
        worst = std::min(worst, ev.imag().cwiseAbs().minCoeff());
    }
    return worst;
}

MatrixXd Deformation::boundary_closed_form(double s, double tau) const {
    const int m = base_.m();
    geo::FormalGeodesic fg_s = base_.generator()(s);
    double omega = std::sqrt(4.0 - 3.0 * tau);
    double theta = 2 * PI * omega;
    MatrixXd mid = MatrixXd::Zero(2 * m, 2 * m);
    mid.topLeftCorner(m, m) = std::cos(theta) * MatrixXd::Identity(m, m);
    mid.topRightCorner(m, m) = (std::sin(theta) / omega) * MatrixXd::Identity(m, m);
    mid.bottomLeftCorner(m, m) = -omega * std::sin(theta) * MatrixXd::Identity(m, m);
    mid.bottomRightCorner(m, m) = std::cos(theta) * MatrixXd::Identity(m, m);
    MatrixXd da = fg_s.delta_twist();
    MatrixXd ps = geo::poincare_map(fg_s, tol_).map.mat();
    return da.transpose() * mid * da * ps;
}

void Deformation::set_perturbation(const MatrixXd& x0, double eps) {
    x0_ = x0;
    eps_ = eps;
    tail_cache_.clear();
}

double Deformation::perturbation_magnitude() const {
    if (eps_ == 0.0) return 0.0;
    return MatrixXd((eps_ * x0_).exp() - MatrixXd::Identity(x0_.rows(), x0_.cols()))
        .cwiseAbs()
        .maxCoeff();
}

Deformation build_variation(const DataLoop& loop, std::optional<Nullhomotopy> h,
                            const Tolerances& tol) {
    SpinClass cls = loop_spin_class(loop);
    if (!cls.trivial_in_so_m())
        throw precondition_violation(
            "build_variation: not-applicable, holonomy loop is not nullhomotopic");
    Nullhomotopy hom;
    if (h) {
        hom = *h;
    } else {
        // synthesize through the exponential chart when the loop stays inside
        auto gen = loop.generator();
        for (int k = 0; k < loop.size(); ++k) {
            Eigen::VectorXcd ev = loop.at(k).twist().eigenvalues();
            for (int i = 0; i < ev.size(); ++i)
                if (ev(i).real() < -0.98)
                    throw invalid_input(
                        "build_variation: loop leaves the exp chart; supply a nullhomotopy");
        }
        hom = [gen](double u, double s) {
            MatrixXd a = gen(s).twist();
            MatrixXd x = a.log();
            return MatrixXd(((1.0 - u) * x).exp());
        };
    }
    auto phi = [](double tau) {
        double x = std::clamp((tau - 0.15) / 0.7, 0.0, 1.0);
        return x * x * (3 - 2 * x);
    };
    Deformation def(loop, hom, phi, tol);
    for (double band : {1e-3, 0.999}) {
        double min_imag = def.min_imag_at(band, std::max(8, loop.size() / 4));
        if (min_imag <= 1e-3)
            throw numerical_failure(
                "build_variation: boundary certificate failed, eigenvalue within " +
                std::to_string(min_imag) + " of the real axis at tau=" + std::to_string(band));
    }
    return def;
}

Deformation make_generic(Deformation def, Rng& rng, const Tolerances& tol, int s_grid,
                         int tau_grid) {
    const int m = def.m();
    // perturbation directions live in the first-order reachable subspace of
    // the identity-based chart (the tail must stay close to the identity)
    std::vector<geo::CurvatureProfile> cands =
        geo::realize_candidates(m, geo::CurvatureProfile::constant_scalar(m, 1.0, 2 * PI));
    const double fd = 1e-5;
    MatrixXd jac(4 * m * m, static_cast<int>(cands.size()));
    geo::CurvatureProfile base_prof = geo::CurvatureProfile::constant_scalar(m, 1.0, 2 * PI);
    for (size_t k = 0; k < cands.size(); ++k) {
        auto shift = [&](double eps) {
            std::vector<std::pair<double, MatrixXd>> pieces;
            std::vector<double> cuts = cands[k].breakpoints();
            for (size_t i = 0; i + 1 < cuts.size(); ++i) {
                double mid = 0.5 * (cuts[i] + cuts[i + 1]);
                pieces.emplace_back(cuts[i + 1] - cuts[i],
                                    MatrixXd(base_prof.eval(mid) + eps * cands[k].eval(mid)));
            }
            return geo::poincare_matrix_exp(geo::CurvatureProfile::piecewise(m, pieces),
                                            MatrixXd::Identity(m, m));
        };
        MatrixXd dp = (shift(fd) - shift(-fd)) / (2 * fd);
        jac.col(static_cast<int>(k)) = Eigen::Map<VectorXd>(dp.data(), dp.size());
    }

    auto generic_ok = [&]() {
        for (int i = 1; i + 1 < s_grid; ++i)
            for (int j = 1; j + 1 < tau_grid; ++j) {
                MatrixXd p = def.poincare(double(i) / s_grid, double(j) / (tau_grid - 1));
                Eigen::EigenSolver<MatrixXd> es(p);
                for (int e = 0; e < es.eigenvalues().size(); ++e) {
                    std::complex<double> lam = es.eigenvalues()(e);
                    if (std::abs(lam.imag()) > 1e-6 * (1.0 + std::abs(lam))) continue;
                    if (lam.real() <= 0) continue;
                    // positive real eigenvalue: geometric multiplicity must be 1
                    MatrixXd shifted = p - lam.real() * MatrixXd::Identity(2 * m, 2 * m);
                    auto rk = symp::rank_of(shifted, tol, p.cwiseAbs().maxCoeff());
                    if (2 * m - rk.rank >= 2) return false;
                }
            }
        return true;
    };

    for (int round = 0; round < 100; ++round) {
        if (generic_ok()) return def;
        VectorXd r = rng.gaussian_matrix(static_cast<int>(cands.size()), 1);
        VectorXd img = jac * r;
        MatrixXd x0 = Eigen::Map<MatrixXd>(img.data(), 2 * m, 2 * m);
        x0 /= std::max(1e-12, x0.cwiseAbs().maxCoeff());
        def.set_perturbation(x0, 5e-5 * rng.uniform(0.5, 1.9));
        if (def.perturbation_magnitude() > 1e-4)
            def.set_perturbation(x0, 4e-5);
    }
    throw numerical_failure("make_generic: genericity-failed after 100 rounds");
}

// ------------------------------------------------------- modified transport

namespace {

struct TransportState {
    MatrixXd n_basis;  // dof x k, M-orthonormal columns
    std::vector<std::pair<double, VectorXd>> e_lines;
    int sign = +1;

    int k() const { return static_cast<int>(n_basis.cols()); }
    int r() const { return static_cast<int>(e_lines.size()); }
    void flip(long transpositions) {
        if (transpositions % 2 != 0) sign = -sign;
    }
};

struct PointData {
    geo::FormalGeodesic fg;
    geo::DiscretizedIndexForm form;
    Eigen::VectorXd eigenvalues;
    MatrixXd neg_basis;
    std::vector<std::pair<double, VectorXd>> e_pairs;
    MatrixXd p;
};

class ModifiedTransport {
  public:
    ModifiedTransport(const PathData& path, const Tolerances& tol, int fem_nodes)
        : path_(path), tol_(tol) {
        geo::HessianIndex probe =
            geo::discretized_hessian_index(path.at(path.t0), fem_nodes, tol, 1 << 14);
        n_nodes_ = probe.form.nodes();
        geo::HessianIndex probe1 =
            geo::discretized_hessian_index(path.at(path.t1), fem_nodes, tol, 1 << 14);
        n_nodes_ = std::max(n_nodes_, probe1.form.nodes());
        span_ = path.t1 - path.t0;
    }

    OrientationTransportResult run() {
        OrientationTransportResult out;
        out.method = TransportMethod::ModifiedBundle;
        out.fem_nodes = n_nodes_;
        out.loop_samples = path_.grid;

        PointData start = eval(path_.t0, -1);
        TransportState state;
        state.n_basis = start.neg_basis;
        fix_sign(state.n_basis);
        state.e_lines = start.e_pairs;
        for (auto& e : state.e_lines) fix_sign(e.second);
        std::sort(state.e_lines.begin(), state.e_lines.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        double t_prev = path_.t0;
        auto c_prev = sharp_counts(path_.t0);
        for (int g = 1; g < path_.grid; ++g) {
            double t_next = path_.t0 + span_ * g / (path_.grid - 1);
            auto c_next = sharp_counts(t_next);
            double seg_a = t_prev;
            while (c_prev != c_next) {
                double t_star = locate_change(seg_a, t_next, c_prev);
                process_event(state, seg_a, t_star, out.ledger);
                seg_a = t_star + margin();
                c_prev = sharp_counts(seg_a);
            }
            advance(state, t_next);
            t_prev = t_next;
            c_prev = c_next;
        }

        // compare against the deterministic reference at the endpoint
        PointData end = eval(path_.t1, state.k());
        MatrixXd ref = end.neg_basis;
        fix_sign(ref);
        MatrixXd pairing = state.n_basis.transpose() * end.form.mass * ref;
        double det = state.k() > 0 ? pairing.determinant() : 1.0;
        if (state.k() > 0 && std::abs(det) < 1e-8)
            throw numerical_failure("modified_transport: endpoint pairing degenerate");
        if (det < 0) state.sign = -state.sign;
        auto e_ref = end.e_pairs;
        for (auto& e : e_ref) fix_sign(e.second);
        std::sort(e_ref.begin(), e_ref.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        if (e_ref.size() != state.e_lines.size())
            throw contract_violation("modified_transport: endpoint E-dimension mismatch");
        std::vector<int> perm;
        for (const auto& mine : state.e_lines) {
            int best = -1;
            double best_ov = 0.55;
            for (size_t j = 0; j < e_ref.size(); ++j) {
                double ov = std::abs(mine.second.dot(e_ref[j].second));
                if (ov > best_ov) {
                    best_ov = ov;
                    best = static_cast<int>(j);
                }
            }
            if (best < 0) throw numerical_failure("modified_transport: endpoint E-line unmatched");
            if (mine.second.dot(e_ref[static_cast<size_t>(best)].second) < 0)
                state.sign = -state.sign;
            perm.push_back(best);
        }
        long inversions = 0;
        for (size_t a = 0; a < perm.size(); ++a)
            for (size_t b = a + 1; b < perm.size(); ++b)
                if (perm[a] > perm[b]) ++inversions;
        state.flip(inversions);

        out.sign = state.sign;
        out.worst_pairing = worst_pairing_;
        return out;
    }

  private:
    const PathData& path_;
    Tolerances tol_;
    int n_nodes_ = 64;
    double span_ = 1.0;
    double worst_pairing_ = 1.0;

    // margin around an event inside which FEM counts are not trusted: the
    // discretized eigenvalue crossing is smeared by O(h^2)
    double margin() const { return 5e-3 * span_; }

    MatrixXd poincare_of(const geo::FormalGeodesic& fg) const {
        if (fg.curvature().is_piecewise_constant())
            return geo::poincare_matrix_exp(fg.curvature(), fg.twist());
        return geo::poincare_map(fg, tol_).map.mat();
    }

    // sharp P-side counts: real eigenvalues in (0,1) and in (1,inf)
    std::pair<int, int> sharp_counts(double t) const {
        Eigen::VectorXcd sp = spectrum(poincare_of(path_.at(t)));
        int e = 0, u = 0;
        for (int i = 0; i < sp.size(); ++i) {
            if (std::abs(sp(i).imag()) > 1e-6 * (1.0 + std::abs(sp(i)))) continue;
            double lr = sp(i).real();
            if (lr > 1e-9 && lr < 1.0 - 1e-9) ++e;
            if (lr > 1.0 + 1e-9) ++u;
        }
        return {e, u};
    }

    int fem_count(double t) const {
        geo::FormalGeodesic fg = path_.at(t);
        geo::DiscretizedIndexForm form = geo::assemble_index_form(fg, 2 * n_nodes_);
        return geo::count_below(form.h, form.mass, -tol_.eps_neg);
    }

    PointData eval(double t, int expected_k) {
        PointData pd{path_.at(t), {}, {}, {}, {}, {}};
        pd.form = geo::assemble_index_form(pd.fg, n_nodes_);
        Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(pd.form.h, pd.form.mass);
        pd.eigenvalues = es.eigenvalues();
        int neg = 0;
        while (neg < pd.eigenvalues.size() && pd.eigenvalues(neg) < -tol_.eps_neg) ++neg;
        if (expected_k >= 0) {
            if (std::abs(neg - expected_k) > 1)
                throw contract_violation("modified_transport: N-count changed without an event");
            neg = expected_k;
        }
        pd.neg_basis = es.eigenvectors().leftCols(neg);
        pd.p = poincare_of(pd.fg);
        pd.e_pairs = real_unit_interval_eigs(pd.p);
        return pd;
    }

    double locate_change(double a, double b, std::pair<int, int> counts_a) {
        double width_tol = 1e-10 * std::max(1.0, span_);
        while (b - a > width_tol) {
            double mid = 0.5 * (a + b);
            if (sharp_counts(mid) == counts_a)
                a = mid;
            else
                b = mid;
        }
        return 0.5 * (a + b);
    }

    void advance(TransportState& state, double to) {
        PointData pd = eval(to, state.k());
        if (static_cast<int>(pd.e_pairs.size()) != state.r())
            throw contract_violation("modified_transport: E-count changed without an event");
        if (state.k() > 0) {
            MatrixXd pairing = state.n_basis.transpose() * pd.form.mass * pd.neg_basis;
            Eigen::JacobiSVD<MatrixXd> svd(pairing);
            worst_pairing_ = std::min(worst_pairing_, svd.singularValues().minCoeff());
            double det = pairing.determinant();
            if (std::abs(det) < 1e-6)
                throw numerical_failure(
                    "modified_transport: refine-sampling, N-projection nearly singular");
            if (det < 0) state.sign = -state.sign;
            state.n_basis = pd.neg_basis;
        }
        continue_elines(state, pd, 0);
    }

    void continue_elines(TransportState& state, const PointData& pd, int skip_tail) {
        std::vector<bool> used(pd.e_pairs.size(), false);
        size_t n_update = state.e_lines.size() - static_cast<size_t>(skip_tail);
        for (size_t i = 0; i < n_update; ++i) {
            auto& mine = state.e_lines[i];
            int best = -1;
            double best_ov = 0.5;
            for (size_t j = 0; j < pd.e_pairs.size(); ++j) {
                if (used[j]) continue;
                double ov = std::abs(mine.second.dot(pd.e_pairs[j].second));
                if (ov > best_ov) {
                    best_ov = ov;
                    best = static_cast<int>(j);
                }
            }
            if (best < 0) throw numerical_failure("modified_transport: E continuation lost");
            used[static_cast<size_t>(best)] = true;
            VectorXd v = pd.e_pairs[static_cast<size_t>(best)].second;
            if (mine.second.dot(v) < 0) v = -v;
            mine = {pd.e_pairs[static_cast<size_t>(best)].first, v};
        }
    }

    int find_new_eline(const TransportState& state, const PointData& pd) const {
        for (size_t j = 0; j < pd.e_pairs.size(); ++j) {
            bool matched = false;
            for (const auto& mine : state.e_lines)
                if (std::abs(mine.second.dot(pd.e_pairs[j].second)) > 0.5 &&
                    std::abs(mine.first - pd.e_pairs[j].first) < 0.25)
                    matched = true;
            if (!matched) return static_cast<int>(j);
        }
        return -1;
    }

    int find_dying_eline(const TransportState& state) const {
        int idx = -1;
        double best = std::numeric_limits<double>::max();
        for (size_t j = 0; j < state.e_lines.size(); ++j) {
            double d = 1.0 - state.e_lines[j].first;
            if (d < best) {
                best = d;
                idx = static_cast<int>(j);
            }
        }
        return idx;
    }

    // column of pd.neg_basis least represented in the current basis
    int find_new_column(const TransportState& state, const PointData& pd) const {
        MatrixXd overlap = state.n_basis.transpose() * pd.form.mass * pd.neg_basis;
        int idx = -1;
        double least = std::numeric_limits<double>::max();
        for (int j = 0; j < overlap.cols(); ++j) {
            double nrm = overlap.col(j).norm();
            if (nrm < least) {
                least = nrm;
                idx = j;
            }
        }
        return idx;
    }
    int find_dying_column(const TransportState& state, const PointData& pd) const {
        MatrixXd overlap = pd.neg_basis.transpose() * pd.form.mass * state.n_basis;
        int idx = -1;
        double least = std::numeric_limits<double>::max();
        for (int j = 0; j < overlap.cols(); ++j) {
            double nrm = overlap.col(j).norm();
            if (nrm < least) {
                least = nrm;
                idx = j;
            }
        }
        return idx;
    }

    void process_event(TransportState& state, double seg_a, double t_star,
                       TransitionLedger& ledger) {
        const double d = margin();
        double t_before = std::max(seg_a, t_star - d);
        advance(state, t_before);

        auto ce_before = sharp_counts(t_before);
        auto ce_after = sharp_counts(t_star + d);
        int dr = ce_after.first - ce_before.first;
        int dk = fem_count(t_star + d) - fem_count(t_before);

        TransitionEvent ev;
        ev.location = t_star;
        ev.dim_n_before = state.k();
        ev.dim_e_before = state.r();
        ev.dim_n_after = state.k() + dk;
        ev.dim_e_after = state.r() + dr;

        {  // diagnostics at the event point
            geo::FormalGeodesic fg_star = path_.at(t_star);
            geo::DiscretizedIndexForm form = geo::assemble_index_form(fg_star, 2 * n_nodes_);
            Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(form.h, form.mass);
            ev.h_eigenvalue = es.eigenvalues().cwiseAbs().minCoeff();
            Eigen::VectorXcd sp = spectrum(poincare_of(fg_star));
            double gap = std::numeric_limits<double>::max();
            for (int i = 0; i < sp.size(); ++i)
                gap = std::min(gap, std::abs(sp(i) - std::complex<double>(1.0, 0.0)));
            ev.p_gap = gap;
        }

        PointData before = eval(t_before, state.k());
        PointData after = eval(t_star + d, state.k() + dk);

        if (dr == 1 && dk == 1) {
            ev.kind = TransitionEvent::Kind::GainPair;
            int new_col = find_new_column(state, after);
            std::vector<int> old_cols;
            for (int j = 0; j < after.neg_basis.cols(); ++j)
                if (j != new_col) old_cols.push_back(j);
            MatrixXd matched(after.neg_basis.rows(), state.k());
            for (size_t j = 0; j < old_cols.size(); ++j)
                matched.col(static_cast<int>(j)) = after.neg_basis.col(old_cols[j]);
            if (state.k() > 0) {
                MatrixXd pairing = state.n_basis.transpose() * after.form.mass * matched;
                if (pairing.determinant() < 0) state.sign = -state.sign;
            }
            VectorXd n_new = after.neg_basis.col(new_col);
            VectorXd phi_n = boundary_data(after.form, after.fg, n_new);
            phi_n.normalize();
            int e_new = find_new_eline(state, after);
            if (e_new < 0)
                throw model_violation(
                    "modified_transport: H-transition with no paired P-eigenvalue near 1");
            VectorXd v_new = after.e_pairs[static_cast<size_t>(e_new)].second;
            ev.pairing_angle = std::acos(std::min(1.0, std::abs(phi_n.dot(v_new))));
            if (phi_n.dot(v_new) < 0) v_new = -v_new;
            state.flip(state.r());
            MatrixXd grown(after.neg_basis.rows(), state.k() + 1);
            grown.leftCols(state.k()) = matched;
            grown.col(state.k()) = n_new;
            state.n_basis = grown;
            continue_elines(state, after, 0);
            state.e_lines.emplace_back(after.e_pairs[static_cast<size_t>(e_new)].first, v_new);
        } else if (dr == -1 && dk == -1) {
            ev.kind = TransitionEvent::Kind::LosePair;
            int j_n = find_dying_column(state, after);
            int j_e = find_dying_eline(state);
            if (j_e < 0) throw model_violation("modified_transport: N drop with no E partner");
            VectorXd n_dying = state.n_basis.col(j_n);
            VectorXd phi_n = boundary_data(before.form, before.fg, n_dying);
            phi_n.normalize();
            const VectorXd& v_dying = state.e_lines[static_cast<size_t>(j_e)].second;
            ev.pairing_angle = std::acos(std::min(1.0, std::abs(phi_n.dot(v_dying))));
            if (ev.pairing_angle > 2e-3)
                throw model_violation("modified_transport: dying pair not identified (angle " +
                                      std::to_string(ev.pairing_angle) + ")");
            state.flip((state.k() + state.r() - 1) - j_n);
            state.flip((state.r() - 1) - j_e);
            if (phi_n.dot(v_dying) < 0) state.sign = -state.sign;
            MatrixXd shrunk(state.n_basis.rows(), state.k() - 1);
            int c = 0;
            for (int j = 0; j < state.k(); ++j)
                if (j != j_n) shrunk.col(c++) = state.n_basis.col(j);
            state.n_basis = shrunk;
            state.e_lines.erase(state.e_lines.begin() + j_e);
            // advance the reduced state across the event
            if (state.k() > 0) {
                MatrixXd pairing = state.n_basis.transpose() * after.form.mass * after.neg_basis;
                if (pairing.determinant() < 0) state.sign = -state.sign;
                state.n_basis = after.neg_basis;
            } else {
                state.n_basis = after.neg_basis;
            }
            continue_elines(state, after, 0);
        } else if (dr == 1 && dk == -1) {
            ev.kind = TransitionEvent::Kind::TransferToE;
            int j_n = find_dying_column(state, after);
            VectorXd n_dying = state.n_basis.col(j_n);
            VectorXd phi_n = boundary_data(before.form, before.fg, n_dying);
            phi_n.normalize();
            int e_new = find_new_eline(state, after);
            if (e_new < 0)
                throw model_violation("modified_transport: transfer with no new E-line");
            VectorXd v_new = after.e_pairs[static_cast<size_t>(e_new)].second;
            ev.pairing_angle = std::acos(std::min(1.0, std::abs(phi_n.dot(v_new))));
            if (ev.pairing_angle > 2e-3)
                throw model_violation("modified_transport: transferred line not identified");
            if (phi_n.dot(v_new) < 0) v_new = -v_new;
            state.flip((state.k() + state.r() - 1) - j_n);
            MatrixXd shrunk(state.n_basis.rows(), state.k() - 1);
            int c = 0;
            for (int j = 0; j < state.k(); ++j)
                if (j != j_n) shrunk.col(c++) = state.n_basis.col(j);
            state.n_basis = shrunk;
            if (state.k() > 0) {
                MatrixXd pairing = state.n_basis.transpose() * after.form.mass * after.neg_basis;
                if (pairing.determinant() < 0) state.sign = -state.sign;
            }
            state.n_basis = after.neg_basis;
            continue_elines(state, after, 0);
            state.e_lines.emplace_back(after.e_pairs[static_cast<size_t>(e_new)].first, v_new);
        } else if (dr == -1 && dk == 1) {
            ev.kind = TransitionEvent::Kind::TransferToN;
            int j_e = find_dying_eline(state);
            if (j_e < 0) throw model_violation("modified_transport: transfer with no dying E");
            VectorXd v = state.e_lines[static_cast<size_t>(j_e)].second;
            VectorXd x_fem = jacobi_to_fem(after.form, after.fg, v, tol_);
            int new_col = find_new_column(state, after);
            VectorXd b_new = after.neg_basis.col(new_col);
            double ip = x_fem.dot(after.form.mass * b_new) /
                        std::sqrt(x_fem.dot(after.form.mass * x_fem));
            ev.pairing_angle = std::acos(std::min(1.0, std::abs(ip)));
            if (ev.pairing_angle > 2e-3)
                throw model_violation("modified_transport: incoming line not identified");
            state.flip((state.r() - 1) - j_e);
            state.flip(state.r() - 1);
            state.e_lines.erase(state.e_lines.begin() + j_e);
            std::vector<int> old_cols;
            for (int j = 0; j < after.neg_basis.cols(); ++j)
                if (j != new_col) old_cols.push_back(j);
            MatrixXd matched(after.neg_basis.rows(), state.k());
            for (size_t j = 0; j < old_cols.size(); ++j)
                matched.col(static_cast<int>(j)) = after.neg_basis.col(old_cols[j]);
            if (state.k() > 0) {
                MatrixXd pairing = state.n_basis.transpose() * after.form.mass * matched;
                if (pairing.determinant() < 0) state.sign = -state.sign;
            }
            MatrixXd grown(after.neg_basis.rows(), state.k() + 1);
            grown.leftCols(state.k()) = matched;
            grown.col(state.k()) = ip < 0 ? VectorXd(-b_new) : b_new;
            state.n_basis = grown;
            continue_elines(state, after, 0);
        } else if (dr == -2 && dk == 0) {
            ev.kind = TransitionEvent::Kind::Collision;
            std::vector<int> dying;
            for (size_t j = 0; j < state.e_lines.size(); ++j) {
                bool found = false;
                for (const auto& ap : after.e_pairs)
                    if (std::abs(state.e_lines[j].second.dot(ap.second)) > 0.5 &&
                        std::abs(state.e_lines[j].first - ap.first) < 0.25)
                        found = true;
                if (!found) dying.push_back(static_cast<int>(j));
            }
            if (dying.size() != 2)
                throw model_violation("modified_transport: collision without a clean pair");
            int i1 = dying[0], i2 = dying[1];
            double ov = state.e_lines[static_cast<size_t>(i1)].second.dot(
                state.e_lines[static_cast<size_t>(i2)].second);
            ev.pairing_angle = std::acos(std::min(1.0, std::abs(ov)));
            state.flip((state.r() - 1) - i2);
            state.flip((state.r() - 2) - i1);
            if (ov < 0) state.sign = -state.sign;
            state.e_lines.erase(state.e_lines.begin() + i2);
            state.e_lines.erase(state.e_lines.begin() + i1);
            advance(state, t_star + d);
        } else if (dr == 2 && dk == 0) {
            ev.kind = TransitionEvent::Kind::Birth;
            // advance N, continue the existing lines, then append the pair
            if (state.k() > 0) {
                MatrixXd pairing = state.n_basis.transpose() * after.form.mass * after.neg_basis;
                if (pairing.determinant() < 0) state.sign = -state.sign;
            }
            state.n_basis = after.neg_basis;
            continue_elines(state, after, 0);
            std::vector<int> born;
            for (size_t j = 0; j < after.e_pairs.size(); ++j) {
                bool matched = false;
                for (const auto& mine : state.e_lines)
                    if (std::abs(mine.second.dot(after.e_pairs[j].second)) > 0.5 &&
                        std::abs(mine.first - after.e_pairs[j].first) < 0.25)
                        matched = true;
                if (!matched) born.push_back(static_cast<int>(j));
            }
            if (born.size() != 2)
                throw model_violation("modified_transport: birth without a clean pair");
            VectorXd va = after.e_pairs[static_cast<size_t>(born[0])].second;
            VectorXd vb = after.e_pairs[static_cast<size_t>(born[1])].second;
            ev.pairing_angle = std::acos(std::min(1.0, std::abs(va.dot(vb))));
            if (va.dot(vb) < 0) vb = -vb;
            state.e_lines.emplace_back(after.e_pairs[static_cast<size_t>(born[0])].first, va);
            state.e_lines.emplace_back(after.e_pairs[static_cast<size_t>(born[1])].first, vb);
        } else if (dr == 0 && dk == 0) {
            // spectral event away from N + E (e.g. a collision above 1): no-op
            advance(state, t_star + d);
            return;
        } else {
            throw model_violation("modified_transport: unpaired transition (dN=" +
                                  std::to_string(dk) + ", dE=" + std::to_string(dr) + ")");
        }
        ledger.events.push_back(ev);
    }
};

}  // namespace

OrientationTransportResult modified_transport(const PathData& path, const Tolerances& tol,
                                              int fem_nodes) {
    ModifiedTransport mt(path, tol, fem_nodes);
    return mt.run();
}

OrientationTransportResult modified_transport(const Deformation& def, double s, double tau0,
                                              double tau1, const Tolerances& tol, int fem_nodes,
                                              int grid) {
    PathData path;
    path.at = [&def, s](double tau) { return def.data(s, tau); };
    path.t0 = tau0;
    path.t1 = tau1;
    path.grid = grid;
    return modified_transport(path, tol, fem_nodes);
}

SpinClass iterate_orientability_class(const SpinClass& base, int q) {
    if (q < 1) throw invalid_input("iterate_orientability_class: q >= 1");
    SpinClass out;
    out.m = base.m;
    out.winding = base.winding * q;
    out.sign = (q % 2 == 0) ? +1 : base.sign;
    return out;
}

DataLoop iterate_loop(const DataLoop& base, int q, const Tolerances& tol) {
    auto gen = base.generator();
    return DataLoop::make([gen, q](double s) { return geo::iterate(gen(s), q); },
                          base.size() * std::min(q, 2), tol);
}

Exemplar exemplar_nonorientable(int samples, const Tolerances& tol) {
    // the 4x4 quarter-turn pair: rotation by +pi/2 in (e1,f1), -pi/2 in (e2,f2)
    MatrixXd b = MatrixXd::Zero(4, 4);
    b(0, 2) = -1;
    b(1, 3) = 1;
    b(2, 0) = 1;
    b(3, 1) = -1;

    // base with plane rotation classes matching B: frequencies 3/4 and 5/4
    MatrixXd r0 = MatrixXd::Zero(2, 2);
    r0(0, 0) = 0.75 * 0.75;
    r0(1, 1) = 1.25 * 1.25;
    geo::CurvatureProfile base = geo::CurvatureProfile::constant(2, r0, 2 * PI);
    geo::RealizeResult res = [&]() {
        try {
            geo::RealizeOptions opt;
            opt.max_iterations = 80;
            return geo::realize_poincare_from(b, base, geo::realize_family(2, base), opt, tol);
        } catch (const numerical_failure&) {
            return geo::realize_far(b, geo::realize_base_profile(2), 6, {}, tol);
        }
    }();

    geo::CurvatureProfile q_profile = res.profile;
    auto gen = [q_profile](double s) {
        double ang = 2 * PI * s;
        MatrixXd rot(2, 2);
        rot << std::cos(-ang), -std::sin(-ang), std::sin(-ang), std::cos(-ang);
        return geo::FormalGeodesic(q_profile, rot, "exemplar");
    };
    Exemplar ex{DataLoop::make(gen, samples, tol), q_profile, {}};
    ex.w_line = [](double s) {
        VectorXd w(4);
        w << std::sin(-s / 2), std::cos(-s / 2), std::cos(-s / 2), std::sin(-s / 2);
        return w;
    };
    return ex;
}

}  // namespace besse::orient
