#include "besse/index_report.hpp"
#include <functional>

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace besse::geo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double smallest_singular(const MatrixXd& j) {
    Eigen::JacobiSVD<MatrixXd> svd(j);
    return svd.singularValues().minCoeff();
}

double det_of(const MatrixXd& j) { return j.determinant(); }

// ternary search for the minimum of a V-shaped function
double minimize_scalar(const std::function<double(double)>& f, double a, double b, double xtol) {
    double fa = f(a), fb = f(b);
    (void)fa;
    (void)fb;
    while (b - a > xtol) {
        double m1 = a + (b - a) / 3.0;
        double m2 = b - (b - a) / 3.0;
        if (f(m1) <= f(m2))
            b = m2;
        else
            a = m1;
    }
    return 0.5 * (a + b);
}

double bisect_sign_change(const std::function<double(double)>& f, double a, double b,
                          double xtol) {
    double fa = f(a);
    while (b - a > xtol) {
        double mid = 0.5 * (a + b);
        double fm = f(mid);
        if ((fa < 0) == (fm < 0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

ConjugateData conjugate_points(const FormalGeodesic& fg, const Tolerances& tol) {
    const int m = fg.m();
    const double T = fg.period();
    MatrixXd y0 = MatrixXd::Zero(2 * m, m);
    y0.bottomRows(m) = MatrixXd::Identity(m, m);
    JacobiFlow flow(fg.curvature(), y0, tol);

    // Sturm spacing bound: consecutive conjugate times are at least
    // pi / sqrt(max eigenvalue of R) apart; sample well below that.
    const double rmax = std::max(1.0, fg.curvature().max_norm());
    const double stride = std::min(std::acos(-1.0) / (8.0 * std::sqrt(rmax)), T / 256.0);
    const int samples = static_cast<int>(std::ceil(T / stride));

    std::vector<double> ts(samples + 1), sigma(samples + 1), det(samples + 1), smax(samples + 1);
    for (int i = 0; i <= samples; ++i) {
        double t = T * i / samples;
        ts[i] = t;
        MatrixXd j = flow.at(t).topRows(m);
        Eigen::JacobiSVD<MatrixXd> svd(j);
        sigma[i] = svd.singularValues().minCoeff();
        smax[i] = svd.singularValues().maxCoeff();
        det[i] = j.determinant();
    }
    std::vector<double> sorted_smax = smax;
    std::sort(sorted_smax.begin(), sorted_smax.end());
    const double scale = std::max(sorted_smax[sorted_smax.size() / 2], 1e-6);
    const double zero_cut = tol.conj_dip * scale;

    auto j_exact = [&](double t) { return MatrixXd(flow.at_exact(t).topRows(m)); };

    std::vector<double> candidates;
    // determinant sign changes (odd-order zeros)
    for (int i = 1; i <= samples; ++i) {
        if ((det[i - 1] < 0) != (det[i] < 0)) {
            double t = bisect_sign_change([&](double x) { return det_of(j_exact(x)); }, ts[i - 1],
                                          ts[i], tol.conj_loc * std::max(1.0, T));
            candidates.push_back(t);
        }
    }
    // dips of the smallest singular value (even-order zeros)
    for (int i = 1; i < samples; ++i) {
        if (sigma[i] <= sigma[i - 1] && sigma[i] <= sigma[i + 1] && sigma[i] < 0.2 * scale) {
            double t = minimize_scalar([&](double x) { return smallest_singular(j_exact(x)); },
                                       ts[i - 1], ts[i + 1], tol.conj_loc * std::max(1.0, T));
            double dip = smallest_singular(j_exact(t));
            if (dip < zero_cut)
                candidates.push_back(t);
            else if (dip < 10 * zero_cut)
                throw numerical_failure(
                    "conjugate_points: unresolved-conjugate-point near t=" + std::to_string(t) +
                    " (dip " + std::to_string(dip) + ")");
        }
    }

    std::sort(candidates.begin(), candidates.end());
    ConjugateData out;
    const double t_guard = tol.conj_guard * std::max(1.0, T);
    double last = -1.0;
    for (double t : candidates) {
        if (t < t_guard || t > T - t_guard) continue;
        if (last >= 0 && std::abs(t - last) < 1e-7 * std::max(1.0, T)) continue;
        last = t;
        MatrixXd j = j_exact(t);
        Eigen::JacobiSVD<MatrixXd> svd(j);
        VectorXd sv = svd.singularValues();
        int mult = 0;
        for (int i = 0; i < m; ++i)
            if (sv(i) < zero_cut) ++mult;
        if (mult == 0)
            throw numerical_failure("conjugate_points: localized zero lost at t=" +
                                    std::to_string(t));
        // gap audit between the kept and dropped singular values
        if (mult < m) {
            double kept = sv(m - mult - 1);
            double dropped = sv(m - mult);
            if (kept / std::max(dropped, 1e-300) < 1e2)
                throw numerical_failure(
                    "conjugate_points: unresolved multiplicity at t=" + std::to_string(t));
        }
        out.points.push_back({t, mult});
        out.ind_omega += mult;
    }
    return out;
}

IndexReport index_report(const FormalGeodesic& fg, const Tolerances& tol) {
    const int m = fg.m();
    IndexReport rep;
    ConjugateData conj = conjugate_points(fg, tol);
    rep.ind_omega = conj.ind_omega;
    rep.conjugate_pts = conj.points;

    PoincareMap pm = poincare_map(fg, tol);
    const MatrixXd& p = pm.map.mat();
    const double p_scale = p.cwiseAbs().maxCoeff() + 1.0;
    MatrixXd shifted = p - MatrixXd::Identity(2 * m, 2 * m);

    rep.nullity = 2 * m - symp::rank_of(shifted, tol, p_scale).rank;

    // domain D = (P - Id)^{-1}(0 + V): kill the first m coordinates of the image
    MatrixXd top = shifted.topRows(m);
    MatrixXd d_basis = symp::kernel_of(top, tol, p_scale);
    const int d = static_cast<int>(d_basis.cols());
    rep.concavity.domain_dim = d;

    MatrixXd om = symp::standard_omega(m);
    MatrixXd ht = -d_basis.transpose() * shifted.transpose() * om * d_basis;
    double asym = (ht - ht.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * std::max(1.0, ht.cwiseAbs().maxCoeff()))
        throw contract_violation("index_report: concavity form asymmetric by " +
                                 std::to_string(asym));
    ht = 0.5 * (ht + ht.transpose());

    int ht_index = 0, ht_kernel = 0;
    if (d > 0) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(ht);
        double cut = std::max(tol.eps_null_rel * es.eigenvalues().cwiseAbs().maxCoeff(),
                              tol.tol_rank_rel * p_scale);
        for (int i = 0; i < d; ++i) {
            if (es.eigenvalues()(i) < -cut)
                ++ht_index;
            else if (es.eigenvalues()(i) <= cut)
                ++ht_kernel;
        }
    }
    rep.concavity.index = ht_index;
    rep.concavity.kernel_dim = ht_kernel;
    rep.ind_p = ht_index + ht_kernel - rep.nullity;
    rep.ind = rep.ind_omega + rep.ind_p;
    rep.ind0 = rep.ind + rep.nullity;
    return rep;
}

void verify_index_report_fem(const FormalGeodesic& fg, const IndexReport& rep,
                             const Tolerances& tol, int initial_nodes) {
    HessianIndex oracle = discretized_hessian_index(fg, initial_nodes, tol);
    if (oracle.negative_count != rep.ind)
        throw numerical_failure("verify_index_report_fem: oracle index " +
                                std::to_string(oracle.negative_count) + " != report " +
                                std::to_string(rep.ind));
    if (oracle.null_count != rep.nullity)
        throw numerical_failure("verify_index_report_fem: oracle nullity " +
                                std::to_string(oracle.null_count) + " != report " +
                                std::to_string(rep.nullity));
}

BottCheck bott_check(const FormalGeodesic& fg, int q, int l, const Tolerances& tol) {
    if (l <= 0 || l >= q) throw invalid_input("bott_check: need 0 < l < q");
    FormalGeodesic cq = iterate(fg, q);
    MatrixXd pq = poincare_map(cq, tol).map.mat();
    double dist = (pq - MatrixXd::Identity(pq.rows(), pq.cols())).cwiseAbs().maxCoeff();
    if (dist > tol.tol_regular)
        throw precondition_violation("bott_check: not-applicable, ||P(c^q) - Id|| = " +
                                     std::to_string(dist));
    const long n1 = fg.m();
    IndexReport r_q = index_report(cq, tol);
    IndexReport r_l = index_report(iterate(fg, l), tol);
    IndexReport r_ql = index_report(iterate(fg, q + l), tol);
    IndexReport r_qml = index_report(iterate(fg, q - l), tol);

    BottCheck out;
    out.q = q;
    out.l = l;
    out.iteration.lhs = r_ql.ind;
    out.iteration.rhs = r_q.ind + r_l.ind + n1;
    out.iteration.holds = (out.iteration.lhs == out.iteration.rhs);
    out.extended.lhs = r_q.ind0;
    out.extended.rhs = r_qml.ind0 + r_l.ind + n1;
    out.extended.holds = (out.extended.lhs == out.extended.rhs);
    return out;
}

IndexGapBounds index_gap_bounds(const FormalGeodesic& fg, int q, int k, int i_m,
                                const Tolerances& tol) {
    if (k == q || k < 1) throw invalid_input("index_gap_bounds: need k != q, k >= 1");
    FormalGeodesic cq = iterate(fg, q);
    MatrixXd pq = poincare_map(cq, tol).map.mat();
    double dist = (pq - MatrixXd::Identity(pq.rows(), pq.cols())).cwiseAbs().maxCoeff();
    if (dist > tol.tol_regular)
        throw precondition_violation("index_gap_bounds: not-applicable, ||P(c^q) - Id|| = " +
                                     std::to_string(dist));
    const long n1 = fg.m();
    IndexReport r_q = index_report(cq, tol);
    IndexReport r_k = index_report(iterate(fg, k), tol);
    IndexReport r_1 = index_report(fg, tol);

    IndexGapBounds out;
    out.q = q;
    out.k = k;
    if (k > q) {
        out.lhs = r_k.ind;
        out.rhs = r_q.ind + n1 + i_m;
        out.holds = out.lhs >= out.rhs;
        out.strict = out.lhs > out.rhs;
        out.equality_clause = (k == q + 1 && r_1.ind == i_m);
    } else {
        out.lhs = r_k.ind0;
        out.rhs = r_q.ind + n1 - i_m;
        out.holds = out.lhs <= out.rhs;
        out.strict = out.lhs < out.rhs;
        out.equality_clause = (k == q - 1 && r_1.ind == i_m);
    }
    return out;
}

}  // namespace besse::geo
