#include "besse/realize.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace besse::geo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// base + sum a_i family_i, all piecewise constant, on the union mesh
CurvatureProfile combine(const CurvatureProfile& base,
                         const std::vector<CurvatureProfile>& family, const VectorXd& a) {
    const int m = base.m();
    std::vector<double> cuts = base.breakpoints();
    for (const auto& f : family)
        for (double b : f.breakpoints()) cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double x, double y) { return std::abs(x - y) < 1e-12; }),
               cuts.end());
    std::vector<std::pair<double, MatrixXd>> pieces;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        MatrixXd v = base.eval(mid);
        for (size_t k = 0; k < family.size(); ++k) v += a(static_cast<int>(k)) * family[k].eval(mid);
        pieces.emplace_back(cuts[i + 1] - cuts[i], v);
    }
    return CurvatureProfile::piecewise(m, pieces);
}

MatrixXd eval_map(const CurvatureProfile& base, const std::vector<CurvatureProfile>& family,
                  const VectorXd& a, int m) {
    return poincare_matrix_exp(combine(base, family, a), MatrixXd::Identity(m, m));
}

}  // namespace

std::vector<CurvatureProfile> realize_candidates(int m, const CurvatureProfile& base) {
    if (!base.is_piecewise_constant())
        throw invalid_input("realize_candidates: base profile must be piecewise constant");
    const double T = base.length();
    // Six incommensurate windows. Four equal windows lose the cos(2ks)
    // harmonics of the adjoint flow and the Jacobian drops rank.
    const double frac[6] = {0.11, 0.17, 0.13, 0.19, 0.23, 0.17};
    const int windows = 6;
    std::vector<CurvatureProfile> candidates;
    MatrixXd zero = MatrixXd::Zero(m, m);
    for (int w = 0; w < windows; ++w) {
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                MatrixXd s = MatrixXd::Zero(m, m);
                s(i, j) = s(j, i) = 1.0;
                std::vector<std::pair<double, MatrixXd>> pieces;
                for (int v = 0; v < windows; ++v)
                    pieces.emplace_back(T * frac[v], v == w ? s : zero);
                candidates.push_back(CurvatureProfile::piecewise(m, pieces));
            }
    }
    return candidates;
}

std::vector<CurvatureProfile> realize_family(int m, const CurvatureProfile& base) {
    std::vector<CurvatureProfile> candidates = realize_candidates(m, base);
    // reduce to h = dim sp(m, omega) members by pivoted QR on the Jacobian
    const int h = m * (2 * m + 1);
    const int nc = static_cast<int>(candidates.size());
    const double fd = 1e-5;
    MatrixXd jac(4 * m * m, nc);
    for (int k = 0; k < nc; ++k) {
        std::vector<CurvatureProfile> single{candidates[static_cast<size_t>(k)]};
        VectorXd plus = VectorXd::Constant(1, fd), minus = VectorXd::Constant(1, -fd);
        MatrixXd dp = (eval_map(base, single, plus, m) - eval_map(base, single, minus, m)) /
                      (2 * fd);
        jac.col(k) = Eigen::Map<VectorXd>(dp.data(), dp.size());
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(jac);
    qr.setThreshold(1e-6);
    if (qr.rank() < h)
        throw numerical_failure("realize_family: candidate family has rank " +
                                std::to_string(qr.rank()) + " < " + std::to_string(h));
    std::vector<CurvatureProfile> out;
    for (int k = 0; k < h; ++k)
        out.push_back(candidates[static_cast<size_t>(qr.colsPermutation().indices()(k))]);
    return out;
}

RealizeResult realize_poincare_from(const MatrixXd& target, const CurvatureProfile& base,
                                    const std::vector<CurvatureProfile>& family,
                                    const RealizeOptions& opts, const Tolerances& tol) {
    const int m = base.m();
    if (target.rows() != 2 * m || target.cols() != 2 * m)
        throw invalid_input("realize_poincare: target dimension mismatch");
    if (symp::symplectic_defect(target) > tol.tol_sp * 100)
        throw invalid_input("realize_poincare: target is not symplectic");
    const int h = static_cast<int>(family.size());

    VectorXd a = VectorXd::Zero(h);
    auto resid = [&](const VectorXd& coeffs) {
        MatrixXd p = eval_map(base, family, coeffs, m);
        return MatrixXd(p - target);
    };
    MatrixXd f = resid(a);
    double fn = f.cwiseAbs().maxCoeff();
    int it = 0;
    for (; it < opts.max_iterations && fn > opts.residual_tol; ++it) {
        MatrixXd jac(4 * m * m, h);
        for (int k = 0; k < h; ++k) {
            VectorXd ap = a, am = a;
            ap(k) += opts.fd_step;
            am(k) -= opts.fd_step;
            MatrixXd dp = (resid(ap) - resid(am)) / (2 * opts.fd_step);
            jac.col(k) = Eigen::Map<VectorXd>(dp.data(), dp.size());
        }
        VectorXd rhs = -Eigen::Map<VectorXd>(f.data(), f.size());
        VectorXd delta = jac.colPivHouseholderQr().solve(rhs);
        double alpha = 1.0;
        while (alpha > 1e-4) {
            VectorXd trial = a + alpha * delta;
            MatrixXd ft = resid(trial);
            double ftn = ft.cwiseAbs().maxCoeff();
            if (ftn < fn * (1.0 - 0.25 * alpha) || ftn < opts.residual_tol) {
                a = trial;
                f = ft;
                fn = ftn;
                break;
            }
            alpha *= 0.5;
        }
        if (alpha <= 1e-4)
            throw numerical_failure("realization-failed: Newton stalled at residual " +
                                    std::to_string(fn));
    }
    if (fn > opts.residual_tol)
        throw numerical_failure("realization-failed: residual " + std::to_string(fn) + " after " +
                                std::to_string(it) + " iterations");
    RealizeResult out{combine(base, family, a), fn, it, a};
    return out;
}

CurvatureProfile realize_base_profile(int m) {
    // staggered integer frequencies: the Poincare map is still Id, but the
    // adjoint flow separates the planes so the chart has full rank
    MatrixXd r0 = MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) r0(i, i) = double((i + 1) * (i + 1));
    return CurvatureProfile::constant(m, r0, 2 * std::acos(-1.0));
}

RealizeResult realize_poincare(const MatrixXd& target, int m, const RealizeOptions& opts,
                               const Tolerances& tol) {
    CurvatureProfile base = realize_base_profile(m);
    return realize_poincare_from(target, base, realize_family(m, base), opts, tol);
}

RealizeResult realize_far(const MatrixXd& target, const CurvatureProfile& base, int steps,
                          const RealizeOptions& opts, const Tolerances& tol) {
    const int m = base.m();
    const MatrixXd id = MatrixXd::Identity(2 * m, 2 * m);
    MatrixXd p_base = poincare_matrix_exp(base, MatrixXd::Identity(m, m));
    MatrixXd w = target * p_base.inverse();
    MatrixXd y = w.log();
    if (!y.allFinite() || ((y.exp() - w).cwiseAbs().maxCoeff() > 1e-8))
        throw numerical_failure("realize_far: no real logarithm along the path");

    CurvatureProfile step_base = realize_base_profile(m);
    auto family = realize_family(m, step_base);

    std::vector<CurvatureProfile> parts{base};
    MatrixXd p_cur = p_base;
    for (int i = 1; i <= steps; ++i) {
        MatrixXd m_i = (i == steps) ? target : MatrixXd((y * (double(i) / steps)).exp() * p_base);
        MatrixXd g_i = m_i * p_cur.inverse();
        RealizeResult leg = realize_poincare_from(g_i, step_base, family, opts, tol);
        parts.push_back(leg.profile);
        p_cur = poincare_matrix_exp(leg.profile, MatrixXd::Identity(m, m)) * p_cur;
    }
    CurvatureProfile full = CurvatureProfile::concat(parts);
    double resid = (poincare_matrix_exp(full, MatrixXd::Identity(m, m)) - target)
                       .cwiseAbs()
                       .maxCoeff();
    if (resid > opts.residual_tol * 10)
        throw numerical_failure("realize_far: residual " + std::to_string(resid));
    RealizeResult out{full, resid, steps, VectorXd()};
    (void)id;
    return out;
}

}  // namespace besse::geo
