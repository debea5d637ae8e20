#include "besse/index_form.hpp"

#include <algorithm>
#include <cmath>

#include <lapacke.h>

namespace besse::geo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double DiscretizedIndexForm::max_spacing() const {
    double h = 0.0;
    for (size_t i = 0; i + 1 < mesh.size(); ++i) h = std::max(h, mesh[i + 1] - mesh[i]);
    return h;
}

namespace {

// 3-point Gauss-Legendre on [0,1]
constexpr double kGaussX[3] = {0.1127016653792583, 0.5, 0.8872983346207417};
constexpr double kGaussW[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

std::vector<double> build_mesh(const CurvatureProfile& r, int n_nodes) {
    const double T = r.length();
    const double target = T / n_nodes;
    std::vector<double> mesh{0.0};
    auto bp = r.breakpoints();
    for (size_t i = 0; i + 1 < bp.size(); ++i) {
        double len = bp[i + 1] - bp[i];
        int k = std::max(1, static_cast<int>(std::ceil(len / target)));
        for (int j = 1; j <= k; ++j) mesh.push_back(bp[i] + len * j / k);
    }
    return mesh;
}

}  // namespace

VectorXd DiscretizedIndexForm::eval(const VectorXd& coeffs, const MatrixXd& twist,
                                    double t) const {
    const int n = nodes();
    const int m = static_cast<int>(twist.rows());
    auto node_value = [&](int i) -> VectorXd {
        if (i == n) return twist * coeffs.segment(0, m);
        return coeffs.segment(i * m, m);
    };
    auto it = std::upper_bound(mesh.begin(), mesh.end(), t);
    int hi = std::clamp(static_cast<int>(it - mesh.begin()), 1, n);
    int lo = hi - 1;
    double h = mesh[hi] - mesh[lo];
    double s = (t - mesh[lo]) / h;
    return (1 - s) * node_value(lo) + s * node_value(hi);
}

VectorXd DiscretizedIndexForm::eval_derivative(const VectorXd& coeffs, const MatrixXd& twist,
                                               double t) const {
    const int n = nodes();
    const int m = static_cast<int>(twist.rows());
    auto node_value = [&](int i) -> VectorXd {
        if (i == n) return twist * coeffs.segment(0, m);
        return coeffs.segment(i * m, m);
    };
    auto it = std::upper_bound(mesh.begin(), mesh.end(), t);
    int hi = std::clamp(static_cast<int>(it - mesh.begin()), 1, n);
    int lo = hi - 1;
    double h = mesh[hi] - mesh[lo];
    return (node_value(hi) - node_value(lo)) / h;
}

DiscretizedIndexForm assemble_index_form(const FormalGeodesic& fg, int n_nodes) {
    const int m = fg.m();
    const CurvatureProfile& r = fg.curvature();
    DiscretizedIndexForm out;
    out.mesh = build_mesh(r, n_nodes);
    const int n = out.nodes();
    const int dof = n * m;
    out.h = MatrixXd::Zero(dof, dof);
    out.mass = MatrixXd::Zero(dof, dof);
    const MatrixXd& a = fg.twist();
    const MatrixXd id = MatrixXd::Identity(m, m);

    // element contribution in (left,right) block form, transformed for the
    // wrap-around element where right = A * node0
    auto scatter = [&](int elem, const MatrixXd& e11, const MatrixXd& e12, const MatrixXd& e21,
                       const MatrixXd& e22, MatrixXd& target) {
        int i = elem;      // left node
        int j = elem + 1;  // right node, possibly the twisted wrap
        bool wrap = (j == n);
        MatrixXd b11 = e11, b12 = e12, b21 = e21, b22 = e22;
        int jj = wrap ? 0 : j;
        if (wrap) {
            b12 = e12 * a;
            b21 = a.transpose() * e21;
            b22 = a.transpose() * e22 * a;
        }
        target.block(i * m, i * m, m, m) += b11;
        target.block(i * m, jj * m, m, m) += b12;
        target.block(jj * m, i * m, m, m) += b21;
        target.block(jj * m, jj * m, m, m) += b22;
    };

    for (int e = 0; e < n; ++e) {
        double t0 = out.mesh[e], t1 = out.mesh[e + 1];
        double h = t1 - t0;
        // stiffness: int X'.Y'
        scatter(e, id / h, -id / h, -id / h, id / h, out.h);
        // curvature and mass by quadrature
        MatrixXd c11 = MatrixXd::Zero(m, m), c12 = c11, c22 = c11;
        for (int g = 0; g < 3; ++g) {
            double s = kGaussX[g];
            double w = kGaussW[g] * h;
            MatrixXd rt = r.eval(t0 + s * h);
            c11 += w * (1 - s) * (1 - s) * rt;
            c12 += w * (1 - s) * s * rt;
            c22 += w * s * s * rt;
        }
        scatter(e, -c11, -c12, -c12.transpose(), -c22, out.h);
        scatter(e, (h / 3) * id, (h / 6) * id, (h / 6) * id, (h / 3) * id, out.mass);
    }
    double asym = (out.h - out.h.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, out.h.cwiseAbs().maxCoeff()))
        throw contract_violation("assemble_index_form: assembled matrix not symmetric");
    out.h = 0.5 * (out.h + out.h.transpose());
    out.mass = 0.5 * (out.mass + out.mass.transpose());
    return out;
}

int count_below(const MatrixXd& h, const MatrixXd& mass, double shift) {
    MatrixXd a = h - shift * mass;
    const lapack_int n = static_cast<lapack_int>(a.rows());
    std::vector<lapack_int> ipiv(n);
    lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, a.data(), n, ipiv.data());
    if (info < 0) throw numerical_failure("count_below: dsytrf failed");
    int neg = 0;
    for (lapack_int k = 0; k < n;) {
        if (ipiv[k] > 0) {
            if (a(k, k) < 0) ++neg;
            ++k;
        } else {
            // 2x2 pivot blocks from Bunch-Kaufman are indefinite: one negative
            ++neg;
            k += 2;
        }
    }
    return neg;
}

HessianIndex discretized_hessian_index(const FormalGeodesic& fg, int initial_nodes,
                                       const Tolerances& tol, int max_nodes, bool want_vectors) {
    HessianIndex out;
    const double max_r = fg.curvature().max_norm();
    int n = initial_nodes;
    int prev = -1;
    DiscretizedIndexForm form;
    bool converged = false;
    while (n <= max_nodes) {
        form = assemble_index_form(fg, n);
        int count = count_below(form.h, form.mass, -tol.eps_neg);
        out.count_history.push_back(count);
        if (count == prev) {
            converged = true;
            break;
        }
        prev = count;
        n *= 2;
    }
    if (!converged)
        throw numerical_failure("discretized_hessian_index: oracle-failed, no convergence by N=" +
                                std::to_string(max_nodes));
    out.negative_count = prev;
    double hmax = form.max_spacing();
    out.eps_null = std::max(1e-9, hmax * hmax * (0.5 + max_r * max_r));
    out.null_count = count_below(form.h, form.mass, out.eps_null) - out.negative_count;

    if (want_vectors) {
        Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(form.h, form.mass);
        if (es.info() != Eigen::Success)
            throw numerical_failure("discretized_hessian_index: eigensolver failed");
        out.eigenvalues = es.eigenvalues();
        out.negative_basis = es.eigenvectors().leftCols(out.negative_count);
        out.null_basis = es.eigenvectors().middleCols(out.negative_count, out.null_count);
        for (int i = 0; i < std::min<int>(out.negative_count + out.null_count + 3,
                                          static_cast<int>(out.eigenvalues.size()));
             ++i)
            out.smallest.push_back(out.eigenvalues(i));
    }
    out.form = std::move(form);
    return out;
}

}  // namespace besse::geo
