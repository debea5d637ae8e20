#include "besse/random_gen.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace besse {

using Eigen::MatrixXd;

MatrixXd Rng::gaussian_matrix(int rows, int cols, double sigma) {
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = normal(sigma);
    return m;
}

MatrixXd Rng::symmetric(int n, double sigma) {
    MatrixXd m = gaussian_matrix(n, n, sigma);
    return 0.5 * (m + m.transpose());
}

MatrixXd Rng::sp_algebra(int m, double sigma) {
    // X = [[A, B], [C, -A^T]] with B, C symmetric
    MatrixXd a = gaussian_matrix(m, m, sigma);
    MatrixXd b = symmetric(m, sigma);
    MatrixXd c = symmetric(m, sigma);
    MatrixXd x(2 * m, 2 * m);
    x << a, b, c, -a.transpose();
    return x;
}

MatrixXd Rng::symplectic(int m, double magnitude) {
    MatrixXd x = sp_algebra(m);
    double norm = x.cwiseAbs().maxCoeff();
    if (norm > 0) x *= magnitude / norm;
    return x.exp();
}

MatrixXd Rng::orthosymplectic(int m) {
    // unitary m x m via complex QR, embedded as [[X, -Y], [Y, X]]
    Eigen::MatrixXcd z(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) z(i, j) = std::complex<double>(normal(), normal());
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(m, m);
    Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < m; ++j) {
        std::complex<double> d = r(j, j);
        if (std::abs(d) > 0) q.col(j) *= d / std::abs(d);
    }
    MatrixXd out(2 * m, 2 * m);
    out.topLeftCorner(m, m) = q.real();
    out.topRightCorner(m, m) = -q.imag();
    out.bottomLeftCorner(m, m) = q.imag();
    out.bottomRightCorner(m, m) = q.real();
    return out;
}

MatrixXd Rng::rotation(int k) {
    if (k == 0) return MatrixXd::Identity(0, 0);
    MatrixXd z = gaussian_matrix(k, k);
    Eigen::HouseholderQR<MatrixXd> qr(z);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(k, k);
    MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < k; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return q;
}

MatrixXd Rng::lagrangian(int m) {
    MatrixXd s = symplectic(m);
    return s.rightCols(m);  // image of the standard Lagrangian 0 + V
}

MatrixXd Rng::symplectic_subspace(int m, int k) {
    MatrixXd s = symplectic(m);
    MatrixXd basis(2 * m, 2 * k);
    basis.leftCols(k) = s.leftCols(k);
    basis.rightCols(k) = s.middleCols(m, k);
    return basis;
}

}  // namespace besse
