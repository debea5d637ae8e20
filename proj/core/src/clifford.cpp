#include "besse/clifford.hpp"

#include <bit>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace besse::orient {

using Eigen::MatrixXd;

namespace {

// sign of e_S * e_T in Cl(0, m): reorder transpositions plus e_i^2 = -1
double clifford_sign(unsigned s, unsigned t) {
    int swaps = 0;
    // count pairs (i in s, j in t) with i > j
    for (unsigned i = 0; i < 32; ++i) {
        if (!(s & (1u << i))) continue;
        unsigned lower = t & ((1u << i) - 1u);
        swaps += std::popcount(lower);
    }
    // moving each element of s past the elements of t below it... the standard
    // formula: sign = (-1)^swaps' with swaps' counting (i in s, j in t, i > j)
    // then each repeated index contributes e_i^2 = -1
    int repeats = std::popcount(s & t);
    int sign_exp = swaps + repeats;
    return (sign_exp % 2 == 0) ? 1.0 : -1.0;
}

}  // namespace

EvenClifford::EvenClifford(int m) : m_(m) {
    if (m < 1 || m > 8) throw invalid_input("EvenClifford: need 1 <= m <= 8");
    mask_to_index_.assign(1u << m, -1);
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
        if (std::popcount(mask) % 2 == 0) {
            mask_to_index_[mask] = static_cast<int>(basis_masks_.size());
            basis_masks_.push_back(mask);
        }
    }
    const int d = dim();
    prod_index_.resize(d, d);
    prod_sign_.resize(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            unsigned s = basis_masks_[a], t = basis_masks_[b];
            prod_index_(a, b) = mask_to_index_[s ^ t];
            prod_sign_(a, b) = clifford_sign(s, t);
        }
}

EvenClifford::Element EvenClifford::one() const {
    Element e = Element::Zero(dim());
    e(0) = 1.0;
    return e;
}

EvenClifford::Element EvenClifford::bivector(const MatrixXd& x) const {
    if (x.rows() != m_ || x.cols() != m_) throw invalid_input("bivector: dimension mismatch");
    double asym = (x + x.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * std::max(1.0, x.cwiseAbs().maxCoeff()))
        throw invalid_input("bivector: matrix is not antisymmetric");
    Element e = Element::Zero(dim());
    for (int i = 0; i < m_; ++i)
        for (int j = i + 1; j < m_; ++j) {
            int idx = mask_to_index_[(1u << i) | (1u << j)];
            e(idx) = 0.5 * x(i, j);
        }
    return e;
}

EvenClifford::Element EvenClifford::multiply(const Element& a, const Element& b) const {
    const int d = dim();
    Element out = Element::Zero(d);
    for (int i = 0; i < d; ++i) {
        if (a(i) == 0.0) continue;
        for (int j = 0; j < d; ++j) {
            if (b(j) == 0.0) continue;
            out(prod_index_(i, j)) += prod_sign_(i, j) * a(i) * b(j);
        }
    }
    return out;
}

EvenClifford::Element EvenClifford::exp(const Element& b) const {
    Element term = one();
    Element sum = term;
    for (int k = 1; k <= 40; ++k) {
        term = multiply(term, b) / double(k);
        sum += term;
        if (term.cwiseAbs().maxCoeff() < 1e-18) break;
    }
    return sum;
}

double EvenClifford::distance_to_center(const Element& a, int& sign_out) const {
    Element plus = a - one(), minus = a + one();
    double dp = plus.norm(), dm = minus.norm();
    sign_out = dp <= dm ? +1 : -1;
    return std::min(dp, dm);
}

SpinClass spin_lift_sign(const std::vector<MatrixXd>& loop, int m) {
    if (loop.size() < 2) throw invalid_input("spin_lift_sign: need at least 2 samples");
    SpinClass out;
    out.m = m;
    if (m <= 1) return out;

    const size_t n = loop.size();
    auto step = [&](size_t k) -> MatrixXd {
        const MatrixXd& a = loop[k % n];
        const MatrixXd& b = loop[(k + 1) % n];
        return a.transpose() * b;
    };

    if (m == 2) {
        double total = 0.0;
        for (size_t k = 0; k < n; ++k) {
            MatrixXd d = step(k);
            double ang = std::atan2(d(1, 0), d(0, 0));
            if (std::abs(ang) >= std::acos(-1.0) / 2)
                throw numerical_failure("spin_lift_sign: refine-sampling, step angle too large");
            total += ang;
        }
        double w = total / (2 * std::acos(-1.0));
        out.winding = static_cast<int>(std::llround(w));
        if (std::abs(w - out.winding) > 1e-6)
            throw numerical_failure("spin_lift_sign: winding did not close to an integer");
        out.sign = (out.winding % 2 == 0) ? +1 : -1;
        return out;
    }

    EvenClifford cl(m);
    EvenClifford::Element lift = cl.one();
    for (size_t k = 0; k < n; ++k) {
        MatrixXd d = step(k);
        MatrixXd x = d.log();
        // rotation angle of the step = largest singular pair of log
        double ang = x.cwiseAbs().maxCoeff() * 2;  // coarse bound
        Eigen::VectorXcd ev = x.eigenvalues();
        double true_ang = ev.imag().cwiseAbs().maxCoeff();
        if (true_ang >= std::acos(-1.0) / 2)
            throw numerical_failure("spin_lift_sign: refine-sampling, step angle " +
                                    std::to_string(true_ang));
        (void)ang;
        lift = cl.multiply(lift, cl.exp(cl.bivector(x)));
    }
    int sign = +1;
    double dist = cl.distance_to_center(lift, sign);
    if (dist > 1e-6)
        throw numerical_failure("spin_lift_sign: terminal lift is " + std::to_string(dist) +
                                " away from the center");
    out.sign = sign;
    out.winding = 0;
    return out;
}

}  // namespace besse::orient
