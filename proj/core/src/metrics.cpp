#include "besse/metrics.hpp"

#include <cmath>

namespace besse::engine {

MetricSpec MetricSpec::round_sphere(int n) {
    if (n < 2) throw invalid_input("round_sphere: need n >= 2");
    MetricSpec m;
    m.family_ = Family::RoundSphere;
    m.n_ = n;
    m.label_ = "round_sphere(" + std::to_string(n) + ")";
    return m;
}

MetricSpec MetricSpec::zoll(std::vector<double> odd_coeffs) {
    MetricSpec m;
    m.family_ = Family::ZollRevolution;
    m.n_ = 2;
    m.h_odd_ = std::move(odd_coeffs);
    m.label_ = "zoll_revolution";
    double h1 = 0.0;
    for (double c : m.h_odd_) h1 += c;
    if (std::abs(h1) > 1e-12) throw invalid_input("zoll: h(1) must vanish");
    // sup bound on [-1,1], dense sampling plus a coefficient-sum margin
    double coef_sum = 0.0;
    for (double c : m.h_odd_) coef_sum += std::abs(c);
    double sup = 0.0;
    for (int i = 0; i <= 2000; ++i) sup = std::max(sup, std::abs(m.h(-1.0 + i * 1e-3)));
    if (sup + 1e-3 * coef_sum >= 1.0)
        throw invalid_input("zoll: |h| must stay below 1 on [-1,1]");
    return m;
}

MetricSpec MetricSpec::custom_revolution(std::function<double(double)> f,
                                         std::function<double(double)> f_prime,
                                         std::string label) {
    MetricSpec m;
    m.family_ = Family::CustomRevolution;
    m.n_ = 2;
    m.f_custom_ = std::move(f);
    m.f_prime_custom_ = std::move(f_prime);
    m.label_ = std::move(label);
    return m;
}

double MetricSpec::h(double x) const {
    double v = 0.0, p = x;
    for (double c : h_odd_) {
        v += c * p;
        p *= x * x;
    }
    return v;
}

double MetricSpec::h_prime(double x) const {
    double v = 0.0, p = 1.0;
    int k = 0;
    for (double c : h_odd_) {
        v += c * (2 * k + 1) * p;
        p *= x * x;
        ++k;
    }
    return v;
}

double MetricSpec::f(double theta) const {
    switch (family_) {
        case Family::RoundSphere:
            return 1.0;
        case Family::ZollRevolution:
            return 1.0 + h(std::cos(theta));
        case Family::CustomRevolution:
            return f_custom_(theta);
    }
    return 1.0;
}

double MetricSpec::f_theta(double theta) const {
    switch (family_) {
        case Family::RoundSphere:
            return 0.0;
        case Family::ZollRevolution:
            return -h_prime(std::cos(theta)) * std::sin(theta);
        case Family::CustomRevolution:
            return f_prime_custom_(theta);
    }
    return 0.0;
}

double MetricSpec::gauss_curvature(double theta) const {
    // K = 1/f^2 - cos(theta) (df/du) / f^3 with u = cos theta; regular at the
    // poles because f_theta carries a sin(theta) factor.
    double ff = f(theta);
    double dfdu;
    if (family_ == Family::ZollRevolution)
        dfdu = h_prime(std::cos(theta));
    else if (family_ == Family::RoundSphere)
        dfdu = 0.0;
    else {
        double s = std::sin(theta);
        if (std::abs(s) < 1e-6) {
            // one-sided estimate away from the pole
            double t2 = theta < 1.5 ? 1e-4 : std::acos(-1.0) - 1e-4;
            s = std::sin(t2);
            return gauss_curvature(t2);
        }
        dfdu = -f_theta(theta) / s;
    }
    return 1.0 / (ff * ff) - std::cos(theta) * dfdu / (ff * ff * ff);
}

}  // namespace besse::engine
