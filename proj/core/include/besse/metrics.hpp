#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "besse/errors.hpp"

namespace besse::engine {

/// A concrete metric the engine can integrate. Spheres are handled in the
/// ambient embedding; surfaces of revolution in the (theta, phi) chart with
/// g = f(theta)^2 dtheta^2 + sin(theta)^2 dphi^2. The Zoll family uses
/// f = 1 + h(cos theta) with h an odd polynomial, h(1) = 0, |h| < 1.
class MetricSpec {
  public:
    enum class Family { RoundSphere, ZollRevolution, CustomRevolution };

    static MetricSpec round_sphere(int n);
    static MetricSpec zoll(std::vector<double> odd_coeffs);  // h = sum c_k x^{2k+1}
    static MetricSpec custom_revolution(std::function<double(double)> f,
                                        std::function<double(double)> f_prime,
                                        std::string label = "custom");

    Family family() const { return family_; }
    int dim() const { return n_; }
    const std::string& label() const { return label_; }
    const std::vector<double>& zoll_coeffs() const { return h_odd_; }

    bool is_revolution() const { return family_ != Family::RoundSphere; }

    double h(double x) const;        // Zoll profile polynomial
    double h_prime(double x) const;
    double f(double theta) const;        // revolution factor
    double f_theta(double theta) const;  // d f / d theta
    /// Gauss curvature of the revolution surface (regular at the poles)
    double gauss_curvature(double theta) const;

  private:
    MetricSpec() = default;
    Family family_ = Family::RoundSphere;
    int n_ = 2;
    std::vector<double> h_odd_;
    std::function<double(double)> f_custom_, f_prime_custom_;
    std::string label_;
};

}  // namespace besse::engine
