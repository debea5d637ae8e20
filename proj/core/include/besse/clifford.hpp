#pragma once

#include <vector>

#include <Eigen/Dense>

#include "besse/errors.hpp"

namespace besse::orient {

/// Even part of the Clifford algebra of R^m (e_i^2 = -1), dense coefficients
/// over the basis of even-cardinality index subsets. Dimension 2^{m-1},
/// capped at m <= 8. Used as the numerical pi_1(SO(m)) detector: rotations
/// lift through bivector exponentials and a loop lands on +-1.
class EvenClifford {
  public:
    explicit EvenClifford(int m);

    int m() const { return m_; }
    int dim() const { return static_cast<int>(basis_masks_.size()); }

    using Element = Eigen::VectorXd;

    Element one() const;
    Element bivector(const Eigen::MatrixXd& so_element) const;  // tau: so(m) -> spin(m)
    Element multiply(const Element& a, const Element& b) const;
    Element exp(const Element& bivector) const;

    /// coefficient of the scalar basis element
    double scalar_part(const Element& a) const { return a(0); }
    /// distance to the nearest of +-1 (for lift sanity checks)
    double distance_to_center(const Element& a, int& sign_out) const;

  private:
    int m_;
    std::vector<unsigned> basis_masks_;       // even-popcount masks, mask 0 first
    std::vector<int> mask_to_index_;          // 2^m -> basis index or -1
    // product table: index pair -> (result index, sign)
    Eigen::MatrixXi prod_index_;
    Eigen::MatrixXd prod_sign_;
};

struct SpinClass {
    int m = 0;
    int winding = 0;    // pi_1(SO(2)) = Z, only meaningful for m = 2
    int sign = +1;      // stabilized Z_2 class: +1 trivial, -1 nontrivial
    bool trivial_in_so_m() const { return m >= 3 ? sign > 0 : (m == 2 ? winding == 0 : true); }
    bool trivial_stabilized() const { return sign > 0; }
};

/// Lift a discretized loop in SO(m) through the double cover and read the
/// terminal sign. Consecutive samples must stay within rotation angle pi/2
/// (lift safety); the loop must close.
SpinClass spin_lift_sign(const std::vector<Eigen::MatrixXd>& loop, int m);

}  // namespace besse::orient
