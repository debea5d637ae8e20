#pragma once

#include <vector>

#include <Eigen/Dense>

#include "besse/formal_geodesic.hpp"

namespace besse::geo {

/// Twisted piecewise-linear discretization of the index operator
/// H(X,Y) = int <X',Y'> - <R X, Y> dt on {X : X(T) = A X(0)}. Node T is
/// eliminated against node 0 through the twist, so the DOF count is N*m.
struct DiscretizedIndexForm {
    std::vector<double> mesh;  // node positions 0 = t_0 < ... < t_N = T
    Eigen::MatrixXd h;         // assembled form, (N m) x (N m), symmetric
    Eigen::MatrixXd mass;      // PL mass matrix, same layout, SPD

    int nodes() const { return static_cast<int>(mesh.size()) - 1; }
    int dof() const { return static_cast<int>(h.rows()); }
    double max_spacing() const;

    /// evaluate the PL field with the given coefficient vector at time t
    Eigen::VectorXd eval(const Eigen::VectorXd& coeffs, const Eigen::MatrixXd& twist,
                         double t) const;
    /// derivative of the PL field (piecewise constant)
    Eigen::VectorXd eval_derivative(const Eigen::VectorXd& coeffs, const Eigen::MatrixXd& twist,
                                    double t) const;
};

DiscretizedIndexForm assemble_index_form(const FormalGeodesic& fg, int n_nodes);

struct HessianIndex {
    int negative_count = 0;  // generalized eigenvalues < -eps_neg
    int null_count = 0;      // eigenvalues in (-eps_neg, eps_null)
    double eps_null = 0.0;   // the mesh-dependent kernel threshold used
    std::vector<double> smallest;
    std::vector<int> count_history;  // per refinement level
    Eigen::VectorXd eigenvalues;     // ascending, only when vectors requested
    Eigen::MatrixXd negative_basis;  // dof x negative_count, M-orthonormal
    Eigen::MatrixXd null_basis;
    DiscretizedIndexForm form;
};

/// The independent Morse-index oracle: assemble on N nodes, count eigenvalues
/// below -eps_neg, and double N until the count repeats. Conforming elements
/// approach the spectrum from above, so kernel modes never leak into the
/// negative count.
HessianIndex discretized_hessian_index(const FormalGeodesic& fg, int initial_nodes = 64,
                                       const Tolerances& tol = {}, int max_nodes = 16384,
                                       bool want_vectors = false);

/// Inertia count: number of eigenvalues of the pencil (h, mass) below shift,
/// via a Bunch-Kaufman factorization of h - shift*mass.
int count_below(const Eigen::MatrixXd& h, const Eigen::MatrixXd& mass, double shift);

}  // namespace besse::geo
