#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "besse/curvature_profile.hpp"
#include "besse/symplectic.hpp"
#include "besse/tolerances.hpp"

namespace besse::geo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// The algebraic model of a closed geodesic: a curvature profile R on [0, T]
/// and an orthogonal holonomy twist A. Everything downstream (Jacobi fields,
/// Poincare map, index form) is determined by this pair.
class FormalGeodesic {
  public:
    FormalGeodesic(CurvatureProfile r, MatrixXd a, std::string label = "");

    int m() const { return r_.m(); }
    double period() const { return r_.length(); }
    const CurvatureProfile& curvature() const { return r_; }
    const MatrixXd& twist() const { return a_; }
    const std::string& label() const { return label_; }

    /// diag(A, A), the symplectic embedding of the twist
    MatrixXd delta_twist() const;

  private:
    CurvatureProfile r_;
    MatrixXd a_;
    std::string label_;
};

/// Dense solution path of Y' = [[0, I], [-R(t), 0]] Y. Stores every accepted
/// step with its derivative; values in between come from cubic Hermite
/// interpolation, or from re-integration when full precision is needed.
class JacobiFlow {
  public:
    JacobiFlow(const CurvatureProfile& r, MatrixXd y0, const Tolerances& tol = {});

    MatrixXd at(double t) const;
    MatrixXd at_exact(double t) const;
    const MatrixXd& terminal() const { return nodes_.back().y; }
    double length() const { return nodes_.back().t; }
    int steps() const { return static_cast<int>(nodes_.size()) - 1; }
    const std::vector<double>& node_times() const { return times_; }

    /// max symplectic drift over the stored nodes (only meaningful for the
    /// full 2m x 2m fundamental solution)
    double symplectic_drift() const;

  private:
    struct Node {
        double t;
        MatrixXd y;
        MatrixXd dy;
    };
    const CurvatureProfile* r_;
    std::vector<Node> nodes_;
    std::vector<double> times_;
    Tolerances tol_;
};

/// Solve the Jacobi system from (t0, init) to t1. init = (J(t0), J'(t0)).
VectorXd propagate(const FormalGeodesic& fg, const VectorXd& init, double t0, double t1,
                   const Tolerances& tol = {});

/// Fundamental solution path Phi with Phi(0) = Id; symplecticity of the flow
/// is checked against tol_flow_sp at every stored node.
JacobiFlow fundamental_solution(const FormalGeodesic& fg, const Tolerances& tol = {});

struct PoincareMap {
    symp::SymplecticMatrix map;
    std::string provenance;
    int integrator_steps = 0;
    double flow_drift = 0.0;
};

/// P = diag(A,A)^{-1} Phi(T): the twisted period map of the Jacobi equation.
PoincareMap poincare_map(const FormalGeodesic& fg, const Tolerances& tol = {});

/// Fast path for piecewise-constant profiles: product of matrix exponentials.
MatrixXd poincare_matrix_exp(const CurvatureProfile& r, const MatrixXd& a);

/// Star concatenation of the curvature data with a prescribed total twist.
FormalGeodesic concat(const std::vector<FormalGeodesic>& parts, MatrixXd a_total);

/// The q-iterate: domain [0, qT], lap j carries the conjugated profile and
/// the twist becomes A^q, so that P(c^q) = P(c)^q.
FormalGeodesic iterate(const FormalGeodesic& fg, int q);

}  // namespace besse::geo
