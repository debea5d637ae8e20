#pragma once

#include <vector>

#include "besse/formal_geodesic.hpp"

namespace besse::geo {

struct RealizeOptions {
    int max_iterations = 50;
    double residual_tol = 1e-7;
    double fd_step = 1e-6;
    double chart_radius = 0.5;  // ||target - base_map||_inf allowed per solve
};

struct RealizeResult {
    CurvatureProfile profile;
    double residual = 0.0;
    int iterations = 0;
    Eigen::VectorXd coefficients;
};

/// All window-supported symmetric perturbation candidates around a base
/// profile (six incommensurate windows x symmetric basis), without pruning.
std::vector<CurvatureProfile> realize_candidates(int m, const CurvatureProfile& base);

/// The canonical chart family around a base profile: the candidates reduced
/// to h = dim sp(m, omega) members by pivoted QR on the Poincare-map
/// Jacobian at the base point.
std::vector<CurvatureProfile> realize_family(int m, const CurvatureProfile& base);

/// Canonical base: constant staggered-frequency diagonal with P = Id.
CurvatureProfile realize_base_profile(int m);

/// Solve for a profile R~ = base + sum a_i F_i whose Poincare map (with
/// trivial twist) matches the target, by damped Newton on the coefficients.
/// Throws numerical_failure("realization-failed...") when Newton stalls or
/// the target is outside the chart.
RealizeResult realize_poincare(const Eigen::MatrixXd& target, int m,
                               const RealizeOptions& opts = {}, const Tolerances& tol = {});

RealizeResult realize_poincare_from(const Eigen::MatrixXd& target, const CurvatureProfile& base,
                                    const std::vector<CurvatureProfile>& family,
                                    const RealizeOptions& opts = {}, const Tolerances& tol = {});

/// Continuation wrapper for targets far from Id: walks a path in the
/// symplectic group, chaining realize_poincare_from along the way.
RealizeResult realize_far(const Eigen::MatrixXd& target, const CurvatureProfile& base,
                          int steps = 8, const RealizeOptions& opts = {},
                          const Tolerances& tol = {});

}  // namespace besse::geo
