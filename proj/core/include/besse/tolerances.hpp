#pragma once

#include <string>

namespace besse {

// Central tolerance profile. Defaults are matched to the double-precision
// ODE/eigen pipelines: rank decisions must come out as crisp integers, so the
// rank threshold is relative and borderline gaps trigger a refinement pass.
struct Tolerances {
    double tol_sp = 1e-9;        // symplectic defect ||P^T O P - O||_inf
    double tol_eig = 1e-7;       // relative eigenvalue clustering / pairing
    double tol_block = 1e-6;     // refined block form round-trip residual
    double tol_rank_rel = 1e-8;  // singular values below tol * sigma_max are zero
    double rank_gap_min = 10.0;  // required sigma ratio across the rank cut

    double ode_rel = 1e-12;      // integrator relative tolerance
    double ode_abs = 1e-14;      // integrator absolute tolerance
    double tol_flow_sp = 1e-9;   // symplecticity drift of the fundamental solution

    double tol_close = 1e-6;     // phase-space closure residual (position+velocity)
    double tol_orth = 1e-8;      // holonomy / frame orthogonality

    double eps_neg = 1e-6;       // discretized eigenvalue < -eps_neg counts negative
    double eps_null_rel = 1e-7;  // relative kernel threshold for small dense forms
    double conj_loc = 1e-10;     // conjugate point localization in t
    double conj_dip = 1e-7;      // sigma_min dip threshold (relative to path scale)
    double conj_guard = 1e-8;    // endpoint exclusion window (relative to T)

    double tol_regular = 1e-6;   // ||P^q - Id|| for the regularity hypothesis
    double delta_realize = 0.5;  // realize_poincare chart radius around Id
    double realize_residual = 1e-7;

    static Tolerances profile(const std::string& name);
};

inline Tolerances Tolerances::profile(const std::string& name) {
    Tolerances t;
    if (name == "strict") {
        t.tol_sp = 1e-10;
        t.tol_eig = 1e-8;
        t.tol_block = 1e-7;
        t.ode_rel = 1e-13;
        t.tol_close = 1e-8;
        t.realize_residual = 1e-9;
    }
    return t;
}

}  // namespace besse
