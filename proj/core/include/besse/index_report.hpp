#pragma once

#include <vector>

#include "besse/formal_geodesic.hpp"
#include "besse/index_form.hpp"

namespace besse::geo {

struct ConjugatePoint {
    double t;
    int multiplicity;
};

struct ConjugateData {
    std::vector<ConjugatePoint> points;  // interior of (0, T), endpoint excluded
    int ind_omega = 0;                   // sum of multiplicities
};

/// Zeros of det J(t) on (0,T) for the Jacobi block with J(0)=0, J'(0)=Id.
/// Odd-order zeros are found from determinant sign changes, even-order ones
/// from dips of the smallest singular value; ambiguous dips throw rather than
/// guess.
ConjugateData conjugate_points(const FormalGeodesic& fg, const Tolerances& tol = {});

struct ConcavityData {
    int domain_dim = 0;  // dim (P - Id)^{-1}(0 + V)
    int index = 0;       // index of the concavity form on that domain
    int kernel_dim = 0;
};

struct IndexReport {
    int ind_omega = 0;
    std::vector<ConjugatePoint> conjugate_pts;
    int ind_p = 0;
    int ind = 0;
    int nullity = 0;
    int ind0 = 0;
    ConcavityData concavity;
};

/// Full Morse data of a formal geodesic: ind = ind_Omega + ind_P with the
/// boundary correction computed from the concavity form
/// H~(X,Y) = -omega((P-Id)X, Y) on (P-Id)^{-1}(0+V).
IndexReport index_report(const FormalGeodesic& fg, const Tolerances& tol = {});

/// Cross-check an index report against the discretized-Hessian oracle:
/// negative count must equal ind and the near-kernel count must equal the
/// nullity. Throws numerical_failure on disagreement.
void verify_index_report_fem(const FormalGeodesic& fg, const IndexReport& rep,
                             const Tolerances& tol = {}, int initial_nodes = 64);

struct BottIdentity {
    long lhs = 0;
    long rhs = 0;
    bool holds = false;
};

struct BottCheck {
    int q = 0;
    int l = 0;
    BottIdentity iteration;  // ind(c^{q+l}) = ind(c^q) + ind(c^l) + (n-1)
    BottIdentity extended;   // ind0(c^q) = ind0(c^{q-l}) + ind(c^l) + (n-1)
};

/// Verify both iteration identities for a geodesic whose q-iterate is regular
/// (Poincare map of c^q equal to Id within tol_regular). Throws
/// precondition_violation("not-applicable...") if the hypothesis fails.
BottCheck bott_check(const FormalGeodesic& fg, int q, int l, const Tolerances& tol = {});

struct IndexGapBounds {
    int q = 0;
    int k = 0;
    long lhs = 0;
    long rhs = 0;
    bool holds = false;
    bool strict = false;
    bool equality_clause = false;  // k = q+-1 and ind(c) = i(M)
};

/// Evaluate the index-gap inequality for the k-iterate against a regular
/// q-iterate, with the minimal index i_m supplied by the caller.
IndexGapBounds index_gap_bounds(const FormalGeodesic& fg, int q, int k, int i_m,
                                const Tolerances& tol = {});

}  // namespace besse::geo
