#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "besse/errors.hpp"
#include "besse/tolerances.hpp"

namespace besse::symp {

using Eigen::MatrixXd;
using Eigen::MatrixXcd;
using Eigen::VectorXd;

/// The standard symplectic vector space (V + V, omega) with dim V = m and
/// omega((u1,v1),(u2,v2)) = <u1,v2> - <u2,v1>. Coordinates are (u, v)
/// concatenated, so the Gram matrix is [[0, I], [-I, 0]].
struct SymplecticSpace {
    int m;

    explicit SymplecticSpace(int m_) : m(m_) {
        if (m <= 0) throw invalid_input("SymplecticSpace: m must be positive");
    }

    int dim() const { return 2 * m; }

    MatrixXd gram() const {
        MatrixXd o = MatrixXd::Zero(2 * m, 2 * m);
        o.topRightCorner(m, m) = MatrixXd::Identity(m, m);
        o.bottomLeftCorner(m, m) = -MatrixXd::Identity(m, m);
        return o;
    }

    VectorXd e(int i) const;  // e_1..e_m
    VectorXd f(int i) const;  // f_1..f_m
};

double omega(const SymplecticSpace& sp, const VectorXd& u, const VectorXd& v);

/// Gram matrix of the standard form on R^{2m}, without constructing a space.
MatrixXd standard_omega(int m);

/// max-norm symplectic defect ||P^T O P - O||_inf
double symplectic_defect(const MatrixXd& p);

/// A validated element of Sp(m, omega). Immutable after construction.
class SymplecticMatrix {
  public:
    SymplecticMatrix(MatrixXd p, const Tolerances& tol = {});

    const MatrixXd& mat() const { return p_; }
    double defect() const { return defect_; }
    int m() const { return m_; }
    int dim() const { return 2 * m_; }

  private:
    MatrixXd p_;
    double defect_;
    int m_;
};

struct EigenEntry {
    std::complex<double> value;
    int algebraic = 0;
    int geometric = 0;
    MatrixXcd generalized_basis;  // 2m x algebraic
};

struct EigenReport {
    std::vector<EigenEntry> entries;
    std::vector<double> real_positive;  // eigenvalues in (0, infty)
    bool degraded = false;              // clusters unresolvable at tol_eig

    const EigenEntry* find(std::complex<double> lambda, double tol) const;
};

/// Spectral analysis with symplectic pairing lambda <-> 1/lambda enforced by
/// averaging log-magnitudes before reporting.
EigenReport eigen_structure(const SymplecticMatrix& p, const Tolerances& tol = {});

enum class Stratum { G_interior, G1, G0, NotInSp1 };

struct StratumResult {
    Stratum stratum;
    int kernel_dim = 0;  // dim ker(P - lambda Id)
    bool degraded = false;
};

/// Classification of (P, lambda) against the genericity strata. NotInSp1 wins
/// whenever some positive real eigenvalue of P has geometric multiplicity >= 2.
StratumResult genericity_classify(const SymplecticMatrix& p, double lambda,
                                  const Tolerances& tol = {});

struct BlockForm {
    MatrixXd conjugator;      // symplectic C
    MatrixXd unipotent;       // U: a x a (lambda != 1) or symplectic 2a x 2a (lambda = 1)
    MatrixXd rest;            // R block on the omega-complement, standard coordinates
    MatrixXd block_matrix;    // the full conjugated matrix C^{-1} P C
    double residual = 0.0;    // ||C block C^{-1} - P||_inf
    int algebraic_mult = 0;   // of lambda (for lambda=1 this is dim of the block)
    bool lambda_is_one = false;
};

/// Refined normal form splitting the {lambda, 1/lambda} generalized eigenspace
/// from its omega-complement: C^{-1} P C = diag(lambda U^T, (lambda U)^{-1}, R)
/// for lambda != 1, or diag(U, R) with U symplectic unipotent for lambda = 1.
BlockForm refined_block_form(const SymplecticMatrix& p, double lambda,
                             const Tolerances& tol = {});

double chi(const SymplecticMatrix& p, double lambda);

struct ChiDirection {
    MatrixXd tangent;            // tangent vector at P (ambient matrix coordinates)
    double analytic_derivative;  // lambda*|lambda - 1/lambda|^a for lambda != 1
    int algebraic_mult;
};

/// A tangent direction at P along which d chi(., lambda) > 0, built from the
/// refined block form. For lambda != 1 the direction is normalized so the
/// derivative equals lambda * |lambda - 1/lambda|^a exactly; for lambda = 1
/// only strict positivity is guaranteed.
ChiDirection chi_positive_direction(const SymplecticMatrix& p, double lambda,
                                    const Tolerances& tol = {});

enum class SubspaceKind { Generic, Lagrangian, Symplectic };

/// A subspace of V + V given by a basis (columns). Kind tags are validated on
/// construction: lagrangian means omega|span = 0 and dim = m, symplectic means
/// omega|span nondegenerate.
class Subspace {
  public:
    Subspace(MatrixXd basis, SubspaceKind kind, const Tolerances& tol = {});

    const MatrixXd& basis() const { return basis_; }
    SubspaceKind kind() const { return kind_; }
    int dim() const { return static_cast<int>(basis_.cols()); }

  private:
    MatrixXd basis_;
    SubspaceKind kind_;
};

/// omega-orthogonal complement of the span of the given columns.
MatrixXd omega_complement(const MatrixXd& basis, const Tolerances& tol = {});

/// dim of the intersection of two column spans (exact integer via rank).
int intersection_dim(const MatrixXd& a, const MatrixXd& b, const Tolerances& tol = {});

struct LagSympIdentity {
    int dim_l_cap_kperp;
    int dim_l_cap_k;
    int dim_k;
    bool identity_holds;  // dim(L ^ K-perp) - dim(L ^ K) + dim K == m
};

LagSympIdentity lagrangian_symplectic_identity(const Subspace& l, const Subspace& k,
                                               int m, const Tolerances& tol = {});

/// dim (P - Id)^{-1}(L) for P in the maximal compact subgroup (orthogonal and
/// symplectic); asserts the identity dim K + dim(L ^ K-perp), K = ker(P - Id).
int preimage_dim(const SymplecticMatrix& p, const MatrixXd& l_basis,
                 const Tolerances& tol = {});

/// Rank by singular values: threshold tol_rank_rel * max(sigma_max, hint),
/// with a long double refinement pass when the gap across the cut is marginal.
/// The scale hint keeps near-zero matrices from promoting noise to rank.
struct RankResult {
    int rank = 0;
    bool degraded = false;
};
RankResult rank_of(const MatrixXd& a, const Tolerances& tol = {}, double scale_hint = 0.0);
RankResult rank_of(const MatrixXcd& a, const Tolerances& tol = {}, double scale_hint = 0.0);

/// Orthonormal basis of the kernel (columns), via SVD at the same threshold.
MatrixXd kernel_of(const MatrixXd& a, const Tolerances& tol = {}, double scale_hint = 0.0);
MatrixXcd kernel_of(const MatrixXcd& a, const Tolerances& tol = {}, double scale_hint = 0.0);

}  // namespace besse::symp
