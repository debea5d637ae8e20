#pragma once

#include <vector>

#include <Eigen/Dense>

#include "besse/errors.hpp"

namespace besse::geo {

using Eigen::MatrixXd;

/// One segment of a curvature profile on (t0, t1]. The rule is either a
/// constant symmetric matrix, a matrix polynomial in (t - t0), or a sampled
/// grid with cubic spline interpolation per entry.
struct Segment {
    enum class Kind { Constant, Polynomial, Sampled };

    double t0 = 0.0;
    double t1 = 0.0;
    Kind kind = Kind::Constant;
    std::vector<MatrixXd> coeffs;       // Constant: [R]; Polynomial: R(t) = sum coeffs[k] (t-t0)^k
    std::vector<double> grid;           // Sampled
    std::vector<MatrixXd> samples;      // Sampled
    std::vector<MatrixXd> spline_d2;    // Sampled: precomputed spline curvatures

    MatrixXd eval(double t) const;
    Segment transformed(const MatrixXd& rot, double shift) const;  // rot R rot^T, shifted in t
    void prepare();  // symmetrize values, build splines
};

/// Piecewise rule R: (0, T] -> Sym(m). Jumps at segment boundaries are
/// allowed; values are symmetrized on ingest.
class CurvatureProfile {
  public:
    CurvatureProfile(int m, std::vector<Segment> segments);

    static CurvatureProfile constant(int m, const MatrixXd& value, double length);
    static CurvatureProfile constant_scalar(int m, double value, double length);
    /// pieces given as (duration, value)
    static CurvatureProfile piecewise(int m, const std::vector<std::pair<double, MatrixXd>>& pieces);
    static CurvatureProfile sampled(int m, const std::vector<double>& grid,
                                    const std::vector<MatrixXd>& values);

    int m() const { return m_; }
    double length() const { return segments_.back().t1; }
    const std::vector<Segment>& segments() const { return segments_; }

    MatrixXd eval(double t) const;
    std::vector<double> breakpoints() const;
    bool is_piecewise_constant() const;
    double max_norm() const;  // sup_t ||R(t)||_2, sampled

    /// star concatenation: domains in order, lengths add
    static CurvatureProfile concat(const std::vector<CurvatureProfile>& parts);
    /// pointwise conjugation rot R(t) rot^T with rot orthogonal
    CurvatureProfile conjugated(const MatrixXd& rot) const;

  private:
    int m_;
    std::vector<Segment> segments_;
};

}  // namespace besse::geo
