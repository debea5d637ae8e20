#include "besse/curvature_profile.hpp"

#include <algorithm>
#include <cmath>

namespace besse::geo {

namespace {

void symmetrize_checked(MatrixXd& r) {
    double asym = (r - r.transpose()).cwiseAbs().maxCoeff();
    double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
    if (asym > 1e-9 * scale)
        throw invalid_input("CurvatureProfile: value is not symmetric (asymmetry " +
                            std::to_string(asym) + ")");
    r = 0.5 * (r + r.transpose());
}

// natural cubic spline second derivatives for one scalar channel
std::vector<double> spline_second_derivatives(const std::vector<double>& x,
                                              const std::vector<double>& y) {
    const size_t n = x.size();
    std::vector<double> d2(n, 0.0), u(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i) {
        double sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
        double p = sig * d2[i - 1] + 2.0;
        d2[i] = (sig - 1.0) / p;
        double a = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        u[i] = (6.0 * a / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
    }
    for (size_t i = n - 1; i-- > 1;) d2[i] = d2[i] * d2[i + 1] + u[i];
    d2[0] = d2[n - 1] = 0.0;
    return d2;
}

}  // namespace

void Segment::prepare() {
    for (auto& c : coeffs) symmetrize_checked(c);
    for (auto& s : samples) symmetrize_checked(s);
    if (kind == Kind::Sampled) {
        if (grid.size() != samples.size() || grid.size() < 2)
            throw invalid_input("Segment: sampled rule needs matching grid and >= 2 samples");
        if (!std::is_sorted(grid.begin(), grid.end()))
            throw invalid_input("Segment: sample grid must be increasing");
        const int m = static_cast<int>(samples[0].rows());
        spline_d2.assign(samples.size(), MatrixXd::Zero(m, m));
        std::vector<double> chan(grid.size());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                for (size_t k = 0; k < grid.size(); ++k) chan[k] = samples[k](i, j);
                auto d2 = spline_second_derivatives(grid, chan);
                for (size_t k = 0; k < grid.size(); ++k) spline_d2[k](i, j) = d2[k];
            }
    }
}

MatrixXd Segment::eval(double t) const {
    switch (kind) {
        case Kind::Constant:
            return coeffs[0];
        case Kind::Polynomial: {
            MatrixXd r = MatrixXd::Zero(coeffs[0].rows(), coeffs[0].cols());
            double x = t - t0, p = 1.0;
            for (const auto& c : coeffs) {
                r += p * c;
                p *= x;
            }
            return r;
        }
        case Kind::Sampled: {
            double x = std::clamp(t, grid.front(), grid.back());
            auto it = std::upper_bound(grid.begin(), grid.end(), x);
            size_t hi = std::min<size_t>(
                static_cast<size_t>(std::max<std::ptrdiff_t>(it - grid.begin(), 1)),
                grid.size() - 1);
            size_t lo = hi - 1;
            double h = grid[hi] - grid[lo];
            double a = (grid[hi] - x) / h, b = (x - grid[lo]) / h;
            return a * samples[lo] + b * samples[hi] +
                   ((a * a * a - a) * spline_d2[lo] + (b * b * b - b) * spline_d2[hi]) * (h * h) /
                       6.0;
        }
    }
    throw contract_violation("Segment::eval: unreachable");
}

Segment Segment::transformed(const MatrixXd& rot, double shift) const {
    Segment s = *this;
    s.t0 += shift;
    s.t1 += shift;
    for (auto& c : s.coeffs) c = rot * c * rot.transpose();
    for (auto& v : s.samples) v = rot * v * rot.transpose();
    for (auto& d : s.spline_d2) d = rot * d * rot.transpose();
    if (kind == Kind::Sampled)
        for (auto& g : s.grid) g += shift;
    return s;
}

CurvatureProfile::CurvatureProfile(int m, std::vector<Segment> segments)
    : m_(m), segments_(std::move(segments)) {
    if (m <= 0) throw invalid_input("CurvatureProfile: m must be positive");
    if (segments_.empty()) throw invalid_input("CurvatureProfile: no segments");
    double expect = 0.0;
    for (auto& s : segments_) {
        if (std::abs(s.t0 - expect) > 1e-10 * std::max(1.0, expect))
            throw invalid_input("CurvatureProfile: segments must partition (0, T]");
        if (s.t1 <= s.t0) throw invalid_input("CurvatureProfile: empty segment");
        s.prepare();
        MatrixXd probe = s.eval(0.5 * (s.t0 + s.t1));
        if (probe.rows() != m || probe.cols() != m)
            throw invalid_input("CurvatureProfile: segment dimension mismatch");
        expect = s.t1;
    }
}

CurvatureProfile CurvatureProfile::constant(int m, const MatrixXd& value, double length) {
    Segment s;
    s.t0 = 0.0;
    s.t1 = length;
    s.kind = Segment::Kind::Constant;
    s.coeffs = {value};
    return CurvatureProfile(m, {s});
}

CurvatureProfile CurvatureProfile::constant_scalar(int m, double value, double length) {
    return constant(m, value * MatrixXd::Identity(m, m), length);
}

CurvatureProfile CurvatureProfile::piecewise(
    int m, const std::vector<std::pair<double, MatrixXd>>& pieces) {
    std::vector<Segment> segs;
    double t = 0.0;
    for (const auto& [len, value] : pieces) {
        Segment s;
        s.t0 = t;
        s.t1 = t + len;
        s.kind = Segment::Kind::Constant;
        s.coeffs = {value};
        segs.push_back(std::move(s));
        t += len;
    }
    return CurvatureProfile(m, std::move(segs));
}

CurvatureProfile CurvatureProfile::sampled(int m, const std::vector<double>& grid,
                                           const std::vector<MatrixXd>& values) {
    Segment s;
    s.t0 = grid.front();
    s.t1 = grid.back();
    s.kind = Segment::Kind::Sampled;
    s.grid = grid;
    s.samples = values;
    if (std::abs(s.t0) > 1e-12)
        throw invalid_input("CurvatureProfile::sampled: grid must start at 0");
    return CurvatureProfile(m, {s});
}

MatrixXd CurvatureProfile::eval(double t) const {
    for (const auto& s : segments_)
        if (t <= s.t1 || &s == &segments_.back()) return s.eval(t);
    return segments_.back().eval(t);
}

std::vector<double> CurvatureProfile::breakpoints() const {
    std::vector<double> b{0.0};
    for (const auto& s : segments_) b.push_back(s.t1);
    return b;
}

bool CurvatureProfile::is_piecewise_constant() const {
    return std::all_of(segments_.begin(), segments_.end(),
                       [](const Segment& s) { return s.kind == Segment::Kind::Constant; });
}

double CurvatureProfile::max_norm() const {
    double best = 0.0;
    for (const auto& s : segments_) {
        for (int k = 0; k < 8; ++k) {
            double t = s.t0 + (s.t1 - s.t0) * (k + 0.5) / 8.0;
            best = std::max(best, s.eval(t).operatorNorm());
        }
    }
    return best;
}

CurvatureProfile CurvatureProfile::concat(const std::vector<CurvatureProfile>& parts) {
    if (parts.empty()) throw invalid_input("CurvatureProfile::concat: empty list");
    std::vector<Segment> segs;
    double shift = 0.0;
    const int m = parts.front().m();
    for (const auto& p : parts) {
        if (p.m() != m) throw invalid_input("CurvatureProfile::concat: dimension mismatch");
        for (const auto& s : p.segments())
            segs.push_back(s.transformed(MatrixXd::Identity(m, m), shift));
        shift += p.length();
    }
    return CurvatureProfile(m, std::move(segs));
}

CurvatureProfile CurvatureProfile::conjugated(const MatrixXd& rot) const {
    std::vector<Segment> segs;
    for (const auto& s : segments_) segs.push_back(s.transformed(rot, 0.0));
    return CurvatureProfile(m_, std::move(segs));
}

}  // namespace besse::geo
