#pragma once

#include <random>

#include <Eigen/Dense>

namespace besse {

// Deterministic randomized-suite helpers. Every suite takes an explicit seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double a, double b) {
        return std::uniform_real_distribution<double>(a, b)(gen_);
    }
    double normal(double sigma = 1.0) {
        return std::normal_distribution<double>(0.0, sigma)(gen_);
    }
    int uniform_int(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen_); }
    std::mt19937_64& engine() { return gen_; }

    Eigen::MatrixXd gaussian_matrix(int rows, int cols, double sigma = 1.0);
    Eigen::MatrixXd symmetric(int n, double sigma = 1.0);

    /// random element of the symplectic Lie algebra sp(2m)
    Eigen::MatrixXd sp_algebra(int m, double sigma = 1.0);
    /// exp of a random sp element, scaled so ||X|| ~ magnitude
    Eigen::MatrixXd symplectic(int m, double magnitude = 1.0);
    /// random element of the maximal compact U(m) < Sp(2m) (orthosymplectic)
    Eigen::MatrixXd orthosymplectic(int m);
    /// random rotation in SO(k)
    Eigen::MatrixXd rotation(int k);
    /// random Lagrangian subspace of (V+V, omega), as 2m x m basis columns
    Eigen::MatrixXd lagrangian(int m);
    /// random symplectic subspace of dim 2k, as 2m x 2k basis columns
    Eigen::MatrixXd symplectic_subspace(int m, int k);

  private:
    std::mt19937_64 gen_;
};

}  // namespace besse
