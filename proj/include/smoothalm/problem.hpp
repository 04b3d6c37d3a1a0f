#pragma once

// Problem model shared by every solver: a smooth objective oracle, an affine
// equality constraint Ax = b, and a convex feasible set that is only ever
// touched through its Euclidean projection.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace smoothalm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when vector or matrix shapes disagree.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a point that must lie in the feasible set does not.
class InfeasiblePointError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Membership tolerance: points within this distance of the set are snapped
/// onto it by projection before normal-cone computations.
inline constexpr double kMembershipTol = 1e-9;

/// Smooth objective f with an upper bound on the Lipschitz constant of its
/// gradient.
struct ObjectiveOracle {
    Eigen::Index dim = 0;
    std::function<double(const Vector &)> eval;
    std::function<Vector(const Vector &)> grad;
    double lipschitz = 0.0;
};

/// Affine equality constraint Ax = b with a cached spectral norm of A.
class AffineConstraint {
  public:
    AffineConstraint(Matrix A, Vector b);

    const Matrix &A() const { return A_; }
    const Vector &b() const { return b_; }
    double sigma_max() const { return sigma_max_; }
    Eigen::Index rows() const { return A_.rows(); }
    Eigen::Index cols() const { return A_.cols(); }

    /// Ax - b.
    Vector residual(const Vector &x) const;

  private:
    Matrix A_;
    Vector b_;
    double sigma_max_ = 0.0;
};

Vector residual(const AffineConstraint &con, const Vector &x);

/// Contiguous block sizes n_1..n_N and their starting offsets.
class BlockPartition {
  public:
    explicit BlockPartition(std::vector<Eigen::Index> sizes);

    std::size_t count() const { return sizes_.size(); }
    Eigen::Index size(std::size_t i) const { return sizes_.at(i); }
    Eigen::Index offset(std::size_t i) const { return offsets_.at(i); }
    Eigen::Index total() const { return total_; }
    const std::vector<Eigen::Index> &sizes() const { return sizes_; }

  private:
    std::vector<Eigen::Index> sizes_;
    std::vector<Eigen::Index> offsets_;
    Eigen::Index total_ = 0;
};

class FeasibleSet;

/// Euclidean ball {x : ||x - center|| <= radius}.
struct Ball {
    Vector center;
    double radius = 1.0;
};

/// Axis-aligned box lo <= x <= hi.
struct Box {
    Vector lo;
    Vector hi;
};

/// Cartesian product of sets over consecutive coordinate blocks.
struct Product {
    std::vector<FeasibleSet> blocks;
};

/// Closed convex set represented by its projection operator.
class FeasibleSet {
  public:
    static FeasibleSet ball(Vector center, double radius);
    static FeasibleSet ball(Eigen::Index dim, double radius);
    static FeasibleSet box(Vector lo, Vector hi);
    static FeasibleSet product(std::vector<FeasibleSet> blocks);

    Eigen::Index dim() const { return dim_; }
    bool is_product() const { return std::holds_alternative<Product>(shape_); }
    const std::variant<Ball, Box, Product> &shape() const { return shape_; }

    /// Block structure of a Product set; a single block for the other shapes.
    BlockPartition partition() const;
    /// The i-th factor of a Product set. Throws for non-product sets.
    const FeasibleSet &block(std::size_t i) const;

    Vector project(const Vector &v) const;
    bool contains(const Vector &x, double tol = kMembershipTol) const;

    /// Minimal-norm element of g + N(x), N the normal cone of the set at x.
    Vector normal_cone_min_norm(const Vector &x, const Vector &g) const;

  private:
    FeasibleSet(std::variant<Ball, Box, Product> shape, Eigen::Index dim);

    Vector min_norm_unchecked(const Vector &x, const Vector &g) const;

    std::variant<Ball, Box, Product> shape_;
    Eigen::Index dim_ = 0;
};

Vector project(const FeasibleSet &set, const Vector &v);
Vector normal_cone_min_norm(const FeasibleSet &set, const Vector &x, const Vector &g);

/// Projects x onto the set if it lies within kMembershipTol of it; throws
/// InfeasiblePointError otherwise.
Vector snap_to_set(const FeasibleSet &set, const Vector &x);

struct SpectralNormOptions {
    double tol = 1e-10;
    int max_iters = 10000;
    std::uint64_t seed = 0x5eed5eedULL;
};

struct SpectralNormResult {
    double value = 0.0;
    Vector right_vector;  ///< unit v with ||Mv|| = value (witness)
    int iterations = 0;
};

/// Largest singular value by power iteration on M^T M from a seeded start.
SpectralNormResult spectral_norm_power(const Matrix &M, const SpectralNormOptions &opts = {});
double spectral_norm(const Matrix &M, double tol = 1e-10);

void check_dim(Eigen::Index got, Eigen::Index want, const char *what);

}  // namespace smoothalm
