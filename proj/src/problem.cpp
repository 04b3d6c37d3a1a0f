#include "smoothalm/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace smoothalm {

namespace {

// Relative tolerance for deciding that a point sits on the boundary of a set.
constexpr double kBoundaryTol = 1e-12;

std::string shape_mismatch(const char *what, Eigen::Index got, Eigen::Index want) {
    std::ostringstream os;
    os << what << ": dimension " << got << ", expected " << want;
    return os.str();
}

}  // namespace

void check_dim(Eigen::Index got, Eigen::Index want, const char *what) {
    if (got != want)
        throw DimensionError(shape_mismatch(what, got, want));
}

// ---------------------------------------------------------------------------
// AffineConstraint

AffineConstraint::AffineConstraint(Matrix A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() == 0 || A_.cols() == 0)
        throw DimensionError("AffineConstraint: empty matrix");
    check_dim(b_.size(), A_.rows(), "AffineConstraint rhs");
    sigma_max_ = spectral_norm(A_);
}

Vector AffineConstraint::residual(const Vector &x) const {
    check_dim(x.size(), A_.cols(), "residual");
    return A_ * x - b_;
}

Vector residual(const AffineConstraint &con, const Vector &x) { return con.residual(x); }

// ---------------------------------------------------------------------------
// BlockPartition

BlockPartition::BlockPartition(std::vector<Eigen::Index> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty())
        throw std::invalid_argument("BlockPartition: no blocks");
    offsets_.reserve(sizes_.size());
    for (auto s : sizes_) {
        if (s <= 0)
            throw std::invalid_argument("BlockPartition: block sizes must be positive");
        offsets_.push_back(total_);
        total_ += s;
    }
}

// ---------------------------------------------------------------------------
// FeasibleSet

FeasibleSet::FeasibleSet(std::variant<Ball, Box, Product> shape, Eigen::Index dim)
    : shape_(std::move(shape)), dim_(dim) {}

FeasibleSet FeasibleSet::ball(Vector center, double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw std::invalid_argument("Ball: radius must be positive and finite");
    if (center.size() == 0)
        throw DimensionError("Ball: empty center");
    auto dim = center.size();
    return FeasibleSet(Ball{std::move(center), radius}, dim);
}

FeasibleSet FeasibleSet::ball(Eigen::Index dim, double radius) {
    return ball(Vector::Zero(dim), radius);
}

FeasibleSet FeasibleSet::box(Vector lo, Vector hi) {
    check_dim(hi.size(), lo.size(), "Box bounds");
    if (lo.size() == 0)
        throw DimensionError("Box: empty bounds");
    if ((lo.array() > hi.array()).any())
        throw std::invalid_argument("Box: lo must not exceed hi");
    auto dim = lo.size();
    return FeasibleSet(Box{std::move(lo), std::move(hi)}, dim);
}

FeasibleSet FeasibleSet::product(std::vector<FeasibleSet> blocks) {
    if (blocks.empty())
        throw std::invalid_argument("Product: no blocks");
    Eigen::Index dim = 0;
    for (const auto &b : blocks)
        dim += b.dim();
    return FeasibleSet(Product{std::move(blocks)}, dim);
}

BlockPartition FeasibleSet::partition() const {
    if (const auto *prod = std::get_if<Product>(&shape_)) {
        std::vector<Eigen::Index> sizes;
        sizes.reserve(prod->blocks.size());
        for (const auto &b : prod->blocks)
            sizes.push_back(b.dim());
        return BlockPartition(std::move(sizes));
    }
    return BlockPartition({dim_});
}

const FeasibleSet &FeasibleSet::block(std::size_t i) const {
    const auto *prod = std::get_if<Product>(&shape_);
    if (prod == nullptr)
        throw std::logic_error("FeasibleSet::block on a non-product set");
    if (i >= prod->blocks.size())
        throw std::out_of_range("FeasibleSet::block index");
    return prod->blocks[i];
}

Vector FeasibleSet::project(const Vector &v) const {
    check_dim(v.size(), dim_, "project");
    return std::visit(
        [&](const auto &s) -> Vector {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Ball>) {
                Vector d = v - s.center;
                const double nd = d.norm();
                if (nd <= s.radius)
                    return v;
                return s.center + d * (s.radius / nd);
            } else if constexpr (std::is_same_v<S, Box>) {
                return v.cwiseMax(s.lo).cwiseMin(s.hi);
            } else {
                Vector out(v.size());
                Eigen::Index off = 0;
                for (const auto &b : s.blocks) {
                    const Vector seg = v.segment(off, b.dim());
                    out.segment(off, b.dim()) = b.project(seg);
                    off += b.dim();
                }
                return out;
            }
        },
        shape_);
}

bool FeasibleSet::contains(const Vector &x, double tol) const {
    if (x.size() != dim_)
        return false;
    return (project(x) - x).norm() <= tol;
}

Vector FeasibleSet::normal_cone_min_norm(const Vector &x, const Vector &g) const {
    check_dim(x.size(), dim_, "normal_cone_min_norm point");
    check_dim(g.size(), dim_, "normal_cone_min_norm gradient");
    return min_norm_unchecked(snap_to_set(*this, x), g);
}

Vector FeasibleSet::min_norm_unchecked(const Vector &x, const Vector &g) const {
    return std::visit(
        [&](const auto &s) -> Vector {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Ball>) {
                // N(x) = {tau (x - c) : tau >= 0} on the boundary, {0} inside.
                const Vector d = x - s.center;
                const double d2 = d.squaredNorm();
                if (std::sqrt(d2) < s.radius * (1.0 - kBoundaryTol))
                    return g;
                const double tau = std::max(0.0, -g.dot(d) / d2);
                return g + tau * d;
            } else if constexpr (std::is_same_v<S, Box>) {
                // At a lower bound the cone is -e_i * R+, at an upper bound
                // +e_i * R+; a degenerate coordinate (lo == hi) admits both.
                Vector v = g;
                for (Eigen::Index i = 0; i < x.size(); ++i) {
                    const double scale_lo = kBoundaryTol * std::max(1.0, std::abs(s.lo[i]));
                    const double scale_hi = kBoundaryTol * std::max(1.0, std::abs(s.hi[i]));
                    const bool at_lo = x[i] <= s.lo[i] + scale_lo;
                    const bool at_hi = x[i] >= s.hi[i] - scale_hi;
                    if (at_lo && at_hi)
                        v[i] = 0.0;
                    else if (at_lo)
                        v[i] = std::min(g[i], 0.0);
                    else if (at_hi)
                        v[i] = std::max(g[i], 0.0);
                }
                return v;
            } else {
                Vector v(g.size());
                Eigen::Index off = 0;
                for (const auto &b : s.blocks) {
                    v.segment(off, b.dim()) = b.min_norm_unchecked(x.segment(off, b.dim()),
                                                                   g.segment(off, b.dim()));
                    off += b.dim();
                }
                return v;
            }
        },
        shape_);
}

Vector project(const FeasibleSet &set, const Vector &v) { return set.project(v); }

Vector normal_cone_min_norm(const FeasibleSet &set, const Vector &x, const Vector &g) {
    return set.normal_cone_min_norm(x, g);
}

Vector snap_to_set(const FeasibleSet &set, const Vector &x) {
    check_dim(x.size(), set.dim(), "snap_to_set");
    Vector p = set.project(x);
    const double dist = (p - x).norm();
    if (!(dist <= kMembershipTol)) {
        std::ostringstream os;
        os << "point lies outside the feasible set (distance " << dist << ")";
        throw InfeasiblePointError(os.str());
    }
    return p;
}

// ---------------------------------------------------------------------------
// Spectral norm

SpectralNormResult spectral_norm_power(const Matrix &M, const SpectralNormOptions &opts) {
    if (M.rows() == 0 || M.cols() == 0)
        throw DimensionError("spectral_norm: empty matrix");
    if (!(opts.tol > 0.0))
        throw std::invalid_argument("spectral_norm: tol must be positive");

    SpectralNormResult out;
    const Eigen::Index n = M.cols();
    if (M.cwiseAbs().maxCoeff() == 0.0) {
        out.right_vector = Vector::Unit(n, 0);
        return out;
    }

    // Uniform start in [-1, 1]^n drawn from a fixed-seed stream.
    std::mt19937_64 rng(opts.seed);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    v.normalize();

    double lambda = 0.0;
    for (int k = 1; k <= opts.max_iters; ++k) {
        Vector w = M.transpose() * (M * v);
        lambda = v.dot(w);
        const double wn = w.norm();
        out.iterations = k;
        if (wn == 0.0)
            break;
        const double res = (w - lambda * v).norm();
        v = w / wn;
        if (res <= opts.tol * lambda)
            break;
    }
    out.value = (M * v).norm();
    out.right_vector = v;
    return out;
}

double spectral_norm(const Matrix &M, double tol) {
    SpectralNormOptions opts;
    opts.tol = tol;
    return spectral_norm_power(M, opts).value;
}

}  // namespace smoothalm
