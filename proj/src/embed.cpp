#include "trustnbr/embed.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "trustnbr/error.hpp"
#include "trustnbr/rng.hpp"

namespace trustnbr {

DistanceMatrix::DistanceMatrix(Matrix entries) : entries_(std::move(entries)) {
    const std::size_t n = entries_.rows();
    if (entries_.cols() != n) throw DimensionError("distance matrix must be square");
    for (std::size_t i = 0; i < n; ++i) {
        if (entries_(i, i) != 0.0) throw std::invalid_argument("distance matrix diagonal must be 0");
        for (std::size_t j = 0; j < n; ++j) {
            const double v = entries_(i, j);
            if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("distance matrix entries must be finite and >= 0");
            if (std::abs(v - entries_(j, i)) > 1e-12 * std::max(1.0, v))
                throw std::invalid_argument("distance matrix must be symmetric");
        }
    }
}

bool DistanceMatrix::all_zero() const {
    for (double v : entries_.values())
        if (v != 0.0) return false;
    return true;
}

DistanceMatrix pairwise_distances(const std::vector<CaseRef>& items, const DistanceFunction& dist) {
    if (items.size() < 2) throw std::invalid_argument("pairwise_distances: need at least 2 items");
    const std::size_t n = items.size();
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = dist(items[i], items[j]);
            m(i, j) = d;
            m(j, i) = d;
        }
    }
    return DistanceMatrix(std::move(m));
}

namespace {

double pair_distance(const Matrix& x, std::size_t i, std::size_t j) {
    const double dx = x(i, 0) - x(j, 0);
    const double dy = x(i, 1) - x(j, 1);
    return std::sqrt(dx * dx + dy * dy);
}

// Torgerson scaling: top two eigenpairs of -1/2 J D^2 J.
Matrix classical_mds(const DistanceMatrix& dm) {
    const auto n = static_cast<Eigen::Index>(dm.size());
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = dm(i, j) * dm(i, j);
    const Eigen::VectorXd row_mean = d2.rowwise().mean();
    const double grand_mean = d2.mean();
    Eigen::MatrixXd b(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) b(i, j) = -0.5 * (d2(i, j) - row_mean(i) - row_mean(j) + grand_mean);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
    Matrix coords(static_cast<std::size_t>(n), 2, 0.0);
    for (int c = 0; c < 2 && c < n; ++c) {
        const Eigen::Index k = n - 1 - c;  // eigenvalues ascending
        const double lambda = std::max(0.0, solver.eigenvalues()(k));
        const double s = std::sqrt(lambda);
        for (Eigen::Index i = 0; i < n; ++i) coords(static_cast<std::size_t>(i), c) = solver.eigenvectors()(i, k) * s;
    }
    return coords;
}

void center(Matrix& x) {
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, c);
        mean /= static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) x(i, c) -= mean;
    }
}

double sum_sq_dissimilarity(const DistanceMatrix& dm) {
    double s = 0.0;
    for (std::size_t i = 0; i < dm.size(); ++i)
        for (std::size_t j = i + 1; j < dm.size(); ++j) s += dm(i, j) * dm(i, j);
    return s;
}

// SMACOF cannot separate points that coincide while their target distance is
// positive, so such configurations are perturbed with seeded noise.
void separate_coincident(Matrix& x, const DistanceMatrix& dm, std::uint64_t seed) {
    const double scale = std::sqrt(sum_sq_dissimilarity(dm) / (0.5 * static_cast<double>(dm.size() * (dm.size() - 1))));
    bool degenerate = false;
    for (std::size_t i = 0; i < dm.size() && !degenerate; ++i)
        for (std::size_t j = i + 1; j < dm.size() && !degenerate; ++j)
            degenerate = dm(i, j) > 0.0 && pair_distance(x, i, j) <= 1e-9 * scale;
    if (!degenerate) return;
    Rng rng(seed);
    for (auto& v : x.values()) v += 1e-3 * scale * rng.normal();
}

}  // namespace

double raw_stress(const DistanceMatrix& dm, const Matrix& coords) {
    if (coords.rows() != dm.size() || coords.cols() != 2) throw DimensionError("stress: coords must be n x 2");
    double s = 0.0;
    for (std::size_t i = 0; i < dm.size(); ++i) {
        for (std::size_t j = i + 1; j < dm.size(); ++j) {
            const double r = pair_distance(coords, i, j) - dm(i, j);
            s += r * r;
        }
    }
    return s;
}

double stress(const DistanceMatrix& dm, const Matrix& coords) {
    const double num = raw_stress(dm, coords);
    const double den = sum_sq_dissimilarity(dm);
    // All-zero input: perfect only if the points coincide as well.
    if (den == 0.0) return num == 0.0 ? 0.0 : 1.0;
    return std::sqrt(num / den);
}

Embedding2D mds_embed(const DistanceMatrix& dm, std::uint64_t seed, int max_iter, double eps) {
    const std::size_t n = dm.size();
    if (n < 2) throw std::invalid_argument("mds_embed: need at least 2 points");
    Embedding2D out;
    if (dm.all_zero()) {
        out.coords = Matrix(n, 2, 0.0);
        out.converged = true;
        out.raw_stress_history = {0.0};
        return out;
    }

    Matrix x = classical_mds(dm);
    separate_coincident(x, dm, seed);
    const double tiny = 1e-28 * sum_sq_dissimilarity(dm);

    double current = raw_stress(dm, x);
    out.raw_stress_history.push_back(current);
    out.converged = current <= tiny;

    Matrix b(n, n);
    Matrix next(n, 2);
    for (int it = 0; it < max_iter && !out.converged; ++it) {
        // Guttman transform X <- B(X) X / n
        for (std::size_t i = 0; i < n; ++i) {
            double diag = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double d = pair_distance(x, i, j);
                const double bij = d > 0.0 ? -dm(i, j) / d : 0.0;
                b(i, j) = bij;
                diag -= bij;
            }
            b(i, i) = diag;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double sx = 0.0, sy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                sx += b(i, j) * x(j, 0);
                sy += b(i, j) * x(j, 1);
            }
            next(i, 0) = sx / static_cast<double>(n);
            next(i, 1) = sy / static_cast<double>(n);
        }
        std::swap(x, next);
        const double updated = raw_stress(dm, x);
        out.raw_stress_history.push_back(updated);
        out.iterations_used = it + 1;
        const bool small_change = current - updated < eps * current;
        current = updated;
        if (small_change || current <= tiny) out.converged = true;
    }

    center(x);
    out.coords = std::move(x);
    out.stress = stress(dm, out.coords);
    return out;
}

}  // namespace trustnbr
