#pragma once

#include <cstdint>
#include <vector>

#include "trustnbr/matrix.hpp"
#include "trustnbr/retrieval.hpp"

namespace trustnbr {

/// Symmetric, zero-diagonal, non-negative n x n matrix.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    /// Throws std::invalid_argument unless the invariants hold.
    explicit DistanceMatrix(Matrix entries);

    std::size_t size() const { return entries_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    const Matrix& entries() const { return entries_; }
    bool all_zero() const;

private:
    Matrix entries_;
};

struct Embedding2D {
    Matrix coords;  ///< n x 2, column means 0
    double stress = 0.0;  ///< Kruskal stress-1
    int iterations_used = 0;
    bool converged = false;
    /// Raw stress sum_{i<j} (d_ij - delta_ij)^2 after initialization and after each iteration.
    std::vector<double> raw_stress_history;
};

/// entries(i, j) = dist(items[i], items[j]).
DistanceMatrix pairwise_distances(const std::vector<CaseRef>& items, const DistanceFunction& dist);

/// Metric SMACOF in two dimensions starting from classical (Torgerson) MDS.
Embedding2D mds_embed(const DistanceMatrix& dm, std::uint64_t seed, int max_iter = 300, double eps = 1e-6);

/// sqrt(sum (d_ij - delta_ij)^2 / sum delta_ij^2) over i < j.
double stress(const DistanceMatrix& dm, const Matrix& coords);
double raw_stress(const DistanceMatrix& dm, const Matrix& coords);

}  // namespace trustnbr
