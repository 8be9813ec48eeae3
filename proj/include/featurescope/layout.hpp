#ifndef FEATURESCOPE_LAYOUT_HPP
#define FEATURESCOPE_LAYOUT_HPP

#include "featurescope/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace featurescope {

struct LayoutConfig {
    int n_neighbors = 15;
    double min_dist = 0.3;
    double spread = 1.0;
    int n_epochs = 500;
    double learning_rate = 1.0;
    int negative_sample_rate = 5;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Fits the low-dimensional kernel 1 / (1 + a d^(2b)) to the target curve
/// (1 below min_dist, exp(-(d - min_dist) / spread) above) on 300 points in
/// [0, 3 * spread], by damped Gauss-Newton.
std::pair<double, double> fit_kernel_ab(double spread, double min_dist);

struct KnnGraph {
    std::vector<std::vector<int>> indices;       // per point, ascending distance
    std::vector<std::vector<double>> distances;  // cosine distances
};

/// Exact k nearest neighbours under cosine distance (1 - cos), ties by index.
KnnGraph exact_cosine_knn(const MatrixD& points, int k);

struct FuzzyEdge {
    int head = 0;
    int tail = 0;
    double weight = 0.0;
};

/// Per-point membership strengths exp(-max(0, d - rho_i) / sigma_i) with sigma_i
/// found by bisection so that the strengths sum to log2(k); symmetrized with
/// a + b - ab. Returns both directions of every undirected edge, sorted.
std::vector<FuzzyEdge> fuzzy_simplicial_set(const KnnGraph& knn);

struct LayoutResult {
    MatrixD coordinates;  // n x 2
    double a = 0.0;
    double b = 0.0;
    std::vector<std::string> warnings;
};

/// UMAP-style 2-D layout of the rows of `embeddings` (cosine metric).
/// Bitwise deterministic for a fixed seed.
LayoutResult compute_layout(const MatrixD& embeddings, const LayoutConfig& config);

template <typename Derived>
LayoutResult compute_layout(const Eigen::MatrixBase<Derived>& embeddings, const LayoutConfig& config) {
    return compute_layout(MatrixD(embeddings.template cast<double>()), config);
}

}  // namespace featurescope

#endif
