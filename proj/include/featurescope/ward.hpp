#ifndef FEATURESCOPE_WARD_HPP
#define FEATURESCOPE_WARD_HPP

#include "featurescope/common.hpp"

#include <vector>

namespace featurescope {

/// One agglomeration step. Cluster ids follow the usual linkage convention:
/// leaves are 0..n-1 and the cluster created by step k is n + k.
struct Merge {
    int first = 0;   // smaller id
    int second = 0;  // larger id
    double height = 0.0;
    int size = 0;
};

struct Dendrogram {
    int n_leaves = 0;
    std::vector<Merge> merges;  // n_leaves - 1 entries
};

/// Lance-Williams update for Ward linkage: distance from cluster v to the
/// union u of s and t, given the pre-merge distances and sizes.
double ward_update(double d_vs, double d_vt, double d_st, int size_v, int size_s, int size_t_);

/// Ward agglomeration over Euclidean distances between rows. At every step
/// the closest pair is merged; equal distances go to the pair with the
/// smallest (min id, max id).
Dendrogram ward_linkage(const MatrixD& points);

template <typename Derived>
Dendrogram ward_linkage(const Eigen::MatrixBase<Derived>& points) {
    return ward_linkage(MatrixD(points.template cast<double>()));
}

/// Flat labels from the state of the dendrogram with exactly `n_clusters`
/// clusters left. Labels are 0..n_clusters-1, numbered by smallest member.
std::vector<int> cut_dendrogram(const Dendrogram& tree, int n_clusters);

}  // namespace featurescope

#endif
