#include "featurescope/ward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace featurescope {

double ward_update(double d_vs, double d_vt, double d_st, int size_v, int size_s, int size_t_) {
    const double total = static_cast<double>(size_v + size_s + size_t_);
    const double sq = (size_v + size_s) / total * d_vs * d_vs + (size_v + size_t_) / total * d_vt * d_vt -
                      size_v / total * d_st * d_st;
    return std::sqrt(std::max(0.0, sq));
}

Dendrogram ward_linkage(const MatrixD& points) {
    const Eigen::Index n = points.rows();
    if (n < 1) fail(ErrorCode::invalid_argument, "ward: no points");
    if (!points.allFinite()) fail(ErrorCode::data_error, "ward: non-finite coordinates");

    MatrixD dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) dist(i, j) = dist(j, i) = (points.row(i) - points.row(j)).norm();
    }

    // slot i holds cluster ids[i]; merged clusters reuse the slot of the first member
    std::vector<int> ids(static_cast<std::size_t>(n)), sizes(static_cast<std::size_t>(n), 1);
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<Eigen::Index> active(static_cast<std::size_t>(n));
    std::iota(active.begin(), active.end(), 0);

    Dendrogram tree;
    tree.n_leaves = static_cast<int>(n);
    for (int step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index bs = -1, bt = -1;
        std::pair<int, int> best_key{std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const Eigen::Index s = active[a], t = active[b];
                const double d = dist(s, t);
                const int ia = ids[static_cast<std::size_t>(s)], ib = ids[static_cast<std::size_t>(t)];
                const std::pair<int, int> key{std::min(ia, ib), std::max(ia, ib)};
                if (d < best || (d == best && key < best_key)) {
                    best = d;
                    best_key = key;
                    bs = s;
                    bt = t;
                }
            }
        }
        const int ns = sizes[static_cast<std::size_t>(bs)], nt = sizes[static_cast<std::size_t>(bt)];
        for (Eigen::Index v : active) {
            if (v == bs || v == bt) continue;
            const double d = ward_update(dist(v, bs), dist(v, bt), best, sizes[static_cast<std::size_t>(v)], ns, nt);
            dist(v, bs) = dist(bs, v) = d;
        }
        tree.merges.push_back({best_key.first, best_key.second, best, ns + nt});
        ids[static_cast<std::size_t>(bs)] = static_cast<int>(n) + step;
        sizes[static_cast<std::size_t>(bs)] = ns + nt;
        active.erase(std::find(active.begin(), active.end(), bt));
    }
    return tree;
}

std::vector<int> cut_dendrogram(const Dendrogram& tree, int n_clusters) {
    const int n = tree.n_leaves;
    if (n_clusters < 1 || n_clusters > n)
        fail(ErrorCode::invalid_argument, "cut size must lie in [1, n_leaves]", std::to_string(n_clusters));
    if (static_cast<int>(tree.merges.size()) != n - 1) fail(ErrorCode::data_error, "dendrogram is incomplete");

    // union-find over the first n - n_clusters merges
    std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
        return x;
    };
    for (int k = 0; k < n - n_clusters; ++k) {
        const auto& m = tree.merges[static_cast<std::size_t>(k)];
        parent[static_cast<std::size_t>(find(m.first))] = n + k;
        parent[static_cast<std::size_t>(find(m.second))] = n + k;
    }
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::vector<int> root_label(static_cast<std::size_t>(2 * n - 1), -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        const int r = find(i);
        if (root_label[static_cast<std::size_t>(r)] < 0) root_label[static_cast<std::size_t>(r)] = next++;
        labels[static_cast<std::size_t>(i)] = root_label[static_cast<std::size_t>(r)];
    }
    return labels;
}

}  // namespace featurescope
