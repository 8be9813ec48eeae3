#ifndef FEATURESCOPE_ATLAS_HPP
#define FEATURESCOPE_ATLAS_HPP

#include "featurescope/colors.hpp"
#include "featurescope/common.hpp"
#include "featurescope/topics.hpp"
#include "featurescope/ward.hpp"

#include <array>
#include <string>
#include <vector>

namespace featurescope {

inline const std::vector<int> kDefaultLevelSizes = {10, 30, 90};

struct ClusterNode {
    int id = 0;
    int level = 0;
    int parent = -1;  // node id one level up, -1 at the top
    std::vector<int> members;  // feature ids, ascending
    std::array<double, 2> centroid{0.0, 0.0};  // in layout coordinates
    std::vector<TopicTerm> topics;
    HslColor color;
};

/// Nested partitions of the features obtained by cutting one Ward dendrogram
/// at each level size. Node ids run level by level; within a level, nodes are
/// numbered by their smallest member.
struct ClusterTree {
    int n_features = 0;
    std::vector<int> level_sizes;
    std::vector<ClusterNode> nodes;
    std::vector<std::vector<int>> assignment;  // [level][feature] -> node id
    std::vector<bool> color_fallback;          // per level
    std::vector<std::string> warnings;

    int n_levels() const { return static_cast<int>(level_sizes.size()); }
    std::vector<int> level_nodes(int level) const;
    const ClusterNode& node(int id) const;
    std::vector<int> children(int id) const;

    /// Throws data_error unless every level partitions all features and each
    /// level refines the one above it.
    void check_nesting() const;
};

/// Clamps every level size to `n` (recording a warning when clamping).
std::vector<int> clamp_level_sizes(const std::vector<int>& sizes, int n, std::vector<std::string>& warnings);

/// Ward clustering of the embedding rows, cut at each level size.
ClusterTree build_cluster_tree(const MatrixD& embeddings, const std::vector<int>& level_sizes = kDefaultLevelSizes);

/// Mean layout position of each node's members.
void set_centroids(ClusterTree& tree, const MatrixD& coordinates);

/// c-TF-IDF topics per level, computed among the clusters of that level.
void set_topics(ClusterTree& tree, const std::vector<std::string>& explanations,
                const StopWords& stop_words = bundled_stop_words(), int top_n = 5);

struct ColorConfig {
    double tau = 0.15;
    double delta_h = 0.05;           // child hue offset range [-delta_h, delta_h]
    double lightness_offset = 0.12;  // sibling lightness offsets
    double saturation_offset = 0.12;
    double base_saturation = 0.6;
    double base_lightness = 0.5;
    int candidates = 64;  // per node and attempt
    int restarts = 24;    // per level before the fallback
    int repair_rounds = 400;  // closest-pair moves after the greedy pass
    std::uint64_t seed = 7;
};

/// Top level: evenly spaced hues (seeded rotation), varied saturation and
/// lightness. Lower levels: hue = (parent hue + dh) mod 1 with seeded dh,
/// saturation and lightness offset from the parent. Every same-level pair
/// is kept more than tau apart; a level for which no such palette is found
/// gets a deterministic golden-ratio spacing inside the parent's hue band
/// and its `color_fallback` flag set.
void assign_colors(ClusterTree& tree, const ColorConfig& config = {});

enum class Zoom { far, mid, near };

Zoom parse_zoom(const std::string& name);
const char* to_string(Zoom zoom);
int zoom_index(Zoom zoom);

struct HexCell {
    int q = 0;  // axial coordinates, pointy-top
    int r = 0;
    double x = 0.0;  // cell centre
    double y = 0.0;
    int count = 0;
    int cluster = -1;  // plurality node id at the zoom's level
    HslColor color;
    std::vector<int> members;
};

struct HexBinLevel {
    Zoom zoom = Zoom::far;
    int cluster_level = 0;
    double cell_size = 1.0;  // centre-to-corner radius
    std::vector<HexCell> cells;  // sorted by (r, q)
};

/// Cell radius for a zoom level: the larger layout extent divided by
/// 8, 16 or 32.
double default_cell_size(const MatrixD& coordinates, Zoom zoom);

/// Axial (q, r) of the pointy-top hexagon of radius `size` holding (x, y).
std::array<int, 2> hex_cell_of(double x, double y, double size);

HexBinLevel hexbin_aggregate(const MatrixD& coordinates, const ClusterTree& tree, Zoom zoom, double cell_size);

inline HexBinLevel hexbin_aggregate(const MatrixD& coordinates, const ClusterTree& tree, Zoom zoom) {
    return hexbin_aggregate(coordinates, tree, zoom, default_cell_size(coordinates, zoom));
}

}  // namespace featurescope

#endif
