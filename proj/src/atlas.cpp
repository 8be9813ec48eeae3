#include "featurescope/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace featurescope {

std::vector<int> ClusterTree::level_nodes(int level) const {
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.level == level) out.push_back(n.id);
    return out;
}

const ClusterNode& ClusterTree::node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes.size())) fail(ErrorCode::not_found, "unknown cluster id", std::to_string(id));
    return nodes[static_cast<std::size_t>(id)];
}

std::vector<int> ClusterTree::children(int id) const {
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.parent == id) out.push_back(n.id);
    return out;
}

void ClusterTree::check_nesting() const {
    if (static_cast<int>(assignment.size()) != n_levels()) fail(ErrorCode::data_error, "cluster tree: level count mismatch");
    for (int level = 0; level < n_levels(); ++level) {
        const auto& labels = assignment[static_cast<std::size_t>(level)];
        if (static_cast<int>(labels.size()) != n_features)
            fail(ErrorCode::data_error, "cluster tree: assignment does not cover every feature");
        std::vector<int> seen(static_cast<std::size_t>(n_features), 0);
        for (int id : level_nodes(level)) {
            for (int m : node(id).members) {
                if (m < 0 || m >= n_features || labels[static_cast<std::size_t>(m)] != id)
                    fail(ErrorCode::data_error, "cluster tree: membership and assignment disagree");
                ++seen[static_cast<std::size_t>(m)];
            }
        }
        if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
            fail(ErrorCode::data_error, "cluster tree: level is not a partition", std::to_string(level));
        if (level == 0) continue;
        for (int f = 0; f < n_features; ++f) {
            const auto& child = node(labels[static_cast<std::size_t>(f)]);
            if (child.parent != assignment[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(f)])
                fail(ErrorCode::data_error, "cluster tree: level does not refine its parent level", std::to_string(level));
        }
    }
}

std::vector<int> clamp_level_sizes(const std::vector<int>& sizes, int n, std::vector<std::string>& warnings) {
    std::vector<int> out;
    bool clamped = false;
    for (int s : sizes) {
        if (s > n) clamped = true;
        out.push_back(std::min(s, n));
    }
    if (clamped) {
        std::string msg = "only " + std::to_string(n) + " features; cluster level sizes clamped to {";
        for (std::size_t i = 0; i < out.size(); ++i) msg += (i ? ", " : "") + std::to_string(out[i]);
        warnings.push_back(msg + "}");
    }
    return out;
}

ClusterTree build_cluster_tree(const MatrixD& embeddings, const std::vector<int>& level_sizes) {
    const int n = static_cast<int>(embeddings.rows());
    if (level_sizes.empty()) fail(ErrorCode::invalid_argument, "no cluster levels requested");
    for (std::size_t i = 0; i < level_sizes.size(); ++i) {
        if (level_sizes[i] < 1) fail(ErrorCode::invalid_argument, "cluster level sizes must be >= 1");
        if (i > 0 && level_sizes[i] < level_sizes[i - 1])
            fail(ErrorCode::invalid_argument, "cluster level sizes must be non-decreasing");
    }
    if (n < level_sizes.back())
        fail(ErrorCode::invalid_argument, "fewer features than the largest cluster level",
             std::to_string(n) + " < " + std::to_string(level_sizes.back()));

    const Dendrogram dendrogram = ward_linkage(embeddings);
    ClusterTree tree;
    tree.n_features = n;
    tree.level_sizes = level_sizes;
    tree.color_fallback.assign(level_sizes.size(), false);
    for (std::size_t level = 0; level < level_sizes.size(); ++level) {
        const auto labels = cut_dendrogram(dendrogram, level_sizes[level]);
        const int base = static_cast<int>(tree.nodes.size());
        for (int c = 0; c < level_sizes[level]; ++c) {
            ClusterNode node;
            node.id = base + c;
            node.level = static_cast<int>(level);
            tree.nodes.push_back(std::move(node));
        }
        std::vector<int> assignment(static_cast<std::size_t>(n));
        for (int f = 0; f < n; ++f) {
            const int id = base + labels[static_cast<std::size_t>(f)];
            assignment[static_cast<std::size_t>(f)] = id;
            tree.nodes[static_cast<std::size_t>(id)].members.push_back(f);
        }
        if (level > 0) {
            const auto& above = tree.assignment.back();
            for (int c = 0; c < level_sizes[level]; ++c) {
                auto& node = tree.nodes[static_cast<std::size_t>(base + c)];
                node.parent = above[static_cast<std::size_t>(node.members.front())];
            }
        }
        tree.assignment.push_back(std::move(assignment));
    }
    tree.check_nesting();
    return tree;
}

void set_centroids(ClusterTree& tree, const MatrixD& coordinates) {
    if (coordinates.rows() != tree.n_features || coordinates.cols() != 2)
        fail(ErrorCode::shape_mismatch, "layout does not match the cluster tree",
             shape_string(coordinates.rows(), coordinates.cols()));
    for (auto& node : tree.nodes) {
        double x = 0.0, y = 0.0;
        for (int m : node.members) {
            x += coordinates(m, 0);
            y += coordinates(m, 1);
        }
        const double k = static_cast<double>(node.members.size());
        node.centroid = {x / k, y / k};
    }
}

void set_topics(ClusterTree& tree, const std::vector<std::string>& explanations, const StopWords& stop_words,
                int top_n) {
    if (static_cast<int>(explanations.size()) != tree.n_features)
        fail(ErrorCode::shape_mismatch, "explanation count does not match the cluster tree");
    for (int level = 0; level < tree.n_levels(); ++level) {
        const auto ids = tree.level_nodes(level);
        std::vector<std::vector<std::string>> docs;
        for (int id : ids) {
            std::vector<std::string> texts;
            for (int m : tree.node(id).members) texts.push_back(explanations[static_cast<std::size_t>(m)]);
            docs.push_back(std::move(texts));
        }
        auto topics = extract_topics(docs, stop_words, top_n);
        for (std::size_t i = 0; i < ids.size(); ++i) tree.nodes[static_cast<std::size_t>(ids[i])].topics = std::move(topics[i]);
    }
}

namespace {

constexpr double kGoldenFraction = 0.6180339887498949;
constexpr double kMinS = 0.2, kMaxS = 0.95, kMinL = 0.2, kMaxL = 0.85;

std::uint64_t level_seed(std::uint64_t seed, int level, int attempt) {
    Rng mix(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(level + 1)) ^
            (0xC2B2AE3D27D4EB4Full * static_cast<std::uint64_t>(attempt + 1)));
    return mix.next_u64();
}

bool try_level(ClusterTree& tree, const std::vector<int>& ids, int level, int attempt, const ColorConfig& cfg) {
    Rng rng(level_seed(cfg.seed, level, attempt));
    const double rotation = rng.uniform();
    const std::size_t n = ids.size();
    auto sample = [&](std::size_t i) {
        const auto& node = tree.nodes[static_cast<std::size_t>(ids[i])];
        HslColor cand;
        if (node.parent < 0) {
            cand.h = wrap_hue(rotation + static_cast<double>(i) / static_cast<double>(n));
            cand.s = std::clamp(cfg.base_saturation + rng.uniform(-cfg.saturation_offset, cfg.saturation_offset), kMinS, kMaxS);
            cand.l = std::clamp(cfg.base_lightness + rng.uniform(-cfg.lightness_offset, cfg.lightness_offset), kMinL, kMaxL);
        } else {
            const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)].color;
            cand.h = child_hue(parent.h, rng.uniform(-cfg.delta_h, cfg.delta_h));
            cand.s = std::clamp(parent.s + rng.uniform(-cfg.saturation_offset, cfg.saturation_offset), kMinS, kMaxS);
            cand.l = std::clamp(parent.l + rng.uniform(-cfg.lightness_offset, cfg.lightness_offset), kMinL, kMaxL);
        }
        return cand;
    };
    std::vector<HslColor> chosen(n);
    // nearest distance from c to the chosen colors in [0, upto), skipping `skip`
    auto nearest = [&](const HslColor& c, std::size_t upto, std::size_t skip) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < upto; ++j)
            if (j != skip) d = std::min(d, hsl_distance(c, chosen[j]));
        return d;
    };
    auto best_candidate = [&](std::size_t i, std::size_t upto, std::size_t skip, double& best_d) {
        HslColor best;
        best_d = -1.0;
        for (int c = 0; c < cfg.candidates; ++c) {
            const HslColor cand = sample(i);
            const double d = nearest(cand, upto, skip);
            if (d > best_d) {
                best_d = d;
                best = cand;
            }
        }
        return best;
    };

    // greedy max-min placement in id order
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        chosen[i] = best_candidate(i, i, n, d);
    }
    // then repeatedly move one node of the closest pair, if that helps
    for (int round = 0; round <= cfg.repair_rounds; ++round) {
        double worst = std::numeric_limits<double>::infinity();
        std::size_t wi = 0, wj = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = hsl_distance(chosen[i], chosen[j]);
                if (d < worst) {
                    worst = d;
                    wi = i;
                    wj = j;
                }
            }
        if (worst > cfg.tau) {
            for (std::size_t i = 0; i < n; ++i) tree.nodes[static_cast<std::size_t>(ids[i])].color = chosen[i];
            return true;
        }
        if (round == cfg.repair_rounds) break;
        const std::size_t move = (round % 2 == 0) ? wj : wi;
        double d = 0.0;
        const HslColor cand = best_candidate(move, n, move, d);
        if (d > nearest(chosen[move], n, move)) chosen[move] = cand;
    }
    return false;
}

void fallback_level(ClusterTree& tree, const std::vector<int>& ids, const ColorConfig& cfg) {
    std::map<int, int> sibling_index;
    for (int id : ids) {
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        const int j = sibling_index[node.parent]++;
        const double l_step = cfg.lightness_offset * static_cast<double>(j % 3 - 1);
        const double s_step = cfg.saturation_offset * static_cast<double>((j / 3) % 3 - 1);
        if (node.parent < 0) {
            node.color = {wrap_hue(j * kGoldenFraction), std::clamp(cfg.base_saturation + s_step, kMinS, kMaxS),
                          std::clamp(cfg.base_lightness + l_step, kMinL, kMaxL)};
        } else {
            const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)].color;
            const double offset = cfg.delta_h * (2.0 * std::fmod((j + 1) * kGoldenFraction, 1.0) - 1.0);
            node.color = {child_hue(parent.h, offset), std::clamp(parent.s + s_step, kMinS, kMaxS),
                          std::clamp(parent.l + l_step, kMinL, kMaxL)};
        }
    }
}

}  // namespace

void assign_colors(ClusterTree& tree, const ColorConfig& cfg) {
    if (!(cfg.tau >= 0.0) || !(cfg.delta_h >= 0.0) || cfg.candidates < 1 || cfg.restarts < 1 || cfg.repair_rounds < 0)
        fail(ErrorCode::invalid_argument, "invalid color configuration");
    tree.color_fallback.assign(static_cast<std::size_t>(tree.n_levels()), false);
    for (int level = 0; level < tree.n_levels(); ++level) {
        const auto ids = tree.level_nodes(level);
        bool ok = false;
        for (int attempt = 0; attempt < cfg.restarts && !ok; ++attempt) ok = try_level(tree, ids, level, attempt, cfg);
        if (!ok) {
            fallback_level(tree, ids, cfg);
            tree.color_fallback[static_cast<std::size_t>(level)] = true;
        }
    }
}

Zoom parse_zoom(const std::string& name) {
    if (name == "far") return Zoom::far;
    if (name == "mid") return Zoom::mid;
    if (name == "near") return Zoom::near;
    fail(ErrorCode::invalid_argument, "zoom must be far, mid or near", name);
}

const char* to_string(Zoom zoom) {
    switch (zoom) {
        case Zoom::far: return "far";
        case Zoom::mid: return "mid";
        case Zoom::near: return "near";
    }
    return "far";
}

int zoom_index(Zoom zoom) { return static_cast<int>(zoom); }

double default_cell_size(const MatrixD& coordinates, Zoom zoom) {
    double extent = 0.0;
    if (coordinates.rows() > 0) {
        const auto lo = coordinates.colwise().minCoeff();
        const auto hi = coordinates.colwise().maxCoeff();
        extent = (hi - lo).maxCoeff();
    }
    if (!(extent > 0.0)) extent = 1.0;
    static constexpr double kDivisions[] = {8.0, 16.0, 32.0};
    return extent / kDivisions[zoom_index(zoom)];
}

std::array<int, 2> hex_cell_of(double x, double y, double size) {
    const double qf = (std::sqrt(3.0) / 3.0 * x - y / 3.0) / size;
    const double rf = (2.0 / 3.0 * y) / size;
    const double sf = -qf - rf;
    double q = std::round(qf), r = std::round(rf), s = std::round(sf);
    const double dq = std::abs(q - qf), dr = std::abs(r - rf), ds = std::abs(s - sf);
    if (dq > dr && dq > ds)
        q = -r - s;
    else if (dr > ds)
        r = -q - s;
    return {static_cast<int>(q), static_cast<int>(r)};
}

HexBinLevel hexbin_aggregate(const MatrixD& coordinates, const ClusterTree& tree, Zoom zoom, double cell_size) {
    if (!(cell_size > 0.0)) fail(ErrorCode::invalid_argument, "hex cell size must be positive");
    if (coordinates.cols() != 2 || coordinates.rows() != tree.n_features)
        fail(ErrorCode::shape_mismatch, "layout does not match the cluster tree");
    HexBinLevel out;
    out.zoom = zoom;
    out.cluster_level = std::min(zoom_index(zoom), tree.n_levels() - 1);
    out.cell_size = cell_size;

    std::map<std::pair<int, int>, std::vector<int>> cells;  // (r, q) -> members
    for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
        const auto [q, r] = hex_cell_of(coordinates(i, 0), coordinates(i, 1), cell_size);
        cells[{r, q}].push_back(static_cast<int>(i));
    }
    const auto& labels = tree.assignment[static_cast<std::size_t>(out.cluster_level)];
    for (auto& [key, members] : cells) {
        HexCell cell;
        cell.r = key.first;
        cell.q = key.second;
        cell.x = cell_size * std::sqrt(3.0) * (cell.q + cell.r / 2.0);
        cell.y = cell_size * 1.5 * cell.r;
        cell.count = static_cast<int>(members.size());
        std::map<int, int> votes;
        for (int m : members) ++votes[labels[static_cast<std::size_t>(m)]];
        int best = -1, best_votes = 0;
        for (const auto& [id, v] : votes)
            if (v > best_votes) {
                best = id;
                best_votes = v;
            }
        cell.cluster = best;
        cell.color = tree.node(best).color;
        cell.members = std::move(members);
        out.cells.push_back(std::move(cell));
    }
    return out;
}

}  // namespace featurescope
