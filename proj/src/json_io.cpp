#include "featurescope/json_io.hpp"

namespace featurescope {

namespace {

template <typename T>
T get_or_throw(const Json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::data_error, std::string("bad or missing field '") + key + "'", e.what());
    }
}

}  // namespace

Json parse_json(const std::string& text, const std::string& what) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::invalid_argument, "malformed JSON", what);
    return j;
}

Json to_json(const HslColor& c) { return Json::array({c.h, c.s, c.l}); }

HslColor hsl_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 3) fail(ErrorCode::data_error, "HSL color must be [h, s, l]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json to_json(const ClusterTree& tree) {
    Json nodes = Json::array();
    for (const auto& n : tree.nodes) {
        Json topics = Json::array();
        for (const auto& t : n.topics) topics.push_back({{"term", t.term}, {"score", t.score}});
        nodes.push_back({{"id", n.id},
                         {"level", n.level},
                         {"parent", n.parent},
                         {"members", n.members},
                         {"centroid", {n.centroid[0], n.centroid[1]}},
                         {"topics", topics},
                         {"hsl", to_json(n.color)},
                         {"color", to_hex(n.color)}});
    }
    std::vector<bool> fallback = tree.color_fallback;
    return {{"n_features", tree.n_features},
            {"level_sizes", tree.level_sizes},
            {"color_fallback", fallback},
            {"warnings", tree.warnings},
            {"nodes", nodes}};
}

ClusterTree cluster_tree_from_json(const Json& j) {
    ClusterTree tree;
    tree.n_features = get_or_throw<int>(j, "n_features");
    tree.level_sizes = get_or_throw<std::vector<int>>(j, "level_sizes");
    tree.color_fallback = get_or_throw<std::vector<bool>>(j, "color_fallback");
    tree.warnings = get_or_throw<std::vector<std::string>>(j, "warnings");
    for (const auto& jn : get_or_throw<Json>(j, "nodes")) {
        ClusterNode n;
        n.id = get_or_throw<int>(jn, "id");
        n.level = get_or_throw<int>(jn, "level");
        n.parent = get_or_throw<int>(jn, "parent");
        n.members = get_or_throw<std::vector<int>>(jn, "members");
        const auto c = get_or_throw<std::vector<double>>(jn, "centroid");
        if (c.size() != 2) fail(ErrorCode::data_error, "cluster centroid must have two coordinates");
        n.centroid = {c[0], c[1]};
        for (const auto& t : get_or_throw<Json>(jn, "topics"))
            n.topics.push_back({get_or_throw<std::string>(t, "term"), get_or_throw<double>(t, "score")});
        n.color = hsl_from_json(get_or_throw<Json>(jn, "hsl"));
        if (n.id != static_cast<int>(tree.nodes.size())) fail(ErrorCode::data_error, "cluster ids are not consecutive");
        tree.nodes.push_back(std::move(n));
    }
    if (tree.color_fallback.size() != tree.level_sizes.size())
        fail(ErrorCode::data_error, "color_fallback does not cover every level");
    tree.assignment.assign(tree.level_sizes.size(), std::vector<int>(static_cast<std::size_t>(tree.n_features), -1));
    for (const auto& n : tree.nodes) {
        if (n.level < 0 || n.level >= tree.n_levels()) fail(ErrorCode::data_error, "cluster level out of range");
        for (int m : n.members) {
            if (m < 0 || m >= tree.n_features) fail(ErrorCode::data_error, "cluster member out of range");
            tree.assignment[static_cast<std::size_t>(n.level)][static_cast<std::size_t>(m)] = n.id;
        }
    }
    tree.check_nesting();
    return tree;
}

Json to_json(const HexBinLevel& level) {
    Json cells = Json::array();
    for (const auto& c : level.cells)
        cells.push_back({{"q", c.q},
                         {"r", c.r},
                         {"x", c.x},
                         {"y", c.y},
                         {"count", c.count},
                         {"cluster", c.cluster},
                         {"hsl", to_json(c.color)},
                         {"color", to_hex(c.color)},
                         {"members", c.members}});
    return {{"zoom", to_string(level.zoom)},
            {"cluster_level", level.cluster_level},
            {"cell_size", level.cell_size},
            {"cells", cells}};
}

HexBinLevel hexbin_level_from_json(const Json& j) {
    HexBinLevel level;
    level.zoom = parse_zoom(get_or_throw<std::string>(j, "zoom"));
    level.cluster_level = get_or_throw<int>(j, "cluster_level");
    level.cell_size = get_or_throw<double>(j, "cell_size");
    for (const auto& jc : get_or_throw<Json>(j, "cells")) {
        HexCell c;
        c.q = get_or_throw<int>(jc, "q");
        c.r = get_or_throw<int>(jc, "r");
        c.x = get_or_throw<double>(jc, "x");
        c.y = get_or_throw<double>(jc, "y");
        c.count = get_or_throw<int>(jc, "count");
        c.cluster = get_or_throw<int>(jc, "cluster");
        c.color = hsl_from_json(get_or_throw<Json>(jc, "hsl"));
        c.members = get_or_throw<std::vector<int>>(jc, "members");
        if (c.count != static_cast<int>(c.members.size())) fail(ErrorCode::data_error, "hex cell count mismatch");
        level.cells.push_back(std::move(c));
    }
    return level;
}

Json to_json(const SegmentRecord& seg) {
    return {{"feature_id", seg.feature_id},
            {"segment_id", seg.segment_id},
            {"tokens", seg.tokens},
            {"token_ids", seg.token_ids},
            {"activations", seg.activations},
            {"max_activation", seg.max_activation},
            {"max_index", seg.max_index},
            {"text", seg.text}};
}

SegmentRecord segment_from_json(const Json& j) {
    SegmentRecord seg;
    seg.feature_id = get_or_throw<int>(j, "feature_id");
    seg.segment_id = get_or_throw<int>(j, "segment_id");
    seg.tokens = get_or_throw<std::vector<std::string>>(j, "tokens");
    seg.token_ids = get_or_throw<std::vector<int>>(j, "token_ids");
    seg.activations = get_or_throw<std::vector<float>>(j, "activations");
    seg.max_activation = get_or_throw<float>(j, "max_activation");
    seg.max_index = get_or_throw<int>(j, "max_index");
    seg.text = get_or_throw<std::string>(j, "text");
    seg.validate();
    return seg;
}

Json to_json(const SimilarityHistogram& h) {
    return {{"edges", h.edges}, {"counts", h.counts}, {"n_scored", h.n_scored}};
}

Json to_json(const SaeRanking& r, const std::vector<std::size_t>& k_set) {
    Json counts = Json::object(), ranks = Json::object();
    for (std::size_t i = 0; i < k_set.size() && i < r.counts.size(); ++i) {
        counts[std::to_string(k_set[i])] = r.counts[i];
        ranks[std::to_string(k_set[i])] = r.ranks[i];
    }
    return {{"sae_id", r.sae_id},
            {"layer_index", r.layer_index},
            {"counts", counts},
            {"ranks", ranks},
            {"avg_rank", r.avg_rank},
            {"order", r.order}};
}

Json to_json(const MatrixCell& c) {
    return {{"segment_id", c.segment_id},
            {"similarity_rank", c.similarity_rank},
            {"activation_rank", c.activation_rank},
            {"similarity", c.similarity},
            {"max_activation", c.max_activation},
            {"region", to_string(c.region)}};
}

Json to_json(const AnomalyReport& r) {
    Json items = Json::array();
    for (const auto& a : r.anomalies)
        items.push_back({{"segment_id", a.segment_id}, {"region", to_string(a.region)}, {"discrepancy", a.discrepancy}});
    return {{"theta", r.theta}, {"anomalies", items}};
}

Json to_json(const TokenStat& s) {
    return {{"token", s.token}, {"count", s.count}, {"max_activation", s.max_activation}};
}

Json to_json(const ProbeResult& p) {
    return {{"tokens", p.tokens},
            {"token_ids", p.token_ids},
            {"activations", p.activations},
            {"peak_index", p.peak_index},
            {"peak_activation", p.peak_activation}};
}

Json to_json(const SteeringBranch& b) {
    return {{"strength", b.strength}, {"tokens", b.tokens}, {"text", b.text}};
}

}  // namespace featurescope
