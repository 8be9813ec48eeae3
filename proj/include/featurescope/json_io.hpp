#ifndef FEATURESCOPE_JSON_IO_HPP
#define FEATURESCOPE_JSON_IO_HPP

#include "featurescope/activation_lab.hpp"
#include "featurescope/atlas.hpp"
#include "featurescope/interpretation.hpp"
#include "featurescope/retrieval.hpp"

#include <json.hpp>

namespace featurescope {

using Json = nlohmann::json;

Json to_json(const HslColor& c);
HslColor hsl_from_json(const Json& j);

Json to_json(const ClusterTree& tree);
ClusterTree cluster_tree_from_json(const Json& j);

Json to_json(const HexBinLevel& level);
HexBinLevel hexbin_level_from_json(const Json& j);

Json to_json(const SegmentRecord& seg);
SegmentRecord segment_from_json(const Json& j);

Json to_json(const SimilarityHistogram& h);
Json to_json(const SaeRanking& r, const std::vector<std::size_t>& k_set);
Json to_json(const MatrixCell& c);
Json to_json(const AnomalyReport& r);
Json to_json(const TokenStat& s);
Json to_json(const ProbeResult& p);
Json to_json(const SteeringBranch& b);

/// Parses JSON text; malformed input becomes invalid_argument.
Json parse_json(const std::string& text, const std::string& what);

/// Typed field access with invalid_argument errors naming the field.
template <typename T>
T json_field(const Json& obj, const char* key, const T& fallback) {
    if (!obj.is_object()) fail(ErrorCode::invalid_argument, "expected a JSON object");
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::invalid_argument, std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T json_required(const Json& obj, const char* key) {
    if (!obj.is_object()) fail(ErrorCode::invalid_argument, "expected a JSON object");
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) fail(ErrorCode::invalid_argument, std::string("missing field '") + key + "'");
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::invalid_argument, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace featurescope

#endif
