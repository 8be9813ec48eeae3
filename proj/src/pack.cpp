#include "featurescope/pack.hpp"

#include "featurescope/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace featurescope {

namespace fs = std::filesystem;

std::string pack_files::hexbins(Zoom zoom) { return std::string("hexbins_") + to_string(zoom) + ".json"; }

KeyValues PackManifest::to_key_values() const {
    KeyValues kv = extra;
    kv["format_version"] = std::to_string(format_version);
    kv["sae_id"] = sae_id;
    kv["layer_index"] = std::to_string(layer_index);
    kv["d_model"] = std::to_string(d_model);
    kv["n_features"] = std::to_string(n_features);
    kv["activation"] = to_string(activation);
    kv["model_path"] = model_path;
    kv["provenance"] = provenance;
    if (!embedder.empty()) {
        kv["embedder"] = embedder;
        kv["d_embed"] = std::to_string(d_embed);
    }
    return kv;
}

PackManifest PackManifest::from_key_values(const KeyValues& kv, const fs::path& source) {
    PackManifest m;
    m.format_version = static_cast<int>(require_int(kv, "format_version", source));
    if (m.format_version != kPackFormatVersion)
        fail(ErrorCode::data_error, "unsupported pack format version",
             source.string() + ": " + std::to_string(m.format_version));
    m.sae_id = require_key(kv, "sae_id", source);
    if (m.sae_id.empty() || m.sae_id.find_first_of("/?#& ") != std::string::npos)
        fail(ErrorCode::data_error, "sae_id must be non-empty and URL-safe", source.string());
    m.layer_index = static_cast<int>(require_int(kv, "layer_index", source));
    m.d_model = static_cast<int>(require_int(kv, "d_model", source));
    m.n_features = static_cast<int>(require_int(kv, "n_features", source));
    const std::string act = require_key(kv, "activation", source);
    if (act == "relu")
        m.activation = SaeActivation::relu;
    else if (act == "jumprelu")
        m.activation = SaeActivation::jump_relu;
    else
        fail(ErrorCode::data_error, "unknown SAE activation", source.string() + ": " + act);
    m.model_path = require_key(kv, "model_path", source);
    if (auto it = kv.find("provenance"); it != kv.end()) m.provenance = it->second;
    if (auto it = kv.find("embedder"); it != kv.end()) {
        m.embedder = it->second;
        m.d_embed = static_cast<int>(require_int(kv, "d_embed", source));
    }
    static const std::set<std::string> known = {"format_version", "sae_id",     "layer_index", "d_model",
                                                "n_features",     "activation", "model_path",  "provenance",
                                                "embedder",       "d_embed"};
    for (const auto& [k, v] : kv)
        if (!known.contains(k)) m.extra[k] = v;
    return m;
}

std::vector<SegmentRecord> FeaturePack::segments_for(int feature_id) const {
    auto lo = std::lower_bound(segments.begin(), segments.end(), feature_id,
                               [](const SegmentRecord& s, int f) { return s.feature_id < f; });
    auto hi = std::upper_bound(segments.begin(), segments.end(), feature_id,
                               [](int f, const SegmentRecord& s) { return f < s.feature_id; });
    return {lo, hi};
}

fs::path FeaturePack::model_dir() const {
    const fs::path p(manifest.model_path);
    return p.is_absolute() ? p : dir / p;
}

namespace {

MatrixF as_row(const VectorF& v) { return v.transpose(); }

VectorF read_vector(const fs::path& path, Eigen::Index n) { return read_matrix(path, 1, n).row(0).transpose(); }

std::vector<Json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open file", path.string());
    std::vector<Json> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded())
            fail(ErrorCode::data_error, "malformed JSON line", path.string() + ":" + std::to_string(line_no));
        out.push_back(std::move(j));
    }
    return out;
}

Json read_json_file(const fs::path& path) {
    Json j = Json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::data_error, "malformed JSON file", path.string());
    return j;
}

void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(1) + "\n"); }

}  // namespace

FeaturePack load_pack(const fs::path& dir, bool require_atlas) {
    FeaturePack pack;
    pack.dir = dir;
    const fs::path manifest_path = dir / pack_files::kManifest;
    pack.manifest = PackManifest::from_key_values(read_key_values(manifest_path), manifest_path);
    const auto& m = pack.manifest;
    const Eigen::Index f = m.n_features, d = m.d_model;

    auto& sae = pack.sae;
    sae.w_enc = read_matrix(dir / pack_files::kWEnc, f, d);
    sae.b_enc = read_vector(dir / pack_files::kBEnc, f);
    sae.w_dec = read_matrix(dir / pack_files::kWDec, f, d);
    sae.b_dec = read_vector(dir / pack_files::kBDec, d);
    sae.activation = m.activation;
    sae.layer_index = m.layer_index;
    if (m.activation == SaeActivation::jump_relu) sae.threshold = read_vector(dir / pack_files::kThreshold, f);
    sae.validate();

    pack.explanations.assign(static_cast<std::size_t>(f), {});
    std::vector<bool> seen(static_cast<std::size_t>(f), false);
    for (const auto& j : read_jsonl(dir / pack_files::kExplanations)) {
        const int id = j.value("feature_id", -1);
        if (id < 0 || id >= f || seen[static_cast<std::size_t>(id)])
            fail(ErrorCode::data_error, "explanation feature ids must cover each feature once", dir.string());
        const std::string text = j.value("text", std::string());
        if (text.empty()) fail(ErrorCode::data_error, "empty explanation", "feature " + std::to_string(id));
        seen[static_cast<std::size_t>(id)] = true;
        pack.explanations[static_cast<std::size_t>(id)] = text;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        fail(ErrorCode::data_error, "some features have no explanation", dir.string());

    for (const auto& j : read_jsonl(dir / pack_files::kSegments)) {
        SegmentRecord seg = segment_from_json(j);
        if (seg.feature_id < 0 || seg.feature_id >= f)
            fail(ErrorCode::data_error, "segment refers to an unknown feature", std::to_string(seg.feature_id));
        pack.segments.push_back(std::move(seg));
    }
    std::sort(pack.segments.begin(), pack.segments.end(), [](const SegmentRecord& a, const SegmentRecord& b) {
        return a.feature_id != b.feature_id ? a.feature_id < b.feature_id : a.segment_id < b.segment_id;
    });
    for (std::size_t i = 1; i < pack.segments.size(); ++i)
        if (pack.segments[i].feature_id == pack.segments[i - 1].feature_id &&
            pack.segments[i].segment_id == pack.segments[i - 1].segment_id)
            fail(ErrorCode::data_error, "duplicate (feature, segment) record", std::to_string(pack.segments[i].segment_id));

    const bool has_embeddings = fs::exists(dir / pack_files::kEmbeddings);
    if (!has_embeddings) {
        if (require_atlas) fail(ErrorCode::data_error, "pack has not been precomputed", dir.string());
        return pack;
    }
    if (m.embedder.empty()) fail(ErrorCode::data_error, "manifest lacks embedder metadata", dir.string());
    pack.embeddings = MappedMatrix::open(dir / pack_files::kEmbeddings);
    if (pack.embeddings->rows() != f || pack.embeddings->cols() != m.d_embed)
        fail(ErrorCode::shape_mismatch, "embeddings shape does not match the manifest",
             shape_string(pack.embeddings->rows(), pack.embeddings->cols()));
    pack.layout = read_matrix(dir / pack_files::kLayout, f, 2).cast<double>();
    pack.tree = cluster_tree_from_json(read_json_file(dir / pack_files::kClusters));
    if (pack.tree.n_features != f) fail(ErrorCode::data_error, "cluster tree does not cover the features");
    for (Zoom z : {Zoom::far, Zoom::mid, Zoom::near}) {
        HexBinLevel level = hexbin_level_from_json(read_json_file(dir / pack_files::hexbins(z)));
        int total = 0;
        for (const auto& c : level.cells) total += c.count;
        if (level.zoom != z || total != f) fail(ErrorCode::data_error, "hexbin level is inconsistent", to_string(z));
        pack.hexbins.push_back(std::move(level));
    }
    return pack;
}

void write_pack(const FeaturePack& pack, const fs::path& dir) {
    fs::create_directories(dir);
    pack.sae.validate();
    write_key_values(dir / pack_files::kManifest, pack.manifest.to_key_values());
    write_matrix(dir / pack_files::kWEnc, pack.sae.w_enc);
    write_matrix(dir / pack_files::kBEnc, as_row(pack.sae.b_enc));
    write_matrix(dir / pack_files::kWDec, pack.sae.w_dec);
    write_matrix(dir / pack_files::kBDec, as_row(pack.sae.b_dec));
    if (pack.sae.activation == SaeActivation::jump_relu)
        write_matrix(dir / pack_files::kThreshold, as_row(pack.sae.threshold));

    std::ostringstream ex;
    for (std::size_t i = 0; i < pack.explanations.size(); ++i)
        ex << Json{{"feature_id", i}, {"text", pack.explanations[i]}}.dump() << '\n';
    write_text_file(dir / pack_files::kExplanations, ex.str());
    std::ostringstream seg;
    for (const auto& s : pack.segments) seg << to_json(s).dump() << '\n';
    write_text_file(dir / pack_files::kSegments, seg.str());

    if (pack.embeddings) write_matrix(dir / pack_files::kEmbeddings, MatrixF(pack.embeddings->view()));
    if (pack.layout.rows() > 0) write_matrix(dir / pack_files::kLayout, pack.layout.cast<float>());
    if (pack.tree.n_features > 0) write_json_file(dir / pack_files::kClusters, to_json(pack.tree));
    for (const auto& level : pack.hexbins) write_json_file(dir / pack_files::hexbins(level.zoom), to_json(level));
}

std::shared_ptr<const PackRegistry> PackRegistry::load(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::not_found, "pack directory does not exist", dir.string());
    auto reg = std::make_shared<PackRegistry>();
    std::vector<fs::path> candidates;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory() && fs::exists(entry.path() / pack_files::kManifest)) candidates.push_back(entry.path());
    std::sort(candidates.begin(), candidates.end());

    std::set<std::string> ids;
    for (const auto& path : candidates) {
        try {
            auto pack = std::make_shared<FeaturePack>(load_pack(path, true));
            const auto& m = pack->manifest;
            if (ids.contains(m.sae_id)) fail(ErrorCode::data_error, "duplicate sae_id", m.sae_id);
            if (!reg->embedder_name_.empty() && m.embedder != reg->embedder_name_)
                fail(ErrorCode::data_error, "pack was embedded with a different embedder", m.embedder);
            if (reg->store_.dimension() != 0 && m.d_embed != reg->store_.dimension())
                fail(ErrorCode::shape_mismatch, "embedding dimension differs from other packs");

            const std::string model_key = fs::weakly_canonical(pack->model_dir()).string();
            auto it = reg->models_.find(model_key);
            std::shared_ptr<const Model> model;
            if (it != reg->models_.end()) {
                model = it->second;
            } else {
                model = std::make_shared<Model>(load_model(model_key));
            }
            if (model->config.d_model != m.d_model) fail(ErrorCode::shape_mismatch, "SAE width does not match its model");
            if (m.layer_index >= model->config.n_layers) fail(ErrorCode::data_error, "SAE layer beyond its model");

            EmbeddingMatrix matrix(m.sae_id, m.layer_index, pack->embeddings);
            reg->store_.add(std::move(matrix));
            reg->models_[model_key] = model;
            reg->model_of_pack_[m.sae_id] = model_key;
            if (reg->embedder_name_.empty()) reg->embedder_name_ = m.embedder;
            ids.insert(m.sae_id);
            reg->packs_.push_back(std::move(pack));
        } catch (const std::exception& e) {
            std::string detail;
            if (const auto* err = dynamic_cast<const Error*>(&e); err != nullptr && !err->detail().empty())
                detail = " (" + err->detail() + ")";
            reg->diagnostics_.push_back("skipped " + path.filename().string() + ": " + e.what() + detail);
        }
    }
    if (reg->packs_.empty()) {
        std::string detail;
        for (const auto& d : reg->diagnostics_) detail += d + "; ";
        fail(ErrorCode::unavailable, "no valid feature packs in " + dir.string(), detail);
    }
    std::sort(reg->packs_.begin(), reg->packs_.end(),
              [](const auto& a, const auto& b) { return a->manifest.sae_id < b->manifest.sae_id; });
    return reg;
}

const FeaturePack& PackRegistry::pack(const std::string& sae_id) const {
    for (const auto& p : packs_)
        if (p->manifest.sae_id == sae_id) return *p;
    fail(ErrorCode::not_found, "unknown SAE id", sae_id);
}

const Model& PackRegistry::model_for(const FeaturePack& pack) const {
    return *models_.at(model_of_pack_.at(pack.manifest.sae_id));
}

}  // namespace featurescope
