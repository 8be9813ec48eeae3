#include "featurescope/pipeline.hpp"

#include "featurescope/json_io.hpp"

#include <fstream>

namespace featurescope {

namespace fs = std::filesystem;

PrecomputeReport precompute_pack(const fs::path& pack_dir, const PrecomputeOptions& options) {
    FeaturePack pack = load_pack(pack_dir, false);
    PrecomputeReport report;
    report.sae_id = pack.manifest.sae_id;
    const int n = pack.manifest.n_features;

    const auto embedder = make_embedder(options.embedder);
    MatrixF embeddings(n, embedder->dimension());
    for (int i = 0; i < n; ++i) embeddings.row(i) = embedder->embed(pack.explanations[static_cast<std::size_t>(i)]).transpose();

    LayoutConfig layout_cfg = options.layout;
    layout_cfg.seed = options.seed;
    if (n < layout_cfg.n_neighbors + 1) {
        layout_cfg.n_neighbors = std::max(2, n - 1);
        report.warnings.push_back("only " + std::to_string(n) + " features; layout uses n_neighbors = " +
                                  std::to_string(layout_cfg.n_neighbors));
    }
    const MatrixD emb = embeddings.cast<double>();
    LayoutResult layout = compute_layout(emb, layout_cfg);
    for (auto& w : layout.warnings) report.warnings.push_back(std::move(w));
    // everything downstream sees the float32 coordinates that are stored
    pack.layout = layout.coordinates.cast<float>().cast<double>();

    report.level_sizes = clamp_level_sizes(options.level_sizes, n, report.warnings);
    pack.tree = build_cluster_tree(emb, report.level_sizes);
    pack.tree.warnings = report.warnings;
    set_centroids(pack.tree, pack.layout);
    set_topics(pack.tree, pack.explanations);
    ColorConfig colors = options.colors;
    colors.seed = options.seed;
    assign_colors(pack.tree, colors);
    report.color_fallback = pack.tree.color_fallback;
    for (std::size_t l = 0; l < report.color_fallback.size(); ++l)
        if (report.color_fallback[l]) report.warnings.push_back("color fallback used at level " + std::to_string(l));

    pack.hexbins.clear();
    for (Zoom z : {Zoom::far, Zoom::mid, Zoom::near}) pack.hexbins.push_back(hexbin_aggregate(pack.layout, pack.tree, z));

    pack.manifest.embedder = embedder->name();
    pack.manifest.d_embed = embedder->dimension();
    pack.manifest.extra["precompute_seed"] = std::to_string(options.seed);
    pack.embeddings.reset();
    write_pack(pack, pack_dir);
    write_matrix(pack_dir / pack_files::kEmbeddings, embeddings);
    return report;
}

IngestManifest IngestManifest::read(const fs::path& file) {
    const KeyValues kv = read_key_values(file);
    const fs::path base = file.parent_path();
    auto path_of = [&](const std::string& key) {
        const fs::path p(require_key(kv, key, file));
        return p.is_absolute() ? p : base / p;
    };
    IngestManifest m;
    m.sae_id = require_key(kv, "sae_id", file);
    m.layer_index = static_cast<int>(require_int(kv, "layer_index", file));
    const std::string act = kv.count("activation") ? kv.at("activation") : "relu";
    if (act == "relu")
        m.activation = SaeActivation::relu;
    else if (act == "jumprelu")
        m.activation = SaeActivation::jump_relu;
    else
        fail(ErrorCode::invalid_argument, "unknown activation", act);
    m.model = path_of("model");
    m.w_enc = path_of("w_enc");
    m.b_enc = path_of("b_enc");
    m.w_dec = path_of("w_dec");
    m.b_dec = path_of("b_dec");
    if (m.activation == SaeActivation::jump_relu) m.threshold = path_of("threshold");
    m.explanations = path_of("explanations");
    m.segments = path_of("segments");
    m.output = path_of("output");
    if (auto it = kv.find("provenance"); it != kv.end()) m.provenance = it->second;
    return m;
}

FeaturePack ingest_pack(const IngestManifest& in) {
    for (const auto* p : {&in.model, &in.w_enc, &in.b_enc, &in.w_dec, &in.b_dec, &in.explanations, &in.segments})
        if (!fs::exists(*p)) fail(ErrorCode::not_found, "ingest input is missing", p->string());
    const Model model = load_model(in.model);

    FeaturePack pack;
    pack.dir = in.output;
    auto& sae = pack.sae;
    sae.w_enc = read_matrix(in.w_enc);
    const Eigen::Index f = sae.w_enc.rows(), d = sae.w_enc.cols();
    sae.b_enc = read_matrix(in.b_enc, 1, f).row(0).transpose();
    sae.w_dec = read_matrix(in.w_dec, f, d);
    sae.b_dec = read_matrix(in.b_dec, 1, d).row(0).transpose();
    sae.activation = in.activation;
    sae.layer_index = in.layer_index;
    if (in.activation == SaeActivation::jump_relu) sae.threshold = read_matrix(in.threshold, 1, f).row(0).transpose();
    sae.validate();
    if (d != model.config.d_model) fail(ErrorCode::shape_mismatch, "SAE width does not match the model");
    if (in.layer_index >= model.config.n_layers) fail(ErrorCode::invalid_argument, "SAE layer beyond the model");

    auto& m = pack.manifest;
    m.sae_id = in.sae_id;
    m.layer_index = in.layer_index;
    m.d_model = static_cast<int>(d);
    m.n_features = static_cast<int>(f);
    m.activation = in.activation;
    fs::create_directories(in.output);
    m.model_path = fs::relative(fs::absolute(in.model), fs::absolute(in.output)).generic_string();
    m.provenance = in.provenance.empty() ? "ingested" : in.provenance;

    // explanations and segments go through the pack reader's checks by
    // staging them in the output directory
    write_pack(pack, in.output);
    fs::copy_file(in.explanations, in.output / pack_files::kExplanations, fs::copy_options::overwrite_existing);
    fs::copy_file(in.segments, in.output / pack_files::kSegments, fs::copy_options::overwrite_existing);
    FeaturePack loaded = load_pack(in.output, false);
    for (const auto& seg : loaded.segments)
        for (TokenId id : seg.token_ids)
            if (id < 0 || id >= model.config.vocab_size)
                fail(ErrorCode::data_error, "segment token id outside the model vocabulary", std::to_string(id));
    return loaded;
}

}  // namespace featurescope
