#include "featurescope/fixtures.hpp"

#include "featurescope/activation_lab.hpp"
#include "featurescope/json_io.hpp"
#include "featurescope/pack.hpp"
#include "featurescope/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace featurescope {

namespace fs = std::filesystem;

namespace {

struct Topic {
    const char* name;
    const char* label;  // used in explanations
    std::vector<std::string> words;
};

const std::vector<std::string>& function_words() {
    static const std::vector<std::string> words = {
        "the",  "a",     "of",   "and",  "in",    "on",    "to",     "with",   "is",    "was",   "for",
        "by",   "at",    "from", "near", "new",   "old",   "big",    "small",  "every", "this",  "that",
        "they", "we",    "it",   "then", "after", "before", "during", "while", "there"};
    return words;
}

const std::vector<Topic>& topics() {
    static const std::vector<Topic> t = {
        {"botany", "cultivation and agriculture",
         {"plant", "plants", "seed", "seeds", "leaf", "leaves", "root", "roots", "flower", "flowers", "garden",
          "gardener", "soil", "grow", "grows", "bloom", "sprout", "botanical"}},
        {"industry", "industrial manufacturing",
         {"factory", "power", "steel", "machine", "machines", "worker", "workers", "turbine", "assembly",
          "production", "chemical", "reactor", "industrial", "furnace", "pipeline", "shift"}},
        {"superhero", "superhero comics",
         {"hero", "heroes", "cape", "villain", "mask", "rescue", "powers", "comic", "sidekick", "shield", "justice",
          "saves", "city", "costume", "secret", "identity"}},
        {"space", "space exploration",
         {"rocket", "orbit", "planet", "star", "launch", "astronaut", "moon", "galaxy", "comet", "telescope",
          "capsule", "mission", "crater", "satellite", "gravity", "cosmic"}},
        {"sports", "team sports",
         {"ball", "team", "goal", "score", "match", "coach", "player", "players", "stadium", "league", "referee",
          "season", "fans", "victory", "tournament", "kick"}},
        {"food", "cooking and food",
         {"bread", "soup", "cheese", "apple", "kitchen", "bake", "recipe", "spice", "dinner", "flour", "butter",
          "oven", "chef", "salad", "sugar", "taste"}},
        {"music", "music performance",
         {"song", "guitar", "drum", "melody", "choir", "concert", "rhythm", "piano", "singer", "band", "chorus",
          "lyrics", "violin", "tune", "stage", "album"}},
        {"weather", "weather",
         {"rain", "storm", "cloud", "clouds", "wind", "snow", "thunder", "forecast", "sunny", "fog", "humid",
          "breeze", "lightning", "drought", "frost", "temperature"}},
        {"ocean", "the ocean and sailing",
         {"wave", "waves", "ship", "sailor", "harbor", "tide", "whale", "coral", "anchor", "reef", "fish", "boat",
          "shore", "dolphin", "current", "salt"}},
        {"medicine", "medicine and health care",
         {"doctor", "nurse", "patient", "hospital", "vaccine", "fever", "clinic", "surgery", "medicine", "symptom",
          "therapy", "dose", "virus", "health", "heart", "pill"}},
        {"finance", "finance and banking",
         {"bank", "money", "loan", "market", "stock", "price", "profit", "interest", "budget", "tax", "investor",
          "credit", "trade", "cash", "debt", "economy"}},
        {"computing", "computing and software",
         {"computer", "code", "software", "data", "network", "server", "program", "algorithm", "memory", "chip",
          "digital", "internet", "keyboard", "screen", "bug", "database"}},
        {"history", "medieval history",
         {"king", "queen", "empire", "castle", "war", "battle", "ancient", "crown", "knight", "army", "kingdom",
          "throne", "medieval", "treaty", "ruins", "dynasty"}},
        {"animals", "wild animals",
         {"dog", "cat", "horse", "bird", "wolf", "lion", "forest", "nest", "feather", "tail", "paw", "bark", "hunt",
          "wild"}},
    };
    return t;
}

constexpr int kBotany = 0, kIndustry = 1, kSuperhero = 2;
constexpr int kFactorySegmentId = 20000;

const std::set<std::string>& comic_words() {
    static const std::set<std::string> w = {"comic", "cape", "villain", "costume", "sidekick", "mask"};
    return w;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " " : "") + words[i];
    return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

/// Topic sentence of 8..13 words: roughly half topic words, half function words.
std::vector<std::string> topic_sentence(int topic, Rng& rng, const std::vector<std::string>& exclude = {}) {
    const auto& words = topics()[static_cast<std::size_t>(topic)].words;
    std::vector<std::string> pool;
    for (const auto& w : words)
        if (std::find(exclude.begin(), exclude.end(), w) == exclude.end()) pool.push_back(w);
    const int len = 8 + static_cast<int>(rng.below(6));
    std::vector<std::string> out;
    for (int i = 0; i < len; ++i) out.push_back(rng.uniform() < 0.5 ? pick(pool, rng) : pick(function_words(), rng));
    return out;
}

void insert_at_random(std::vector<std::string>& sentence, const std::vector<std::string>& words, Rng& rng) {
    const auto pos = static_cast<std::ptrdiff_t>(rng.below(sentence.size() + 1));
    sentence.insert(sentence.begin() + pos, words.begin(), words.end());
}

std::vector<std::string> botanical_plant_sentence(Rng& rng) {
    auto s = topic_sentence(kBotany, rng, {"plant", "plants"});
    insert_at_random(s, {rng.uniform() < 0.7 ? "plant" : "plants"}, rng);
    return s;
}

std::vector<std::string> factory_plant_sentence(Rng& rng) {
    auto s = topic_sentence(kIndustry, rng, {"power"});
    insert_at_random(s, {"power", "plant"}, rng);
    return s;
}

std::vector<std::string> make_corpus(int n, Rng& rng) {
    const int n_topics = static_cast<int>(topics().size());
    std::vector<std::string> lines;
    for (int i = 0; i < n; ++i) {
        // botany, industry and superhero text is over-represented
        int topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_topics + 3)));
        if (topic >= n_topics) topic -= n_topics;
        std::vector<std::string> s;
        if (topic == kBotany && rng.uniform() < 0.6) {
            s = botanical_plant_sentence(rng);
        } else if (topic == kIndustry && rng.uniform() < 0.35) {
            s = factory_plant_sentence(rng);
        } else if (topic == kSuperhero) {
            s = topic_sentence(kSuperhero, rng, {"hero", "heroes"});
            if (rng.uniform() < 0.6) insert_at_random(s, {rng.uniform() < 0.7 ? "hero" : "heroes"}, rng);
        } else {
            s = topic_sentence(topic, rng);
        }
        lines.push_back(join(s));
    }
    return lines;
}

/// Mean-zero orthonormal directions (mean-zero so layer norm keeps them).
std::vector<VectorF> planted_directions(int count, int d, Rng& rng) {
    std::vector<VectorD> basis;
    while (static_cast<int>(basis.size()) < count) {
        VectorD v(d);
        for (int i = 0; i < d; ++i) v(i) = rng.normal();
        v.array() -= v.mean();
        for (const auto& b : basis) v -= v.dot(b) * b;
        const double n = v.norm();
        if (n < 1e-6) continue;
        basis.push_back(v / n);
    }
    std::vector<VectorF> out;
    for (const auto& b : basis) out.push_back(b.cast<float>());
    return out;
}

struct Directions {
    VectorF plant, hero, comic;
    std::vector<VectorF> topic;
    VectorF function;
};

Model build_model(Rng& rng, Directions& dirs) {
    Model model;
    model.tokenizer = Tokenizer(fixture_vocabulary());
    model.weights = random_weights(model.config, rng);
    const int d = model.config.d_model;
    auto basis = planted_directions(4 + static_cast<int>(topics().size()), d, rng);
    dirs.plant = basis[0];
    dirs.hero = basis[1];
    dirs.comic = basis[2];
    dirs.function = basis[3];
    dirs.topic.assign(basis.begin() + 4, basis.end());

    auto& emb = model.weights.token_embedding;
    emb *= 0.7f;  // keep token identity below the planted topic structure
    auto row = [&](const std::string& w) { return model.tokenizer.id_of(w); };
    for (const auto& w : function_words()) emb.row(row(w)) += 1.0f * dirs.function.transpose();
    for (std::size_t t = 0; t < topics().size(); ++t)
        for (const auto& w : topics()[t].words) emb.row(row(w)) += 1.4f * dirs.topic[t].transpose();
    for (const char* w : {"plant", "plants"}) emb.row(row(w)) += 2.2f * dirs.plant.transpose();
    for (const char* w : {"hero", "heroes"}) emb.row(row(w)) += 2.2f * dirs.hero.transpose();
    for (const auto& w : comic_words()) emb.row(row(w)) += 2.0f * dirs.comic.transpose();
    return model;
}

struct TrainingSet {
    MatrixF x;                       // rows: final-normed residuals
    std::vector<TokenId> y;          // next-token labels
};

void append_examples(TrainingSet& set, const MatrixF& normed, const std::vector<TokenId>& labels) {
    const Eigen::Index old = set.x.rows();
    set.x.conservativeResize(old + normed.rows(), normed.cols());
    set.x.bottomRows(normed.rows()) = normed;
    set.y.insert(set.y.end(), labels.begin(), labels.end());
}

/// Softmax regression of the unembedding on natural next-token data plus
/// steered examples: positive steering along the plant direction at an SAE
/// layer is labelled "plant", negative steering keeps the natural label.
void train_readout(Model& model, const std::vector<std::vector<TokenId>>& corpus, const Directions& dirs,
                   const std::vector<int>& layers, Rng& rng) {
    const TokenId plant = model.tokenizer.id_of("plant");
    TrainingSet set;
    set.x.resize(0, model.config.d_model);
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        const auto& ids = corpus[s];
        if (ids.size() < 2) continue;
        const std::vector<TokenId> labels(ids.begin() + 1, ids.end());
        const std::span<const TokenId> prefix(ids.data(), ids.size() - 1);
        auto normed = [&](std::span<const SteeringHook> hooks) {
            const auto trace = forward_with_trace(model, prefix, hooks);
            return final_norm(model, trace.residuals.back());
        };
        append_examples(set, normed({}), labels);
        if (s % 3 == 0) {
            const SteeringHook up{pick(layers, rng), dirs.plant, static_cast<float>(rng.uniform(3.0, 11.0))};
            append_examples(set, normed(std::span<const SteeringHook>(&up, 1)),
                            std::vector<TokenId>(labels.size(), plant));
            const SteeringHook down{pick(layers, rng), dirs.plant, static_cast<float>(-rng.uniform(3.0, 11.0))};
            append_examples(set, normed(std::span<const SteeringHook>(&down, 1)), labels);
        }
    }

    const Eigen::Index n = set.x.rows(), d = set.x.cols(), v = model.config.vocab_size;
    MatrixF w = MatrixF::Zero(v, d), m = MatrixF::Zero(v, d), s2 = MatrixF::Zero(v, d);
    const float lr = 0.05f, b1 = 0.9f, b2 = 0.999f, eps = 1e-8f, l2 = 1e-4f;
    const int batch = 1024, steps = 400;
    MatrixF xb(batch, d);
    for (int step = 1; step <= steps; ++step) {
        std::vector<TokenId> yb(batch);
        for (int i = 0; i < batch; ++i) {
            const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            xb.row(i) = set.x.row(r);
            yb[static_cast<std::size_t>(i)] = set.y[static_cast<std::size_t>(r)];
        }
        MatrixF logits = xb * w.transpose();
        for (int i = 0; i < batch; ++i) {
            auto row = logits.row(i);
            row.array() -= row.maxCoeff();
            row = row.array().exp().matrix();
            row /= row.sum();
            row(yb[static_cast<std::size_t>(i)]) -= 1.0f;
        }
        const MatrixF grad = (logits.transpose() * xb) / static_cast<float>(batch) + l2 * w;
        m = b1 * m + (1.0f - b1) * grad;
        s2 = b2 * s2 + (1.0f - b2) * grad.cwiseAbs2();
        const float c1 = 1.0f - std::pow(b1, static_cast<float>(step));
        const float c2 = 1.0f - std::pow(b2, static_cast<float>(step));
        w.array() -= lr * (m.array() / c1) / ((s2.array() / c2).sqrt() + eps);
    }
    model.weights.unembedding = w;
}

struct PinnedFeature {
    int index = 0;
    VectorF direction;  // unit; decoder row
    float threshold = 0.0f;
    float gain = 1.0f;  // encoder row is gain * direction
};

/// Threshold separating projections on `positive` rows from the rest.
float separating_threshold(const VectorF& proj, const std::vector<bool>& positive) {
    std::vector<float> pos, neg;
    for (Eigen::Index i = 0; i < proj.size(); ++i) (positive[static_cast<std::size_t>(i)] ? pos : neg).push_back(proj(i));
    if (pos.empty()) fail(ErrorCode::data_error, "planted concept never occurs in the corpus");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    const float lo_pos = pos[pos.size() / 20];  // 5th percentile of positives
    const float hi_neg = neg.empty() ? 0.0f : neg[neg.size() - 1 - neg.size() / 500];
    return std::max(0.05f, 0.5f * (lo_pos + hi_neg));
}

struct SaeTrainResult {
    SaeWeights sae;
    double error = 0.0;
};

SaeTrainResult train_sae(const MatrixF& x, int n_features, const std::vector<PinnedFeature>& pinned, bool jump_relu,
                         int layer, Rng& rng) {
    const Eigen::Index d = x.cols(), f = n_features, n = x.rows();
    MatrixF w_enc(f, d), w_dec(f, d);
    VectorF b_enc = VectorF::Zero(f);
    VectorF b_dec = x.colwise().mean().transpose();
    for (Eigen::Index i = 0; i < f; ++i) {
        // initialise from centred data rows so that few features start dead
        VectorF v = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))).transpose() - b_dec;
        for (Eigen::Index k = 0; k < d; ++k) v(k) += 0.1f * static_cast<float>(rng.normal());
        v.normalize();
        w_dec.row(i) = v.transpose();
        w_enc.row(i) = v.transpose();
        b_enc(i) = -0.3f;
    }
    std::vector<bool> frozen(static_cast<std::size_t>(f), false);
    for (const auto& p : pinned) {
        w_enc.row(p.index) = p.gain * p.direction.transpose();
        w_dec.row(p.index) = p.direction.transpose();
        b_enc(p.index) = -p.gain * p.threshold;
        frozen[static_cast<std::size_t>(p.index)] = true;
    }

    struct Adam {
        MatrixF m, v;
        explicit Adam(Eigen::Index r, Eigen::Index c) : m(MatrixF::Zero(r, c)), v(MatrixF::Zero(r, c)) {}
        void step(Eigen::Ref<MatrixF> p, const MatrixF& g, float lr, int t) {
            m = 0.9f * m + 0.1f * g;
            v = 0.999f * v + 0.001f * g.cwiseAbs2();
            const float c1 = 1.0f - std::pow(0.9f, static_cast<float>(t)), c2 = 1.0f - std::pow(0.999f, static_cast<float>(t));
            p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8f);
        }
    };
    Adam a_wenc(f, d), a_wdec(f, d), a_benc(1, f), a_bdec(1, d);
    const int batch = 512, steps = 700;
    const float lambda = 0.04f, lr = 3e-3f;
    MatrixF xb(batch, d);
    for (int step = 1; step <= steps; ++step) {
        for (int i = 0; i < batch; ++i) xb.row(i) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
        MatrixF pre = xb * w_enc.transpose();
        pre.rowwise() += b_enc.transpose();
        const MatrixF z = pre.cwiseMax(0.0f);
        MatrixF r = z * w_dec;
        r.rowwise() += b_dec.transpose();
        r -= xb;
        const MatrixF g_out = r * (2.0f / batch);
        MatrixF g_wdec = z.transpose() * g_out;
        const MatrixF g_bdec = g_out.colwise().sum();
        MatrixF g_pre = (g_out * w_dec.transpose()).array() + lambda / batch;
        g_pre = g_pre.cwiseProduct((pre.array() > 0.0f).cast<float>().matrix());
        MatrixF g_wenc = g_pre.transpose() * xb;
        MatrixF g_benc = g_pre.colwise().sum();
        for (Eigen::Index i = 0; i < f; ++i) {
            if (!frozen[static_cast<std::size_t>(i)]) continue;
            g_wdec.row(i).setZero();
            g_wenc.row(i).setZero();
            g_benc(0, i) = 0.0f;
        }
        a_wenc.step(w_enc, g_wenc, lr, step);
        a_wdec.step(w_dec, g_wdec, lr, step);
        MatrixF benc_row = b_enc.transpose();
        a_benc.step(benc_row, g_benc, lr, step);
        b_enc = benc_row.transpose();
        MatrixF bdec_row = b_dec.transpose();
        a_bdec.step(bdec_row, g_bdec, lr, step);
        b_dec = bdec_row.transpose();
        for (Eigen::Index i = 0; i < f; ++i) {
            if (frozen[static_cast<std::size_t>(i)]) continue;
            const float norm = w_dec.row(i).norm();
            if (norm > 0.0f) w_dec.row(i) /= norm;
        }
    }

    SaeTrainResult out;
    auto& sae = out.sae;
    sae.w_enc = w_enc;
    sae.b_enc = b_enc;
    sae.w_dec = w_dec;
    sae.b_dec = b_dec;
    sae.layer_index = layer;
    if (jump_relu) {
        // JumpReLU form: move the bias into per-feature thresholds, z = pre if pre > theta
        sae.activation = SaeActivation::jump_relu;
        sae.threshold = (-b_enc).cwiseMax(0.0f);
        sae.b_enc = b_enc.cwiseMax(0.0f);
        // the jump changes the codes, so refit the free decoder rows and the
        // decoder bias by ridge regression on the new codes
        const MatrixF z = encode_rows(sae, x);
        MatrixD target = x.cast<double>();
        std::vector<Eigen::Index> free_rows;
        for (Eigen::Index i = 0; i < f; ++i) {
            if (frozen[static_cast<std::size_t>(i)])
                target -= z.col(i).cast<double>() * w_dec.row(i).cast<double>();
            else
                free_rows.push_back(i);
        }
        const auto k = static_cast<Eigen::Index>(free_rows.size());
        MatrixD design(n, k + 1);
        for (Eigen::Index j = 0; j < k; ++j) design.col(j) = z.col(free_rows[static_cast<std::size_t>(j)]).cast<double>();
        design.col(k).setOnes();
        MatrixD gram = design.transpose() * design;
        gram.diagonal().array() += 1e-3 * static_cast<double>(n);
        const MatrixD solution = gram.ldlt().solve(design.transpose() * target);
        for (Eigen::Index j = 0; j < k; ++j)
            sae.w_dec.row(free_rows[static_cast<std::size_t>(j)]) = solution.row(j).cast<float>();
        sae.b_dec = solution.row(k).transpose().cast<float>();
    }
    sae.validate();
    out.error = mean_relative_reconstruction_error(sae, x);
    return out;
}

std::string topic_of(const std::string& word) {
    for (const auto& t : topics())
        if (std::find(t.words.begin(), t.words.end(), word) != t.words.end()) return t.label;
    return "";
}

std::string list_words(const std::vector<std::string>& w) {
    if (w.size() == 1) return w[0];
    std::string out;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) out += (i ? ", " : "") + w[i];
    return out + " and " + w.back();
}

std::string describe(int feature, const std::vector<std::string>& top_tokens) {
    if (top_tokens.empty()) return "inactive feature without a consistent trigger";
    std::map<std::string, int> votes;
    for (const auto& t : top_tokens) ++votes[topic_of(t)];
    std::string label;
    int best = 0;
    for (const auto& [l, v] : votes)
        if (v > best) {
            best = v;
            label = l;
        }
    std::vector<std::string> shown;
    for (const auto& t : top_tokens)
        if (topic_of(t) == label && shown.size() < 3) shown.push_back(t);
    if (label.empty()) return "function words such as " + list_words(shown);
    switch (feature % 4) {
        case 0: return label + " vocabulary such as " + list_words(shown);
        case 1: return "the word " + shown[0] + " in texts about " + label;
        case 2: return "passages on " + label + ", especially " + list_words(shown);
        default: return list_words(shown) + " in " + label + " writing";
    }
}

SegmentRecord make_segment(int feature, int segment_id, const Tokenized& tok, const MatrixF& acts) {
    SegmentRecord seg;
    seg.feature_id = feature;
    seg.segment_id = segment_id;
    seg.tokens = tok.pieces;
    seg.token_ids = tok.ids;
    for (Eigen::Index t = 0; t < acts.rows(); ++t) seg.activations.push_back(acts(t, feature));
    seg.text = join(tok.pieces);
    seg.refresh_max();
    return seg;
}

/// Indices spread evenly over a list sorted by strength, strongest first.
std::vector<std::size_t> spaced(std::size_t available, std::size_t wanted) {
    std::vector<std::size_t> out;
    if (available == 0) return out;
    if (available <= wanted) {
        out.resize(available);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    for (std::size_t i = 0; i < wanted; ++i) out.push_back(i * (available - 1) / (wanted - 1));
    return out;
}

}  // namespace

std::vector<std::string> fixture_vocabulary() {
    std::vector<std::string> vocab = {std::string(Tokenizer::kUnknown)};
    for (const auto& w : function_words()) vocab.push_back(w);
    for (const auto& t : topics())
        for (const auto& w : t.words) vocab.push_back(w);
    return vocab;
}

std::string fixture_sae_id(int layer, bool jump_relu) {
    return "res-l" + std::to_string(layer) + (jump_relu ? "-jumprelu" : "-relu");
}

MatrixF corpus_residuals(const Model& model, const std::vector<std::string>& lines, int layer) {
    std::vector<MatrixF> parts;
    Eigen::Index rows = 0;
    for (const auto& line : lines) {
        const auto tok = model.tokenizer.encode(line);
        parts.push_back(forward_with_trace(model, tok.ids).residuals[static_cast<std::size_t>(layer)]);
        rows += parts.back().rows();
    }
    MatrixF out(rows, model.config.d_model);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p;
        at += p.rows();
    }
    return out;
}

FixtureSummary generate_fixtures(const fs::path& out_dir, const FixtureOptions& options) {
    if (options.n_features <= 32) fail(ErrorCode::invalid_argument, "fixture SAEs must be overcomplete");
    if (options.sae_layers.empty()) fail(ErrorCode::invalid_argument, "no SAE layers requested");
    Rng rng(options.seed);
    FixtureSummary summary;

    Directions dirs;
    Model model = build_model(rng, dirs);
    for (int layer : options.sae_layers)
        if (layer < 0 || layer >= model.config.n_layers) fail(ErrorCode::invalid_argument, "SAE layer out of range");
    if (static_cast<int>(model.tokenizer.size()) != model.config.vocab_size)
        fail(ErrorCode::data_error, "fixture vocabulary has the wrong size", std::to_string(model.tokenizer.size()));

    const auto lines = make_corpus(options.n_sentences, rng);
    std::vector<Tokenized> corpus_tok;
    std::vector<std::vector<TokenId>> corpus_ids;
    for (const auto& l : lines) {
        corpus_tok.push_back(model.tokenizer.encode(l));
        corpus_ids.push_back(corpus_tok.back().ids);
    }
    train_readout(model, corpus_ids, dirs, options.sae_layers, rng);

    summary.model_dir = out_dir / "model";
    save_model(summary.model_dir, model);
    {
        std::string text;
        for (const auto& l : lines) text += l + "\n";
        write_text_file(out_dir / "corpus.txt", text);
    }

    // token flags per corpus position, aligned with corpus_residuals rows
    std::vector<std::string> position_words;
    for (const auto& t : corpus_tok) position_words.insert(position_words.end(), t.pieces.begin(), t.pieces.end());
    auto flags = [&](const std::set<std::string>& words) {
        std::vector<bool> out;
        for (const auto& w : position_words) out.push_back(words.contains(w));
        return out;
    };
    const auto plant_pos = flags({"plant", "plants"});
    const auto hero_pos = flags({"hero", "heroes"});
    std::set<std::string> companion_words = comic_words();
    companion_words.insert({"hero", "heroes"});
    const auto companion_pos = flags(companion_words);
    const VectorF companion_dir = (dirs.hero + dirs.comic).normalized();

    // sentences for the planted "plant" feature's segment list
    std::vector<Tokenized> botanical, factory;
    for (int i = 0; i < 300; ++i) botanical.push_back(model.tokenizer.encode(join(botanical_plant_sentence(rng))));
    for (int i = 0; i < 120; ++i) factory.push_back(model.tokenizer.encode(join(factory_plant_sentence(rng))));

    Json expectations;
    expectations["seed"] = options.seed;
    expectations["corpus"] = "corpus.txt";
    expectations["model"] = "model";
    expectations["probe"] = {{"text", "the plant grows in the garden"}, {"peak_token", "plant"}, {"peak_index", 1}};
    expectations["coactivation"] = {{"text", "the hero saves the city"}, {"anchors", {1}}, {"top_n", 10}};

    std::vector<std::string> prompts;
    {
        Rng prompt_rng(options.seed ^ 0x5157EE2ull);
        while (prompts.size() < 20) {
            const int topic = 1 + static_cast<int>(prompt_rng.below(topics().size() - 1));
            auto s = topic_sentence(topic, prompt_rng, {"plant", "plants"});
            s.resize(5);
            prompts.push_back(join(s));
        }
    }
    expectations["steering"] = {
        {"target_token", "plant"}, {"strengths", {-8.0, 0.0, 8.0}}, {"max_new_tokens", 12}, {"prompts", prompts}};

    Json packs_json = Json::object();
    for (std::size_t li = 0; li < options.sae_layers.size(); ++li) {
        const int layer = options.sae_layers[li];
        const bool jump = li + 1 == options.sae_layers.size() && options.sae_layers.size() > 1;
        const std::string sae_id = fixture_sae_id(layer, jump);
        const MatrixF x = corpus_residuals(model, lines, layer);

        // distinct seeded feature indices for the planted concepts
        std::vector<int> ids(static_cast<std::size_t>(options.n_features));
        std::iota(ids.begin(), ids.end(), 0);
        for (int i = 0; i < 3; ++i)
            std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(i + static_cast<int>(rng.below(ids.size() - i)))]);
        std::vector<PinnedFeature> pinned = {
            {ids[0], dirs.plant, separating_threshold(x * dirs.plant, plant_pos)},
            {ids[1], dirs.hero, separating_threshold(x * dirs.hero, hero_pos)},
            {ids[2], companion_dir, separating_threshold(x * companion_dir, companion_pos), 4.0f},
        };
        {
            // the companion must also fire on hero tokens themselves
            const VectorF proj = x * companion_dir;
            std::vector<float> on_hero;
            for (Eigen::Index i = 0; i < proj.size(); ++i)
                if (hero_pos[static_cast<std::size_t>(i)]) on_hero.push_back(proj(i));
            std::sort(on_hero.begin(), on_hero.end());
            pinned[2].threshold = std::min(pinned[2].threshold, 0.8f * on_hero[on_hero.size() / 20]);
        }
        const int plant_f = ids[0], hero_f = ids[1], companion_f = ids[2];

        SaeTrainResult trained = train_sae(x, options.n_features, pinned, jump, layer, rng);
        const SaeWeights& sae = trained.sae;
        const double bound = std::ceil(trained.error * 1.02 * 1000.0) / 1000.0;

        // corpus activations, per sentence
        std::vector<MatrixF> acts;
        for (const auto& t : corpus_tok)
            acts.push_back(feature_activation_over_trace(sae, forward_with_trace(model, t.ids)));

        FeaturePack pack;
        pack.manifest.sae_id = sae_id;
        pack.manifest.layer_index = layer;
        pack.manifest.d_model = model.config.d_model;
        pack.manifest.n_features = options.n_features;
        pack.manifest.activation = sae.activation;
        pack.manifest.model_path = "../model";
        pack.manifest.provenance = "synthetic fixture, seed " + std::to_string(options.seed);
        pack.manifest.extra["reconstruction_error"] = std::to_string(trained.error);
        pack.manifest.extra["reconstruction_bound"] = std::to_string(bound);
        pack.sae = sae;

        for (int f = 0; f < options.n_features; ++f) {
            // strongest (sentence, position) pairs of this feature
            struct Hit {
                float value;
                std::size_t sentence;
                Eigen::Index pos;
            };
            std::vector<Hit> hits;
            std::vector<std::pair<float, std::size_t>> sentence_max;
            for (std::size_t s = 0; s < acts.size(); ++s) {
                float best = 0.0f;
                for (Eigen::Index t = 0; t < acts[s].rows(); ++t) {
                    const float v = acts[s](t, f);
                    if (v > 0.0f) hits.push_back({v, s, t});
                    best = std::max(best, v);
                }
                if (best > 0.0f) sentence_max.push_back({best, s});
            }
            std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
                return a.value != b.value ? a.value > b.value : (a.sentence != b.sentence ? a.sentence < b.sentence : a.pos < b.pos);
            });
            std::vector<std::string> top_tokens;
            std::map<std::string, float> weight;
            for (std::size_t i = 0; i < std::min<std::size_t>(hits.size(), 40); ++i)
                weight[corpus_tok[hits[i].sentence].pieces[static_cast<std::size_t>(hits[i].pos)]] += hits[i].value;
            std::vector<std::pair<std::string, float>> ranked(weight.begin(), weight.end());
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                return a.second != b.second ? a.second > b.second : a.first < b.first;
            });
            // the pinned features own the planted words
            for (const auto& [w, v] : ranked)
                if (w != "plant" && w != "plants" && w != "hero" && w != "heroes") top_tokens.push_back(w);

            std::string explanation;
            if (f == plant_f)
                explanation = "the word plant and plants in cultivation and agriculture";
            else if (f == hero_f)
                explanation = "the word hero in superhero comics: heroes who rescue people";
            else if (f == companion_f)
                explanation = "comic book imagery such as capes, masks, villains and costumed heroes";
            else
                explanation = describe(f, top_tokens);
            pack.explanations.push_back(explanation);

            if (f == plant_f) continue;
            std::sort(sentence_max.begin(), sentence_max.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            for (std::size_t k : spaced(sentence_max.size(), 12)) {
                const std::size_t s = sentence_max[k].second;
                pack.segments.push_back(make_segment(f, static_cast<int>(s), corpus_tok[s], acts[s]));
            }
        }

        // planted plant-feature segments: one factory-sense sentence that
        // out-activates every botanical one
        {
            auto max_of = [&](const Tokenized& t) {
                return feature_activation_over_trace(sae, forward_with_trace(model, t.ids)).col(plant_f).maxCoeff();
            };
            std::size_t best_factory = 0;
            float best_value = -1.0f;
            for (std::size_t i = 0; i < factory.size(); ++i) {
                const float v = max_of(factory[i]);
                if (v > best_value) {
                    best_value = v;
                    best_factory = i;
                }
            }
            std::vector<std::pair<float, std::size_t>> below;
            for (std::size_t i = 0; i < botanical.size(); ++i) {
                const float v = max_of(botanical[i]);
                if (v > 0.0f && v < best_value) below.push_back({v, i});
            }
            std::sort(below.begin(), below.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            if (below.size() < 40)
                fail(ErrorCode::data_error, "too few botanical segments below the factory segment", sae_id);
            const int factory_id = kFactorySegmentId;
            const auto& ft = factory[best_factory];
            pack.segments.push_back(make_segment(plant_f, factory_id, ft,
                                                 feature_activation_over_trace(sae, forward_with_trace(model, ft.ids))));
            for (std::size_t k : spaced(below.size(), 47)) {
                const auto& bt = botanical[below[k].second];
                pack.segments.push_back(make_segment(plant_f, 10000 + static_cast<int>(below[k].second), bt,
                                                     feature_activation_over_trace(sae, forward_with_trace(model, bt.ids))));
            }
            packs_json[sae_id]["factory_segment_id"] = factory_id;
            packs_json[sae_id]["factory_segment_activation"] = best_value;
        }
        std::sort(pack.segments.begin(), pack.segments.end(), [](const SegmentRecord& a, const SegmentRecord& b) {
            return a.feature_id != b.feature_id ? a.feature_id < b.feature_id : a.segment_id < b.segment_id;
        });

        const fs::path dir = out_dir / sae_id;
        write_pack(pack, dir);
        summary.pack_dirs.push_back(dir);

        auto& pj = packs_json[sae_id];
        pj["layer_index"] = layer;
        pj["activation"] = to_string(sae.activation);
        pj["plant_feature"] = plant_f;
        pj["hero_feature"] = hero_f;
        pj["companion_feature"] = companion_f;
        pj["reconstruction_error"] = trained.error;
        pj["reconstruction_bound"] = bound;

        // the top-activating segment overall, for re-derivation checks
        const SegmentRecord* top = nullptr;
        for (const auto& s : pack.segments)
            if (top == nullptr || s.max_activation > top->max_activation) top = &s;
        pj["top_segment"] = {{"feature_id", top->feature_id},
                             {"segment_id", top->segment_id},
                             {"text", top->text},
                             {"activations", top->activations}};

        // planted behaviour must hold, otherwise the fixtures are useless
        const auto probe = probe_input(model, sae, plant_f, expectations["probe"]["text"].get<std::string>());
        if (probe.tokens[static_cast<std::size_t>(probe.peak_index)] != "plant" || probe.peak_activation <= 0.0f)
            fail(ErrorCode::data_error, "planted plant feature does not peak on 'plant'", sae_id);
        const auto co = co_activated_features(model, sae, hero_f, "the hero saves the city", {1}, 10);
        if (std::none_of(co.features.begin(), co.features.end(),
                         [&](const CoActivatedFeature& c) { return c.feature_id == companion_f; })) {
            const auto all = co_activated_features(model, sae, hero_f, "the hero saves the city", {1}, options.n_features);
            std::string detail = sae_id;
            for (std::size_t i = 0; i < all.features.size(); ++i)
                if (all.features[i].feature_id == companion_f)
                    detail += ": companion rank " + std::to_string(i + 1) + ", activation " +
                              std::to_string(all.features[i].activation);
            fail(ErrorCode::data_error, "companion feature does not co-activate with the hero feature", detail);
        }

        const auto hashing = make_embedder("hashing");
        const auto matrix = activation_similarity_matrix(hashing->embed(pack.explanations[static_cast<std::size_t>(plant_f)]),
                                                         pack.segments_for(plant_f), *hashing, 0.3);
        const auto report = detect_anomalies(matrix.cells, 0.3);
        if (std::none_of(report.anomalies.begin(), report.anomalies.end(), [](const Anomaly& a) {
                return a.segment_id == kFactorySegmentId && a.region == Region::high_act_low_sim;
            }))
            fail(ErrorCode::data_error, "factory segment is not flagged as high activation, low similarity", sae_id);

        GenerationSettings greedy;
        greedy.max_new_tokens = expectations["steering"]["max_new_tokens"].get<int>();
        const TokenId plant_id = model.tokenizer.id_of("plant");
        int strict = 0;
        for (const auto& prompt : prompts) {
            const auto branches = steer_generate(model, sae, plant_f, prompt, {-8.0f, 0.0f, 8.0f}, greedy);
            std::array<long, 3> counts{};
            for (std::size_t i = 0; i < 3; ++i)
                counts[i] = std::count(branches[i].tokens.begin(), branches[i].tokens.end(), plant_id);
            if (counts[0] > counts[1] || counts[1] > counts[2])
                fail(ErrorCode::data_error, "steering sweep is not ordered", sae_id + ": " + prompt);
            if (counts[0] < counts[2]) ++strict;
        }
        if (strict < 18) fail(ErrorCode::data_error, "steering sweep is too weak", sae_id);
    }
    expectations["packs"] = packs_json;

    PrecomputeOptions pre;
    pre.seed = options.seed;
    for (const auto& dir : summary.pack_dirs) {
        auto report = precompute_pack(dir, pre);
        for (auto& w : report.warnings) summary.warnings.push_back(report.sae_id + ": " + w);
    }

    summary.expectations = out_dir / "expectations.json";
    write_text_file(summary.expectations, expectations.dump(1) + "\n");
    return summary;
}

}  // namespace featurescope
