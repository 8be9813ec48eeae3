#ifndef FEATURESCOPE_SAE_HPP
#define FEATURESCOPE_SAE_HPP

#include "featurescope/common.hpp"
#include "featurescope/model.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace featurescope {

enum class SaeActivation { relu, jump_relu };

inline const char* to_string(SaeActivation a) { return a == SaeActivation::relu ? "relu" : "jumprelu"; }

/// Encoder/decoder weights of one sparse autoencoder reading the post-block
/// residual of `layer_index`. Decoder rows are feature directions.
template <typename Scalar>
struct BasicSaeWeights {
    RowMatrix<Scalar> w_enc;  // n_features x d_model
    Vector<Scalar> b_enc;     // n_features
    RowMatrix<Scalar> w_dec;  // n_features x d_model
    Vector<Scalar> b_dec;     // d_model
    SaeActivation activation = SaeActivation::relu;
    Vector<Scalar> threshold;  // n_features, JumpReLU only
    int layer_index = 0;

    Eigen::Index n_features() const { return w_enc.rows(); }
    Eigen::Index d_model() const { return w_enc.cols(); }

    void validate() const {
        const auto f = n_features(), d = d_model();
        if (f <= d) fail(ErrorCode::data_error, "SAE must be overcomplete (n_features > d_model)",
                         std::to_string(f) + " <= " + std::to_string(d));
        if (b_enc.size() != f || w_dec.rows() != f || w_dec.cols() != d || b_dec.size() != d)
            fail(ErrorCode::shape_mismatch, "SAE weight shapes are inconsistent");
        if (activation == SaeActivation::jump_relu) {
            if (threshold.size() != f) fail(ErrorCode::shape_mismatch, "JumpReLU threshold size mismatch");
            if (!threshold.allFinite() || (threshold.array() < Scalar(0)).any())
                fail(ErrorCode::data_error, "JumpReLU thresholds must be finite and non-negative");
        }
        if (!w_enc.allFinite() || !b_enc.allFinite() || !w_dec.allFinite() || !b_dec.allFinite())
            fail(ErrorCode::data_error, "SAE weights contain non-finite values");
        if (layer_index < 0) fail(ErrorCode::data_error, "negative SAE layer index");
    }
};

using SaeWeights = BasicSaeWeights<float>;

namespace detail {

template <typename Scalar, typename Derived>
void apply_activation(const BasicSaeWeights<Scalar>& sae, Eigen::MatrixBase<Derived>& pre) {
    if (sae.activation == SaeActivation::relu) {
        pre = pre.cwiseMax(Scalar(0));
        return;
    }
    // columns are features for both vectors (n x 1 transposed) and row batches
    for (Eigen::Index r = 0; r < pre.rows(); ++r)
        for (Eigen::Index c = 0; c < pre.cols(); ++c) {
            const Eigen::Index f = pre.cols() == 1 ? r : c;
            if (!(pre(r, c) > sae.threshold(f))) pre(r, c) = Scalar(0);
        }
}

template <typename Scalar>
void check_feature(const BasicSaeWeights<Scalar>& sae, Eigen::Index feature) {
    if (feature < 0 || feature >= sae.n_features())
        fail(ErrorCode::not_found, "feature id out of range", std::to_string(feature));
}

}  // namespace detail

/// z = f(W_enc x + b_enc)
template <typename Scalar, typename Derived>
Vector<Scalar> encode(const BasicSaeWeights<Scalar>& sae, const Eigen::MatrixBase<Derived>& x) {
    if (x.size() != sae.d_model())
        fail(ErrorCode::shape_mismatch, "encode: input dimension mismatch",
             std::to_string(x.size()) + " vs " + std::to_string(sae.d_model()));
    // single vectors accumulate in double; row batches below stay in Scalar
    const Eigen::VectorXd xd = x.template cast<double>();
    Vector<Scalar> z(sae.n_features());
    for (Eigen::Index f = 0; f < z.size(); ++f)
        z(f) = static_cast<Scalar>(sae.w_enc.row(f).template cast<double>().dot(xd.transpose()) + double(sae.b_enc(f)));
    detail::apply_activation(sae, z);
    return z;
}

/// Row-batched encode: each row of `x` is a residual vector.
template <typename Scalar, typename Derived>
RowMatrix<Scalar> encode_rows(const BasicSaeWeights<Scalar>& sae, const Eigen::MatrixBase<Derived>& x) {
    if (x.cols() != sae.d_model())
        fail(ErrorCode::shape_mismatch, "encode: input dimension mismatch",
             std::to_string(x.cols()) + " vs " + std::to_string(sae.d_model()));
    RowMatrix<Scalar> z = x.template cast<Scalar>() * sae.w_enc.transpose();
    z.rowwise() += sae.b_enc.transpose();
    detail::apply_activation(sae, z);
    return z;
}

/// x_hat = sum_i z_i W_dec[i] + b_dec
template <typename Scalar, typename Derived>
Vector<Scalar> decode(const BasicSaeWeights<Scalar>& sae, const Eigen::MatrixBase<Derived>& z) {
    if (z.size() != sae.n_features())
        fail(ErrorCode::shape_mismatch, "decode: code dimension mismatch",
             std::to_string(z.size()) + " vs " + std::to_string(sae.n_features()));
    Eigen::RowVectorXd x = sae.b_dec.transpose().template cast<double>();
    for (Eigen::Index f = 0; f < z.size(); ++f)
        if (z(f) != 0) x += double(z(f)) * sae.w_dec.row(f).template cast<double>();
    return x.transpose().template cast<Scalar>();
}

template <typename Scalar, typename Derived>
RowMatrix<Scalar> decode_rows(const BasicSaeWeights<Scalar>& sae, const Eigen::MatrixBase<Derived>& z) {
    if (z.cols() != sae.n_features()) fail(ErrorCode::shape_mismatch, "decode: code dimension mismatch");
    RowMatrix<Scalar> x = z.template cast<Scalar>() * sae.w_dec;
    x.rowwise() += sae.b_dec.transpose();
    return x;
}

/// Feature activations at every position of a trace, one row per token.
inline MatrixF feature_activation_over_trace(const SaeWeights& sae, const ResidualTrace& trace) {
    if (sae.layer_index >= static_cast<int>(trace.residuals.size()))
        fail(ErrorCode::invalid_argument, "SAE layer is not covered by the trace",
             std::to_string(sae.layer_index) + " >= " + std::to_string(trace.residuals.size()));
    return encode_rows(sae, trace.residuals[static_cast<std::size_t>(sae.layer_index)]);
}

struct TokenScore {
    int token_id = 0;
    double score = 0.0;
};

struct VocabProjection {
    VectorF scores;                // W_u * W_dec[feature], one per vocabulary entry
    std::vector<TokenScore> top;     // descending
    std::vector<TokenScore> bottom;  // ascending
};

inline VocabProjection vocabulary_projection(const SaeWeights& sae, Eigen::Index feature, const MatrixF& unembedding,
                                             int k) {
    detail::check_feature(sae, feature);
    if (k < 1) fail(ErrorCode::invalid_argument, "k must be >= 1");
    if (unembedding.cols() != sae.d_model())
        fail(ErrorCode::shape_mismatch, "unembedding width does not match SAE d_model");
    VocabProjection out;
    out.scores = unembedding * sae.w_dec.row(feature).transpose();
    std::vector<int> order(static_cast<std::size_t>(out.scores.size()));
    std::iota(order.begin(), order.end(), 0);
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    const auto& s = out.scores;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&s](int a, int b) { return s(a) != s(b) ? s(a) > s(b) : a < b; });
    for (std::size_t i = 0; i < kk; ++i) out.top.push_back({order[i], s(order[i])});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&s](int a, int b) { return s(a) != s(b) ? s(a) < s(b) : a < b; });
    for (std::size_t i = 0; i < kk; ++i) out.bottom.push_back({order[i], s(order[i])});
    return out;
}

/// Decoder row of `feature`, optionally scaled to unit L2 norm.
template <typename Scalar>
Vector<Scalar> steering_vector(const BasicSaeWeights<Scalar>& sae, Eigen::Index feature, bool normalize = false) {
    detail::check_feature(sae, feature);
    Vector<Scalar> v = sae.w_dec.row(feature).transpose();
    if (normalize) {
        const Scalar n = v.norm();
        if (n == Scalar(0)) fail(ErrorCode::data_error, "cannot normalize a zero decoder row");
        v /= n;
    }
    return v;
}

/// Mean of ||x - x_hat|| / ||x|| over the rows of `x` (rows with zero norm skipped).
template <typename Scalar, typename Derived>
double mean_relative_reconstruction_error(const BasicSaeWeights<Scalar>& sae, const Eigen::MatrixBase<Derived>& x) {
    const RowMatrix<Scalar> recon = decode_rows(sae, encode_rows(sae, x));
    double total = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double n = x.row(r).template cast<double>().norm();
        if (n == 0.0) continue;
        total += (x.row(r).template cast<double>() - recon.row(r).template cast<double>()).norm() / n;
        ++used;
    }
    return used == 0 ? 0.0 : total / static_cast<double>(used);
}

}  // namespace featurescope

#endif
