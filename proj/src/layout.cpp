#include "featurescope/layout.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace featurescope {

void LayoutConfig::validate() const {
    if (n_neighbors < 2) fail(ErrorCode::invalid_argument, "n_neighbors must be >= 2");
    if (!(min_dist >= 0.0 && min_dist < 1.0)) fail(ErrorCode::invalid_argument, "min_dist must lie in [0, 1)");
    if (!(spread > 0.0) || spread < min_dist) fail(ErrorCode::invalid_argument, "spread must be positive and >= min_dist");
    if (n_epochs < 1) fail(ErrorCode::invalid_argument, "n_epochs must be >= 1");
    if (!(learning_rate > 0.0)) fail(ErrorCode::invalid_argument, "learning_rate must be positive");
    if (negative_sample_rate < 0) fail(ErrorCode::invalid_argument, "negative_sample_rate must be >= 0");
}

std::pair<double, double> fit_kernel_ab(double spread, double min_dist) {
    constexpr int kPoints = 300;
    std::vector<double> xs(kPoints), ys(kPoints);
    for (int i = 0; i < kPoints; ++i) {
        xs[static_cast<std::size_t>(i)] = 3.0 * spread * i / (kPoints - 1);
        const double x = xs[static_cast<std::size_t>(i)];
        ys[static_cast<std::size_t>(i)] = x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
    }
    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(kPoints);
        if (jac != nullptr) jac->resize(kPoints, 2);
        for (int i = 0; i < kPoints; ++i) {
            const double x = xs[static_cast<std::size_t>(i)];
            const double p = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double den = 1.0 + a * p;
            r(i) = 1.0 / den - ys[static_cast<std::size_t>(i)];
            if (jac != nullptr) {
                (*jac)(i, 0) = -p / (den * den);
                (*jac)(i, 1) = x > 0.0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0;
            }
        }
    };

    double a = 1.0, b = 1.0, lambda = 1e-3;
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(a, b, r, &jac);
    double cost = r.squaredNorm();
    for (int iter = 0; iter < 500; ++iter) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d g = jac.transpose() * r;
        Eigen::Matrix2d damped = jtj;
        damped.diagonal() += lambda * jtj.diagonal();
        const Eigen::Vector2d step = damped.ldlt().solve(-g);
        const double na = a + step(0), nb = b + step(1);
        Eigen::VectorXd nr;
        residuals(na, nb, nr, nullptr);
        const double ncost = nr.squaredNorm();
        if (std::isfinite(ncost) && ncost < cost) {
            const bool converged = cost - ncost <= 1e-15 * cost && step.norm() <= 1e-12 * (1.0 + std::abs(a) + std::abs(b));
            a = na;
            b = nb;
            cost = ncost;
            residuals(a, b, r, &jac);
            lambda = std::max(lambda / 10.0, 1e-12);
            if (converged) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    return {a, b};
}

KnnGraph exact_cosine_knn(const MatrixD& points, int k) {
    const Eigen::Index n = points.rows();
    if (k < 1 || k >= n) fail(ErrorCode::invalid_argument, "k must lie in [1, n)", std::to_string(k));
    MatrixD unit = points;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = unit.row(i).norm();
        if (norm == 0.0) fail(ErrorCode::invalid_argument, "cosine kNN: zero row", std::to_string(i));
        unit.row(i) /= norm;
    }
    const MatrixD sims = unit * unit.transpose();

    KnnGraph g;
    g.indices.resize(static_cast<std::size_t>(n));
    g.distances.resize(static_cast<std::size_t>(n));
    std::vector<int> order(static_cast<std::size_t>(n - 1));
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t pos = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            dist[static_cast<std::size_t>(j)] = std::max(0.0, 1.0 - sims(i, j));
            if (j != i) order[pos++] = static_cast<int>(j);
        }
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
            const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
            return da != db ? da < db : a < b;
        });
        auto& idx = g.indices[static_cast<std::size_t>(i)];
        auto& d = g.distances[static_cast<std::size_t>(i)];
        idx.assign(order.begin(), order.begin() + k);
        for (int j : idx) d.push_back(dist[static_cast<std::size_t>(j)]);
    }
    return g;
}

std::vector<FuzzyEdge> fuzzy_simplicial_set(const KnnGraph& knn) {
    const std::size_t n = knn.indices.size();
    if (n == 0) return {};
    const std::size_t k = knn.indices.front().size();
    const double target = std::log2(static_cast<double>(k));

    double mean_all = 0.0;
    for (const auto& row : knn.distances)
        for (double d : row) mean_all += d;
    mean_all /= static_cast<double>(n * k);

    std::vector<FuzzyEdge> directed;
    directed.reserve(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = knn.distances[i];
        const double rho = d.front();
        double lo = 0.0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
        for (int iter = 0; iter < 64; ++iter) {
            double total = 0.0;
            for (std::size_t j = 0; j < k; ++j) total += std::exp(-std::max(0.0, d[j] - rho) / sigma);
            if (std::abs(total - target) < 1e-5) break;
            if (total > target) {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = std::isinf(hi) ? sigma * 2.0 : (lo + hi) / 2.0;
            }
        }
        // keep sigma away from zero so that tight neighbourhoods stay connected
        double mean_i = 0.0;
        for (double v : d) mean_i += v;
        mean_i /= static_cast<double>(k);
        const double floor = 1e-3 * (rho > 0.0 ? mean_i : mean_all);
        sigma = std::max(sigma, std::max(floor, 1e-12));
        for (std::size_t j = 0; j < k; ++j)
            directed.push_back({static_cast<int>(i), knn.indices[i][j], std::exp(-std::max(0.0, d[j] - rho) / sigma)});
    }

    auto key_less = [](const FuzzyEdge& a, const FuzzyEdge& b) {
        return a.head != b.head ? a.head < b.head : a.tail < b.tail;
    };
    std::sort(directed.begin(), directed.end(), key_less);
    auto lookup = [&](int head, int tail) {
        const FuzzyEdge probe{head, tail, 0.0};
        auto it = std::lower_bound(directed.begin(), directed.end(), probe, key_less);
        return it != directed.end() && it->head == head && it->tail == tail ? it->weight : 0.0;
    };

    std::vector<FuzzyEdge> out;
    out.reserve(directed.size() * 2);
    for (const auto& e : directed) {
        const double back = lookup(e.tail, e.head);
        const double w = e.weight + back - e.weight * back;
        out.push_back({e.head, e.tail, w});
        if (back == 0.0) out.push_back({e.tail, e.head, w});
    }
    std::sort(out.begin(), out.end(), key_less);
    out.erase(std::unique(out.begin(), out.end(),
                          [](const FuzzyEdge& a, const FuzzyEdge& b) { return a.head == b.head && a.tail == b.tail; }),
              out.end());
    return out;
}

namespace {

MatrixD pca_init(const MatrixD& unit, Rng& rng, std::vector<std::string>& warnings) {
    const Eigen::Index n = unit.rows();
    const MatrixD centered = unit.rowwise() - unit.colwise().mean();
    MatrixD coords(n, 2);
    double top = 0.0;
    if (n <= unit.cols()) {
        const Eigen::MatrixXd gram = centered * centered.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        top = es.eigenvalues()(n - 1);
        for (int c = 0; c < 2; ++c) coords.col(c) = es.eigenvectors().col(n - 1 - c) * std::sqrt(std::max(0.0, es.eigenvalues()(n - 1 - c)));
    } else {
        const Eigen::MatrixXd cov = centered.transpose() * centered;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        const Eigen::Index d = cov.rows();
        top = es.eigenvalues()(d - 1);
        for (int c = 0; c < 2; ++c) coords.col(c) = centered * es.eigenvectors().col(d - 1 - c);
    }
    if (!(top > 1e-12)) {
        warnings.push_back("embeddings are degenerate (all rows identical up to scale); using jittered coordinates");
        for (Eigen::Index i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) coords(i, c) = rng.uniform(-10.0, 10.0);
        return coords;
    }
    for (int c = 0; c < 2; ++c) {
        // fix the eigenvector sign so the layout does not depend on the solver's choice
        Eigen::Index arg = 0;
        coords.col(c).cwiseAbs().maxCoeff(&arg);
        if (coords(arg, c) < 0.0) coords.col(c) *= -1.0;
    }
    const double extent = coords.cwiseAbs().maxCoeff();
    if (extent > 0.0) coords *= 10.0 / extent;
    for (Eigen::Index i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c) coords(i, c) += 1e-4 * rng.normal();
    return coords;
}

inline double clip(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace

LayoutResult compute_layout(const MatrixD& embeddings, const LayoutConfig& config) {
    config.validate();
    const Eigen::Index n = embeddings.rows();
    if (n < config.n_neighbors + 1)
        fail(ErrorCode::invalid_argument, "too few points for the layout",
             std::to_string(n) + " rows, need >= " + std::to_string(config.n_neighbors + 1));
    if (!embeddings.allFinite()) fail(ErrorCode::data_error, "layout input has non-finite values");

    LayoutResult result;
    std::tie(result.a, result.b) = fit_kernel_ab(config.spread, config.min_dist);
    const double a = result.a, b = result.b;

    Rng rng(config.seed);
    MatrixD unit = embeddings;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = unit.row(i).norm();
        if (norm == 0.0) fail(ErrorCode::invalid_argument, "layout input has a zero row", std::to_string(i));
        unit.row(i) /= norm;
    }
    MatrixD y = pca_init(unit, rng, result.warnings);

    auto edges = fuzzy_simplicial_set(exact_cosine_knn(unit, config.n_neighbors));
    double w_max = 0.0;
    for (const auto& e : edges) w_max = std::max(w_max, e.weight);
    const double cutoff = w_max / config.n_epochs;
    edges.erase(std::remove_if(edges.begin(), edges.end(), [&](const FuzzyEdge& e) { return e.weight < cutoff; }),
                edges.end());

    const std::size_t m = edges.size();
    std::vector<double> eps(m), next(m), eps_neg(m), next_neg(m);
    for (std::size_t e = 0; e < m; ++e) {
        eps[e] = w_max / edges[e].weight;
        next[e] = eps[e];
        eps_neg[e] = config.negative_sample_rate > 0 ? eps[e] / config.negative_sample_rate : 0.0;
        next_neg[e] = eps_neg[e];
    }

    for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
        const double alpha = config.learning_rate * (1.0 - static_cast<double>(epoch) / config.n_epochs);
        for (std::size_t e = 0; e < m; ++e) {
            if (next[e] > epoch) continue;
            const int j = edges[e].head, k = edges[e].tail;
            double dx = y(j, 0) - y(k, 0), dy = y(j, 1) - y(k, 1);
            double d2 = dx * dx + dy * dy;
            if (d2 > 0.0) {
                const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
                const double gx = clip(coeff * dx) * alpha, gy = clip(coeff * dy) * alpha;
                y(j, 0) += gx;
                y(j, 1) += gy;
                y(k, 0) -= gx;
                y(k, 1) -= gy;
            }
            next[e] += eps[e];

            if (eps_neg[e] <= 0.0) continue;
            const int n_neg = static_cast<int>((epoch - next_neg[e]) / eps_neg[e]);
            for (int p = 0; p < n_neg; ++p) {
                const int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
                if (other == j) continue;
                dx = y(j, 0) - y(other, 0);
                dy = y(j, 1) - y(other, 1);
                d2 = dx * dx + dy * dy;
                double gx = 4.0, gy = 4.0;
                if (d2 > 0.0) {
                    const double coeff = 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
                    gx = clip(coeff * dx);
                    gy = clip(coeff * dy);
                }
                y(j, 0) += gx * alpha;
                y(j, 1) += gy * alpha;
            }
            next_neg[e] += n_neg * eps_neg[e];
        }
    }

    if (!y.allFinite()) fail(ErrorCode::data_error, "layout diverged");
    result.coordinates = std::move(y);
    return result;
}

}  // namespace featurescope
