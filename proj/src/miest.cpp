#include "infotok/miest.hpp"

#include "infotok/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace infotok::mi {

namespace {

constexpr double kSumTolerance = 1e-12;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

} // namespace

DiscreteJoint::DiscreteJoint(Eigen::MatrixXd t) : table(std::move(t)) {
    if (table.rows() < 1 || table.cols() < 1) {
        throw std::invalid_argument("DiscreteJoint: table must be non-empty");
    }
    if ((table.array() < 0.0).any()) {
        throw std::invalid_argument("DiscreteJoint: entries must be nonnegative");
    }
    if (std::abs(table.sum() - 1.0) > kSumTolerance) {
        throw std::invalid_argument("DiscreteJoint: entries must sum to 1");
    }
}

double discrete_mi(const DiscreteJoint& joint) {
    const Eigen::VectorXd px = joint.table.rowwise().sum();
    const Eigen::VectorXd py = joint.table.colwise().sum();
    double mi = 0.0;
    for (Eigen::Index x = 0; x < joint.table.rows(); ++x) {
        for (Eigen::Index y = 0; y < joint.table.cols(); ++y) {
            const double p = joint.table(x, y);
            if (p > 0.0) mi += p * std::log(p / (px[x] * py[y]));
        }
    }
    return mi;
}

double discrete_entropy(const Eigen::VectorXd& dist) {
    if (dist.size() < 1) throw std::invalid_argument("discrete_entropy: empty distribution");
    if ((dist.array() < 0.0).any()) {
        throw std::invalid_argument("discrete_entropy: entries must be nonnegative");
    }
    if (std::abs(dist.sum() - 1.0) > kSumTolerance) {
        throw std::invalid_argument("discrete_entropy: entries must sum to 1");
    }
    double h = 0.0;
    for (Eigen::Index i = 0; i < dist.size(); ++i) h -= xlogx(dist[i]);
    return h;
}

double pushforward_mi(const DiscreteJoint& joint, const std::vector<int>& f, int out_size) {
    if (static_cast<Eigen::Index>(f.size()) != joint.table.rows()) {
        throw std::invalid_argument("pushforward_mi: map must cover every row of the joint");
    }
    if (out_size < 1) throw std::invalid_argument("pushforward_mi: output alphabet must be >= 1");
    for (int v : f) {
        if (v < 0 || v >= out_size) {
            throw std::invalid_argument("pushforward_mi: map value " + std::to_string(v) +
                                        " out of range [0," + std::to_string(out_size) + ")");
        }
    }
    Eigen::MatrixXd pushed = Eigen::MatrixXd::Zero(out_size, joint.table.cols());
    for (Eigen::Index x = 0; x < joint.table.rows(); ++x) {
        pushed.row(f[static_cast<std::size_t>(x)]) += joint.table.row(x);
    }
    return discrete_mi(DiscreteJoint(std::move(pushed)));
}

MixtureChannel::MixtureChannel(std::vector<MixtureComponent> comps)
    : components(std::move(comps)) {
    if (components.empty()) throw std::invalid_argument("MixtureChannel: no components");
    const Eigen::Index d = components.front().mean.size();
    double wsum = 0.0;
    for (const auto& c : components) {
        if (c.weight < 0.0) throw std::invalid_argument("MixtureChannel: negative weight");
        if (c.mean.size() != d || c.log_scale.size() != d) {
            throw std::invalid_argument("MixtureChannel: component dimensions differ");
        }
        if (!c.mean.allFinite() || !c.log_scale.allFinite()) {
            throw std::invalid_argument("MixtureChannel: parameters must be finite");
        }
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > kSumTolerance) {
        throw std::invalid_argument("MixtureChannel: weights must sum to 1");
    }
}

namespace {

// log N(z; mean, diag(exp(log_scale))^2)
double log_gaussian(const Eigen::VectorXd& z, const MixtureComponent& c) {
    constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
    double acc = -0.5 * static_cast<double>(z.size()) * kLogTwoPi;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        const double s = std::exp(c.log_scale[j]);
        const double u = (z[j] - c.mean[j]) / s;
        acc += -0.5 * u * u - c.log_scale[j];
    }
    return acc;
}

} // namespace

MonteCarloEstimate mixture_channel_mi(const MixtureChannel& channel, std::size_t n,
                                      std::uint64_t seed) {
    if (n < 10000) throw std::invalid_argument("mixture_channel_mi: n must be >= 10^4");

    rng::Stream stream(seed, rng::Role::oracle, 1);
    const Eigen::Index d = channel.dim();
    const std::size_t m = channel.components.size();
    std::vector<double> log_w(m);
    for (std::size_t k = 0; k < m; ++k) {
        log_w[k] = channel.components[k].weight > 0.0
                       ? std::log(channel.components[k].weight)
                       : -std::numeric_limits<double>::infinity();
    }

    Eigen::VectorXd z(d);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        // Draw component by its weight, then a reparameterized sample.
        const double u = stream.uniform();
        std::size_t k = 0;
        double acc = 0.0;
        for (; k < m; ++k) {
            acc += channel.components[k].weight;
            if (u <= acc) break;
        }
        if (k == m) k = m - 1;
        const auto& comp = channel.components[k];
        for (Eigen::Index j = 0; j < d; ++j) {
            z[j] = comp.mean[j] + std::exp(comp.log_scale[j]) * stream.normal();
        }
        // log m(z) via logsumexp over components.
        double max_term = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(m);
        for (std::size_t j = 0; j < m; ++j) {
            terms[j] = log_w[j] + log_gaussian(z, channel.components[j]);
            max_term = std::max(max_term, terms[j]);
        }
        double lse = 0.0;
        for (double t : terms) lse += std::exp(t - max_term);
        const double log_marginal = max_term + std::log(lse);
        const double ratio = log_gaussian(z, comp) - log_marginal;
        sum += ratio;
        sum_sq += ratio * ratio;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

EmbeddingBatch::EmbeddingBatch(Eigen::MatrixXd v, Eigen::MatrixXd t)
    : visual(std::move(v)), text(std::move(t)) {
    if (visual.rows() != text.rows() || visual.cols() != text.cols()) {
        throw std::invalid_argument("EmbeddingBatch: visual and text shapes differ");
    }
    if (visual.rows() < 1 || visual.cols() < 1) {
        throw std::invalid_argument("EmbeddingBatch: batch must be non-empty");
    }
    for (Eigen::Index i = 0; i < visual.rows(); ++i) {
        if (visual.row(i).norm() == 0.0 || text.row(i).norm() == 0.0) {
            throw std::invalid_argument("EmbeddingBatch: zero-norm row " + std::to_string(i));
        }
    }
}

double infonce(const EmbeddingBatch& batch, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("infonce: tau must be positive");
    const Eigen::Index k = batch.size();
    Eigen::MatrixXd sim(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            sim(i, j) = batch.visual.row(i).dot(batch.text.row(j)) /
                        (batch.visual.row(i).norm() * batch.text.row(j).norm());
        }
    }
    sim /= tau;
    double value = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double m = sim.row(i).maxCoeff();
        double s = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) s += std::exp(sim(i, j) - m);
        value += sim(i, i) - (m + std::log(s));
    }
    return value / static_cast<double>(k);
}

ad::NodeId infonce_node(ad::Graph& g, ad::NodeId visual, ad::NodeId text, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("infonce_node: tau must be positive");
    const auto& shape = g.node_shape(visual);
    if (shape.size() != 2) throw std::invalid_argument("infonce_node: visual must be rank 2");
    const auto k = static_cast<int>(shape[0]);
    // The per-anchor log-ratio is exactly minus the softmax cross-entropy of
    // the scaled similarity row against its own index.
    ad::NodeId sim = g.scale(g.cosine_similarity(visual, text), 1.0 / tau);
    std::vector<int> diagonal(static_cast<std::size_t>(k));
    std::iota(diagonal.begin(), diagonal.end(), 0);
    return g.negate(g.mean(g.softmax_cross_entropy(sim, std::move(diagonal))));
}

double linear_cka(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    if (X.rows() != Y.rows()) throw std::invalid_argument("linear_cka: row counts differ");
    if (X.rows() < 3) throw std::invalid_argument("linear_cka: need at least 3 rows");
    if (!X.allFinite() || !Y.allFinite()) {
        throw std::invalid_argument("linear_cka: entries must be finite");
    }
    const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    const Eigen::MatrixXd Yc = Y.rowwise() - Y.colwise().mean();
    const double cross = (Xc.transpose() * Yc).squaredNorm();
    const double nx = (Xc.transpose() * Xc).norm();
    const double ny = (Yc.transpose() * Yc).norm();
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return cross / (nx * ny);
}

} // namespace infotok::mi
