#include "infotok/vib.hpp"

#include "infotok/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace infotok::vib {

GaussianPosterior::GaussianPosterior(Eigen::VectorXd mu_in, Eigen::VectorXd log_sigma_in)
    : mu(std::move(mu_in)), log_sigma(std::move(log_sigma_in)) {
    if (mu.size() < 1) throw std::invalid_argument("GaussianPosterior: dimension must be >= 1");
    if (mu.size() != log_sigma.size()) {
        throw std::invalid_argument("GaussianPosterior: mu and log_sigma dimensions differ");
    }
    if (!mu.allFinite() || !log_sigma.allFinite()) {
        throw std::invalid_argument("GaussianPosterior: parameters must be finite");
    }
}

Eigen::VectorXd sample_reparam(const GaussianPosterior& post, const Eigen::VectorXd& noise) {
    if (noise.size() != post.dim()) {
        throw std::invalid_argument("sample_reparam: noise dimension does not match posterior");
    }
    return post.mu.array() + post.log_sigma.array().exp() * noise.array();
}

double kl_to_standard_normal(const GaussianPosterior& post) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < post.dim(); ++i) {
        const double m = post.mu[i];
        const double ls = post.log_sigma[i];
        acc += m * m + std::exp(2.0 * ls) - 2.0 * ls - 1.0;
    }
    return 0.5 * acc;
}

MonteCarloEstimate kl_monte_carlo(const GaussianPosterior& post, const PriorSpec& prior,
                                  std::size_t n, std::uint64_t seed) {
    if (prior.dim != post.dim()) {
        throw std::invalid_argument("kl_monte_carlo: prior dimension does not match posterior");
    }
    if (n < 1000) throw std::invalid_argument("kl_monte_carlo: n must be >= 1000");

    rng::Stream stream(seed, rng::Role::oracle);
    const Eigen::Index d = post.dim();
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        // log q(z) - log r(z) = 1/2 sum_j (z_j^2 - eps_j^2) - sum_j ls_j
        // for z = mu + sigma * eps; the Gaussian normalization cancels.
        double ratio = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double eps = stream.normal();
            const double z = post.mu[j] + std::exp(post.log_sigma[j]) * eps;
            ratio += 0.5 * (z * z - eps * eps) - post.log_sigma[j];
        }
        sum += ratio;
        sum_sq += ratio * ratio;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

ad::NodeId sample_reparam_node(ad::Graph& g, ad::NodeId mu, ad::NodeId log_sigma,
                               ad::NodeId noise) {
    return g.add(mu, g.multiply(g.exp(log_sigma), noise));
}

ad::NodeId kl_node(ad::Graph& g, ad::NodeId mu, ad::NodeId log_sigma) {
    const auto& shape = g.node_shape(mu);
    const double rows = static_cast<double>(shape.size() == 2 ? shape[0] : 1);
    // per-entry: mu^2 + exp(2 ls) - 2 ls - 1
    ad::NodeId per_entry = g.add_scalar(
        g.add(g.add(g.multiply(mu, mu), g.exp(g.scale(log_sigma, 2.0))), g.scale(log_sigma, -2.0)),
        -1.0);
    return g.scale(g.sum(per_entry), 0.5 / rows);
}

} // namespace infotok::vib
