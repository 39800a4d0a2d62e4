#pragma once

#include "infotok/estimate.hpp"
#include "infotok/graph.hpp"

#include <Eigen/Core>

#include <cstdint>

namespace infotok::vib {

// log sigma is clamped to this range wherever a projection produces it.
inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;

// Diagonal Gaussian posterior q(z|x) = N(mu, diag(exp(log_sigma)^2)).
struct GaussianPosterior {
    Eigen::VectorXd mu;
    Eigen::VectorXd log_sigma;

    GaussianPosterior(Eigen::VectorXd mu_in, Eigen::VectorXd log_sigma_in);
    Eigen::Index dim() const { return mu.size(); }
};

// Standard-normal prior of a given dimension.
struct PriorSpec {
    Eigen::Index dim = 1;
};

// z = mu + exp(log_sigma) * noise, the reparameterized sample. Noise is
// caller-owned so the draw is differentiable in (mu, log_sigma).
Eigen::VectorXd sample_reparam(const GaussianPosterior& post, const Eigen::VectorXd& noise);

// Closed-form KL(q || N(0, I)) in nats:
//   1/2 sum_i (mu_i^2 + exp(2 ls_i) - 2 ls_i - 1)
double kl_to_standard_normal(const GaussianPosterior& post);

// Monte-Carlo estimate of E[log q(z) - log r(z)] over n reparameterized
// samples. Requires n >= 1000; deterministic given seed.
MonteCarloEstimate kl_monte_carlo(const GaussianPosterior& post, const PriorSpec& prior,
                                  std::size_t n, std::uint64_t seed);

// Graph builders. Rows of mu/log_sigma are batch samples.

// z = mu + exp(log_sigma) * noise, elementwise over a [K,d] batch.
ad::NodeId sample_reparam_node(ad::Graph& g, ad::NodeId mu, ad::NodeId log_sigma,
                               ad::NodeId noise);

// Batch-mean KL to the standard normal over rows: sums posterior dimensions,
// averages the K rows. Scalar node.
ad::NodeId kl_node(ad::Graph& g, ad::NodeId mu, ad::NodeId log_sigma);

} // namespace infotok::vib
