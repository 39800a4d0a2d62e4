#pragma once

#include "infotok/estimate.hpp"
#include "infotok/graph.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace infotok::mi {

// All quantities are in nats.

// Joint distribution over a finite (X, Y) pair; entries sum to 1.
struct DiscreteJoint {
    Eigen::MatrixXd table;

    explicit DiscreteJoint(Eigen::MatrixXd t);
};

// Exact I(X;Y) = sum p(x,y) log [p(x,y) / (p(x) p(y))], with 0 log 0 = 0.
double discrete_mi(const DiscreteJoint& joint);

// Exact entropy -sum p log p of a distribution vector.
double discrete_entropy(const Eigen::VectorXd& dist);

// I(f(X); Y) for a deterministic map f given as f[x] in [0, out_size),
// computed exactly by marginalizing rows of the joint through f.
double pushforward_mi(const DiscreteJoint& joint, const std::vector<int>& f, int out_size);

// Gaussian mixture channel: I draws a component, Z | I=k is a diagonal
// Gaussian. Used as an oracle for the gap of the KL compactness bound.
struct MixtureComponent {
    double weight = 0.0;
    Eigen::VectorXd mean;
    Eigen::VectorXd log_scale;
};

struct MixtureChannel {
    std::vector<MixtureComponent> components;

    explicit MixtureChannel(std::vector<MixtureComponent> comps);
    Eigen::Index dim() const { return components.front().mean.size(); }
};

// Monte-Carlo estimate of I(Z;I) = E[log q(z|I) - log m(z)] with m the exact
// mixture marginal. Requires n >= 10^4; deterministic given seed.
MonteCarloEstimate mixture_channel_mi(const MixtureChannel& channel, std::size_t n,
                                      std::uint64_t seed);

// Paired embeddings: row i of visual is the positive for row i of text.
struct EmbeddingBatch {
    Eigen::MatrixXd visual;
    Eigen::MatrixXd text;

    EmbeddingBatch(Eigen::MatrixXd v, Eigen::MatrixXd t);
    Eigen::Index size() const { return visual.rows(); }
};

// InfoNCE value: mean over anchors i of
//   log [ exp(sim(v_i, t_i)/tau) / sum_k exp(sim(v_i, t_k)/tau) ]
// with cosine similarity. Always <= 0; value + log K lower-bounds I(V;T).
double infonce(const EmbeddingBatch& batch, double tau);

// Differentiable InfoNCE over [K,d] visual/text nodes; returns a scalar node
// holding the same value as infonce().
ad::NodeId infonce_node(ad::Graph& g, ad::NodeId visual, ad::NodeId text, double tau);

// Linear centered kernel alignment between an n x p and an n x q matrix,
// in [0, 1]. Requires n >= 3. Returns 0 when either centered matrix is zero.
double linear_cka(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

} // namespace infotok::mi
