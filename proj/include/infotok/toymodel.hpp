#pragma once

#include "infotok/graph.hpp"
#include "infotok/synthdata.hpp"
#include "infotok/vib.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace infotok::toy {

enum class Branch { understanding, generation };

struct ModelDims {
    int image_dim = 16;  // d_I, must match the generator
    int hidden_dim = 16; // encoder hidden width
    int num_tokens = 4;  // m
    int token_dim = 8;   // d_z
    int latent_dim = 4;  // projected posterior dimension; equals the text dim
    int num_classes = 4; // C

    void validate() const;
};

// Multipliers of the regularized objective. beta/alpha weight the per-branch
// sufficiency and alignment terms, lambda scales the whole regularizer, tau
// is the InfoNCE temperature.
struct InfoTokHyper {
    double beta_u = 1.0;
    double beta_g = 1.0;
    double alpha_u = 1.0;
    double alpha_g = 1.0;
    double lambda = 0.1;
    double tau = 0.2;

    void validate() const;
};

// Every scalar term of one loss evaluation. The invariants
//   loss_infotok = (kl_u - beta_u suff_u - alpha_u align_u)
//                + (kl_g - beta_g suff_g - alpha_g align_g)
//   loss_total   = loss_mllm + lambda loss_infotok
// hold to 1e-12 on every evaluation.
struct LossBreakdown {
    double kl_u = 0.0, kl_g = 0.0;
    double suff_u = 0.0, suff_g = 0.0;
    double align_u = 0.0, align_g = 0.0;
    double loss_i2t = 0.0, loss_t2i = 0.0;
    double loss_infotok = 0.0, loss_mllm = 0.0, loss_total = 0.0;
};

// The slice of a synthetic batch the losses consume.
struct ModelBatch {
    Eigen::MatrixXd images;       // K x d_I
    Eigen::MatrixXd texts;        // K x latent_dim
    std::vector<int> labels;      // K class indices
    Eigen::MatrixXd clean_images; // K x d_I

    static ModelBatch from(const synth::SyntheticBatch& batch);
    Eigen::Index size() const { return images.rows(); }
};

// Reparameterization noise, one row per sample and branch.
struct BranchNoise {
    Eigen::MatrixXd understand; // K x latent_dim
    Eigen::MatrixXd generate;   // K x latent_dim

    static BranchNoise zero(Eigen::Index k, int latent_dim);
};

// Two-branch toy model: a shared two-layer tanh encoder produces m visual
// tokens per image; per-branch projections mean-pool the tokens into a
// Gaussian posterior; small linear heads decode class logits (understanding)
// and an image reconstruction (generation).
struct UnifiedModel {
    ModelDims dims;

    ad::Tensor enc_w1, enc_b1; // d_I -> hidden
    ad::Tensor enc_w2, enc_b2; // hidden -> m * d_z

    struct Projection {
        ad::Tensor mu_w, mu_b;       // d_z -> latent
        ad::Tensor sigma_w, sigma_b; // d_z -> latent (log sigma, clamped)
    };
    Projection proj_u, proj_g;

    ad::Tensor head_u_w, head_u_b; // latent -> C
    ad::Tensor head_g_w, head_g_b; // latent -> d_I

    explicit UnifiedModel(ModelDims d); // zero-initialized
    static UnifiedModel random_init(ModelDims d, std::uint64_t seed);

    std::vector<ad::Tensor*> parameters();
    std::vector<const ad::Tensor*> parameters() const;
    std::vector<std::string> parameter_names() const;

    // Visual tokens for one image, shared by both branches.
    Eigen::MatrixXd encode(const Eigen::VectorXd& image) const; // m x d_z

    // Mean-pools tokens and maps them to the branch posterior.
    vib::GaussianPosterior project(Branch branch, const Eigen::MatrixXd& tokens) const;

    // Posterior means for a batch of images, row-stacked. These are the
    // InfoNCE anchors and the representation probed by the harness.
    Eigen::MatrixXd anchors(Branch branch, const Eigen::MatrixXd& images) const;

    void save(std::ostream& out) const;
    static UnifiedModel load(std::istream& in);
};

// The InfoNCE visual anchor: the posterior mean, untouched by log_sigma.
Eigen::VectorXd aggregate_mean(const vib::GaussianPosterior& post);

// Mean log-probability of the true classes under the understanding head,
// for a batch of sampled posterior points (rows of z).
double sufficiency_understanding(const UnifiedModel& model, const Eigen::MatrixXd& z,
                                 const std::vector<int>& labels);

// Mean unit-variance Gaussian log-density of the clean images under the
// generation head: -1/2 |xhat - x|^2 - (d_I / 2) log(2 pi) per sample.
double sufficiency_generation(const UnifiedModel& model, const Eigen::MatrixXd& z,
                              const Eigen::MatrixXd& clean_images);

// Which terms a loss graph carries.
enum class LossParts { full, mllm_only };

// Assembled differentiable objective. Node handles expose every term so the
// harness can log them from a single forward pass.
struct LossGraph {
    ad::Graph graph;
    std::vector<ad::Tensor> weights; // forward inputs, parameter order

    ad::NodeId tokens = -1;
    ad::NodeId mu_u = -1, ls_u = -1, z_u = -1;
    ad::NodeId mu_g = -1, ls_g = -1, z_g = -1;
    ad::NodeId kl_u = -1, kl_g = -1;
    ad::NodeId suff_u = -1, suff_g = -1;
    ad::NodeId align_u = -1, align_g = -1; // -1 when the term is disabled
    ad::NodeId i2t = -1, t2i = -1;
    ad::NodeId mllm = -1, infotok = -1, total = -1;
};

LossGraph build_loss_graph(const UnifiedModel& model, const ModelBatch& batch,
                           const InfoTokHyper& hyper, const BranchNoise& noise,
                           LossParts parts = LossParts::full);

// Reads the breakdown after graph.forward(). When a branch's alignment node
// was disabled (alpha = 0) the estimate is still reported, computed from the
// posterior means; an all-zero anchor reports 0.
LossBreakdown read_breakdown(const LossGraph& lg, const ModelBatch& batch,
                             const InfoTokHyper& hyper);

// One full evaluation of the total objective.
LossBreakdown total_loss(const UnifiedModel& model, const ModelBatch& batch,
                         const InfoTokHyper& hyper, const BranchNoise& noise);

// Same, plus d(loss_total)/d(parameter) in parameter order.
LossBreakdown total_loss_with_grads(const UnifiedModel& model, const ModelBatch& batch,
                                    const InfoTokHyper& hyper, const BranchNoise& noise,
                                    std::vector<std::vector<double>>& grads);

// Regularizer terms only; requires K >= 2 so InfoNCE has negatives.
LossBreakdown infotok_loss(const UnifiedModel& model, const ModelBatch& batch,
                           const InfoTokHyper& hyper, const BranchNoise& noise);

// Task loss: class cross-entropy from the sampled understanding code plus
// mean squared reconstruction error from the sampled generation code.
double mllm_loss(const UnifiedModel& model, const ModelBatch& batch, const BranchNoise& noise);

} // namespace infotok::toy
