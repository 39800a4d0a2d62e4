#include "infotok/toymodel.hpp"

#include "infotok/miest.hpp"
#include "infotok/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace infotok::toy {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

ad::Tensor tensor_from_matrix(const Eigen::MatrixXd& m) {
    ad::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
        }
    }
    return t;
}

Eigen::MatrixXd matrix_from_tensor(const ad::Tensor& t) {
    if (t.rank() != 2) throw std::logic_error("matrix_from_tensor: tensor is not rank 2");
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
    }
    return m;
}

} // namespace

void ModelDims::validate() const {
    if (image_dim < 1 || hidden_dim < 1 || num_tokens < 1 || token_dim < 1 || latent_dim < 1 ||
        num_classes < 2) {
        throw std::invalid_argument("ModelDims: dimensions must be positive (classes >= 2)");
    }
}

void InfoTokHyper::validate() const {
    if (beta_u < 0.0 || beta_g < 0.0 || alpha_u < 0.0 || alpha_g < 0.0 || lambda < 0.0) {
        throw std::invalid_argument("InfoTokHyper: multipliers must be nonnegative");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("InfoTokHyper: tau must be positive");
}

ModelBatch ModelBatch::from(const synth::SyntheticBatch& batch) {
    ModelBatch mb;
    mb.images = batch.images;
    mb.texts = batch.texts;
    mb.labels = batch.y_understand;
    mb.clean_images = batch.y_generate;
    return mb;
}

BranchNoise BranchNoise::zero(Eigen::Index k, int latent_dim) {
    BranchNoise n;
    n.understand = Eigen::MatrixXd::Zero(k, latent_dim);
    n.generate = Eigen::MatrixXd::Zero(k, latent_dim);
    return n;
}

UnifiedModel::UnifiedModel(ModelDims d) : dims(d) {
    dims.validate();
    const auto di = static_cast<std::size_t>(dims.image_dim);
    const auto h = static_cast<std::size_t>(dims.hidden_dim);
    const auto md = static_cast<std::size_t>(dims.num_tokens * dims.token_dim);
    const auto dz = static_cast<std::size_t>(dims.token_dim);
    const auto dl = static_cast<std::size_t>(dims.latent_dim);
    const auto c = static_cast<std::size_t>(dims.num_classes);

    enc_w1 = ad::Tensor({di, h});
    enc_b1 = ad::Tensor({1, h});
    enc_w2 = ad::Tensor({h, md});
    enc_b2 = ad::Tensor({1, md});
    for (Projection* p : {&proj_u, &proj_g}) {
        p->mu_w = ad::Tensor({dz, dl});
        p->mu_b = ad::Tensor({1, dl});
        p->sigma_w = ad::Tensor({dz, dl});
        p->sigma_b = ad::Tensor({1, dl});
    }
    head_u_w = ad::Tensor({dl, c});
    head_u_b = ad::Tensor({1, c});
    head_g_w = ad::Tensor({dl, di});
    head_g_b = ad::Tensor({1, di});
}

UnifiedModel UnifiedModel::random_init(ModelDims d, std::uint64_t seed) {
    UnifiedModel model(d);
    auto params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
        ad::Tensor& t = *params[p];
        if (t.shape()[0] == 1) continue; // biases start at zero
        rng::Stream stream(seed, rng::Role::weight_init, p);
        const double scale = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * stream.normal();
    }
    return model;
}

std::vector<ad::Tensor*> UnifiedModel::parameters() {
    return {&enc_w1,         &enc_b1,         &enc_w2,         &enc_b2,
            &proj_u.mu_w,    &proj_u.mu_b,    &proj_u.sigma_w, &proj_u.sigma_b,
            &proj_g.mu_w,    &proj_g.mu_b,    &proj_g.sigma_w, &proj_g.sigma_b,
            &head_u_w,       &head_u_b,       &head_g_w,       &head_g_b};
}

std::vector<const ad::Tensor*> UnifiedModel::parameters() const {
    auto mutable_params = const_cast<UnifiedModel*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

std::vector<std::string> UnifiedModel::parameter_names() const {
    return {"enc_w1",         "enc_b1",         "enc_w2",         "enc_b2",
            "proj_u.mu_w",    "proj_u.mu_b",    "proj_u.sigma_w", "proj_u.sigma_b",
            "proj_g.mu_w",    "proj_g.mu_b",    "proj_g.sigma_w", "proj_g.sigma_b",
            "head_u_w",       "head_u_b",       "head_g_w",       "head_g_b"};
}

Eigen::MatrixXd UnifiedModel::encode(const Eigen::VectorXd& image) const {
    if (image.size() != dims.image_dim) {
        throw std::invalid_argument("encode: image dimension does not match model");
    }
    if (!image.allFinite()) throw std::invalid_argument("encode: image must be finite");
    const int h = dims.hidden_dim;
    const int md = dims.num_tokens * dims.token_dim;

    Eigen::VectorXd hidden(h);
    for (int j = 0; j < h; ++j) {
        double acc = enc_b1.at(0, static_cast<std::size_t>(j));
        for (int i = 0; i < dims.image_dim; ++i) {
            acc += image[i] * enc_w1.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
        hidden[j] = std::tanh(acc);
    }
    Eigen::MatrixXd tokens(dims.num_tokens, dims.token_dim);
    for (int j = 0; j < md; ++j) {
        double acc = enc_b2.at(0, static_cast<std::size_t>(j));
        for (int i = 0; i < h; ++i) {
            acc += hidden[i] * enc_w2.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
        tokens(j / dims.token_dim, j % dims.token_dim) = acc;
    }
    return tokens;
}

vib::GaussianPosterior UnifiedModel::project(Branch branch, const Eigen::MatrixXd& tokens) const {
    if (tokens.rows() != dims.num_tokens || tokens.cols() != dims.token_dim) {
        throw std::invalid_argument("project: token matrix does not match model dims");
    }
    const Projection& proj = branch == Branch::understanding ? proj_u : proj_g;
    const Eigen::VectorXd pooled = tokens.colwise().mean();

    Eigen::VectorXd mu(dims.latent_dim), ls(dims.latent_dim);
    for (int j = 0; j < dims.latent_dim; ++j) {
        double acc_mu = proj.mu_b.at(0, static_cast<std::size_t>(j));
        double acc_ls = proj.sigma_b.at(0, static_cast<std::size_t>(j));
        for (int i = 0; i < dims.token_dim; ++i) {
            acc_mu += pooled[i] * proj.mu_w.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            acc_ls += pooled[i] * proj.sigma_w.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
        mu[j] = acc_mu;
        ls[j] = std::clamp(acc_ls, vib::kLogSigmaMin, vib::kLogSigmaMax);
    }
    return {std::move(mu), std::move(ls)};
}

Eigen::MatrixXd UnifiedModel::anchors(Branch branch, const Eigen::MatrixXd& images) const {
    Eigen::MatrixXd out(images.rows(), dims.latent_dim);
    for (Eigen::Index i = 0; i < images.rows(); ++i) {
        out.row(i) = aggregate_mean(project(branch, encode(images.row(i)))).transpose();
    }
    return out;
}

Eigen::VectorXd aggregate_mean(const vib::GaussianPosterior& post) { return post.mu; }

double sufficiency_understanding(const UnifiedModel& model, const Eigen::MatrixXd& z,
                                 const std::vector<int>& labels) {
    if (z.cols() != model.dims.latent_dim) {
        throw std::invalid_argument("sufficiency_understanding: latent dimension mismatch");
    }
    if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
        throw std::invalid_argument("sufficiency_understanding: one label per row required");
    }
    const int c = model.dims.num_classes;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= c) {
            throw std::invalid_argument("sufficiency_understanding: class index out of range");
        }
        Eigen::VectorXd logits(c);
        for (int j = 0; j < c; ++j) {
            double a = model.head_u_b.at(0, static_cast<std::size_t>(j));
            for (int t = 0; t < model.dims.latent_dim; ++t) {
                a += z(i, t) * model.head_u_w.at(static_cast<std::size_t>(t), static_cast<std::size_t>(j));
            }
            logits[j] = a;
        }
        const double m = logits.maxCoeff();
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(logits[j] - m);
        acc += logits[label] - (m + std::log(s));
    }
    return acc / static_cast<double>(z.rows());
}

double sufficiency_generation(const UnifiedModel& model, const Eigen::MatrixXd& z,
                              const Eigen::MatrixXd& clean_images) {
    if (z.cols() != model.dims.latent_dim || clean_images.cols() != model.dims.image_dim ||
        z.rows() != clean_images.rows()) {
        throw std::invalid_argument("sufficiency_generation: shape mismatch");
    }
    const int di = model.dims.image_dim;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double sq = 0.0;
        for (int j = 0; j < di; ++j) {
            double xhat = model.head_g_b.at(0, static_cast<std::size_t>(j));
            for (int t = 0; t < model.dims.latent_dim; ++t) {
                xhat += z(i, t) * model.head_g_w.at(static_cast<std::size_t>(t), static_cast<std::size_t>(j));
            }
            const double d = xhat - clean_images(i, j);
            sq += d * d;
        }
        acc += -0.5 * sq - 0.5 * static_cast<double>(di) * kLogTwoPi;
    }
    return acc / static_cast<double>(z.rows());
}

// ---------------------------------------------------------------------------
// Differentiable assembly
// ---------------------------------------------------------------------------

namespace {

void validate_batch(const UnifiedModel& model, const ModelBatch& batch) {
    const Eigen::Index k = batch.size();
    if (k < 1) throw std::invalid_argument("ModelBatch: empty batch");
    if (batch.images.cols() != model.dims.image_dim) {
        throw std::invalid_argument("ModelBatch: image dimension does not match model");
    }
    if (batch.texts.cols() != model.dims.latent_dim) {
        throw std::invalid_argument(
            "ModelBatch: text dimension must equal the model latent dimension");
    }
    if (batch.texts.rows() != k || batch.clean_images.rows() != k ||
        batch.clean_images.cols() != model.dims.image_dim ||
        static_cast<Eigen::Index>(batch.labels.size()) != k) {
        throw std::invalid_argument("ModelBatch: inconsistent row counts");
    }
    for (int label : batch.labels) {
        if (label < 0 || label >= model.dims.num_classes) {
            throw std::invalid_argument("ModelBatch: class index out of range");
        }
    }
}

void validate_noise(const UnifiedModel& model, const ModelBatch& batch, const BranchNoise& noise) {
    if (noise.understand.rows() != batch.size() || noise.generate.rows() != batch.size() ||
        noise.understand.cols() != model.dims.latent_dim ||
        noise.generate.cols() != model.dims.latent_dim) {
        throw std::invalid_argument("BranchNoise: shape must be batch size x latent_dim");
    }
}

} // namespace

LossGraph build_loss_graph(const UnifiedModel& model, const ModelBatch& batch,
                           const InfoTokHyper& hyper, const BranchNoise& noise,
                           LossParts parts) {
    model.dims.validate();
    hyper.validate();
    validate_batch(model, batch);
    validate_noise(model, batch, noise);
    if (parts == LossParts::full && batch.size() < 2) {
        throw std::invalid_argument("build_loss_graph: regularizer needs batch size >= 2");
    }

    const auto k = static_cast<std::size_t>(batch.size());
    const int m = model.dims.num_tokens;
    const int dz = model.dims.token_dim;
    const double d_image = static_cast<double>(model.dims.image_dim);

    LossGraph lg;
    ad::Graph& g = lg.graph;

    // Parameter inputs, in parameter order.
    const auto names = model.parameter_names();
    const auto params = model.parameters();
    std::vector<ad::NodeId> w(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        w[p] = g.input(params[p]->shape(), names[p]);
        lg.weights.push_back(*params[p]);
    }
    enum WeightIndex {
        kEncW1, kEncB1, kEncW2, kEncB2,
        kUMuW, kUMuB, kUSigW, kUSigB,
        kGMuW, kGMuB, kGSigW, kGSigB,
        kHeadUW, kHeadUB, kHeadGW, kHeadGB,
    };

    // Batch constants.
    const ad::NodeId x = g.constant(tensor_from_matrix(batch.images), "images");
    const ad::NodeId ones = g.constant(ad::Tensor::full({k, 1}, 1.0), "ones");

    // Mean-pooling over tokens as a fixed matrix: [m*dz, dz] with 1/m blocks.
    ad::Tensor pool({static_cast<std::size_t>(m * dz), static_cast<std::size_t>(dz)});
    for (int t = 0; t < m; ++t) {
        for (int j = 0; j < dz; ++j) {
            pool.at(static_cast<std::size_t>(t * dz + j), static_cast<std::size_t>(j)) =
                1.0 / static_cast<double>(m);
        }
    }
    const ad::NodeId pool_const = g.constant(std::move(pool), "token_pool");

    auto linear = [&](ad::NodeId in, WeightIndex wi, WeightIndex bi) {
        return g.add(g.matmul(in, w[wi]), g.matmul(ones, w[bi]));
    };

    // Shared encoder: both branches read the same token node.
    const ad::NodeId hidden = g.tanh(linear(x, kEncW1, kEncB1));
    lg.tokens = linear(hidden, kEncW2, kEncB2);
    const ad::NodeId pooled = g.matmul(lg.tokens, pool_const);

    // Branch posteriors and reparameterized samples.
    const ad::NodeId eps_u = g.constant(tensor_from_matrix(noise.understand), "noise_u");
    const ad::NodeId eps_g = g.constant(tensor_from_matrix(noise.generate), "noise_g");

    lg.mu_u = linear(pooled, kUMuW, kUMuB);
    lg.ls_u = g.clamp(linear(pooled, kUSigW, kUSigB), vib::kLogSigmaMin, vib::kLogSigmaMax);
    lg.z_u = vib::sample_reparam_node(g, lg.mu_u, lg.ls_u, eps_u);

    lg.mu_g = linear(pooled, kGMuW, kGMuB);
    lg.ls_g = g.clamp(linear(pooled, kGSigW, kGSigB), vib::kLogSigmaMin, vib::kLogSigmaMax);
    lg.z_g = vib::sample_reparam_node(g, lg.mu_g, lg.ls_g, eps_g);

    // Task heads; the sampled codes feed both the task losses and the
    // sufficiency terms.
    const ad::NodeId logits = linear(lg.z_u, kHeadUW, kHeadUB);
    lg.i2t = g.mean(g.softmax_cross_entropy(logits, batch.labels));
    lg.suff_u = g.negate(lg.i2t);

    const ad::NodeId recon = linear(lg.z_g, kHeadGW, kHeadGB);
    const ad::NodeId clean = g.constant(tensor_from_matrix(batch.clean_images), "clean_images");
    lg.t2i = g.mean(g.squared_error(recon, clean));
    lg.suff_g = g.add_scalar(g.scale(lg.t2i, -0.5 * d_image), -0.5 * d_image * kLogTwoPi);

    lg.mllm = g.add(lg.i2t, lg.t2i);

    if (parts == LossParts::mllm_only) {
        lg.total = lg.mllm;
        return lg;
    }

    lg.kl_u = vib::kl_node(g, lg.mu_u, lg.ls_u);
    lg.kl_g = vib::kl_node(g, lg.mu_g, lg.ls_g);

    const ad::NodeId text = g.constant(tensor_from_matrix(batch.texts), "texts");
    if (hyper.alpha_u != 0.0) lg.align_u = mi::infonce_node(g, lg.mu_u, text, hyper.tau);
    if (hyper.alpha_g != 0.0) lg.align_g = mi::infonce_node(g, lg.mu_g, text, hyper.tau);

    ad::NodeId branch_u = g.add(lg.kl_u, g.scale(lg.suff_u, -hyper.beta_u));
    if (lg.align_u >= 0) branch_u = g.add(branch_u, g.scale(lg.align_u, -hyper.alpha_u));
    ad::NodeId branch_g = g.add(lg.kl_g, g.scale(lg.suff_g, -hyper.beta_g));
    if (lg.align_g >= 0) branch_g = g.add(branch_g, g.scale(lg.align_g, -hyper.alpha_g));

    lg.infotok = g.add(branch_u, branch_g);
    lg.total = g.add(lg.mllm, g.scale(lg.infotok, hyper.lambda));
    return lg;
}

namespace {

// Alignment estimate for logging when the graph node was disabled. Reports 0
// for degenerate all-zero anchors instead of rejecting.
double guarded_infonce(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& texts, double tau) {
    if (anchors.rows() < 2) return 0.0;
    for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
        if (anchors.row(i).norm() == 0.0 || texts.row(i).norm() == 0.0) return 0.0;
    }
    return mi::infonce(mi::EmbeddingBatch(anchors, texts), tau);
}

} // namespace

LossBreakdown read_breakdown(const LossGraph& lg, const ModelBatch& batch,
                             const InfoTokHyper& hyper) {
    LossBreakdown b;
    b.loss_i2t = lg.graph.scalar_value(lg.i2t);
    b.loss_t2i = lg.graph.scalar_value(lg.t2i);
    b.suff_u = lg.graph.scalar_value(lg.suff_u);
    b.suff_g = lg.graph.scalar_value(lg.suff_g);
    b.loss_mllm = lg.graph.scalar_value(lg.mllm);
    if (lg.infotok < 0) { // mllm-only graph
        b.loss_total = b.loss_mllm;
        return b;
    }
    b.kl_u = lg.graph.scalar_value(lg.kl_u);
    b.kl_g = lg.graph.scalar_value(lg.kl_g);
    b.align_u = lg.align_u >= 0
                    ? lg.graph.scalar_value(lg.align_u)
                    : guarded_infonce(matrix_from_tensor(lg.graph.value(lg.mu_u)), batch.texts,
                                      hyper.tau);
    b.align_g = lg.align_g >= 0
                    ? lg.graph.scalar_value(lg.align_g)
                    : guarded_infonce(matrix_from_tensor(lg.graph.value(lg.mu_g)), batch.texts,
                                      hyper.tau);
    b.loss_infotok = lg.graph.scalar_value(lg.infotok);
    b.loss_total = lg.graph.scalar_value(lg.total);
    return b;
}

LossBreakdown total_loss(const UnifiedModel& model, const ModelBatch& batch,
                         const InfoTokHyper& hyper, const BranchNoise& noise) {
    LossGraph lg = build_loss_graph(model, batch, hyper, noise);
    lg.graph.forward(lg.weights);
    return read_breakdown(lg, batch, hyper);
}

LossBreakdown total_loss_with_grads(const UnifiedModel& model, const ModelBatch& batch,
                                    const InfoTokHyper& hyper, const BranchNoise& noise,
                                    std::vector<std::vector<double>>& grads) {
    LossGraph lg = build_loss_graph(model, batch, hyper, noise);
    lg.graph.forward(lg.weights);
    LossBreakdown b = read_breakdown(lg, batch, hyper);
    const auto grad_tensors = lg.graph.backward(lg.total, ad::Tensor::scalar(1.0));
    grads.clear();
    grads.reserve(grad_tensors.size());
    for (const auto& t : grad_tensors) grads.push_back(t.grad());
    return b;
}

LossBreakdown infotok_loss(const UnifiedModel& model, const ModelBatch& batch,
                           const InfoTokHyper& hyper, const BranchNoise& noise) {
    if (batch.size() < 2) {
        throw std::invalid_argument("infotok_loss: batch size must be >= 2");
    }
    return total_loss(model, batch, hyper, noise);
}

double mllm_loss(const UnifiedModel& model, const ModelBatch& batch, const BranchNoise& noise) {
    LossGraph lg = build_loss_graph(model, batch, InfoTokHyper{}, noise, LossParts::mllm_only);
    lg.graph.forward(lg.weights);
    return lg.graph.scalar_value(lg.mllm);
}

// ---------------------------------------------------------------------------
// Serialization: plain text, shapes header then row-major values.
// ---------------------------------------------------------------------------

void UnifiedModel::save(std::ostream& out) const {
    out << "infotok-weights 1\n";
    out << "dims " << dims.image_dim << " " << dims.hidden_dim << " " << dims.num_tokens << " "
        << dims.token_dim << " " << dims.latent_dim << " " << dims.num_classes << "\n";
    const auto params = parameters();
    const auto names = parameter_names();
    out << "tensors " << params.size() << "\n";
    char buf[32];
    for (std::size_t p = 0; p < params.size(); ++p) {
        const ad::Tensor& t = *params[p];
        out << names[p] << " " << t.shape()[0] << " " << t.shape()[1] << "\n";
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", t[i]);
            out << buf << (i + 1 == t.size() ? "\n" : " ");
        }
    }
}

UnifiedModel UnifiedModel::load(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "infotok-weights" || version != 1) {
        throw std::runtime_error("UnifiedModel::load: unrecognized weights header");
    }
    std::string tag;
    ModelDims d;
    in >> tag >> d.image_dim >> d.hidden_dim >> d.num_tokens >> d.token_dim >> d.latent_dim >>
        d.num_classes;
    if (tag != "dims") throw std::runtime_error("UnifiedModel::load: missing dims line");

    UnifiedModel model(d);
    std::size_t count = 0;
    in >> tag >> count;
    if (tag != "tensors") throw std::runtime_error("UnifiedModel::load: missing tensors line");
    const auto params = model.parameters();
    const auto names = model.parameter_names();
    if (count != params.size()) {
        throw std::runtime_error("UnifiedModel::load: unexpected tensor count");
    }
    for (std::size_t p = 0; p < count; ++p) {
        std::string name;
        std::size_t r = 0, c = 0;
        in >> name >> r >> c;
        if (name != names[p] || r != params[p]->shape()[0] || c != params[p]->shape()[1]) {
            throw std::runtime_error("UnifiedModel::load: tensor '" + name +
                                     "' does not match expected layout");
        }
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
            if (!(in >> (*params[p])[i])) {
                throw std::runtime_error("UnifiedModel::load: truncated values for " + name);
            }
        }
    }
    return model;
}

} // namespace infotok::toy
