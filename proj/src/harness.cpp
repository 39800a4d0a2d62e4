#include "infotok/harness.hpp"

#include "infotok/miest.hpp"
#include "infotok/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

namespace infotok::harness {

void TrainConfig::validate() const {
    generator.validate();
    model.validate();
    hyper.validate();
    if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (learning_rate < 0.0) {
        throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
    }
    if (log_interval < 1) throw std::invalid_argument("TrainConfig: log_interval must be >= 1");
    if (held_out < 10 * generator.num_classes) {
        throw std::invalid_argument("TrainConfig: held_out must be >= 10 * num_classes");
    }
    if (model.image_dim != generator.image_dim) {
        throw std::invalid_argument("TrainConfig: model image_dim must match generator");
    }
    if (model.num_classes != generator.num_classes) {
        throw std::invalid_argument("TrainConfig: model num_classes must match generator");
    }
    if (model.latent_dim != generator.text_dim) {
        throw std::invalid_argument(
            "TrainConfig: model latent_dim must equal generator text_dim (alignment uses cosine)");
    }
}

namespace {

toy::ModelBatch gather(const toy::ModelBatch& pool, const std::vector<int>& indices) {
    toy::ModelBatch out;
    const auto k = static_cast<Eigen::Index>(indices.size());
    out.images.resize(k, pool.images.cols());
    out.texts.resize(k, pool.texts.cols());
    out.clean_images.resize(k, pool.clean_images.cols());
    out.labels.resize(indices.size());
    for (Eigen::Index i = 0; i < k; ++i) {
        const int idx = indices[static_cast<std::size_t>(i)];
        out.images.row(i) = pool.images.row(idx);
        out.texts.row(i) = pool.texts.row(idx);
        out.clean_images.row(i) = pool.clean_images.row(idx);
        out.labels[static_cast<std::size_t>(i)] = pool.labels[static_cast<std::size_t>(idx)];
    }
    return out;
}

std::vector<int> draw_indices(std::uint64_t seed, rng::Role role, std::uint64_t step, int count,
                              int bound) {
    rng::Stream stream(seed, role, step);
    std::vector<int> indices(static_cast<std::size_t>(count));
    for (auto& idx : indices) {
        idx = static_cast<int>(stream.below(static_cast<std::uint64_t>(bound)));
    }
    return indices;
}

Eigen::MatrixXd draw_noise(std::uint64_t seed, rng::Role role, std::uint64_t step, int rows,
                           int cols) {
    rng::Stream stream(seed, role, step);
    Eigen::MatrixXd noise(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) noise(i, j) = stream.normal();
    }
    return noise;
}

struct EvalProtocol {
    toy::ModelBatch batch;
    toy::BranchNoise noise;
    synth::SyntheticBatch held;
};

MetricsRecord evaluate(const TrainConfig& cfg, TrainerKind kind, const toy::UnifiedModel& model,
                       const EvalProtocol& eval, int step) {
    MetricsRecord rec;
    rec.step = step;

    toy::LossGraph lg = toy::build_loss_graph(
        model, eval.batch, cfg.hyper, eval.noise,
        kind == TrainerKind::full ? toy::LossParts::full : toy::LossParts::mllm_only);
    lg.graph.forward(lg.weights);
    rec.loss = toy::read_breakdown(lg, eval.batch, cfg.hyper);

    const double log_c = std::log(static_cast<double>(cfg.generator.num_classes));
    const double log_k = std::log(static_cast<double>(eval.batch.size()));
    rec.suff_bound_u = rec.loss.suff_u + log_c;
    rec.suff_bound_g = rec.loss.suff_g + log_c;
    if (kind == TrainerKind::full) {
        rec.compact_bound_u = rec.loss.kl_u;
        rec.compact_bound_g = rec.loss.kl_g;
        rec.align_estimate_u = rec.loss.align_u + log_k;
        rec.align_estimate_g = rec.loss.align_g + log_k;
    }

    const Eigen::MatrixXd anchors =
        model.anchors(toy::Branch::understanding, eval.held.images);
    rec.cka_vis_text = mi::linear_cka(anchors, eval.held.texts);
    rec.probe_accuracy = probe(anchors, eval.held.y_understand, cfg.seed);
    if (cfg.generator.nuisance_dims >= 1) {
        const Eigen::MatrixXd nuisance =
            eval.held.images.rightCols(cfg.generator.nuisance_dims);
        rec.nuisance_probe_error = 1.0 - probe(nuisance, eval.held.y_understand, cfg.seed);
    } else {
        rec.nuisance_probe_error =
            1.0 - 1.0 / static_cast<double>(cfg.generator.num_classes);
    }
    return rec;
}

} // namespace

TrainResult train(const TrainConfig& cfg, TrainerKind kind, const StepObserver& observer) {
    cfg.validate();

    synth::GeneratorConfig gen = cfg.generator;
    gen.samples = cfg.generator.samples + cfg.held_out;
    const synth::SyntheticBatch all = synth::generate(gen);

    EvalProtocol eval;
    eval.held = all.rows(cfg.generator.samples, cfg.held_out);
    const toy::ModelBatch pool = toy::ModelBatch::from(all.rows(0, cfg.generator.samples));

    // Fixed evaluation batch and noise: logged curves change only when the
    // weights do.
    eval.batch = gather(pool, draw_indices(cfg.seed, rng::Role::eval_batch, 0, cfg.batch_size,
                                           cfg.generator.samples));
    eval.noise.understand =
        draw_noise(cfg.seed, rng::Role::eval_noise, 0, cfg.batch_size, cfg.model.latent_dim);
    eval.noise.generate =
        draw_noise(cfg.seed, rng::Role::eval_noise, 1, cfg.batch_size, cfg.model.latent_dim);

    toy::UnifiedModel model = toy::UnifiedModel::random_init(cfg.model, cfg.seed);
    auto params = model.parameters();
    std::vector<std::vector<double>> velocity(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) velocity[p].assign(params[p]->size(), 0.0);

    std::vector<MetricsRecord> records;
    records.push_back(evaluate(cfg, kind, model, eval, 0));
    toy::LossBreakdown last_break = records.back().loss;

    const toy::LossParts parts =
        kind == TrainerKind::full ? toy::LossParts::full : toy::LossParts::mllm_only;

    for (int t = 1; t <= cfg.steps; ++t) {
        const auto step = static_cast<std::uint64_t>(t);
        const toy::ModelBatch batch = gather(
            pool, draw_indices(cfg.seed, rng::Role::batch_indices, step, cfg.batch_size,
                               cfg.generator.samples));
        toy::BranchNoise noise;
        noise.understand = draw_noise(cfg.seed, rng::Role::noise_understand, step, cfg.batch_size,
                                      cfg.model.latent_dim);
        noise.generate = draw_noise(cfg.seed, rng::Role::noise_generate, step, cfg.batch_size,
                                    cfg.model.latent_dim);

        try {
            toy::LossGraph lg = toy::build_loss_graph(model, batch, cfg.hyper, noise, parts);
            lg.graph.forward(lg.weights);
            last_break = toy::read_breakdown(lg, batch, cfg.hyper);
            const auto grads = lg.graph.backward(lg.total, ad::Tensor::scalar(1.0));

            for (std::size_t p = 0; p < params.size(); ++p) {
                ad::Tensor& w = *params[p];
                const auto& g = grads[p].grad();
                if (cfg.optimizer == Optimizer::momentum) {
                    for (std::size_t i = 0; i < w.size(); ++i) {
                        velocity[p][i] = cfg.momentum * velocity[p][i] + g[i];
                        w[i] -= cfg.learning_rate * velocity[p][i];
                    }
                } else {
                    for (std::size_t i = 0; i < w.size(); ++i) {
                        w[i] -= cfg.learning_rate * g[i];
                    }
                }
            }
        } catch (const ad::EvalError& e) {
            throw TrainAbortError(t, last_break,
                                  "training aborted at step " + std::to_string(t) + ": " +
                                      e.what());
        }

        if (observer) observer(t, model);
        if (t % cfg.log_interval == 0 || t == cfg.steps) {
            try {
                records.push_back(evaluate(cfg, kind, model, eval, t));
            } catch (const ad::EvalError& e) {
                throw TrainAbortError(t, last_break,
                                      "metrics evaluation aborted at step " + std::to_string(t) +
                                          ": " + e.what());
            }
        }
    }

    return {std::move(records), std::move(model), std::move(eval.held)};
}

MetricsRecord converged_record(const std::vector<MetricsRecord>& records, int steps) {
    if (records.empty()) throw std::invalid_argument("converged_record: no records");
    MetricsRecord acc;
    int count = 0;
    for (const auto& r : records) {
        if (static_cast<long>(r.step) * 10 < static_cast<long>(steps) * 9) continue;
        acc.loss.kl_u += r.loss.kl_u;
        acc.loss.kl_g += r.loss.kl_g;
        acc.loss.suff_u += r.loss.suff_u;
        acc.loss.suff_g += r.loss.suff_g;
        acc.loss.align_u += r.loss.align_u;
        acc.loss.align_g += r.loss.align_g;
        acc.loss.loss_i2t += r.loss.loss_i2t;
        acc.loss.loss_t2i += r.loss.loss_t2i;
        acc.loss.loss_infotok += r.loss.loss_infotok;
        acc.loss.loss_mllm += r.loss.loss_mllm;
        acc.loss.loss_total += r.loss.loss_total;
        acc.compact_bound_u += r.compact_bound_u;
        acc.compact_bound_g += r.compact_bound_g;
        acc.suff_bound_u += r.suff_bound_u;
        acc.suff_bound_g += r.suff_bound_g;
        acc.align_estimate_u += r.align_estimate_u;
        acc.align_estimate_g += r.align_estimate_g;
        acc.cka_vis_text += r.cka_vis_text;
        acc.probe_accuracy += r.probe_accuracy;
        acc.nuisance_probe_error += r.nuisance_probe_error;
        acc.step = r.step;
        ++count;
    }
    if (count == 0) {
        return records.back();
    }
    const double inv = 1.0 / static_cast<double>(count);
    acc.loss.kl_u *= inv;
    acc.loss.kl_g *= inv;
    acc.loss.suff_u *= inv;
    acc.loss.suff_g *= inv;
    acc.loss.align_u *= inv;
    acc.loss.align_g *= inv;
    acc.loss.loss_i2t *= inv;
    acc.loss.loss_t2i *= inv;
    acc.loss.loss_infotok *= inv;
    acc.loss.loss_mllm *= inv;
    acc.loss.loss_total *= inv;
    acc.compact_bound_u *= inv;
    acc.compact_bound_g *= inv;
    acc.suff_bound_u *= inv;
    acc.suff_bound_g *= inv;
    acc.align_estimate_u *= inv;
    acc.align_estimate_g *= inv;
    acc.cka_vis_text *= inv;
    acc.probe_accuracy *= inv;
    acc.nuisance_probe_error *= inv;
    return acc;
}

SweepResult sweep(const TrainConfig& base, const std::string& parameter,
                  const std::vector<double>& values, const std::vector<std::uint64_t>& seeds) {
    if (values.empty()) throw std::invalid_argument("sweep: grid must be nonempty");
    if (seeds.empty()) throw std::invalid_argument("sweep: seed list must be nonempty");
    if (parameter != "beta" && parameter != "alpha" && parameter != "lambda") {
        throw std::invalid_argument("sweep: parameter must be beta, alpha or lambda");
    }

    SweepResult result;
    for (double value : values) {
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.generator.seed = seed;
            if (parameter == "beta") {
                cfg.hyper.beta_u = cfg.hyper.beta_g = value;
            } else if (parameter == "alpha") {
                cfg.hyper.alpha_u = cfg.hyper.alpha_g = value;
            } else {
                cfg.hyper.lambda = value;
            }

            SweepPoint point;
            point.parameter = parameter;
            point.value = value;
            point.seed = seed;
            try {
                const TrainResult run = train(cfg);
                point.converged = converged_record(run.records, cfg.steps);
            } catch (const TrainAbortError& e) {
                point.failed = true;
                point.failure = e.what();
            }
            result.points.push_back(std::move(point));
        }
    }
    return result;
}

double probe(const Eigen::MatrixXd& representations, const std::vector<int>& labels,
             std::uint64_t seed) {
    const auto n = representations.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw std::invalid_argument("probe: one label per row required");
    }
    int classes = 0;
    for (int label : labels) {
        if (label < 0) throw std::invalid_argument("probe: negative label");
        classes = std::max(classes, label + 1);
    }
    if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
        throw std::invalid_argument("probe: labels are degenerate (single class)");
    }
    if (n < 10 * classes) {
        throw std::invalid_argument("probe: need at least 10 samples per class count");
    }

    // Seeded shuffle, 80/20 split.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng::Stream stream(seed, rng::Role::probe_shuffle);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[stream.below(i + 1)]);
    }
    const auto n_train = static_cast<Eigen::Index>(0.8 * static_cast<double>(n));
    const Eigen::Index n_eval = n - n_train;

    // Column standardization from the training split.
    const Eigen::Index d = representations.cols();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n_train; ++i) mean += representations.row(order[i]).transpose();
    mean /= static_cast<double>(n_train);
    Eigen::VectorXd sd = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n_train; ++i) {
        sd += (representations.row(order[i]).transpose() - mean).array().square().matrix();
    }
    sd = (sd / static_cast<double>(n_train)).array().sqrt();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (sd[j] < 1e-12) sd[j] = 1.0;
    }
    auto standardized = [&](Eigen::Index row) -> Eigen::VectorXd {
        return ((representations.row(row).transpose() - mean).array() / sd.array()).matrix();
    };

    // Full-batch softmax regression.
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, classes);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(classes);
    const int iterations = 300;
    const double lr = 0.5;
    Eigen::MatrixXd grad_w(d, classes);
    Eigen::VectorXd grad_b(classes);
    for (int it = 0; it < iterations; ++it) {
        grad_w.setZero();
        grad_b.setZero();
        for (Eigen::Index i = 0; i < n_train; ++i) {
            const Eigen::VectorXd x = standardized(order[i]);
            Eigen::VectorXd logits = w.transpose() * x + b;
            const double m = logits.maxCoeff();
            Eigen::VectorXd p = (logits.array() - m).exp();
            p /= p.sum();
            p[labels[static_cast<std::size_t>(order[i])]] -= 1.0;
            grad_w += x * p.transpose();
            grad_b += p;
        }
        w -= (lr / static_cast<double>(n_train)) * grad_w;
        b -= (lr / static_cast<double>(n_train)) * grad_b;
    }

    Eigen::Index correct = 0;
    for (Eigen::Index i = n_train; i < n; ++i) {
        const Eigen::VectorXd x = standardized(order[i]);
        Eigen::Index argmax = 0;
        (w.transpose() * x + b).maxCoeff(&argmax);
        if (static_cast<int>(argmax) == labels[static_cast<std::size_t>(order[i])]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n_eval);
}

double report_cka(const toy::UnifiedModel& model, const synth::SyntheticBatch& batch) {
    if (batch.size() < 3) throw std::invalid_argument("report_cka: batch must have >= 3 rows");
    const Eigen::MatrixXd anchors = model.anchors(toy::Branch::understanding, batch.images);
    return mi::linear_cka(anchors, batch.texts);
}

// ---------------------------------------------------------------------------
// Output formats
// ---------------------------------------------------------------------------

namespace {

const char* const kColumns[] = {
    "step",           "loss_total",       "loss_mllm",        "loss_infotok",
    "kl_u",           "kl_g",             "suff_u",           "suff_g",
    "align_u",        "align_g",          "compact_bound_u",  "compact_bound_g",
    "suff_bound_u",   "suff_bound_g",     "align_estimate_u", "align_estimate_g",
    "cka_vis_text",   "probe_accuracy",   "nuisance_probe_error",
};

std::vector<double> record_values(const MetricsRecord& r) {
    return {static_cast<double>(r.step),
            r.loss.loss_total,
            r.loss.loss_mllm,
            r.loss.loss_infotok,
            r.loss.kl_u,
            r.loss.kl_g,
            r.loss.suff_u,
            r.loss.suff_g,
            r.loss.align_u,
            r.loss.align_g,
            r.compact_bound_u,
            r.compact_bound_g,
            r.suff_bound_u,
            r.suff_bound_g,
            r.align_estimate_u,
            r.align_estimate_g,
            r.cka_vis_text,
            r.probe_accuracy,
            r.nuisance_probe_error};
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string metrics_csv_header() {
    std::string header;
    for (const char* col : kColumns) {
        if (!header.empty()) header += ",";
        header += col;
    }
    return header;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, std::ostream& out) {
    out << metrics_csv_header() << "\n";
    for (const auto& r : records) {
        out << r.step;
        const auto values = record_values(r);
        for (std::size_t i = 1; i < values.size(); ++i) out << "," << format_value(values[i]);
        out << "\n";
    }
}

void write_summary(const MetricsRecord& converged, std::ostream& out) {
    const auto values = record_values(converged);
    out << "step=" << converged.step;
    for (std::size_t i = 1; i < values.size(); ++i) {
        out << " " << kColumns[i] << "=" << format_value(values[i]);
    }
    out << "\n";
}

} // namespace infotok::harness
