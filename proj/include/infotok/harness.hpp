#pragma once

#include "infotok/synthdata.hpp"
#include "infotok/toymodel.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace infotok::harness {

enum class Optimizer { gradient_descent, momentum };

// One reproducible experiment. The seed drives data generation, weight
// initialization, batch selection and the per-step reparameterization noise
// through independent counter-based streams.
struct TrainConfig {
    synth::GeneratorConfig generator;
    toy::ModelDims model;
    toy::InfoTokHyper hyper;

    int steps = 2000;
    int batch_size = 32;
    double learning_rate = 0.05;
    Optimizer optimizer = Optimizer::momentum;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    int log_interval = 50;
    int held_out = 256; // evaluation rows generated beyond the training pool

    void validate() const;
};

// One logged step. Loss fields come from a fixed evaluation batch with fixed
// noise, so the curves reflect weight changes only. Bounds read:
//   compact_bound  = KL to the prior (upper bound on code/input MI)
//   suff_bound     = sufficiency log-likelihood + H(target)
//   align_estimate = InfoNCE value + log K
struct MetricsRecord {
    int step = 0;
    toy::LossBreakdown loss;
    double compact_bound_u = 0.0, compact_bound_g = 0.0;
    double suff_bound_u = 0.0, suff_bound_g = 0.0;
    double align_estimate_u = 0.0, align_estimate_g = 0.0;
    double cka_vis_text = 0.0;
    double probe_accuracy = 0.0;
    double nuisance_probe_error = 0.0;
};

// Thrown when a training step produces a non-finite loss.
class TrainAbortError : public std::runtime_error {
public:
    TrainAbortError(int step, toy::LossBreakdown last, const std::string& what)
        : std::runtime_error(what), step_(step), last_(last) {}
    int step() const { return step_; }
    const toy::LossBreakdown& last_breakdown() const { return last_; }

private:
    int step_;
    toy::LossBreakdown last_;
};

struct TrainResult {
    std::vector<MetricsRecord> records;
    toy::UnifiedModel model;
    synth::SyntheticBatch held_out;
};

enum class TrainerKind { full, mllm_only };

// Called after each weight update with the step number (1-based) and the
// updated model; used by tests to compare trajectories.
using StepObserver = std::function<void(int, const toy::UnifiedModel&)>;

TrainResult train(const TrainConfig& config, TrainerKind kind = TrainerKind::full,
                  const StepObserver& observer = {});

// Field-wise mean of the records in the final 10% of steps (always at least
// the final record).
MetricsRecord converged_record(const std::vector<MetricsRecord>& records, int steps);

struct SweepPoint {
    std::string parameter;
    double value = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    MetricsRecord converged;
};

struct SweepResult {
    std::vector<SweepPoint> points;
};

// Trains one model per (value, seed) pair, overriding `parameter`
// ("beta" | "alpha" | "lambda"; beta/alpha set both branches) and both the
// trainer and generator seed. Aborted runs are reported with failure flags.
SweepResult sweep(const TrainConfig& base, const std::string& parameter,
                  const std::vector<double>& values, const std::vector<std::uint64_t>& seeds);

// Held-out accuracy of a multinomial linear probe fit by gradient descent on
// an 80/20 split. Deterministic per seed. Requires n >= 10 * classes and at
// least two distinct labels.
double probe(const Eigen::MatrixXd& representations, const std::vector<int>& labels,
             std::uint64_t seed);

// Linear CKA between understanding-branch anchors and the text embeddings of
// a held-out batch.
double report_cka(const toy::UnifiedModel& model, const synth::SyntheticBatch& batch);

std::string metrics_csv_header();
void write_metrics_csv(const std::vector<MetricsRecord>& records, std::ostream& out);
void write_summary(const MetricsRecord& converged, std::ostream& out);

} // namespace infotok::harness
