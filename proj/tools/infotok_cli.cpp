#include "infotok/config.hpp"
#include "infotok/harness.hpp"
#include "infotok/oracles.hpp"
#include "infotok/synthdata.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitNumericalAbort = 2;
constexpr int kExitOracleFailure = 3;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

struct GridSpec {
    std::string parameter;
    std::vector<double> values;
};

GridSpec parse_grid(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("grid must look like 'beta=0.1,1,10'");
    }
    GridSpec grid;
    grid.parameter = spec.substr(0, eq);
    for (const auto& item : split(spec.substr(eq + 1), ',')) {
        grid.values.push_back(std::stod(item));
    }
    if (grid.values.empty()) throw std::invalid_argument("grid has no values");
    return grid;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << contents;
}

int run_train(const std::string& config_path, const std::string& out_dir, bool dump_data) {
    infotok::harness::TrainConfig cfg;
    try {
        cfg = infotok::cfg::load_train_config(config_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }

    std::filesystem::create_directories(out_dir);
    try {
        const auto result = infotok::harness::train(cfg);

        std::ofstream metrics(std::filesystem::path(out_dir) / "metrics.csv");
        infotok::harness::write_metrics_csv(result.records, metrics);

        std::ofstream summary(std::filesystem::path(out_dir) / "summary.txt");
        infotok::harness::write_summary(
            infotok::harness::converged_record(result.records, cfg.steps), summary);

        std::ofstream weights(std::filesystem::path(out_dir) / "weights.txt");
        result.model.save(weights);

        if (dump_data) {
            infotok::synth::GeneratorConfig gen = cfg.generator;
            const auto data = infotok::synth::generate(gen);
            std::ofstream csv(std::filesystem::path(out_dir) / "train_data.csv");
            infotok::synth::write_csv(data, csv);
        }

        std::cout << "trained " << cfg.steps << " steps; final probe accuracy "
                  << result.records.back().probe_accuracy << "; outputs in " << out_dir << "\n";
        return kExitOk;
    } catch (const infotok::harness::TrainAbortError& e) {
        const auto& b = e.last_breakdown();
        std::cerr << "numerical abort: " << e.what() << "\n"
                  << "last breakdown: total=" << b.loss_total << " mllm=" << b.loss_mllm
                  << " infotok=" << b.loss_infotok << " kl_u=" << b.kl_u << " kl_g=" << b.kl_g
                  << "\n";
        return kExitNumericalAbort;
    }
}

int run_sweep(const std::string& config_path, const std::string& grid_spec,
              const std::string& seeds_spec, const std::string& out_dir) {
    infotok::harness::TrainConfig cfg;
    GridSpec grid;
    std::vector<std::uint64_t> seeds;
    try {
        cfg = infotok::cfg::load_train_config(config_path);
        grid = parse_grid(grid_spec);
        if (seeds_spec.empty()) {
            seeds.push_back(cfg.seed);
        } else {
            for (const auto& s : split(seeds_spec, ',')) {
                seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }

    std::filesystem::create_directories(out_dir);
    infotok::harness::SweepResult result;
    try {
        result = infotok::harness::sweep(cfg, grid.parameter, grid.values, seeds);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }

    std::ofstream out(std::filesystem::path(out_dir) / "sweep.csv");
    out << "parameter,value,seed,failed," << infotok::harness::metrics_csv_header() << "\n";
    bool any_failed = false;
    for (const auto& point : result.points) {
        any_failed = any_failed || point.failed;
        std::ostringstream row;
        infotok::harness::write_metrics_csv({point.converged}, row);
        const std::string body = row.str().substr(row.str().find('\n') + 1);
        out << point.parameter << "," << point.value << "," << point.seed << ","
            << (point.failed ? 1 : 0) << "," << body;
        std::cout << grid.parameter << "=" << point.value << " seed=" << point.seed
                  << (point.failed ? " FAILED: " + point.failure : " ok") << "\n";
    }
    std::cout << "sweep results in " << out_dir << "/sweep.csv\n";
    return any_failed ? kExitNumericalAbort : kExitOk;
}

int run_suite(const infotok::oracles::SuiteResult& result) {
    std::cout << "suite " << result.name << ":\n";
    for (const auto& line : result.lines) std::cout << line << "\n";
    std::cout << (result.passed ? "PASSED" : "FAILED") << "\n";
    return result.passed ? kExitOk : kExitOracleFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"InfoTok laboratory: information-regularized shared tokenization at desk scale"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string grid_spec;
    std::string seeds_spec;
    std::string suite_name;
    bool dump_data = false;

    auto* train_cmd = app.add_subcommand("train", "train one model from a config file");
    train_cmd->add_option("--config", config_path, "config file")->required();
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_flag("--dump-data", dump_data, "also export the training data as CSV");

    auto* sweep_cmd = app.add_subcommand("sweep", "train a grid over beta, alpha or lambda");
    sweep_cmd->add_option("--config", config_path, "config file")->required();
    sweep_cmd->add_option("--grid", grid_spec, "grid spec, e.g. beta=0.1,1,10")->required();
    sweep_cmd->add_option("--seeds", seeds_spec, "comma-separated seeds (default: config seed)");
    sweep_cmd->add_option("--out", out_dir, "output directory");

    auto* oracle_cmd = app.add_subcommand("oracle", "run an oracle suite");
    oracle_cmd->add_option("--suite", suite_name, "kl | mi | dpi | cka")->required();

    app.add_subcommand("gradcheck", "finite-difference checks of every primitive and the "
                                    "full objective");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return run_train(config_path, out_dir, dump_data);
        if (sweep_cmd->parsed()) return run_sweep(config_path, grid_spec, seeds_spec, out_dir);
        if (oracle_cmd->parsed()) {
            if (suite_name == "kl") return run_suite(infotok::oracles::kl_suite());
            if (suite_name == "mi") return run_suite(infotok::oracles::mi_suite());
            if (suite_name == "dpi") return run_suite(infotok::oracles::dpi_suite());
            if (suite_name == "cka") return run_suite(infotok::oracles::cka_suite());
            std::cerr << "config error: unknown suite '" << suite_name << "'\n";
            return kExitConfigError;
        }
        return run_suite(infotok::oracles::gradcheck_suite());
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericalAbort;
    }
}
