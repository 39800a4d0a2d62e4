#include "infotok/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace infotok::cfg {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

double parse_double(int line, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        fail(line, "expected a number, got '" + value + "'");
    }
    if (used != value.size()) fail(line, "trailing characters after number '" + value + "'");
    return v;
}

long long parse_int(int line, const std::string& value) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &used);
    } catch (const std::exception&) {
        fail(line, "expected an integer, got '" + value + "'");
    }
    if (used != value.size()) fail(line, "trailing characters after integer '" + value + "'");
    return v;
}

} // namespace

harness::TrainConfig parse_train_config(std::istream& in) {
    harness::TrainConfig cfg;
    bool generator_seed_set = false;

    std::string section;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string text = trim(raw);
        const auto comment = text.find_first_of("#;");
        if (comment != std::string::npos) text = trim(text.substr(0, comment));
        if (text.empty()) continue;

        if (text.front() == '[') {
            if (text.back() != ']') fail(line, "unterminated section header");
            section = trim(text.substr(1, text.size() - 2));
            if (section != "generator" && section != "model" && section != "hyper" &&
                section != "train") {
                fail(line, "unknown section [" + section + "]");
            }
            continue;
        }

        const auto eq = text.find('=');
        if (eq == std::string::npos) fail(line, "expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty() || value.empty()) fail(line, "expected 'key = value'");
        if (section.empty()) fail(line, "key '" + key + "' outside any section");

        if (section == "generator") {
            if (key == "num_classes") cfg.generator.num_classes = static_cast<int>(parse_int(line, value));
            else if (key == "image_dim") cfg.generator.image_dim = static_cast<int>(parse_int(line, value));
            else if (key == "text_dim") cfg.generator.text_dim = static_cast<int>(parse_int(line, value));
            else if (key == "image_noise") cfg.generator.image_noise = parse_double(line, value);
            else if (key == "text_noise") cfg.generator.text_noise = parse_double(line, value);
            else if (key == "nuisance_dims") cfg.generator.nuisance_dims = static_cast<int>(parse_int(line, value));
            else if (key == "samples") cfg.generator.samples = static_cast<int>(parse_int(line, value));
            else if (key == "seed") {
                cfg.generator.seed = static_cast<std::uint64_t>(parse_int(line, value));
                generator_seed_set = true;
            } else fail(line, "unknown key '" + key + "' in [generator]");
        } else if (section == "model") {
            if (key == "hidden_dim") cfg.model.hidden_dim = static_cast<int>(parse_int(line, value));
            else if (key == "num_tokens") cfg.model.num_tokens = static_cast<int>(parse_int(line, value));
            else if (key == "token_dim") cfg.model.token_dim = static_cast<int>(parse_int(line, value));
            else fail(line, "unknown key '" + key + "' in [model]");
        } else if (section == "hyper") {
            if (key == "beta") cfg.hyper.beta_u = cfg.hyper.beta_g = parse_double(line, value);
            else if (key == "alpha") cfg.hyper.alpha_u = cfg.hyper.alpha_g = parse_double(line, value);
            else if (key == "beta_u") cfg.hyper.beta_u = parse_double(line, value);
            else if (key == "beta_g") cfg.hyper.beta_g = parse_double(line, value);
            else if (key == "alpha_u") cfg.hyper.alpha_u = parse_double(line, value);
            else if (key == "alpha_g") cfg.hyper.alpha_g = parse_double(line, value);
            else if (key == "lambda") cfg.hyper.lambda = parse_double(line, value);
            else if (key == "tau") cfg.hyper.tau = parse_double(line, value);
            else fail(line, "unknown key '" + key + "' in [hyper]");
        } else { // train
            if (key == "steps") cfg.steps = static_cast<int>(parse_int(line, value));
            else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(line, value));
            else if (key == "learning_rate") cfg.learning_rate = parse_double(line, value);
            else if (key == "optimizer") {
                if (value == "momentum") cfg.optimizer = harness::Optimizer::momentum;
                else if (value == "gd") cfg.optimizer = harness::Optimizer::gradient_descent;
                else fail(line, "optimizer must be 'momentum' or 'gd'");
            } else if (key == "momentum") cfg.momentum = parse_double(line, value);
            else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(line, value));
            else if (key == "log_interval") cfg.log_interval = static_cast<int>(parse_int(line, value));
            else if (key == "held_out") cfg.held_out = static_cast<int>(parse_int(line, value));
            else fail(line, "unknown key '" + key + "' in [train]");
        }
    }

    // The model consumes generator data directly; tie the shared dimensions.
    cfg.model.image_dim = cfg.generator.image_dim;
    cfg.model.num_classes = cfg.generator.num_classes;
    cfg.model.latent_dim = cfg.generator.text_dim;
    if (!generator_seed_set) cfg.generator.seed = cfg.seed;

    cfg.validate();
    return cfg;
}

harness::TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    return parse_train_config(in);
}

std::string default_config_text() {
    const harness::TrainConfig cfg;
    std::ostringstream os;
    os << "# infotok training configuration\n"
       << "[generator]\n"
       << "num_classes = " << cfg.generator.num_classes << "\n"
       << "image_dim = " << cfg.generator.image_dim << "\n"
       << "text_dim = " << cfg.generator.text_dim << "\n"
       << "image_noise = " << cfg.generator.image_noise << "\n"
       << "text_noise = " << cfg.generator.text_noise << "\n"
       << "nuisance_dims = " << cfg.generator.nuisance_dims << "\n"
       << "samples = " << cfg.generator.samples << "\n"
       << "# seed defaults to the [train] seed when omitted\n"
       << "\n[model]\n"
       << "hidden_dim = " << cfg.model.hidden_dim << "\n"
       << "num_tokens = " << cfg.model.num_tokens << "\n"
       << "token_dim = " << cfg.model.token_dim << "\n"
       << "\n[hyper]\n"
       << "beta = " << cfg.hyper.beta_u << "\n"
       << "alpha = " << cfg.hyper.alpha_u << "\n"
       << "lambda = " << cfg.hyper.lambda << "\n"
       << "tau = " << cfg.hyper.tau << "\n"
       << "\n[train]\n"
       << "steps = " << cfg.steps << "\n"
       << "batch_size = " << cfg.batch_size << "\n"
       << "learning_rate = " << cfg.learning_rate << "\n"
       << "optimizer = " << (cfg.optimizer == harness::Optimizer::momentum ? "momentum" : "gd")
       << "\n"
       << "momentum = " << cfg.momentum << "\n"
       << "seed = " << cfg.seed << "\n"
       << "log_interval = " << cfg.log_interval << "\n"
       << "held_out = " << cfg.held_out << "\n";
    return os.str();
}

} // namespace infotok::cfg
