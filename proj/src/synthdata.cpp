#include "infotok/synthdata.hpp"

#include "infotok/rng.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace infotok::synth {

void GeneratorConfig::validate() const {
    if (num_classes < 2) throw std::invalid_argument("GeneratorConfig: num_classes must be >= 2");
    if (nuisance_dims < 0 || image_dim <= nuisance_dims) {
        throw std::invalid_argument("GeneratorConfig: requires image_dim > nuisance_dims >= 0");
    }
    if (text_dim < 1) throw std::invalid_argument("GeneratorConfig: text_dim must be >= 1");
    if (!(image_noise > 0.0) || !(text_noise > 0.0)) {
        throw std::invalid_argument("GeneratorConfig: noise scales must be positive");
    }
    if (samples < 2 * num_classes) {
        throw std::invalid_argument("GeneratorConfig: samples must be >= 2 * num_classes");
    }
}

namespace {

// Seeded anchors: Gaussian draws, Gram-Schmidt against earlier anchors when
// the dimension allows, then normalized to the unit sphere.
Eigen::MatrixXd draw_anchors(std::uint64_t seed, rng::Role role, int count, int dim) {
    rng::Stream stream(seed, role);
    Eigen::MatrixXd anchors(count, dim);
    for (int c = 0; c < count; ++c) {
        for (int j = 0; j < dim; ++j) anchors(c, j) = stream.normal();
        if (c < dim) {
            for (int prev = 0; prev < c; ++prev) {
                anchors.row(c) -= anchors.row(c).dot(anchors.row(prev)) * anchors.row(prev);
            }
        }
        anchors.row(c).normalize();
    }
    return anchors;
}

} // namespace

SyntheticBatch generate(const GeneratorConfig& config) {
    config.validate();
    const int n = config.samples;
    const int d_signal = config.image_dim - config.nuisance_dims;

    SyntheticBatch batch;
    batch.image_anchors = Eigen::MatrixXd::Zero(config.num_classes, config.image_dim);
    batch.image_anchors.leftCols(d_signal) =
        draw_anchors(config.seed, rng::Role::image_anchor, config.num_classes, d_signal);
    batch.text_anchors =
        draw_anchors(config.seed, rng::Role::text_anchor, config.num_classes, config.text_dim);

    batch.images.resize(n, config.image_dim);
    batch.texts.resize(n, config.text_dim);
    batch.y_generate.resize(n, config.image_dim);
    batch.latent.resize(n);
    batch.y_understand.resize(n);

    rng::Stream latent_stream(config.seed, rng::Role::data_latent);
    rng::Stream image_stream(config.seed, rng::Role::data_image_noise);
    rng::Stream text_stream(config.seed, rng::Role::data_text_noise);

    for (int i = 0; i < n; ++i) {
        const int c = static_cast<int>(latent_stream.below(static_cast<std::uint64_t>(config.num_classes)));
        batch.latent[i] = c;
        batch.y_understand[i] = c;
        batch.y_generate.row(i) = batch.image_anchors.row(c);
        for (int j = 0; j < config.image_dim; ++j) {
            batch.images(i, j) = batch.image_anchors(c, j) + config.image_noise * image_stream.normal();
        }
        for (int j = 0; j < config.text_dim; ++j) {
            batch.texts(i, j) = batch.text_anchors(c, j) + config.text_noise * text_stream.normal();
        }
    }
    return batch;
}

SyntheticBatch SyntheticBatch::rows(Eigen::Index begin, Eigen::Index count) const {
    if (begin < 0 || count < 1 || begin + count > size()) {
        throw std::invalid_argument("SyntheticBatch::rows: range out of bounds");
    }
    SyntheticBatch out;
    out.images = images.middleRows(begin, count);
    out.texts = texts.middleRows(begin, count);
    out.y_generate = y_generate.middleRows(begin, count);
    out.latent.assign(latent.begin() + begin, latent.begin() + begin + count);
    out.y_understand.assign(y_understand.begin() + begin, y_understand.begin() + begin + count);
    out.image_anchors = image_anchors;
    out.text_anchors = text_anchors;
    return out;
}

double true_label_mi(const GeneratorConfig& config) {
    config.validate();
    return std::log(static_cast<double>(config.num_classes));
}

int nearest_anchor(const Eigen::VectorXd& image, const Eigen::MatrixXd& anchors) {
    int best = 0;
    double best_dist = (anchors.row(0).transpose() - image).squaredNorm();
    for (Eigen::Index c = 1; c < anchors.rows(); ++c) {
        const double dist = (anchors.row(c).transpose() - image).squaredNorm();
        if (dist < best_dist) {
            best_dist = dist;
            best = static_cast<int>(c);
        }
    }
    return best;
}

DpiInstance dpi_instance(std::uint64_t seed, int z_size, int y_size, int out_size) {
    if (z_size < 1 || y_size < 1 || out_size < 1) {
        throw std::invalid_argument("dpi_instance: sizes must be >= 1");
    }
    double family = std::pow(static_cast<double>(out_size), static_cast<double>(z_size));
    if (family > 1e4) {
        throw std::invalid_argument("dpi_instance: map family larger than 10^4");
    }

    rng::Stream stream(seed, rng::Role::oracle, 2);
    Eigen::MatrixXd table(z_size, y_size);
    for (int x = 0; x < z_size; ++x) {
        for (int y = 0; y < y_size; ++y) table(x, y) = stream.uniform();
    }
    table /= table.sum();

    DpiInstance inst{mi::DiscreteJoint(std::move(table)), {}, out_size};
    const auto total = static_cast<std::size_t>(family);
    inst.maps.reserve(total);
    std::vector<int> f(static_cast<std::size_t>(z_size), 0);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (int x = 0; x < z_size; ++x) {
            f[static_cast<std::size_t>(x)] = static_cast<int>(rem % static_cast<std::size_t>(out_size));
            rem /= static_cast<std::size_t>(out_size);
        }
        inst.maps.push_back(f);
    }
    return inst;
}

void write_csv(const SyntheticBatch& batch, std::ostream& out) {
    out << "latent,y_understand";
    for (Eigen::Index j = 0; j < batch.images.cols(); ++j) out << ",image_" << j;
    for (Eigen::Index j = 0; j < batch.texts.cols(); ++j) out << ",text_" << j;
    out << "\n";
    char buf[32];
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
        out << batch.latent[static_cast<std::size_t>(i)] << ","
            << batch.y_understand[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < batch.images.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", batch.images(i, j));
            out << "," << buf;
        }
        for (Eigen::Index j = 0; j < batch.texts.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", batch.texts(i, j));
            out << "," << buf;
        }
        out << "\n";
    }
}

} // namespace infotok::synth
