#pragma once

#include "infotok/miest.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace infotok::synth {

// Synthetic multimodal data with known information structure: a uniform
// latent class picks an image anchor and a text anchor; samples are anchors
// plus isotropic noise. The last `nuisance_dims` image coordinates carry no
// class information at all.
struct GeneratorConfig {
    int num_classes = 4;
    int image_dim = 16;  // includes the nuisance coordinates
    int text_dim = 4;
    double image_noise = 0.15;
    double text_noise = 0.1;
    int nuisance_dims = 4;
    int samples = 512;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticBatch {
    Eigen::MatrixXd images;        // n x d_I
    Eigen::MatrixXd texts;         // n x d_T
    std::vector<int> y_understand; // class targets, equal to latent
    Eigen::MatrixXd y_generate;    // n x d_I noise-free images
    std::vector<int> latent;

    // Fixed per-class anchors the samples were built from.
    Eigen::MatrixXd image_anchors; // C x d_I, zero on nuisance coordinates
    Eigen::MatrixXd text_anchors;  // C x d_T

    Eigen::Index size() const { return images.rows(); }
    SyntheticBatch rows(Eigen::Index begin, Eigen::Index count) const;
};

SyntheticBatch generate(const GeneratorConfig& config);

// Exact ceiling on any label MI: H(c) = log C for the uniform latent.
double true_label_mi(const GeneratorConfig& config);

// Index of the closest image anchor in Euclidean distance.
int nearest_anchor(const Eigen::VectorXd& image, const Eigen::MatrixXd& anchors);

// A random joint over (Z, Y) plus the complete enumeration of deterministic
// maps f: Z -> Z'. Rejects families larger than 10^4 maps.
struct DpiInstance {
    mi::DiscreteJoint joint;
    std::vector<std::vector<int>> maps;
    int out_size = 0;
};

DpiInstance dpi_instance(std::uint64_t seed, int z_size, int y_size, int out_size);

// One row per sample: latent, y_understand, image coords, text coords.
void write_csv(const SyntheticBatch& batch, std::ostream& out);

} // namespace infotok::synth
