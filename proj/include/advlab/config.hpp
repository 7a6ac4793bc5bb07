#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/distill.hpp"
#include "advlab/train.hpp"

namespace advlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetSource {
    enum class Kind { Desk, Blobs, Idx };
    Kind kind = Kind::Desk;
    std::size_t per_class = 600;  // desk standard: 600 x 10 -> 5000 train / 1000 test
    int classes = 10;
    double test_fraction = 1.0 / 6.0;
    std::size_t dim = 2;       // blobs only
    double separation = 4.0;   // blobs only
    std::string train_images, train_labels, test_images, test_labels;  // idx only
};

struct AnalysisConfig {
    bool svcca = true, pca = true, ks = true, boundary = true;
    std::size_t svcca_batch = 128;
    double variance_keep = 0.99;
    std::size_t boundary_samples = 64;
    int boundary_steps = 50;
    bool include_no_attack = false;  // include the clean-accuracy row in the KS samples
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string arch = "conv-small";
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    DatasetSource dataset;
    TrainConfig train;
    double adv_epsilon_linf = 0.1;  // inner PGD budget for the Linf-trained model
    double adv_epsilon_l2 = 1.0;
    int adv_steps = 5;
    DistillConfig distill;
    std::vector<AttackSpec> grid;
    AnalysisConfig analysis;

    void validate() const;          // throws ConfigError
    std::string echo_json() const;  // canonical echo, sufficient to rerun
};

// Strict INI-style text: `spec_version = 1` before any section, full-line
// comments (# or ;), sections [experiment] [dataset] [train] [adversarial]
// [distill] [analysis] and one [attack] section per grid entry. Unknown keys
// and sections are errors.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace advlab
