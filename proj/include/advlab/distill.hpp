#pragma once

#include <cstdint>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/model.hpp"
#include "advlab/train.hpp"

namespace advlab {

struct DistillConfig {
    int steps = 1000;
    double lr = 0.1;
    enum class Init { Noise, OtherImage, Target };
    Init init = Init::Noise;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DistillResult {
    Tensor image{Shape{1}};       // [1, C, H, W], in [0,1]
    std::vector<double> curve;    // squared representation distance per step, curve[0] at init
};

// Gradient descent on |rep(z) - rep(target)|_2^2 with z clipped to [0,1]
// after every step. init_override (when given) replaces the configured init.
DistillResult distill_image(const Tensor& target, const Model& robust_model, const DistillConfig& cfg,
                            std::uint64_t sample_index = 0, const Tensor* init_override = nullptr);

struct RobustDataset {
    Dataset data;                        // distilled images, labels copied verbatim
    std::vector<double> final_distance;  // squared representation distance at the last step
    std::vector<std::uint64_t> init_hash;
    std::vector<char> failed;            // image replaced by its init after a numeric failure
};

RobustDataset build_robust_dataset(const Dataset& ds, const Model& robust_model, const DistillConfig& cfg);

struct RobustPipelineResult {
    Model model;
    RobustDataset dataset;
    TrainResult training;
};

// Distill the dataset against the adversarially trained model, then train a
// fresh regular model of the same architecture on the distilled data.
RobustPipelineResult robust_training_pipeline(const Dataset& ds, const Model& adv_model, const TrainConfig& train_cfg,
                                              const DistillConfig& distill_cfg);

}  // namespace advlab
