#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/model.hpp"

namespace advlab {

struct TrainConfig {
    int epochs = 10;
    std::size_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    std::optional<AttackSpec> inner_attack;  // present: adversarial training
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean minibatch loss per epoch
    int rejected_steps = 0;
};

TrainResult train_regular(Model& model, const Dataset& ds, const TrainConfig& cfg);
// Madry scheme: every minibatch is replaced by its adversarial counterpart
// (inner attack, fgsm or pgd) before the gradient step.
TrainResult train_adversarial(Model& model, const Dataset& ds, const TrainConfig& cfg);

struct EvalRow {
    bool no_attack = false;
    AttackSpec spec;
    std::string model_id;
    double accuracy = 0.0;
};

struct EvalGrid {
    std::vector<EvalRow> rows;
};

// Accuracy of one model under one attack; over-L2-budget cw/deepfool samples
// count as attack failures (the clean prediction stands).
double accuracy_under_attack(const Model& model, const Dataset& ds, const AttackSpec& spec);

EvalGrid evaluate_grid(const std::vector<std::pair<std::string, const Model*>>& models,
                       const std::vector<AttackSpec>& attacks, const Dataset& ds);

// CSV columns: attack,norm,epsilon,steps,model_id,accuracy.
void write_eval_csv(const EvalGrid& grid, const std::string& path);

}  // namespace advlab
