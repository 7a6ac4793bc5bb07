#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/model.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

enum class Norm { L1, L2, Linf };

std::string norm_name(Norm p);
Norm norm_from_string(const std::string& s);

struct AttackSpec {
    enum class Kind { Fgsm, Pgd, Cw, Deepfool };
    Kind kind = Kind::Pgd;
    Norm norm = Norm::Linf;
    double epsilon = 0.0;   // budget; post-hoc L2 success cap for cw/deepfool
    int steps = 10;
    double step_size = 0.0;  // <=0 picks the kind default (pgd 2.5*eps/steps)
    bool random_start = true;
    double overshoot = 0.02;
    double cw_confidence = 0.0;
    double cw_penalty = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

std::string attack_kind_name(AttackSpec::Kind k);
AttackSpec::Kind attack_kind_from_string(const std::string& s);

struct AdvBatch {
    Tensor originals{Shape{1}};
    Tensor adversarials{Shape{1}};
    std::vector<int> true_labels;
    std::vector<int> clean_pred;
    std::vector<int> adv_pred;
    std::vector<double> l1, l2, linf;
    std::vector<char> success;
    std::vector<char> stationary;
    std::vector<int> iterations;

    std::size_t size() const { return clean_pred.size(); }
};

// Exact Euclidean projection of v onto the closed Lp ball of radius eps.
Tensor project_ball(const Tensor& v, Norm p, double eps);

AdvBatch fgsm(const Model& model, const Tensor& batch, const std::vector<int>& labels, const AttackSpec& spec);
AdvBatch pgd(const Model& model, const Tensor& batch, const std::vector<int>& labels, const AttackSpec& spec);
AdvBatch carlini_wagner(const Model& model, const Tensor& batch, const std::vector<int>& labels,
                        const AttackSpec& spec);
// labels are bookkeeping only; when provided, samples misclassified against
// them are skipped (zero perturbation, zero iterations).
AdvBatch deepfool(const Model& model, const Tensor& batch, const AttackSpec& spec,
                  const std::vector<int>& labels = {});

AdvBatch run_attack(const Model& model, const Tensor& batch, const std::vector<int>& labels, const AttackSpec& spec);

struct RobustnessReport {
    double average_robustness = 0.0;  // mean of |r|_2 / |x|_2 over contributing samples
    std::size_t contributing = 0;
    std::size_t failed = 0;
    std::size_t skipped_zero_norm = 0;
};

RobustnessReport average_robustness(const Model& model, const Dataset& ds, const AttackSpec& deepfool_spec);

}  // namespace advlab
