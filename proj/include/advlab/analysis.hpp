#pragma once

#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/model.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

struct SvccaResult {
    std::vector<double> coefficients;  // descending, in [0,1]
    double mean = 0.0;
    std::size_t kept_a = 0, kept_b = 0;  // directions retained per view
};

// Center both views, truncate each to the top singular directions explaining
// >= variance_keep of variance, then CCA with lambda*I regularization.
SvccaResult svcca(const Tensor& reps_a, const Tensor& reps_b, double variance_keep = 0.99);

// Mean SVCCA coefficient between clean and attacked representations.
double svcca_under_attack(const Model& model, const Dataset& batch, const AttackSpec& spec,
                          double variance_keep = 0.99);

struct PcaResult {
    Tensor coords{Shape{1, 1}};            // N x k
    std::vector<double> explained;         // variance fraction per component
};

// Center, SVD, project onto the top-k right singular vectors; each
// component's largest-magnitude loading is made positive.
PcaResult pca_project(const Tensor& reps, std::size_t k = 2);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_a = 0, n_b = 0;
};

// Two-sample Kolmogorov-Smirnov; asymptotic p-value at n_eff = nm/(n+m).
KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b);

struct BoundaryRecord {
    std::size_t index = 0;
    double l2 = 0.0, linf = 0.0;
    int steps = 0;
};

struct BoundaryReport {
    double mean_l2 = 0.0;
    double mean_linf = 0.0;
    double mean_steps = 0.0;
    std::size_t measured = 0;
    std::size_t exhausted = 0;  // DeepFool ran out of iterations; excluded
    std::vector<BoundaryRecord> records;
};

// Decision-boundary distance via DeepFool with overshoot forced to zero.
BoundaryReport boundary_distance(const Model& model, const Dataset& ds, const AttackSpec& deepfool_spec);

// Plot-data export: sample id, class label, population, coord_1, coord_2.
// PCA is fit on the union of both populations, then each is projected.
void write_pca_csv(const Tensor& clean_reps, const Tensor& adv_reps, const std::vector<int>& labels,
                   const std::string& path, std::size_t k = 2);

std::string to_json(const SvccaResult& r);
std::string to_json(const KsResult& r);
std::string to_json(const BoundaryReport& r);

}  // namespace advlab
