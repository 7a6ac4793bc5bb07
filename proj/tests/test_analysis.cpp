#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/analysis.hpp"
#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/model.hpp"
#include "advlab/tensor.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace advlab;
using testsupport::rand_tensor;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "advlab-tests";
    std::filesystem::create_directories(dir);
    return dir;
}

// Two-class linear model with a controlled margin along (0.8, 0.6).
Model margin_model() {
    Model m = make_linear(2, 2, 0);
    m.params.at("L0.w") = Tensor({2, 2}, {0.8, 0.0, 0.6, 0.0});
    m.params.at("L0.b") = Tensor({2}, {-0.55, 0.0});
    return m;
}

Dataset margin_points() {
    Dataset ds;
    ds.images = Tensor({2, 1, 1, 2}, {0.5, 0.5, 0.75, 0.5});
    ds.labels = {0, 0};
    ds.num_classes = 2;
    ds.provenance = "margin-fixture";
    return ds;
}

}  // namespace

TEST_CASE("ks statistic matches hand-computed empirical gaps") {
    KsResult hand = ks_two_sample({0.0, 1.0}, {0.5});
    CHECK(hand.statistic == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(hand.n_a == 2);
    CHECK(hand.n_b == 1);
    CHECK(hand.p_value > 0.9);

    KsResult ties = ks_two_sample({1.0, 1.0, 2.0}, {1.0, 2.0, 2.0});
    CHECK(ties.statistic == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    std::vector<double> same{0.3, 0.7, 0.1, 0.9};
    KsResult id = ks_two_sample(same, same);
    CHECK(id.statistic == 0.0);
    CHECK(id.p_value == 1.0);

    KsResult disjoint = ks_two_sample({1.0, 2.0, 3.0}, {10.0, 11.0});
    CHECK(disjoint.statistic == 1.0);

    std::vector<double> a{0.1, 0.5, 0.52, 0.9, 0.33, 0.2, 0.65};
    std::vector<double> b{0.4, 0.45, 0.6, 0.05, 0.77};
    KsResult ab = ks_two_sample(a, b);
    KsResult ba = ks_two_sample(b, a);
    CHECK(ab.statistic == ba.statistic);
    CHECK(ab.p_value == ba.p_value);
    CHECK(ab.n_a == ba.n_b);

    CHECK_THROWS_AS(ks_two_sample({}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(ks_two_sample({1.0}, {}), std::invalid_argument);
}

TEST_CASE("ks regression on frozen robust-vs-adversarial accuracy profiles") {
    // Accuracy of a robust / adversarially trained model pair under eleven
    // attacks. Same-distribution hypothesis survives at the 0.05 level.
    const std::vector<double> robust_a{0.81, 0.59, 0.1, 0.22, 0.81, 0.483, 0.202, 0.168, 0.08, 0.219, 0.124};
    const std::vector<double> adv_a{0.91, 0.87, 0.13, 0.62, 0.91, 0.82, 0.75, 0.54, 0.06, 0.86, 0.127};
    KsResult ra = ks_two_sample(robust_a, adv_a);
    CHECK(ra.n_a == 11);
    CHECK(ra.n_b == 11);
    CHECK(ra.statistic == doctest::Approx(5.0 / 11.0).epsilon(1e-12));
    CHECK(ra.p_value == doctest::Approx(0.2058362).epsilon(1e-5));
    CHECK(ra.p_value > 0.05);

    // Second pair, ten attacks; this one lands in the reported [0.25, 0.55]
    // non-rejection band.
    const std::vector<double> robust_b{0.49, 0.10, 0.63, 0.87, 0.88, 0.89, 0.06, 0.04, 0.51, 0.48};
    const std::vector<double> adv_b{0.83, 0.415, 0.79, 0.912, 0.903, 0.94, 0.378, 0.281, 0.85, 0.784};
    KsResult rb = ks_two_sample(robust_b, adv_b);
    CHECK(rb.statistic == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(rb.p_value == doctest::Approx(0.4004710).epsilon(1e-5));
    CHECK(rb.p_value >= 0.25);
    CHECK(rb.p_value <= 0.55);

    auto j = nlohmann::json::parse(to_json(rb));
    CHECK(j["statistic"].get<double>() == rb.statistic);
    CHECK(j["p_value"].get<double>() == rb.p_value);
    CHECK(j["n_a"].get<std::size_t>() == 10);
    CHECK(j["n_b"].get<std::size_t>() == 10);
}

TEST_CASE("svcca is 1 against itself and under invertible affine maps") {
    std::mt19937_64 rng(11);
    const std::size_t n = 40, d = 6;
    Tensor x = rand_tensor(Shape{n, d}, rng);

    SvccaResult self = svcca(x, x, 1.0);
    CHECK(self.kept_a == d);
    CHECK(self.kept_b == d);
    CHECK(self.coefficients.size() == d);
    CHECK(self.mean == doctest::Approx(1.0).epsilon(1e-6));
    for (double c : self.coefficients) CHECK(c == doctest::Approx(1.0).epsilon(1e-6));

    // y = x A + 1 c^T with A = I + 0.3 R kept well-conditioned.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> a(d * d), shift(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a[i * d + j] = (i == j ? 1.0 : 0.0) + 0.3 * u(rng);
    for (double& s : shift) s = 2.0 * u(rng);
    Tensor y(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = shift[j];
            for (std::size_t k = 0; k < d; ++k) acc += x[i * d + k] * a[k * d + j];
            y[i * d + j] = acc;
        }
    SvccaResult affine = svcca(x, y, 1.0);
    CHECK(affine.mean == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("svcca correlation between independent noise views is near zero") {
    std::mt19937_64 ra(101), rb(202);
    Tensor a = rand_tensor(Shape{2000, 20}, ra);
    Tensor b = rand_tensor(Shape{2000, 20}, rb);
    SvccaResult r = svcca(a, b);
    CHECK(r.mean >= 0.0);
    CHECK(r.mean < 0.15);
}

TEST_CASE("svcca variance_keep truncates to the dominant directions") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t n = 300, d = 4;
    const double scale[d] = {30.0, 1.0, 0.1, 0.01};
    Tensor x(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = scale[j] * g(rng);

    SvccaResult trunc = svcca(x, x, 0.99);
    CHECK(trunc.kept_a == 1);
    CHECK(trunc.kept_b == 1);
    SvccaResult full = svcca(x, x, 1.0);
    CHECK(full.kept_a == d);
}

TEST_CASE("svcca rejects malformed views") {
    std::mt19937_64 rng(3);
    Tensor a = rand_tensor(Shape{6, 3}, rng);
    Tensor b = rand_tensor(Shape{5, 3}, rng);
    CHECK_THROWS_AS(svcca(a, b), std::invalid_argument);

    Tensor one = rand_tensor(Shape{1, 3}, rng);
    CHECK_THROWS_AS(svcca(one, one), std::invalid_argument);

    Tensor ok = rand_tensor(Shape{8, 3}, rng);
    CHECK_THROWS_AS(svcca(ok, ok, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(svcca(ok, ok, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(svcca(ok, ok, -0.5), std::invalid_argument);

    Tensor cube = rand_tensor(Shape{4, 2, 2}, rng);
    CHECK_THROWS_AS(svcca(cube, cube), std::invalid_argument);

    Tensor flat = Tensor::full(Shape{8, 3}, 0.25);
    CHECK_THROWS_AS(svcca(flat, flat), std::runtime_error);
}

TEST_CASE("pca reproduces an exact collinear embedding") {
    const std::vector<double> t{-1.2, 0.4, 2.0, 0.1, -0.7, 1.5, 0.9, -2.1, 0.3, 0.6, -0.4, 1.1};
    const std::size_t n = t.size();
    double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n);
    // Points t * (-2, 1) + (5, -3); the dominant loading is negative, so the
    // sign convention flips the component.
    Tensor x(Shape{n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        x[i * 2 + 0] = 5.0 - 2.0 * t[i];
        x[i * 2 + 1] = -3.0 + t[i];
    }

    PcaResult p = pca_project(x, 1);
    CHECK(p.coords.shape() == Shape{n, 1});
    REQUIRE(p.explained.size() == 1);
    CHECK(p.explained[0] == doctest::Approx(1.0).epsilon(1e-12));
    const double root5 = std::sqrt(5.0);
    double colsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(p.coords[i] == doctest::Approx(-(t[i] - mean) * root5).epsilon(1e-9));
        colsum += p.coords[i];
    }
    CHECK(std::abs(colsum) < 1e-9);

    CHECK_THROWS_AS(pca_project(x, 2), std::invalid_argument);
}

TEST_CASE("pca explained fractions are sorted and coords are centered") {
    std::mt19937_64 rng(19);
    const std::size_t n = 30, d = 5, k = 3;
    Tensor x = rand_tensor(Shape{n, d}, rng);
    PcaResult p = pca_project(x, k);
    CHECK(p.coords.shape() == Shape{n, k});
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        CHECK(p.explained[j] >= 0.0);
        CHECK(p.explained[j] <= 1.0);
        if (j > 0) CHECK(p.explained[j] <= p.explained[j - 1] + 1e-15);
        total += p.explained[j];
        double colsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) colsum += p.coords[i * k + j];
        CHECK(std::abs(colsum) < 1e-8);
    }
    CHECK(total <= 1.0 + 1e-12);

    CHECK_THROWS_AS(pca_project(x, 0), std::invalid_argument);
    Tensor two = rand_tensor(Shape{2, 4}, rng);
    CHECK_THROWS_AS(pca_project(two, 3), std::invalid_argument);
}

TEST_CASE("boundary distance matches the analytic margin of a linear model") {
    Model m = margin_model();
    Dataset ds = margin_points();
    // Margins along the unit normal (0.8, 0.6): 0.15 at (0.5, 0.5) and 0.35
    // at (0.75, 0.5).
    AttackSpec spec;
    spec.kind = AttackSpec::Kind::Deepfool;
    spec.norm = Norm::L2;
    spec.steps = 50;
    spec.epsilon = 0.25;
    spec.overshoot = 0.5;  // both budget and overshoot reset by the measurement

    BoundaryReport rep = boundary_distance(m, ds, spec);
    CHECK(rep.measured == 2);
    CHECK(rep.exhausted == 0);
    REQUIRE(rep.records.size() == 2);
    CHECK(rep.records[0].index == 0);
    CHECK(rep.records[1].index == 1);
    CHECK(rep.records[0].l2 == doctest::Approx(0.15).epsilon(1e-4));
    CHECK(rep.records[1].l2 == doctest::Approx(0.35).epsilon(1e-4));
    CHECK(rep.records[0].steps == 1);
    CHECK(rep.records[1].steps == 1);
    CHECK(rep.mean_l2 == doctest::Approx(0.25).epsilon(1e-4));
    CHECK(rep.mean_linf == doctest::Approx(0.20).epsilon(1e-4));
    CHECK(rep.mean_steps == doctest::Approx(1.0));

    auto j = nlohmann::json::parse(to_json(rep));
    CHECK(j["measured"].get<std::size_t>() == 2);
    CHECK(j["records"].size() == 2);
    CHECK(j["mean_l2"].get<double>() == rep.mean_l2);
}

TEST_CASE("boundary distance reports unreachable boundaries as exhausted") {
    Model m = make_linear(2, 2, 0);
    m.params.at("L0.w") = Tensor::zeros(Shape{2, 2});
    m.params.at("L0.b") = Tensor::zeros(Shape{2});
    Dataset ds = margin_points();
    AttackSpec spec;
    spec.kind = AttackSpec::Kind::Deepfool;
    spec.norm = Norm::L2;
    spec.steps = 8;

    BoundaryReport rep = boundary_distance(m, ds, spec);
    CHECK(rep.measured == 0);
    CHECK(rep.exhausted == 2);
    CHECK(rep.records.empty());
    CHECK(rep.mean_l2 == 0.0);

    spec.kind = AttackSpec::Kind::Pgd;
    CHECK_THROWS_AS(boundary_distance(m, ds, spec), std::invalid_argument);
}

TEST_CASE("svcca under attack compares clean and perturbed representations") {
    Dataset ds = make_blobs(12, 2, 2, 4.0, 9);
    Model m = make_mlp(2, {8, 4}, 2, 3);
    AttackSpec spec;
    spec.kind = AttackSpec::Kind::Fgsm;
    spec.norm = Norm::Linf;
    spec.epsilon = 0.01;
    spec.steps = 1;

    double v = svcca_under_attack(m, ds, spec);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v > 0.5);  // a tiny perturbation barely moves the representation
    CHECK(svcca_under_attack(m, ds, spec) == v);
}

TEST_CASE("pca csv export lays out both populations with fitted coordinates") {
    std::mt19937_64 rng(23);
    const std::size_t n = 4, d = 3, k = 2;
    Tensor clean = rand_tensor(Shape{n, d}, rng);
    Tensor adv = rand_tensor(Shape{n, d}, rng);
    std::vector<int> labels{0, 1, 0, 1};
    auto path = temp_dir() / "pca-export.csv";
    write_pca_csv(clean, adv, labels, path.string(), k);

    std::ifstream in(path);
    REQUIRE(static_cast<bool>(in));
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample,label,population,coord_1,coord_2");
    std::vector<std::string> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(line);
    REQUIRE(rows.size() == 2 * n);

    Tensor both(Shape{2 * n, d});
    std::copy(clean.data(), clean.data() + n * d, both.data());
    std::copy(adv.data(), adv.data() + n * d, both.data() + n * d);
    PcaResult p = pca_project(both, k);

    for (std::size_t i = 0; i < 2 * n; ++i) {
        std::istringstream ss(rows[i]);
        std::string sample, label, pop, c1, c2;
        std::getline(ss, sample, ',');
        std::getline(ss, label, ',');
        std::getline(ss, pop, ',');
        std::getline(ss, c1, ',');
        std::getline(ss, c2, ',');
        std::size_t logical = i % n;
        CHECK(sample == std::to_string(logical));
        CHECK(label == std::to_string(labels[logical]));
        CHECK(pop == (i < n ? "clean" : "adversarial"));
        CHECK(std::stod(c1) == doctest::Approx(p.coords[i * k + 0]).epsilon(1e-6));
        CHECK(std::stod(c2) == doctest::Approx(p.coords[i * k + 1]).epsilon(1e-6));
    }

    Tensor wrong = rand_tensor(Shape{n + 1, d}, rng);
    CHECK_THROWS_AS(write_pca_csv(clean, wrong, labels, path.string(), k), std::invalid_argument);
    CHECK_THROWS_AS(write_pca_csv(clean, adv, {0, 1}, path.string(), k), std::invalid_argument);
}
