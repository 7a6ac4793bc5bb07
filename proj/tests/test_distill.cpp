#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/distill.hpp"
#include "advlab/model.hpp"
#include "advlab/rng.hpp"
#include "doctest.h"

using namespace advlab;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

// Every pre-activation stays positive on [0,1] inputs, so the representation
// is exactly the affine map z*W + 1 and the objective is a convex quadratic.
Model linear_rep_model() {
    Model m = make_mlp(3, {4}, 2, 0);
    m.params.at("L0.w") = Tensor({3, 4}, {0.5, 0.0, 0.0, 0.25,
                                          0.0, 0.5, 0.0, 0.25,
                                          0.0, 0.0, 0.5, 0.25});
    m.params.at("L0.b") = Tensor::full({4}, 1.0);
    return m;
}

// Representation overflows for any input row that differs from its target.
Model overflow_rep_model() {
    Model m = make_mlp(2, {3}, 2, 0);
    m.params.at("L0.w") = Tensor::full({2, 3}, 1e160);
    m.params.at("L0.b") = Tensor::zeros({3});
    return m;
}

double rep_sqdist(const Model& m, const Tensor& a, const Tensor& b) {
    Tensor ra = m.representation(a);
    Tensor rb = m.representation(b);
    double s = 0;
    for (std::size_t i = 0; i < ra.numel(); ++i) {
        double d = ra[i] - rb[i];
        s += d * d;
    }
    return s;
}

std::uint64_t row_hash(const Tensor& images, std::size_t i, std::size_t m) {
    return fnv1a64(reinterpret_cast<const unsigned char*>(images.data() + i * m), m * sizeof(double));
}

}  // namespace

TEST_CASE("distillation drives a convex objective to its minimum") {
    Model m = linear_rep_model();
    Tensor target({1, 3}, {0.6, 0.3, 0.5});
    Tensor init({1, 3}, {0.1, 0.9, 0.2});

    DistillConfig cfg;
    cfg.steps = 80;
    cfg.lr = 0.5;
    DistillResult r = distill_image(target, m, cfg, 0, &init);

    REQUIRE(r.curve.size() == 81);
    CHECK(r.curve[0] == doctest::Approx(rep_sqdist(m, init, target)).epsilon(1e-12));
    for (std::size_t i = 1; i < r.curve.size(); ++i) CHECK(r.curve[i] <= r.curve[i - 1] + 1e-15);
    CHECK(r.curve.back() < 1e-9);
    // full-rank affine representation: the minimizer is the target itself
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.image[j] == doctest::Approx(target[j]).epsilon(1e-4));
    for (double v : r.image.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("zero learning rate freezes the iterate") {
    Model m = linear_rep_model();
    Tensor target({1, 3}, {0.5, 0.5, 0.5});
    Tensor init({1, 3}, {0.2, 0.8, 0.4});
    DistillConfig cfg;
    cfg.steps = 10;
    cfg.lr = 0.0;
    DistillResult r = distill_image(target, m, cfg, 0, &init);
    CHECK(bit_equal(r.image, m.conform(init)));
    REQUIRE(r.curve.size() == 11);
    for (double v : r.curve) CHECK(v == r.curve[0]);
    CHECK(r.curve[0] > 0.0);
}

TEST_CASE("target init starts at the optimum and stays there") {
    Model m = linear_rep_model();
    Tensor target({1, 3}, {0.3, 0.6, 0.9});
    DistillConfig cfg;
    cfg.steps = 5;
    cfg.lr = 0.5;
    cfg.init = DistillConfig::Init::Target;
    DistillResult r = distill_image(target, m, cfg);
    CHECK(bit_equal(r.image, m.conform(target)));
    for (double v : r.curve) CHECK(v == 0.0);
}

TEST_CASE("distill_image argument validation") {
    Model m = linear_rep_model();
    Tensor target({1, 3}, {0.5, 0.5, 0.5});
    DistillConfig cfg;

    DistillConfig bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(distill_image(target, m, bad), std::invalid_argument);

    bad = cfg;
    bad.lr = -0.1;
    CHECK_THROWS_AS(distill_image(target, m, bad), std::invalid_argument);

    Tensor two({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK_THROWS_AS(distill_image(two, m, cfg), std::invalid_argument);

    DistillConfig other = cfg;
    other.init = DistillConfig::Init::OtherImage;
    CHECK_THROWS_AS(distill_image(target, m, other), std::invalid_argument);

    Tensor outside({1, 3}, {0.5, 1.5, 0.5});
    CHECK_THROWS_AS(distill_image(target, m, cfg, 0, &outside), std::invalid_argument);

    Model no_tap = make_linear(3, 2, 0);
    CHECK_THROWS_AS(distill_image(target, no_tap, cfg), std::invalid_argument);
}

TEST_CASE("noise init is seed-deterministic") {
    Model m = linear_rep_model();
    Tensor target({1, 3}, {0.4, 0.4, 0.4});
    DistillConfig cfg;
    cfg.steps = 3;
    cfg.lr = 0.1;
    cfg.seed = 7;
    DistillResult a = distill_image(target, m, cfg, 2);
    DistillResult b = distill_image(target, m, cfg, 2);
    CHECK(bit_equal(a.image, b.image));
    CHECK(a.curve == b.curve);
    DistillResult c = distill_image(target, m, cfg, 3);  // same seed, other sample index
    CHECK_FALSE(bit_equal(a.image, c.image));
}

TEST_CASE("a distilled corpus keeps labels and metadata") {
    Model m = linear_rep_model();
    Dataset ds = make_blobs(8, 2, 3, 4.0, 64);
    DistillConfig cfg;
    cfg.steps = 40;
    cfg.lr = 0.5;
    cfg.seed = 5;

    RobustDataset rd = build_robust_dataset(ds, m, cfg);
    CHECK(rd.data.labels == ds.labels);
    CHECK(rd.data.num_classes == ds.num_classes);
    CHECK(rd.data.images.shape() == ds.images.shape());
    CHECK(rd.data.provenance == ds.provenance + "+distilled:seed=5");
    REQUIRE(rd.final_distance.size() == ds.size());
    REQUIRE(rd.failed.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(rd.failed[i] == 0);
        CHECK(rd.final_distance[i] < 1e-6);
    }
    rd.data.validate();

    RobustDataset again = build_robust_dataset(ds, m, cfg);
    CHECK(bit_equal(again.data.images, rd.data.images));

    DistillConfig shifted = cfg;
    shifted.seed = 6;
    RobustDataset moved = build_robust_dataset(ds, m, shifted);
    CHECK_FALSE(bit_equal(moved.data.images, rd.data.images));
}

TEST_CASE("target-init distillation records the init hashes of the originals") {
    Model m = linear_rep_model();
    Dataset ds = make_blobs(5, 2, 3, 4.0, 65);
    DistillConfig cfg;
    cfg.steps = 2;
    cfg.lr = 0.1;
    cfg.init = DistillConfig::Init::Target;
    RobustDataset rd = build_robust_dataset(ds, m, cfg);
    std::size_t px = ds.pixels_per_image();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(rd.init_hash[i] == row_hash(ds.images, i, px));
    }
}

TEST_CASE("other-image init never starts from the sample itself") {
    Model m = linear_rep_model();
    Dataset ds = make_blobs(6, 2, 3, 4.0, 66);
    DistillConfig cfg;
    cfg.steps = 1;
    cfg.lr = 0.0;  // freeze, so outputs equal inits
    cfg.init = DistillConfig::Init::OtherImage;
    cfg.seed = 9;
    RobustDataset rd = build_robust_dataset(ds, m, cfg);
    std::size_t px = ds.pixels_per_image();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(rd.init_hash[i] != row_hash(ds.images, i, px));
        bool from_corpus = false;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (j != i && rd.init_hash[i] == row_hash(ds.images, j, px)) from_corpus = true;
        }
        CHECK(from_corpus);
        CHECK(row_hash(rd.data.images, i, px) == rd.init_hash[i]);
    }
}

TEST_CASE("numeric failures are isolated per image and fall back to the init") {
    Model m = overflow_rep_model();
    Dataset ds;
    // two identical images and one distinct, so other-image inits sometimes
    // match the target (finite objective) and sometimes do not (overflow)
    ds.images = Tensor(Shape{3, 1, 1, 2}, {0.25, 0.75, 0.25, 0.75, 0.8, 0.2});
    ds.labels = {0, 0, 1};
    ds.num_classes = 2;
    DistillConfig cfg;
    cfg.steps = 4;
    cfg.lr = 0.1;
    cfg.init = DistillConfig::Init::OtherImage;
    cfg.seed = 13;

    RobustDataset rd = build_robust_dataset(ds, m, cfg);
    std::size_t px = 2;
    bool any_failed = false;
    for (std::size_t i = 0; i < 3; ++i) {
        bool started_at_target = rd.init_hash[i] == row_hash(ds.images, i, px);
        CHECK(rd.failed[i] == (started_at_target ? 0 : 1));
        // failed rows fall back to their init; clean rows never left the target
        CHECK(row_hash(rd.data.images, i, px) == rd.init_hash[i]);
        if (rd.failed[i]) any_failed = true;
    }
    CHECK(any_failed);  // the distinct image can never draw itself
    rd.data.validate();
}

TEST_CASE("robust pipeline retrains a fresh model on the distilled corpus") {
    Dataset ds = make_blobs(30, 2, 2, 4.0, 70);
    Model adv = make_mlp(2, {6}, 2, 3);

    TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.lr = 0.1;
    tc.seed = 21;
    AttackSpec inner;
    inner.kind = AttackSpec::Kind::Pgd;
    inner.epsilon = 0.05;
    TrainConfig with_inner = tc;
    with_inner.inner_attack = inner;

    DistillConfig dc;
    dc.steps = 5;
    dc.lr = 0.1;
    dc.init = DistillConfig::Init::Target;

    RobustPipelineResult a = robust_training_pipeline(ds, adv, tc, dc);
    CHECK(a.model.arch_id == adv.arch_id);
    CHECK(a.training.loss_curve.size() == 8);
    // target init on a sane model: the distilled corpus is the corpus
    CHECK(bit_equal(a.dataset.data.images, ds.images));

    // the inner attack is stripped before the retraining step
    RobustPipelineResult b = robust_training_pipeline(ds, adv, with_inner, dc);
    for (const auto& [name, t] : a.model.params) {
        CHECK(bit_equal(t, b.model.params.at(name)));
    }

    // deterministic end to end
    RobustPipelineResult c = robust_training_pipeline(ds, adv, tc, dc);
    for (const auto& [name, t] : a.model.params) {
        CHECK(bit_equal(t, c.model.params.at(name)));
    }
}
