#include <cmath>
#include <cstring>
#include <stdexcept>

#include "advlab/dataset.hpp"
#include "advlab/model.hpp"
#include "doctest.h"

using namespace advlab;

TEST_CASE("mlp shapes, taps, and forward dimensions") {
    Model m = make_mlp(6, {8, 4}, 3, 1);
    CHECK(m.input_numel() == 6);
    CHECK(m.num_classes == 3);
    CHECK(m.rep_dim() == 4);

    Tensor x = Tensor::full({2, 6}, 0.5);
    Tensor logits = m.forward_logits(x);
    CHECK(logits.shape() == Shape{2, 3});
    Tensor rep = m.representation(x);
    CHECK(rep.shape() == Shape{2, 4});
}

TEST_CASE("conv-small accepts flat and image batches alike") {
    Model m = conv_small(3);
    CHECK(m.input_shape == Shape{1, 28, 28});
    Tensor flat = Tensor::full({2, 784}, 0.25);
    Tensor img = Tensor::full({2, 1, 28, 28}, 0.25);
    Tensor a = m.forward_logits(flat);
    Tensor b = m.forward_logits(img);
    CHECK(a.shape() == Shape{2, 10});
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0);
    CHECK(m.rep_dim() == 128);

    CHECK_THROWS_AS(m.conform(Tensor::full({2, 100}, 0.1)), std::invalid_argument);
}

TEST_CASE("linear model has no representation tap") {
    Model m = make_linear(4, 2, 0);
    CHECK(m.representation_tap == -1);
    CHECK_THROWS_AS(m.representation(Tensor::full({1, 4}, 0.0)), std::invalid_argument);
}

TEST_CASE("predict breaks logit ties toward the lowest class") {
    Model m = make_linear(2, 3, 0);
    // zero weights and biases make every logit equal
    for (auto& [name, t] : m.params) {
        for (double& v : t.values()) v = 0.0;
    }
    auto pred = m.predict(Tensor::full({4, 2}, 0.3));
    for (int p : pred) CHECK(p == 0);
}

TEST_CASE("accuracy averages exact matches") {
    Model m = make_linear(2, 2, 0);
    m.params.at("L0.w") = Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
    m.params.at("L0.b") = Tensor({2}, {0.0, 0.0});

    Dataset ds;
    ds.images = Tensor(Shape{4, 1, 1, 2}, {
        0.9, 0.1,   // argmax 0
        0.2, 0.8,   // argmax 1
        0.7, 0.3,   // argmax 0
        0.1, 0.9,   // argmax 1
    });
    ds.labels = {0, 1, 1, 1};  // third one is wrong
    ds.num_classes = 2;
    CHECK(m.accuracy(ds) == doctest::Approx(0.75));
}

TEST_CASE("model ids build the advertised architectures") {
    Model a = model_by_id("mlp-small", 784, 10, 7);
    CHECK(a.arch_id == "mlp-small");
    CHECK(a.rep_dim() == 128);

    Model b = model_by_id("conv-small", 784, 10, 7);
    CHECK(b.arch_id == "conv-small");

    Model c = model_by_id("linear", 10, 4, 7);
    CHECK(c.num_classes == 4);
    CHECK(c.input_numel() == 10);

    Model d = model_by_id("mlp", 20, 5, 7);
    CHECK(d.rep_dim() == 32);

    CHECK_THROWS_AS(model_by_id("resnet-50", 784, 10, 7), std::invalid_argument);
}

TEST_CASE("initialization is seed-deterministic and reinit preserves structure") {
    Model a = mlp_small(11);
    Model b = mlp_small(11);
    Model c = mlp_small(12);

    for (const auto& [name, t] : a.params) {
        const Tensor& u = b.params.at(name);
        CHECK(std::memcmp(t.data(), u.data(), t.numel() * sizeof(double)) == 0);
    }
    bool any_diff = false;
    for (const auto& [name, t] : a.params) {
        const Tensor& u = c.params.at(name);
        if (std::memcmp(t.data(), u.data(), t.numel() * sizeof(double)) != 0) any_diff = true;
    }
    CHECK(any_diff);

    Model r = reinit_like(a, 99);
    CHECK(r.arch_id == a.arch_id);
    CHECK(r.num_classes == a.num_classes);
    REQUIRE(r.params.size() == a.params.size());
    bool reinit_diff = false;
    for (const auto& [name, t] : a.params) {
        REQUIRE(r.params.count(name) == 1);
        CHECK(r.params.at(name).shape() == t.shape());
        if (std::memcmp(r.params.at(name).data(), t.data(), t.numel() * sizeof(double)) != 0) reinit_diff = true;
    }
    CHECK(reinit_diff);

    Model r2 = reinit_like(a, 99);
    for (const auto& [name, t] : r.params) {
        CHECK(std::memcmp(t.data(), r2.params.at(name).data(), t.numel() * sizeof(double)) == 0);
    }
}

TEST_CASE("graph bundle exposes bound trainable nodes") {
    Model m = make_mlp(4, {5}, 2, 3);
    GraphBundle gb = m.bind_graph(3);
    CHECK(gb.input >= 0);
    CHECK(gb.logits >= 0);
    CHECK(gb.loss >= 0);
    CHECK(gb.rep >= 0);
    CHECK(gb.param_nodes.size() == m.params.size());

    gb.bind_params(m.params);
    gb.graph.bind(gb.input, Tensor::full({3, 4}, 0.1));
    gb.graph.bind(gb.labels, Tensor({3}, {0.0, 1.0, 0.0}));
    const Tensor& loss = gb.graph.forward(gb.loss);
    CHECK(loss.numel() == 1);
    CHECK(std::isfinite(loss[0]));
}
