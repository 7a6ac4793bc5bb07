#pragma once

// Random computation-graph fixtures shared by the gradient tests and the
// acceptance gate. Every family funnels into a softmax cross-entropy loss so
// reverse-mode results can be checked against central finite differences.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "advlab/graph.hpp"
#include "advlab/tensor.hpp"

namespace advlab::testsupport {

inline Tensor rand_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Tensor t(shape);
    for (double& v : t.values()) v = u(rng);
    return t;
}

inline Tensor rand_labels(std::size_t n, int classes, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, classes - 1);
    Tensor t(Shape{n});
    for (double& v : t.values()) v = u(rng);
    return t;
}

struct GraphCase {
    ComputeGraph graph;
    NodeId loss = -1;
    std::vector<NodeId> wrt;       // bound inputs the loss is differentiated against
    std::vector<NodeId> relu_pre;  // nodes feeding a relu; FD needs them clear of the kink
};

// family = seed % 4: dense chain, conv chain, self-matmul reuse, two-stage conv.
inline GraphCase make_graph_case(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    GraphCase c;
    ComputeGraph& g = c.graph;
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    switch (seed % 4) {
        case 0: {  // dense: x -> matmul -> bias -> relu -> matmul -> bias -> xent
            std::size_t n = static_cast<std::size_t>(pick(2, 4));
            std::size_t d0 = static_cast<std::size_t>(pick(2, 6));
            std::size_t d1 = static_cast<std::size_t>(pick(2, 5));
            int classes = pick(2, 4);
            NodeId x = g.input({n, d0});
            NodeId w0 = g.input({d0, d1});
            NodeId b0 = g.input({d1});
            NodeId pre = g.bias_add(g.matmul(x, w0), b0);
            NodeId h = g.relu(pre);
            NodeId w1 = g.input({d1, static_cast<std::size_t>(classes)});
            NodeId b1 = g.input({static_cast<std::size_t>(classes)});
            NodeId logits = g.bias_add(g.matmul(h, w1), b1);
            NodeId labels = g.input({n});
            c.loss = g.softmax_xent(logits, labels);
            c.wrt = {x, w0, b0, w1, b1};
            c.relu_pre = {pre};
            for (NodeId id : c.wrt) g.bind(id, rand_tensor(g.node_shape(id), rng));
            g.bind(labels, rand_labels(n, classes, rng));
            break;
        }
        case 1: {  // conv -> bias -> relu -> pool -> flatten -> dense -> xent
            std::size_t n = static_cast<std::size_t>(pick(1, 2));
            std::size_t cin = static_cast<std::size_t>(pick(1, 2));
            std::size_t hw = 6;
            std::size_t cout = static_cast<std::size_t>(pick(1, 2));
            int stride = pick(1, 2);
            int pad = pick(0, 1);
            int classes = pick(2, 3);
            NodeId x = g.input({n, cin, hw, hw});
            NodeId k = g.input({cout, cin, 3, 3});
            NodeId bc = g.input({cout});
            NodeId conv = g.bias_add(g.conv2d(x, k, stride, pad), bc);
            NodeId pre = conv;
            NodeId act = g.relu(pre);
            const Shape& s = g.node_shape(act);
            NodeId pooled = (s[2] % 2 == 0 && s[3] % 2 == 0) ? g.avg_pool2(act) : act;
            NodeId flat = g.flatten(pooled);
            std::size_t fdim = g.node_shape(flat)[1];
            NodeId w = g.input({fdim, static_cast<std::size_t>(classes)});
            NodeId b = g.input({static_cast<std::size_t>(classes)});
            NodeId logits = g.bias_add(g.matmul(flat, w), b);
            NodeId labels = g.input({n});
            c.loss = g.softmax_xent(logits, labels);
            c.wrt = {x, k, bc, w, b};
            c.relu_pre = {pre};
            for (NodeId id : c.wrt) g.bind(id, rand_tensor(g.node_shape(id), rng));
            g.bind(labels, rand_labels(n, classes, rng));
            break;
        }
        case 2: {  // one node consumed twice: logits = relu(x) @ relu(x)
            std::size_t d = static_cast<std::size_t>(pick(3, 5));
            NodeId x = g.input({d, d});
            NodeId r = g.relu(x);
            NodeId m = g.matmul(r, r);
            NodeId b = g.input({d});
            NodeId logits = g.bias_add(m, b);
            NodeId labels = g.input({d});
            c.loss = g.softmax_xent(logits, labels);
            c.wrt = {x, b};
            c.relu_pre = {x};
            for (NodeId id : c.wrt) g.bind(id, rand_tensor(g.node_shape(id), rng));
            g.bind(labels, rand_labels(d, static_cast<int>(d), rng));
            break;
        }
        default: {  // two conv stages
            std::size_t n = 1;
            std::size_t c1 = static_cast<std::size_t>(pick(1, 2));
            std::size_t c2 = static_cast<std::size_t>(pick(1, 2));
            int classes = pick(2, 3);
            NodeId x = g.input({n, 1, 6, 6});
            NodeId k1 = g.input({c1, 1, 3, 3});
            NodeId pre1 = g.conv2d(x, k1, 1, 1);  // 6x6
            NodeId a1 = g.relu(pre1);
            NodeId p1 = g.avg_pool2(a1);  // 3x3
            NodeId k2 = g.input({c2, c1, 3, 3});
            NodeId pre2 = g.conv2d(p1, k2, 1, 1);  // 3x3
            NodeId a2 = g.relu(pre2);
            NodeId flat = g.flatten(a2);
            std::size_t fdim = g.node_shape(flat)[1];
            NodeId w = g.input({fdim, static_cast<std::size_t>(classes)});
            NodeId b = g.input({static_cast<std::size_t>(classes)});
            NodeId logits = g.bias_add(g.matmul(flat, w), b);
            NodeId labels = g.input({n});
            c.loss = g.softmax_xent(logits, labels);
            c.wrt = {x, k1, k2, w, b};
            c.relu_pre = {pre1, pre2};
            for (NodeId id : c.wrt) g.bind(id, rand_tensor(g.node_shape(id), rng));
            g.bind(labels, rand_labels(n, classes, rng));
            break;
        }
    }
    return c;
}

// True when every pre-relu activation sits clear of the kink, so central
// differences stay on one side of it.
inline bool kink_clear(GraphCase& c, double margin = 1e-3) {
    c.graph.forward(c.loss);
    for (NodeId id : c.relu_pre) {
        const Tensor& v = c.graph.value(id);
        for (std::size_t i = 0; i < v.numel(); ++i)
            if (std::abs(v[i]) < margin) return false;
    }
    return true;
}

inline double rel_err(const Tensor& got, const Tensor& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.numel(); ++i) {
        double d = got[i] - want[i];
        num += d * d;
        den += want[i] * want[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

// Worst gradient disagreement across all wrt tensors of one random case.
inline double case_grad_err(GraphCase& c, double h = 1e-5) {
    GradMap exact = c.graph.grad(c.loss, c.wrt);
    GradMap fd = c.graph.finite_diff_grad(c.loss, c.wrt, h);
    double worst = 0.0;
    for (NodeId id : c.wrt) worst = std::max(worst, rel_err(exact.at(id), fd.at(id)));
    return worst;
}

}  // namespace advlab::testsupport
