#pragma once

#include <map>
#include <span>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

using NodeId = int;
using GradMap = std::map<NodeId, Tensor>;

enum class OpKind { Input, MatMul, BiasAdd, Conv2d, Relu, AvgPool2, Flatten, SoftmaxXent };

/// Number of worker threads used inside the dense kernels (matmul, conv).
/// Results are identical for any setting; 1 disables threading.
void set_compute_jobs(int jobs);
int compute_jobs();

/// Static computation graph over a closed op set. Nodes are appended in
/// topological order; shapes are checked at construction time. forward()
/// evaluates the ancestors of a node and caches every intermediate value,
/// which grad()/vjp() then consume in reverse order.
class ComputeGraph {
public:
    NodeId input(Shape shape);
    NodeId matmul(NodeId a, NodeId b);
    NodeId bias_add(NodeId x, NodeId bias);
    NodeId conv2d(NodeId x, NodeId kernel, int stride, int pad);
    NodeId relu(NodeId x);
    NodeId avg_pool2(NodeId x);
    NodeId flatten(NodeId x);
    /// Mean softmax cross-entropy over the batch. `labels` is an input node
    /// of shape [N] holding class indices; no gradient flows into it.
    NodeId softmax_xent(NodeId logits, NodeId labels);

    std::size_t node_count() const { return nodes_.size(); }
    OpKind kind(NodeId id) const { return node(id).kind; }
    const Shape& node_shape(NodeId id) const { return node(id).out_shape; }

    void bind(NodeId input_node, Tensor value);
    const Tensor& forward(NodeId out);
    /// Cached output of the last forward() that covered this node.
    const Tensor& value(NodeId id) const;

    /// Reverse-mode gradients of a scalar loss node w.r.t. the given nodes.
    GradMap grad(NodeId loss, std::span<const NodeId> wrt);
    /// Vector-Jacobian product: backpropagates `seed` from `out`.
    GradMap vjp(NodeId out, const Tensor& seed, std::span<const NodeId> wrt);
    /// Central-difference estimate of grad(); wrt nodes must be inputs.
    GradMap finite_diff_grad(NodeId loss, std::span<const NodeId> wrt, double h);

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> in;
        Shape out_shape;
        int stride = 1;
        int pad = 0;
        Tensor value;
        bool computed = false;
        bool bound = false;
    };

    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    NodeId push(Node n);
    void check_exists(NodeId id) const;
    void eval_node(NodeId id);
    void backprop_node(NodeId id, const Tensor& out_grad, std::vector<Tensor>& grads,
                       std::vector<char>& has_grad);

    std::vector<Node> nodes_;
};

/// C[M,N] = A[M,K] * B[K,N], with optional transposes of the logical operands.
void matmul_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                bool transpose_a = false, bool transpose_b = false, bool accumulate = false);

}  // namespace advlab
