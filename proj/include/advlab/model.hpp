#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/graph.hpp"
#include "advlab/optim.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

struct LayerSpec {
    enum class Kind { Dense, Conv, Relu, Pool, Flatten };
    Kind kind;
    std::size_t in = 0, out = 0;              // dense
    std::size_t in_ch = 0, out_ch = 0, k = 0;  // conv
    int stride = 1, pad = 0;

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, int stride = 1, int pad = 0);
    static LayerSpec relu();
    static LayerSpec pool();
    static LayerSpec flatten();
};

// A model's graph instantiated for one batch size, with the nodes of interest.
struct GraphBundle {
    ComputeGraph graph;
    NodeId input = -1;
    NodeId labels = -1;
    NodeId logits = -1;
    NodeId rep = -1;
    NodeId loss = -1;
    std::vector<std::pair<std::string, NodeId>> param_nodes;

    void bind_params(const ParamMap& params);
};

class Model {
public:
    std::vector<LayerSpec> layers;
    ParamMap params;
    int representation_tap = -1;  // layer whose output is the representation
    int num_classes = 0;
    Shape input_shape;  // per-image shape, no batch dim
    std::string arch_id;

    GraphBundle bind_graph(std::size_t batch) const;
    // Accepts [N, ...input_shape] or any batch whose per-sample numel matches.
    Tensor conform(const Tensor& batch) const;

    Tensor forward_logits(const Tensor& batch) const;
    Tensor representation(const Tensor& batch) const;
    std::vector<int> predict(const Tensor& batch) const;
    double accuracy(const Dataset& ds) const;

    std::size_t input_numel() const { return shape_numel(input_shape); }
    std::size_t rep_dim() const;
    void validate() const;
};

// 784 -> 256 -> ReLU -> 128 -> ReLU (tap) -> 10.
Model mlp_small(std::uint64_t seed);
// 1x28x28 -> conv8@3x3 -> ReLU -> pool -> conv16@3x3 -> ReLU -> pool
//  -> flatten -> dense 128 -> ReLU (tap) -> dense 10.
Model conv_small(std::uint64_t seed);
// Generic MLP; tap at the last hidden ReLU.
Model make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, int classes, std::uint64_t seed);
// Single affine layer; tap at the input itself is meaningless, so tap = -1
// (representation() rejects). Used for analytic-margin oracles.
Model make_linear(std::size_t input_dim, int classes, std::uint64_t seed);

Model model_by_id(const std::string& arch_id, std::size_t input_dim, int classes, std::uint64_t seed);

// Same architecture, fresh parameter initialization.
Model reinit_like(const Model& like, std::uint64_t seed);

}  // namespace advlab
