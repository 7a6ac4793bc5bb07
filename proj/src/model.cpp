#include "advlab/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "advlab/rng.hpp"

namespace advlab {

namespace {

Shape layer_output_shape(const LayerSpec& l, const Shape& in, std::size_t layer_idx) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("layer " + std::to_string(layer_idx) + ": " + what + " (input " +
                                    shape_str(in) + ")");
    };
    switch (l.kind) {
        case LayerSpec::Kind::Dense:
            if (in.size() != 1 || in[0] != l.in) fail("dense expects flat width " + std::to_string(l.in));
            return {l.out};
        case LayerSpec::Kind::Conv: {
            if (in.size() != 3 || in[0] != l.in_ch) fail("conv expects [C,H,W] with C=" + std::to_string(l.in_ch));
            long oh = (static_cast<long>(in[1]) + 2 * l.pad - static_cast<long>(l.k)) / l.stride + 1;
            long ow = (static_cast<long>(in[2]) + 2 * l.pad - static_cast<long>(l.k)) / l.stride + 1;
            if (oh < 1 || ow < 1) fail("conv kernel exceeds padded input");
            return {l.out_ch, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
        }
        case LayerSpec::Kind::Relu:
            return in;
        case LayerSpec::Kind::Pool:
            if (in.size() != 3 || in[1] % 2 || in[2] % 2) fail("pool expects [C,H,W] with even H,W");
            return {in[0], in[1] / 2, in[2] / 2};
        case LayerSpec::Kind::Flatten:
            return {shape_numel(in)};
    }
    fail("unknown layer kind");
    return {};
}

Tensor he_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
    return t;
}

void init_params(Model& m, std::uint64_t seed) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        std::string prefix = "L" + std::to_string(i);
        if (l.kind == LayerSpec::Kind::Dense) {
            auto rng = substream(seed, "init." + prefix);
            m.params[prefix + ".w"] = he_init({l.in, l.out}, l.in, rng);
            m.params[prefix + ".b"] = Tensor::zeros({l.out});
        } else if (l.kind == LayerSpec::Kind::Conv) {
            auto rng = substream(seed, "init." + prefix);
            std::size_t fan_in = l.in_ch * l.k * l.k;
            m.params[prefix + ".k"] = he_init({l.out_ch, l.in_ch, l.k, l.k}, fan_in, rng);
            m.params[prefix + ".b"] = Tensor::zeros({l.out_ch});
        }
    }
}

}  // namespace

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec l;
    l.kind = Kind::Dense;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec LayerSpec::conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, int stride, int pad) {
    LayerSpec l;
    l.kind = Kind::Conv;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.k = k;
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{Kind::Relu}; }
LayerSpec LayerSpec::pool() { return LayerSpec{Kind::Pool}; }
LayerSpec LayerSpec::flatten() { return LayerSpec{Kind::Flatten}; }

void GraphBundle::bind_params(const ParamMap& params) {
    for (const auto& [name, node] : param_nodes) {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("bind_params: missing parameter " + name);
        graph.bind(node, it->second);
    }
}

void Model::validate() const {
    if (layers.empty()) throw std::invalid_argument("model: no layers");
    if (num_classes < 2) throw std::invalid_argument("model: needs at least two classes");
    Shape s = input_shape;
    int last_dense = -1;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        s = layer_output_shape(layers[i], s, i);
        if (layers[i].kind == LayerSpec::Kind::Dense) last_dense = static_cast<int>(i);
    }
    if (s.size() != 1 || s[0] != static_cast<std::size_t>(num_classes)) {
        throw std::invalid_argument("model: final shape " + shape_str(s) + " != class count");
    }
    if (last_dense < 0) throw std::invalid_argument("model: no output dense layer");
    if (representation_tap >= last_dense) {
        throw std::invalid_argument("model: representation tap must precede the final dense layer");
    }
}

GraphBundle Model::bind_graph(std::size_t batch) const {
    if (batch == 0) throw std::invalid_argument("bind_graph: empty batch");
    GraphBundle b;
    Shape in_shape;
    in_shape.push_back(batch);
    for (std::size_t d : input_shape) in_shape.push_back(d);
    b.input = b.graph.input(in_shape);
    NodeId cur = b.input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        std::string prefix = "L" + std::to_string(i);
        switch (l.kind) {
            case LayerSpec::Kind::Dense: {
                NodeId w = b.graph.input({l.in, l.out});
                NodeId bias = b.graph.input({l.out});
                b.param_nodes.emplace_back(prefix + ".w", w);
                b.param_nodes.emplace_back(prefix + ".b", bias);
                cur = b.graph.bias_add(b.graph.matmul(cur, w), bias);
                break;
            }
            case LayerSpec::Kind::Conv: {
                NodeId k = b.graph.input({l.out_ch, l.in_ch, l.k, l.k});
                NodeId bias = b.graph.input({l.out_ch});
                b.param_nodes.emplace_back(prefix + ".k", k);
                b.param_nodes.emplace_back(prefix + ".b", bias);
                cur = b.graph.bias_add(b.graph.conv2d(cur, k, l.stride, l.pad), bias);
                break;
            }
            case LayerSpec::Kind::Relu:
                cur = b.graph.relu(cur);
                break;
            case LayerSpec::Kind::Pool:
                cur = b.graph.avg_pool2(cur);
                break;
            case LayerSpec::Kind::Flatten:
                cur = b.graph.flatten(cur);
                break;
        }
        if (static_cast<int>(i) == representation_tap) b.rep = cur;
    }
    b.logits = cur;
    b.labels = b.graph.input({batch});
    b.loss = b.graph.softmax_xent(b.logits, b.labels);
    b.bind_params(params);
    return b;
}

Tensor Model::conform(const Tensor& batch) const {
    if (batch.rank() == 0 || batch.dim(0) == 0) throw std::invalid_argument("conform: empty batch");
    std::size_t n = batch.dim(0);
    std::size_t per = batch.numel() / n;
    if (per != input_numel()) {
        throw std::invalid_argument("conform: batch sample size " + std::to_string(per) + " != model input " +
                                    std::to_string(input_numel()));
    }
    Shape want;
    want.push_back(n);
    for (std::size_t d : input_shape) want.push_back(d);
    if (batch.shape() == want) return batch;
    return batch.reshaped(want);
}

Tensor Model::forward_logits(const Tensor& batch) const {
    Tensor x = conform(batch);
    GraphBundle b = bind_graph(x.dim(0));
    b.graph.bind(b.input, std::move(x));
    return b.graph.forward(b.logits);
}

Tensor Model::representation(const Tensor& batch) const {
    if (representation_tap < 0) throw std::invalid_argument("representation: model has no tap layer");
    Tensor x = conform(batch);
    GraphBundle b = bind_graph(x.dim(0));
    b.graph.bind(b.input, std::move(x));
    b.graph.forward(b.rep);
    Tensor rep = b.graph.value(b.rep);
    if (rep.rank() != 2) rep = rep.reshaped({rep.dim(0), rep.numel() / rep.dim(0)});
    return rep;
}

std::vector<int> Model::predict(const Tensor& batch) const {
    Tensor logits = forward_logits(batch);
    std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data() + i * c;
        int best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (z[j] > z[best]) best = static_cast<int>(j);
        }
        out[i] = best;
    }
    return out;
}

double Model::accuracy(const Dataset& ds) const {
    if (ds.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    const std::size_t chunk = 256;
    std::size_t correct = 0;
    std::size_t m = ds.pixels_per_image();
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        std::size_t n = std::min(chunk, ds.size() - start);
        Tensor batch(Shape{n, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
        std::copy(ds.images.data() + start * m, ds.images.data() + (start + n) * m, batch.data());
        std::vector<int> pred = predict(batch);
        for (std::size_t i = 0; i < n; ++i) {
            if (pred[i] == ds.labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::size_t Model::rep_dim() const {
    if (representation_tap < 0) throw std::invalid_argument("rep_dim: model has no tap layer");
    Shape s = input_shape;
    for (std::size_t i = 0; i <= static_cast<std::size_t>(representation_tap); ++i) {
        s = layer_output_shape(layers[i], s, i);
    }
    return shape_numel(s);
}

Model mlp_small(std::uint64_t seed) {
    Model m;
    m.arch_id = "mlp-small";
    m.input_shape = {784};
    m.num_classes = 10;
    m.layers = {LayerSpec::dense(784, 256), LayerSpec::relu(), LayerSpec::dense(256, 128), LayerSpec::relu(),
                LayerSpec::dense(128, 10)};
    m.representation_tap = 3;
    init_params(m, seed);
    m.validate();
    return m;
}

Model conv_small(std::uint64_t seed) {
    Model m;
    m.arch_id = "conv-small";
    m.input_shape = {1, 28, 28};
    m.num_classes = 10;
    m.layers = {LayerSpec::conv(1, 8, 3, 1, 1),  LayerSpec::relu(),    LayerSpec::pool(),
                LayerSpec::conv(8, 16, 3, 1, 1), LayerSpec::relu(),    LayerSpec::pool(),
                LayerSpec::flatten(),            LayerSpec::dense(784, 128), LayerSpec::relu(),
                LayerSpec::dense(128, 10)};
    m.representation_tap = 8;
    init_params(m, seed);
    m.validate();
    return m;
}

Model make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, int classes, std::uint64_t seed) {
    if (hidden.empty()) throw std::invalid_argument("make_mlp: needs at least one hidden layer");
    Model m;
    m.arch_id = "mlp";
    m.input_shape = {input_dim};
    m.num_classes = classes;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        m.layers.push_back(LayerSpec::dense(prev, h));
        m.layers.push_back(LayerSpec::relu());
        prev = h;
    }
    m.representation_tap = static_cast<int>(m.layers.size()) - 1;
    m.layers.push_back(LayerSpec::dense(prev, static_cast<std::size_t>(classes)));
    init_params(m, seed);
    m.validate();
    return m;
}

Model make_linear(std::size_t input_dim, int classes, std::uint64_t seed) {
    Model m;
    m.arch_id = "linear";
    m.input_shape = {input_dim};
    m.num_classes = classes;
    m.layers = {LayerSpec::dense(input_dim, static_cast<std::size_t>(classes))};
    m.representation_tap = -1;
    init_params(m, seed);
    m.validate();
    return m;
}

Model model_by_id(const std::string& arch_id, std::size_t input_dim, int classes, std::uint64_t seed) {
    if (arch_id == "mlp-small") return mlp_small(seed);
    if (arch_id == "conv-small") return conv_small(seed);
    if (arch_id == "linear") return make_linear(input_dim, classes, seed);
    if (arch_id == "mlp") return make_mlp(input_dim, {64, 32}, classes, seed);
    throw std::invalid_argument("unknown architecture: " + arch_id);
}

Model reinit_like(const Model& like, std::uint64_t seed) {
    Model m;
    m.arch_id = like.arch_id;
    m.input_shape = like.input_shape;
    m.num_classes = like.num_classes;
    m.layers = like.layers;
    m.representation_tap = like.representation_tap;
    init_params(m, seed);
    m.validate();
    return m;
}

}  // namespace advlab
