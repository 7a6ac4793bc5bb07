#include "advlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "advlab/rng.hpp"

namespace advlab {

namespace {

constexpr std::size_t kEvalChunk = 200;

Tensor gather_images(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::size_t m = ds.pixels_per_image();
    Tensor out(Shape{idx.size(), ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    for (std::size_t j = 0; j < idx.size(); ++j) {
        std::memcpy(out.data() + j * m, ds.images.data() + idx[j] * m, m * sizeof(double));
    }
    return out;
}

TrainResult train_loop(Model& model, const Dataset& ds, const TrainConfig& cfg, bool adversarial) {
    cfg.validate();
    ds.validate();
    if (adversarial && !cfg.inner_attack) {
        throw std::invalid_argument("train: adversarial training needs an inner attack");
    }
    TrainResult result;
    SgdState state;
    std::size_t n = ds.size();
    std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = substream(cfg.seed, "train.shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            std::size_t lo = b * cfg.batch_size;
            std::size_t nb = std::min(cfg.batch_size, n - lo);
            std::vector<std::size_t> idx(order.begin() + static_cast<long>(lo),
                                         order.begin() + static_cast<long>(lo + nb));
            Tensor batch = model.conform(gather_images(ds, idx));
            std::vector<int> labels(nb);
            for (std::size_t j = 0; j < nb; ++j) labels[j] = ds.labels[idx[j]];

            if (adversarial) {
                AttackSpec inner = *cfg.inner_attack;
                inner.seed = derive_seed(cfg.seed, "train.attack",
                                         static_cast<std::uint64_t>(epoch) * batches + b);
                AdvBatch ab = run_attack(model, batch, labels, inner);
                batch = std::move(ab.adversarials);
            }

            GraphBundle bundle = model.bind_graph(nb);
            bundle.graph.bind(bundle.input, std::move(batch));
            Tensor ytens(Shape{nb});
            for (std::size_t j = 0; j < nb; ++j) ytens[j] = labels[j];
            bundle.graph.bind(bundle.labels, std::move(ytens));
            double loss;
            try {
                loss = bundle.graph.forward(bundle.loss)[0];
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(loss)) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
            }
            epoch_loss += loss;

            std::vector<NodeId> wrt;
            wrt.reserve(bundle.param_nodes.size());
            for (const auto& [name, node] : bundle.param_nodes) wrt.push_back(node);
            GradMap grads = bundle.graph.grad(bundle.loss, wrt);
            ParamMap named;
            for (const auto& [name, node] : bundle.param_nodes) named.emplace(name, std::move(grads.at(node)));
            sgd_step(model.params, named, cfg.lr, cfg.momentum, state);
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
    }
    result.rejected_steps = state.rejected_steps;
    return result;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be positive");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train: momentum must be in [0,1)");
    if (inner_attack) {
        inner_attack->validate();
        auto k = inner_attack->kind;
        if (k != AttackSpec::Kind::Pgd && k != AttackSpec::Kind::Fgsm) {
            throw std::invalid_argument("train: inner attack must be fgsm or pgd");
        }
    }
}

TrainResult train_regular(Model& model, const Dataset& ds, const TrainConfig& cfg) {
    return train_loop(model, ds, cfg, false);
}

TrainResult train_adversarial(Model& model, const Dataset& ds, const TrainConfig& cfg) {
    return train_loop(model, ds, cfg, true);
}

double accuracy_under_attack(const Model& model, const Dataset& ds, const AttackSpec& spec) {
    if (ds.size() == 0) throw std::invalid_argument("accuracy_under_attack: empty dataset");
    bool capped = spec.kind == AttackSpec::Kind::Cw || spec.kind == AttackSpec::Kind::Deepfool;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
        std::size_t nb = std::min(kEvalChunk, ds.size() - start);
        std::vector<std::size_t> idx(nb);
        std::iota(idx.begin(), idx.end(), start);
        Dataset part = ds.subset(idx);
        AdvBatch ab = run_attack(model, part.images, part.labels, spec);
        for (std::size_t i = 0; i < nb; ++i) {
            bool over = capped && spec.epsilon > 0 && ab.l2[i] > spec.epsilon + 1e-12;
            int pred = over ? ab.clean_pred[i] : ab.adv_pred[i];
            if (pred == part.labels[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

EvalGrid evaluate_grid(const std::vector<std::pair<std::string, const Model*>>& models,
                       const std::vector<AttackSpec>& attacks, const Dataset& ds) {
    ds.validate();
    EvalGrid grid;
    for (const auto& [id, model] : models) {
        EvalRow clean;
        clean.no_attack = true;
        clean.model_id = id;
        clean.accuracy = model->accuracy(ds);
        grid.rows.push_back(clean);
        for (const AttackSpec& spec : attacks) {
            EvalRow row;
            row.spec = spec;
            row.model_id = id;
            row.accuracy = accuracy_under_attack(*model, ds, spec);
            grid.rows.push_back(row);
        }
    }
    return grid;
}

void write_eval_csv(const EvalGrid& grid, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("eval csv: cannot open " + path);
    f << "attack,norm,epsilon,steps,model_id,accuracy\n";
    char buf[64];
    for (const EvalRow& r : grid.rows) {
        if (r.no_attack) {
            f << "none,-,0,0," << r.model_id << ",";
        } else {
            std::snprintf(buf, sizeof(buf), "%g", r.spec.epsilon);
            f << attack_kind_name(r.spec.kind) << "," << norm_name(r.spec.norm) << "," << buf << ","
              << r.spec.steps << "," << r.model_id << ",";
        }
        std::snprintf(buf, sizeof(buf), "%.6f", r.accuracy);
        f << buf << "\n";
    }
    if (!f) throw std::runtime_error("eval csv: write failed for " + path);
}

}  // namespace advlab
