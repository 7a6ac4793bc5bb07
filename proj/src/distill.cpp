#include "advlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <stdexcept>

#include "advlab/rng.hpp"

namespace advlab {

namespace {

constexpr std::size_t kDistillChunk = 64;

Tensor noise_like(const Shape& per_image, std::uint64_t seed, std::uint64_t index) {
    auto rng = substream(seed, "distill.init", index);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Shape s;
    s.push_back(1);
    for (std::size_t d : per_image) s.push_back(d);
    Tensor z(s);
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = unif(rng);
    return z;
}

std::uint64_t hash_tensor(const double* p, std::size_t n) {
    return fnv1a64(reinterpret_cast<const unsigned char*>(p), n * sizeof(double));
}

// Batched descent core. Rows of `z` move independently; returns per-row
// curves. Throws only if the whole batch turns non-finite (callers isolate).
struct BatchOutcome {
    Tensor z{Shape{1}};
    std::vector<std::vector<double>> curves;
    std::vector<int> failed_at;  // -1 when clean
};

BatchOutcome distill_batch(Tensor z, const Tensor& target_rep, const Model& model, const DistillConfig& cfg) {
    std::size_t n = z.dim(0);
    std::size_t d = target_rep.dim(1);
    BatchOutcome out;
    out.curves.assign(n, {});
    out.failed_at.assign(n, -1);

    GraphBundle b = model.bind_graph(n);
    NodeId wrt[] = {b.input};
    for (int step = 0; step <= cfg.steps; ++step) {
        b.graph.bind(b.input, z);
        b.graph.forward(b.rep);
        Tensor rep = b.graph.value(b.rep);
        if (rep.rank() != 2) rep = rep.reshaped({n, rep.numel() / n});
        Tensor seed = Tensor(Shape{n, d});
        bool all_bad = true;
        for (std::size_t i = 0; i < n; ++i) {
            double dist = 0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = rep[i * d + j] - target_rep[i * d + j];
                seed[i * d + j] = 2.0 * diff;
                dist += diff * diff;
            }
            if (!std::isfinite(dist)) {
                if (out.failed_at[i] < 0) out.failed_at[i] = step;
                std::fill(seed.data() + i * d, seed.data() + (i + 1) * d, 0.0);
            } else {
                all_bad = false;
                out.curves[i].push_back(dist);
            }
        }
        if (all_bad) throw std::runtime_error("distill: non-finite objective at step " + std::to_string(step));
        if (step == cfg.steps) break;
        GradMap gm = b.graph.vjp(b.rep, seed.reshaped(b.graph.node_shape(b.rep)), wrt);
        const Tensor& g = gm.at(b.input);
        std::size_t m = z.numel() / n;
        for (std::size_t i = 0; i < n; ++i) {
            if (out.failed_at[i] >= 0) continue;
            double* zi = z.data() + i * m;
            const double* gi = g.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) zi[j] = std::clamp(zi[j] - cfg.lr * gi[j], 0.0, 1.0);
        }
    }
    out.z = std::move(z);
    return out;
}

}  // namespace

void DistillConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("distill: steps must be >= 1");
    if (lr < 0 || !std::isfinite(lr)) throw std::invalid_argument("distill: lr must be finite and >= 0");
}

DistillResult distill_image(const Tensor& target, const Model& robust_model, const DistillConfig& cfg,
                            std::uint64_t sample_index, const Tensor* init_override) {
    cfg.validate();
    Tensor t = robust_model.conform(target);
    if (t.dim(0) != 1) throw std::invalid_argument("distill_image: expects a single image");
    Tensor z;
    if (init_override) {
        z = robust_model.conform(*init_override);
        if (z.dim(0) != 1) throw std::invalid_argument("distill_image: init must be a single image");
    } else if (cfg.init == DistillConfig::Init::Noise) {
        z = noise_like(robust_model.input_shape, cfg.seed, sample_index);
    } else if (cfg.init == DistillConfig::Init::Target) {
        z = t;
    } else {
        throw std::invalid_argument("distill_image: other-image init needs an explicit init image");
    }
    for (double v : z.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("distill_image: init outside [0,1]");
    }
    Tensor target_rep = robust_model.representation(t);
    BatchOutcome out = distill_batch(std::move(z), target_rep, robust_model, cfg);
    if (out.failed_at[0] >= 0) {
        throw std::runtime_error("distill: non-finite objective at step " + std::to_string(out.failed_at[0]));
    }
    DistillResult r;
    r.image = std::move(out.z);
    r.curve = std::move(out.curves[0]);
    return r;
}

RobustDataset build_robust_dataset(const Dataset& ds, const Model& robust_model, const DistillConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (ds.size() == 0) throw std::invalid_argument("build_robust_dataset: empty dataset");
    std::size_t n = ds.size();
    std::size_t m = ds.pixels_per_image();

    RobustDataset rd;
    rd.data.images = Tensor(ds.images.shape());
    rd.data.labels = ds.labels;
    rd.data.num_classes = ds.num_classes;
    rd.data.split_tag = ds.split_tag;
    rd.data.provenance = ds.provenance + "+distilled:seed=" + std::to_string(cfg.seed);
    rd.final_distance.assign(n, 0.0);
    rd.init_hash.assign(n, 0);
    rd.failed.assign(n, 0);

    for (std::size_t start = 0; start < n; start += kDistillChunk) {
        std::size_t nb = std::min(kDistillChunk, n - start);
        Shape zshape = ds.images.shape();
        zshape[0] = nb;
        Tensor z(zshape);
        for (std::size_t i = 0; i < nb; ++i) {
            std::size_t gi = start + i;
            if (cfg.init == DistillConfig::Init::Noise) {
                Tensor zi = noise_like(robust_model.input_shape, cfg.seed, gi);
                std::memcpy(z.data() + i * m, zi.data(), m * sizeof(double));
            } else if (cfg.init == DistillConfig::Init::Target) {
                std::memcpy(z.data() + i * m, ds.images.data() + gi * m, m * sizeof(double));
            } else {
                auto rng = substream(cfg.seed, "distill.other", gi);
                std::uniform_int_distribution<std::size_t> pick(0, n - 2);
                std::size_t j = pick(rng);
                if (j >= gi) ++j;
                std::memcpy(z.data() + i * m, ds.images.data() + j * m, m * sizeof(double));
            }
            rd.init_hash[start + i] = hash_tensor(z.data() + i * m, m);
        }
        Tensor zinit = z;

        std::vector<std::size_t> idx(nb);
        for (std::size_t i = 0; i < nb; ++i) idx[i] = start + i;
        Tensor target_rep = robust_model.representation(ds.subset(idx).images);

        BatchOutcome out;
        try {
            out = distill_batch(robust_model.conform(z), target_rep, robust_model, cfg);
        } catch (const std::runtime_error&) {
            // Whole chunk failed; every image falls back to its init.
            for (std::size_t i = 0; i < nb; ++i) {
                std::memcpy(rd.data.images.data() + (start + i) * m, zinit.data() + i * m, m * sizeof(double));
                rd.failed[start + i] = 1;
            }
            continue;
        }
        for (std::size_t i = 0; i < nb; ++i) {
            if (out.failed_at[i] >= 0) {
                std::memcpy(rd.data.images.data() + (start + i) * m, zinit.data() + i * m, m * sizeof(double));
                rd.failed[start + i] = 1;
                rd.final_distance[start + i] =
                    out.curves[i].empty() ? std::numeric_limits<double>::quiet_NaN() : out.curves[i].back();
            } else {
                std::memcpy(rd.data.images.data() + (start + i) * m, out.z.data() + i * m, m * sizeof(double));
                rd.final_distance[start + i] = out.curves[i].back();
            }
        }
    }
    rd.data.validate();
    return rd;
}

RobustPipelineResult robust_training_pipeline(const Dataset& ds, const Model& adv_model, const TrainConfig& train_cfg,
                                              const DistillConfig& distill_cfg) {
    RobustPipelineResult result;
    result.dataset = build_robust_dataset(ds, adv_model, distill_cfg);
    result.model = reinit_like(adv_model, derive_seed(train_cfg.seed, "robust.init"));
    TrainConfig cfg = train_cfg;
    cfg.inner_attack.reset();
    result.training = train_regular(result.model, result.dataset.data, cfg);
    return result;
}

}  // namespace advlab
