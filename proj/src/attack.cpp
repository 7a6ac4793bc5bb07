#include "advlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "advlab/rng.hpp"

namespace advlab {

namespace {

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

int argmax_row(const double* z, std::size_t c) {
    int best = 0;
    for (std::size_t j = 1; j < c; ++j) {
        if (z[j] > z[best]) best = static_cast<int>(j);
    }
    return best;
}

void project_span(double* v, std::size_t m, Norm p, double eps) {
    if (eps <= 0) {
        std::fill(v, v + m, 0.0);
        return;
    }
    switch (p) {
        case Norm::Linf:
            for (std::size_t i = 0; i < m; ++i) v[i] = std::clamp(v[i], -eps, eps);
            return;
        case Norm::L2: {
            double n2 = 0;
            for (std::size_t i = 0; i < m; ++i) n2 += v[i] * v[i];
            n2 = std::sqrt(n2);
            if (n2 > eps) {
                double s = eps / n2;
                for (std::size_t i = 0; i < m; ++i) v[i] *= s;
            }
            return;
        }
        case Norm::L1: {
            double n1 = 0;
            for (std::size_t i = 0; i < m; ++i) n1 += std::abs(v[i]);
            if (n1 <= eps) return;
            // Duchi et al. sorting construction for the simplex threshold.
            std::vector<double> u(m);
            for (std::size_t i = 0; i < m; ++i) u[i] = std::abs(v[i]);
            std::sort(u.begin(), u.end(), std::greater<double>());
            double cum = 0, tau = 0;
            std::size_t rho = 0;
            for (std::size_t j = 0; j < m; ++j) {
                cum += u[j];
                double t = (cum - eps) / static_cast<double>(j + 1);
                if (u[j] - t > 0) {
                    rho = j + 1;
                    tau = t;
                }
            }
            (void)rho;
            for (std::size_t i = 0; i < m; ++i) {
                double mag = std::abs(v[i]) - tau;
                v[i] = mag > 0 ? (v[i] > 0 ? mag : -mag) : 0.0;
            }
            return;
        }
    }
}

Tensor labels_tensor(const std::vector<int>& labels) {
    Tensor t(Shape{labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i];
    return t;
}

void check_labels(const std::vector<int>& labels, std::size_t n, int classes) {
    if (labels.size() != n) throw std::invalid_argument("attack: label count != batch size");
    for (int y : labels) {
        if (y < 0 || y >= classes) throw std::invalid_argument("attack: label out of range");
    }
}

// Loss gradient w.r.t. the input for a bound batch.
Tensor input_grad(const Model& model, const Tensor& x, const std::vector<int>& labels) {
    GraphBundle b = model.bind_graph(x.dim(0));
    b.graph.bind(b.input, x);
    b.graph.bind(b.labels, labels_tensor(labels));
    b.graph.forward(b.loss);
    NodeId wrt[] = {b.input};
    GradMap g = b.graph.grad(b.loss, wrt);
    return std::move(g.at(b.input));
}

// Steepest-ascent step direction for a given norm, written into dir.
// Returns false when the gradient row is identically zero.
bool ascent_direction(const double* g, std::size_t m, Norm p, double* dir) {
    double linf = 0;
    for (std::size_t i = 0; i < m; ++i) linf = std::max(linf, std::abs(g[i]));
    if (linf == 0) {
        std::fill(dir, dir + m, 0.0);
        return false;
    }
    switch (p) {
        case Norm::Linf:
            for (std::size_t i = 0; i < m; ++i) dir[i] = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
            break;
        case Norm::L2: {
            double n2 = 0;
            for (std::size_t i = 0; i < m; ++i) n2 += g[i] * g[i];
            n2 = std::sqrt(n2);
            for (std::size_t i = 0; i < m; ++i) dir[i] = g[i] / n2;
            break;
        }
        case Norm::L1: {
            std::size_t k = 0;
            for (std::size_t i = 1; i < m; ++i) {
                if (std::abs(g[i]) > std::abs(g[k])) k = i;
            }
            std::fill(dir, dir + m, 0.0);
            dir[k] = g[k] > 0 ? 1.0 : -1.0;
            break;
        }
    }
    return true;
}

void sample_in_ball(std::mt19937_64& rng, Norm p, double eps, std::size_t m, double* out) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    switch (p) {
        case Norm::Linf: {
            std::uniform_real_distribution<double> u(-eps, eps);
            for (std::size_t i = 0; i < m; ++i) out[i] = u(rng);
            return;
        }
        case Norm::L2: {
            std::normal_distribution<double> gauss(0.0, 1.0);
            double n2 = 0;
            for (std::size_t i = 0; i < m; ++i) {
                out[i] = gauss(rng);
                n2 += out[i] * out[i];
            }
            n2 = std::sqrt(n2);
            double radius = eps * std::pow(unif(rng), 1.0 / static_cast<double>(m));
            if (n2 > 0) {
                for (std::size_t i = 0; i < m; ++i) out[i] *= radius / n2;
            }
            return;
        }
        case Norm::L1: {
            double sum = 0;
            for (std::size_t i = 0; i < m; ++i) {
                out[i] = -std::log(1.0 - unif(rng));
                sum += out[i];
            }
            double radius = eps * std::pow(unif(rng), 1.0 / static_cast<double>(m));
            for (std::size_t i = 0; i < m; ++i) {
                double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
                out[i] = sign * out[i] / sum * radius;
            }
            return;
        }
    }
}

AdvBatch make_batch(const Model& model, const Tensor& x, const std::vector<int>& labels) {
    AdvBatch ab;
    ab.originals = x;
    ab.adversarials = x;
    ab.true_labels = labels;
    ab.clean_pred = model.predict(x);
    std::size_t n = x.dim(0);
    ab.adv_pred.assign(n, -1);
    ab.l1.assign(n, 0.0);
    ab.l2.assign(n, 0.0);
    ab.linf.assign(n, 0.0);
    ab.success.assign(n, 0);
    ab.stationary.assign(n, 0);
    ab.iterations.assign(n, 0);
    return ab;
}

void finalize_batch(const Model& model, AdvBatch& ab, const AttackSpec& spec) {
    std::size_t n = ab.size();
    std::size_t m = ab.originals.numel() / n;
    ab.adv_pred = model.predict(ab.adversarials);
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = ab.originals.data() + i * m;
        const double* b = ab.adversarials.data() + i * m;
        double l1 = 0, l2 = 0, linf = 0;
        for (std::size_t j = 0; j < m; ++j) {
            double d = b[j] - a[j];
            l1 += std::abs(d);
            l2 += d * d;
            linf = std::max(linf, std::abs(d));
        }
        ab.l1[i] = l1;
        ab.l2[i] = std::sqrt(l2);
        ab.linf[i] = linf;
        if (spec.kind == AttackSpec::Kind::Deepfool) {
            ab.success[i] = ab.adv_pred[i] != ab.clean_pred[i];
        } else {
            ab.success[i] =
                !ab.true_labels.empty() && ab.clean_pred[i] == ab.true_labels[i] && ab.adv_pred[i] != ab.true_labels[i];
        }
        if ((spec.kind == AttackSpec::Kind::Cw || spec.kind == AttackSpec::Kind::Deepfool) && spec.epsilon > 0 &&
            ab.l2[i] > spec.epsilon + 1e-12) {
            ab.success[i] = 0;
        }
    }
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    std::size_t m = x.numel() / x.dim(0);
    Shape s = x.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t j = 0; j < idx.size(); ++j) {
        std::memcpy(out.data() + j * m, x.data() + idx[j] * m, m * sizeof(double));
    }
    return out;
}

}  // namespace

std::string norm_name(Norm p) {
    switch (p) {
        case Norm::L1: return "1";
        case Norm::L2: return "2";
        case Norm::Linf: return "inf";
    }
    return "?";
}

Norm norm_from_string(const std::string& s) {
    if (s == "1" || s == "l1" || s == "L1") return Norm::L1;
    if (s == "2" || s == "l2" || s == "L2") return Norm::L2;
    if (s == "inf" || s == "linf" || s == "Linf" || s == "LInf") return Norm::Linf;
    throw std::invalid_argument("unknown norm: " + s);
}

std::string attack_kind_name(AttackSpec::Kind k) {
    switch (k) {
        case AttackSpec::Kind::Fgsm: return "fgsm";
        case AttackSpec::Kind::Pgd: return "pgd";
        case AttackSpec::Kind::Cw: return "cw";
        case AttackSpec::Kind::Deepfool: return "deepfool";
    }
    return "?";
}

AttackSpec::Kind attack_kind_from_string(const std::string& s) {
    if (s == "fgsm") return AttackSpec::Kind::Fgsm;
    if (s == "pgd") return AttackSpec::Kind::Pgd;
    if (s == "cw") return AttackSpec::Kind::Cw;
    if (s == "deepfool") return AttackSpec::Kind::Deepfool;
    throw std::invalid_argument("unknown attack kind: " + s);
}

void AttackSpec::validate() const {
    if (!std::isfinite(epsilon) || epsilon < 0) throw std::invalid_argument("attack: epsilon must be finite, >= 0");
    if (!std::isfinite(step_size)) throw std::invalid_argument("attack: step size must be finite");
    if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
    if (overshoot < 0) throw std::invalid_argument("attack: overshoot must be >= 0");
    if (cw_confidence < 0) throw std::invalid_argument("attack: cw confidence must be >= 0");
    if (cw_penalty <= 0) throw std::invalid_argument("attack: cw penalty must be positive");
}

Tensor project_ball(const Tensor& v, Norm p, double eps) {
    if (eps < 0) throw std::invalid_argument("project_ball: negative radius");
    Tensor out = v;
    project_span(out.data(), out.numel(), p, eps);
    return out;
}

AdvBatch fgsm(const Model& model, const Tensor& batch, const std::vector<int>& labels, const AttackSpec& spec) {
    spec.validate();
    Tensor x = model.conform(batch);
    std::size_t n = x.dim(0), m = x.numel() / n;
    check_labels(labels, n, model.num_classes);
    AdvBatch ab = make_batch(model, x, labels);
    Tensor g = input_grad(model, x, labels);
    std::vector<double> dir(m);
    for (std::size_t i = 0; i < n; ++i) {
        double* adv = ab.adversarials.data() + i * m;
        const double* orig = x.data() + i * m;
        if (!ascent_direction(g.data() + i * m, m, spec.norm, dir.data())) {
            ab.stationary[i] = 1;
            continue;
        }
        ab.iterations[i] = 1;
        for (std::size_t j = 0; j < m; ++j) adv[j] = clip01(orig[j] + spec.epsilon * dir[j]);
    }
    finalize_batch(model, ab, spec);
    return ab;
}

AdvBatch pgd(const Model& model, const Tensor& batch, const std::vector<int>& labels, const AttackSpec& spec) {
    spec.validate();
    Tensor x = model.conform(batch);
    std::size_t n = x.dim(0), m = x.numel() / n;
    check_labels(labels, n, model.num_classes);
    AdvBatch ab = make_batch(model, x, labels);
    double alpha = spec.step_size > 0 ? spec.step_size : 2.5 * spec.epsilon / spec.steps;

    Tensor delta = Tensor::zeros(x.shape());
    if (spec.random_start && spec.epsilon > 0) {
        for (std::size_t i = 0; i < n; ++i) {
            auto rng = substream(spec.seed, "pgd.start", i);
            sample_in_ball(rng, spec.norm, spec.epsilon, m, delta.data() + i * m);
        }
        for (std::size_t j = 0; j < delta.numel(); ++j) {
            delta[j] = clip01(x[j] + delta[j]) - x[j];
        }
    }
    std::vector<char> moved(n, 0);
    Tensor xt(x.shape());
    std::vector<double> dir(m);
    for (int step = 0; step < spec.steps; ++step) {
        for (std::size_t j = 0; j < x.numel(); ++j) xt[j] = x[j] + delta[j];
        Tensor g = input_grad(model, xt, labels);
        for (std::size_t i = 0; i < n; ++i) {
            double* d = delta.data() + i * m;
            if (ascent_direction(g.data() + i * m, m, spec.norm, dir.data())) {
                moved[i] = 1;
                for (std::size_t j = 0; j < m; ++j) d[j] += alpha * dir[j];
            }
            project_span(d, m, spec.norm, spec.epsilon);
            const double* orig = x.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) d[j] = clip01(orig[j] + d[j]) - orig[j];
        }
    }
    for (std::size_t j = 0; j < x.numel(); ++j) ab.adversarials[j] = x[j] + delta[j];
    for (std::size_t i = 0; i < n; ++i) {
        ab.iterations[i] = spec.steps;
        ab.stationary[i] = !moved[i];
    }
    finalize_batch(model, ab, spec);
    return ab;
}

AdvBatch carlini_wagner(const Model& model, const Tensor& batch, const std::vector<int>& labels,
                        const AttackSpec& spec) {
    spec.validate();
    Tensor x = model.conform(batch);
    std::size_t n = x.dim(0), m = x.numel() / n;
    check_labels(labels, n, model.num_classes);
    AdvBatch ab = make_batch(model, x, labels);
    double lr = spec.step_size > 0 ? spec.step_size : 0.01;
    std::size_t c = static_cast<std::size_t>(model.num_classes);

    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i) {
        if (ab.clean_pred[i] == labels[i]) active.push_back(i);
    }
    if (active.empty()) {
        finalize_batch(model, ab, spec);
        return ab;
    }
    std::size_t na = active.size();
    Tensor xa = gather_rows(x, active);
    Tensor w(xa.shape());
    for (std::size_t j = 0; j < xa.numel(); ++j) {
        w[j] = std::atanh(2.0 * std::clamp(xa[j], 1e-6, 1.0 - 1e-6) - 1.0);
    }
    std::vector<double> best_norm(na, std::numeric_limits<double>::infinity());
    Tensor best = xa;
    Tensor xt(xa.shape());

    GraphBundle b = model.bind_graph(na);
    auto tanh_map = [&]() {
        for (std::size_t j = 0; j < w.numel(); ++j) xt[j] = 0.5 * (std::tanh(w[j]) + 1.0);
    };
    auto consider = [&](const Tensor& logits) {
        for (std::size_t i = 0; i < na; ++i) {
            int truth = labels[active[i]];
            if (argmax_row(logits.data() + i * c, c) == truth) continue;
            double n2 = 0;
            for (std::size_t j = 0; j < m; ++j) {
                double d = xt[i * m + j] - xa[i * m + j];
                n2 += d * d;
            }
            n2 = std::sqrt(n2);
            if (n2 < best_norm[i]) {
                best_norm[i] = n2;
                std::memcpy(best.data() + i * m, xt.data() + i * m, m * sizeof(double));
            }
        }
    };

    for (int step = 0; step < spec.steps; ++step) {
        tanh_map();
        b.graph.bind(b.input, xt);
        const Tensor& logits = b.graph.forward(b.logits);
        consider(logits);
        Tensor seed = Tensor::zeros(Shape{na, c});
        for (std::size_t i = 0; i < na; ++i) {
            int truth = labels[active[i]];
            const double* z = logits.data() + i * c;
            int runner = truth == 0 ? 1 : 0;
            for (std::size_t j = 0; j < c; ++j) {
                if (static_cast<int>(j) != truth && z[j] > z[runner]) runner = static_cast<int>(j);
            }
            double margin = z[truth] - z[runner];
            if (margin > -spec.cw_confidence) {
                seed[i * c + static_cast<std::size_t>(truth)] = spec.cw_penalty;
                seed[i * c + static_cast<std::size_t>(runner)] = -spec.cw_penalty;
            }
        }
        NodeId wrt[] = {b.input};
        GradMap gm = b.graph.vjp(b.logits, seed, wrt);
        const Tensor& gz = gm.at(b.input);
        for (std::size_t j = 0; j < w.numel(); ++j) {
            double dobj = gz[j] + 2.0 * (xt[j] - xa[j]);
            double th = std::tanh(w[j]);
            w[j] -= lr * dobj * 0.5 * (1.0 - th * th);
        }
    }
    tanh_map();
    b.graph.bind(b.input, xt);
    consider(b.graph.forward(b.logits));

    for (std::size_t i = 0; i < na; ++i) {
        const double* src = std::isfinite(best_norm[i]) ? best.data() + i * m : xt.data() + i * m;
        std::memcpy(ab.adversarials.data() + active[i] * m, src, m * sizeof(double));
        ab.iterations[active[i]] = spec.steps;
    }
    finalize_batch(model, ab, spec);
    return ab;
}

AdvBatch deepfool(const Model& model, const Tensor& batch, const AttackSpec& spec, const std::vector<int>& labels) {
    spec.validate();
    Tensor x = model.conform(batch);
    std::size_t n = x.dim(0), m = x.numel() / n;
    if (!labels.empty()) check_labels(labels, n, model.num_classes);
    AdvBatch ab = make_batch(model, x, labels);
    std::size_t c = static_cast<std::size_t>(model.num_classes);

    Tensor xt = x;  // unclipped working iterates
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels.empty() || ab.clean_pred[i] == labels[i]) active.push_back(i);
    }

    for (int it = 0; it < spec.steps && !active.empty(); ++it) {
        std::size_t na = active.size();
        Tensor xa = gather_rows(xt, active);
        GraphBundle b = model.bind_graph(na);
        b.graph.bind(b.input, xa);
        const Tensor& logits = b.graph.forward(b.logits);

        std::vector<std::size_t> remaining;
        for (std::size_t i = 0; i < na; ++i) {
            if (argmax_row(logits.data() + i * c, c) == ab.clean_pred[active[i]]) remaining.push_back(i);
        }
        if (remaining.empty()) break;

        // One VJP per candidate class; seed rows are e_k - e_current.
        std::vector<Tensor> wk(c, Tensor{Shape{1}});
        std::vector<char> wk_set(c, 0);
        NodeId wrt[] = {b.input};
        for (std::size_t k = 0; k < c; ++k) {
            Tensor seed = Tensor::zeros(Shape{na, c});
            bool any = false;
            for (std::size_t i : remaining) {
                auto cur = static_cast<std::size_t>(ab.clean_pred[active[i]]);
                if (k == cur) continue;
                seed[i * c + k] = 1.0;
                seed[i * c + cur] = -1.0;
                any = true;
            }
            if (!any) continue;
            GradMap gm = b.graph.vjp(b.logits, seed, wrt);
            wk[k] = std::move(gm.at(b.input));
            wk_set[k] = 1;
        }

        for (std::size_t i : remaining) {
            auto cur = static_cast<std::size_t>(ab.clean_pred[active[i]]);
            const double* z = logits.data() + i * c;
            double best_score = std::numeric_limits<double>::infinity();
            std::size_t best_k = c;
            double best_fd = 0, best_wn2 = 0;
            for (std::size_t k = 0; k < c; ++k) {
                if (k == cur || !wk_set[k]) continue;
                const double* wrow = wk[k].data() + i * m;
                double wn2 = 0;
                for (std::size_t j = 0; j < m; ++j) wn2 += wrow[j] * wrow[j];
                if (wn2 == 0) continue;
                double fd = z[k] - z[cur];
                double score = std::abs(fd) / std::sqrt(wn2);
                if (score < best_score) {
                    best_score = score;
                    best_k = k;
                    best_fd = fd;
                    best_wn2 = wn2;
                }
            }
            ab.iterations[active[i]] += 1;
            if (best_k == c) continue;  // all candidate gradients vanished
            // Slight multiplicative push so the iterate actually crosses.
            double scale = std::abs(best_fd) / best_wn2 * (1.0 + 1e-6);
            const double* wrow = wk[best_k].data() + i * m;
            double* row = xt.data() + active[i] * m;
            for (std::size_t j = 0; j < m; ++j) row[j] += scale * wrow[j];
        }

        std::vector<std::size_t> still;
        for (std::size_t i : remaining) still.push_back(active[i]);
        active = std::move(still);
    }

    double over = 1.0 + spec.overshoot;
    for (std::size_t i = 0; i < n; ++i) {
        double* adv = ab.adversarials.data() + i * m;
        const double* orig = x.data() + i * m;
        const double* cur = xt.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) adv[j] = clip01(orig[j] + over * (cur[j] - orig[j]));
    }
    finalize_batch(model, ab, spec);
    return ab;
}

AdvBatch run_attack(const Model& model, const Tensor& batch, const std::vector<int>& labels, const AttackSpec& spec) {
    switch (spec.kind) {
        case AttackSpec::Kind::Fgsm: return fgsm(model, batch, labels, spec);
        case AttackSpec::Kind::Pgd: return pgd(model, batch, labels, spec);
        case AttackSpec::Kind::Cw: return carlini_wagner(model, batch, labels, spec);
        case AttackSpec::Kind::Deepfool: return deepfool(model, batch, spec, labels);
    }
    throw std::invalid_argument("run_attack: unknown attack kind");
}

RobustnessReport average_robustness(const Model& model, const Dataset& ds, const AttackSpec& deepfool_spec) {
    if (deepfool_spec.kind != AttackSpec::Kind::Deepfool) {
        throw std::invalid_argument("average_robustness: spec must be a deepfool spec");
    }
    if (ds.size() == 0) throw std::invalid_argument("average_robustness: empty dataset");
    RobustnessReport rep;
    const std::size_t chunk = 128;
    std::size_t m = ds.pixels_per_image();
    double sum = 0;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        std::size_t nb = std::min(chunk, ds.size() - start);
        std::vector<std::size_t> idx(nb);
        std::iota(idx.begin(), idx.end(), start);
        Dataset part = ds.subset(idx);
        AdvBatch ab = deepfool(model, part.images, deepfool_spec, part.labels);
        for (std::size_t i = 0; i < nb; ++i) {
            double xn = norm_l2(part.images.data() + i * m, m);
            if (!ab.success[i]) {
                ++rep.failed;
                continue;
            }
            if (xn == 0) {
                ++rep.skipped_zero_norm;
                continue;
            }
            sum += ab.l2[i] / xn;
            ++rep.contributing;
        }
    }
    rep.average_robustness = rep.contributing ? sum / static_cast<double>(rep.contributing) : 0.0;
    return rep;
}

}  // namespace advlab
