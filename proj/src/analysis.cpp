#include "advlab/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"

namespace advlab {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(what) + ": expected a rank-2 matrix, got " + shape_str(t.shape()));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t[static_cast<std::size_t>(i) * t.dim(1) + static_cast<std::size_t>(j)];
    return m;
}

void center_columns(Eigen::MatrixXd& m) { m.rowwise() -= m.colwise().mean(); }

struct Reduced {
    Eigen::MatrixXd scores;  // N x kept, orthogonal columns scaled by singular values
    std::size_t kept = 0;
};

// Truncated SVD of a centered view: keep the leading directions explaining
// >= variance_keep of the squared-singular-value mass.
Reduced reduce_view(const Eigen::MatrixXd& centered, double variance_keep) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
    const Eigen::VectorXd& s = svd.singularValues();
    double total = s.squaredNorm();
    if (!(total > 0.0)) throw std::runtime_error("svcca: degenerate view (all rows identical)");
    double rank_cut = s(0) * 1e-12;
    double cum = 0.0;
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) <= rank_cut) break;
        cum += s(i) * s(i);
        ++kept;
        if (cum >= variance_keep * total) break;
    }
    if (kept == 0) throw std::runtime_error("svcca: degenerate view (all rows identical)");
    Reduced r;
    r.scores = svd.matrixU().leftCols(kept) * s.head(kept).asDiagonal();
    r.kept = static_cast<std::size_t>(kept);
    return r;
}

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& sym, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw std::runtime_error("svcca: covariance eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
    return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

SvccaResult svcca(const Tensor& reps_a, const Tensor& reps_b, double variance_keep) {
    if (!(variance_keep > 0.0) || variance_keep > 1.0) throw std::invalid_argument("svcca: variance_keep must be in (0,1]");
    Eigen::MatrixXd a = to_eigen(reps_a, "svcca");
    Eigen::MatrixXd b = to_eigen(reps_b, "svcca");
    if (a.rows() != b.rows()) throw std::invalid_argument("svcca: views disagree on sample count");
    if (a.rows() < 2) throw std::invalid_argument("svcca: need at least 2 samples");
    if (a.rows() <= std::max(a.cols(), b.cols()))
        std::cerr << "svcca: warning: fewer samples than dimensions; correlations may be inflated\n";

    center_columns(a);
    center_columns(b);
    Reduced ra = reduce_view(a, variance_keep);
    Reduced rb = reduce_view(b, variance_keep);

    constexpr double kLambda = 1e-8;
    double n1 = static_cast<double>(a.rows() - 1);
    Eigen::MatrixXd saa = (ra.scores.transpose() * ra.scores) / n1;
    Eigen::MatrixXd sbb = (rb.scores.transpose() * rb.scores) / n1;
    Eigen::MatrixXd sab = (ra.scores.transpose() * rb.scores) / n1;
    saa.diagonal().array() += kLambda;
    sbb.diagonal().array() += kLambda;

    Eigen::MatrixXd m = inverse_sqrt(saa, kLambda * 0.5) * sab * inverse_sqrt(sbb, kLambda * 0.5);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    const Eigen::VectorXd& s = svd.singularValues();

    SvccaResult out;
    out.kept_a = ra.kept;
    out.kept_b = rb.kept;
    out.coefficients.resize(static_cast<std::size_t>(s.size()));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        double c = std::clamp(s(i), 0.0, 1.0);
        out.coefficients[static_cast<std::size_t>(i)] = c;
        sum += c;
    }
    out.mean = out.coefficients.empty() ? 0.0 : sum / static_cast<double>(out.coefficients.size());
    return out;
}

double svcca_under_attack(const Model& model, const Dataset& batch, const AttackSpec& spec, double variance_keep) {
    batch.validate();
    Tensor clean = model.conform(batch.images);
    AdvBatch adv = run_attack(model, clean, batch.labels, spec);
    Tensor rep_clean = model.representation(clean);
    Tensor rep_adv = model.representation(adv.adversarials);
    return svcca(rep_clean, rep_adv, variance_keep).mean;
}

PcaResult pca_project(const Tensor& reps, std::size_t k) {
    if (k == 0) throw std::invalid_argument("pca: k must be >= 1");
    Eigen::MatrixXd x = to_eigen(reps, "pca");
    if (x.rows() < static_cast<Eigen::Index>(k)) throw std::invalid_argument("pca: fewer samples than components");
    center_columns(x);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    double total = s.squaredNorm();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(0) > 0.0 && s(i) > s(0) * 1e-12) ++rank;
    if (static_cast<Eigen::Index>(k) > rank)
        throw std::invalid_argument("pca: k " + std::to_string(k) + " exceeds data rank " + std::to_string(rank));

    Eigen::MatrixXd coords = svd.matrixU().leftCols(k) * s.head(k).asDiagonal();
    const Eigen::MatrixXd& v = svd.matrixV();
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(k); ++j) {
        Eigen::Index imax = 0;
        v.col(j).cwiseAbs().maxCoeff(&imax);
        if (v(imax, j) < 0.0) coords.col(j) = -coords.col(j);
    }

    PcaResult out;
    out.coords = Tensor(Shape{static_cast<std::size_t>(x.rows()), k});
    for (Eigen::Index i = 0; i < coords.rows(); ++i)
        for (Eigen::Index j = 0; j < coords.cols(); ++j)
            out.coords[static_cast<std::size_t>(i) * k + static_cast<std::size_t>(j)] = coords(i, j);
    out.explained.resize(k);
    for (std::size_t j = 0; j < k; ++j)
        out.explained[j] = total > 0.0 ? s(static_cast<Eigen::Index>(j)) * s(static_cast<Eigen::Index>(j)) / total : 0.0;
    return out;
}

KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: both samples must be nonempty");
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double n = static_cast<double>(sa.size()), m = static_cast<double>(sb.size());

    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < sa.size() && j < sb.size()) {
        double v = std::min(sa[i], sb[j]);
        while (i < sa.size() && sa[i] <= v) ++i;
        while (j < sb.size() && sb[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    d = std::max(d, std::abs(1.0 - static_cast<double>(j) / m));
    d = std::max(d, std::abs(static_cast<double>(i) / n - 1.0));

    KsResult out;
    out.statistic = d;
    out.n_a = sa.size();
    out.n_b = sb.size();
    double t = std::sqrt(n * m / (n + m)) * d;
    if (t < 1e-3) {
        out.p_value = 1.0;
    } else {
        double sum = 0.0;
        for (int term = 1; term <= 100; ++term) {
            double e = std::exp(-2.0 * term * term * t * t);
            sum += (term % 2 == 1) ? e : -e;
            if (e < 1e-16) break;
        }
        out.p_value = std::clamp(2.0 * sum, 0.0, 1.0);
    }
    return out;
}

BoundaryReport boundary_distance(const Model& model, const Dataset& ds, const AttackSpec& deepfool_spec) {
    if (deepfool_spec.kind != AttackSpec::Kind::Deepfool)
        throw std::invalid_argument("boundary_distance: spec must be a deepfool attack");
    ds.validate();
    AttackSpec spec = deepfool_spec;
    spec.overshoot = 0.0;  // approximate the orthogonal projection onto the boundary
    spec.epsilon = 0.0;

    BoundaryReport report;
    constexpr std::size_t kChunk = 128;
    std::size_t n = ds.size();
    for (std::size_t start = 0; start < n; start += kChunk) {
        std::size_t stop = std::min(start + kChunk, n);
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Dataset part = ds.subset(idx);
        AdvBatch batch = deepfool(model, model.conform(part.images), spec);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (batch.adv_pred[i] == batch.clean_pred[i]) {
                ++report.exhausted;
                continue;
            }
            if (batch.linf[i] > batch.l2[i] + 1e-12)
                throw std::logic_error("boundary_distance: norm ordering violated");
            BoundaryRecord rec;
            rec.index = start + i;
            rec.l2 = batch.l2[i];
            rec.linf = batch.linf[i];
            rec.steps = batch.iterations[i];
            report.records.push_back(rec);
        }
    }
    report.measured = report.records.size();
    if (report.measured > 0) {
        double sl2 = 0.0, slinf = 0.0, ssteps = 0.0;
        for (const BoundaryRecord& r : report.records) {
            sl2 += r.l2;
            slinf += r.linf;
            ssteps += static_cast<double>(r.steps);
        }
        double c = static_cast<double>(report.measured);
        report.mean_l2 = sl2 / c;
        report.mean_linf = slinf / c;
        report.mean_steps = ssteps / c;
    }
    return report;
}

void write_pca_csv(const Tensor& clean_reps, const Tensor& adv_reps, const std::vector<int>& labels,
                   const std::string& path, std::size_t k) {
    if (clean_reps.rank() != 2 || !clean_reps.same_shape(adv_reps))
        throw std::invalid_argument("write_pca_csv: representation matrices must share one N x d shape");
    std::size_t n = clean_reps.dim(0), d = clean_reps.dim(1);
    if (labels.size() != n) throw std::invalid_argument("write_pca_csv: label count mismatch");

    Tensor both(Shape{2 * n, d});
    std::copy(clean_reps.data(), clean_reps.data() + n * d, both.data());
    std::copy(adv_reps.data(), adv_reps.data() + n * d, both.data() + n * d);
    PcaResult pca = pca_project(both, k);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_pca_csv: cannot open " + path);
    out << "sample,label,population";
    for (std::size_t j = 0; j < k; ++j) out << ",coord_" << (j + 1);
    out << "\n";
    char buf[64];
    auto emit = [&](std::size_t row, std::size_t sample, const char* pop) {
        out << sample << ',' << labels[sample] << ',' << pop;
        for (std::size_t j = 0; j < k; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", pca.coords[row * k + j]);
            out << ',' << buf;
        }
        out << "\n";
    };
    for (std::size_t i = 0; i < n; ++i) emit(i, i, "clean");
    for (std::size_t i = 0; i < n; ++i) emit(n + i, i, "adversarial");
    if (!out) throw std::runtime_error("write_pca_csv: write failed for " + path);
}

std::string to_json(const SvccaResult& r) {
    nlohmann::json j;
    j["coefficients"] = r.coefficients;
    j["mean"] = r.mean;
    j["kept_a"] = r.kept_a;
    j["kept_b"] = r.kept_b;
    return j.dump(2);
}

std::string to_json(const KsResult& r) {
    nlohmann::json j;
    j["statistic"] = r.statistic;
    j["p_value"] = r.p_value;
    j["n_a"] = r.n_a;
    j["n_b"] = r.n_b;
    return j.dump(2);
}

std::string to_json(const BoundaryReport& r) {
    nlohmann::json j;
    j["mean_l2"] = r.mean_l2;
    j["mean_linf"] = r.mean_linf;
    j["mean_steps"] = r.mean_steps;
    j["measured"] = r.measured;
    j["exhausted"] = r.exhausted;
    nlohmann::json recs = nlohmann::json::array();
    for (const BoundaryRecord& rec : r.records)
        recs.push_back({{"index", rec.index}, {"l2", rec.l2}, {"linf", rec.linf}, {"steps", rec.steps}});
    j["records"] = recs;
    return j.dump(2);
}

}  // namespace advlab
