#include "advlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "advlab/analysis.hpp"
#include "advlab/checkpoint.hpp"
#include "advlab/dataset.hpp"
#include "advlab/distill.hpp"
#include "advlab/graph.hpp"
#include "advlab/model.hpp"
#include "advlab/rng.hpp"
#include "advlab/train.hpp"

namespace advlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kModelTags[] = {"regular", "adv-l2", "adv-linf", "robust-l2", "robust-linf"};
constexpr const char* kAdvTags[] = {"l2", "linf"};

template <class F>
auto io_step(const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError(what + ": " + e.what());
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + p.string());
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::exception& e) {
        throw IoError("bad JSON in " + p.string() + ": " + e.what());
    }
}

json attack_echo(const AttackSpec& s) {
    return {{"kind", attack_kind_name(s.kind)},
            {"norm", norm_name(s.norm)},
            {"epsilon", s.epsilon},
            {"steps", s.steps}};
}

std::vector<double> attack_accuracies(const EvalGrid& grid, const std::string& model_id) {
    std::vector<double> out;
    for (const EvalRow& r : grid.rows)
        if (r.model_id == model_id && !r.no_attack) out.push_back(r.accuracy);
    return out;
}

double clean_accuracy(const EvalGrid& grid, const std::string& model_id) {
    for (const EvalRow& r : grid.rows)
        if (r.model_id == model_id && r.no_attack) return r.accuracy;
    throw std::runtime_error("grid has no clean row for " + model_id);
}

class Pipeline {
public:
    Pipeline(const ExperimentConfig& cfg, const RunOptions& opt) : cfg_(cfg), opt_(opt), root_(cfg.out_dir) {}

    void run(const std::string& command, RunReport& report);

private:
    const ExperimentConfig& cfg_;
    const RunOptions& opt_;
    fs::path root_;
    bool load_only_ = false;
    bool force_ = false;
    std::vector<StageTiming> timings_;

    Dataset train_, test_;
    std::map<std::string, Model> models_;
    std::map<std::string, Dataset> robust_;
    EvalGrid grid_;
    json svcca_, ks_, boundary_, pca_;
    std::vector<std::string> pca_paths_;

    fs::path p(const std::string& rel) const { return root_ / rel; }

    void stage(const std::string& name, const std::vector<std::string>& artifacts,
               const std::function<void()>& compute, const std::function<void()>& load);

    void dataset_compute();
    void dataset_load();
    void train_compute();
    void advtrain_compute();
    void distill_compute();
    void distill_load_one(const std::string& tag);
    void robusttrain_compute();
    void grid_compute();
    void grid_load();
    void analysis_compute();
    void analysis_load();

    Model load_model_file(const std::string& tag);
    Model build_model(std::uint64_t seed) const;
    void save_model(const std::string& tag, const Model& m, const TrainResult& res);
    Dataset first_n(const Dataset& ds, std::size_t n) const;
    std::vector<AttackSpec> grid_specs() const;
    json grid_json() const;
    void write_report(const std::string& command, RunReport& out);
};

void Pipeline::stage(const std::string& name, const std::vector<std::string>& artifacts,
                     const std::function<void()>& compute, const std::function<void()>& load) {
    if (!opt_.resume_stage.empty() && name == opt_.resume_stage) force_ = true;
    bool done = true;
    for (const std::string& a : artifacts)
        if (!fs::exists(p(a))) {
            done = false;
            break;
        }
    StageTiming t{name, 0.0, false};
    auto t0 = std::chrono::steady_clock::now();
    try {
        if (load_only_) {
            if (!done) throw IoError("stage " + name + ": artifacts missing; run the pipeline first");
            load();
            t.resumed = true;
        } else if (done && !force_) {
            load();
            t.resumed = true;
        } else {
            compute();
        }
    } catch (const IoError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw NumericError(name, e.what());
    }
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timings_.push_back(t);
    if (!opt_.quiet)
        std::printf("%-6s %-12s %8.2fs\n", t.resumed ? "load" : "run", name.c_str(), t.seconds);
}

Model Pipeline::build_model(std::uint64_t seed) const {
    Model m = model_by_id(cfg_.arch, train_.pixels_per_image(), train_.num_classes, seed);
    if (m.input_numel() != train_.pixels_per_image() || m.num_classes != train_.num_classes) {
        throw ConfigError("architecture " + cfg_.arch + " expects input " + std::to_string(m.input_numel()) + "x" +
                          std::to_string(m.num_classes) + " classes, dataset has " +
                          std::to_string(train_.pixels_per_image()) + "x" + std::to_string(train_.num_classes));
    }
    return m;
}

Model Pipeline::load_model_file(const std::string& tag) {
    Model m = build_model(0);
    std::string rel = "models/" + tag + ".advl";
    ParamMap saved = io_step("loading " + rel, [&] { return load_checkpoint(p(rel).string()); });
    bool match = saved.size() == m.params.size();
    if (match) {
        for (const auto& [name, t] : m.params) {
            auto it = saved.find(name);
            if (it == saved.end() || !it->second.same_shape(t)) {
                match = false;
                break;
            }
        }
    }
    if (!match) throw IoError("checkpoint " + rel + " does not match architecture " + cfg_.arch);
    m.params = std::move(saved);
    return m;
}

void Pipeline::save_model(const std::string& tag, const Model& m, const TrainResult& res) {
    io_step("saving model " + tag, [&] {
        save_checkpoint(p("models/" + tag + ".advl").string(), m.params);
        std::ostringstream csv;
        csv << "epoch,loss\n";
        char buf[64];
        for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", res.loss_curve[i]);
            csv << (i + 1) << "," << buf << "\n";
        }
        write_text(p("models/" + tag + "-curve.csv"), csv.str());
    });
}

Dataset Pipeline::first_n(const Dataset& ds, std::size_t n) const {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return ds.subset(idx);
}

std::vector<AttackSpec> Pipeline::grid_specs() const {
    std::vector<AttackSpec> specs = cfg_.grid;
    for (std::size_t i = 0; i < specs.size(); ++i) specs[i].seed = derive_seed(cfg_.seed, "harness.grid", i);
    return specs;
}

void Pipeline::dataset_compute() {
    Dataset tr, te;
    std::string source;
    switch (cfg_.dataset.kind) {
        case DatasetSource::Kind::Desk: {
            source = "desk";
            Dataset full =
                make_desk_corpus(cfg_.dataset.per_class, cfg_.dataset.classes, derive_seed(cfg_.seed, "harness.dataset"));
            std::tie(tr, te) = split(full, 1.0 - cfg_.dataset.test_fraction, derive_seed(cfg_.seed, "harness.split"));
            break;
        }
        case DatasetSource::Kind::Blobs: {
            source = "blobs";
            Dataset full = make_blobs(cfg_.dataset.per_class, cfg_.dataset.classes, cfg_.dataset.dim,
                                      cfg_.dataset.separation, derive_seed(cfg_.seed, "harness.dataset"));
            std::tie(tr, te) = split(full, 1.0 - cfg_.dataset.test_fraction, derive_seed(cfg_.seed, "harness.split"));
            break;
        }
        case DatasetSource::Kind::Idx: {
            source = "idx";
            tr = io_step("loading " + cfg_.dataset.train_images,
                         [&] { return load_idx(cfg_.dataset.train_images, cfg_.dataset.train_labels); });
            te = io_step("loading " + cfg_.dataset.test_images,
                         [&] { return load_idx(cfg_.dataset.test_images, cfg_.dataset.test_labels); });
            int classes = std::max(tr.num_classes, te.num_classes);
            tr.num_classes = te.num_classes = classes;
            te.split_tag = "test";
            break;
        }
    }
    io_step("saving dataset", [&] {
        save_idx(tr, p("dataset/train-images.idx").string(), p("dataset/train-labels.idx").string());
        save_idx(te, p("dataset/test-images.idx").string(), p("dataset/test-labels.idx").string());
        json prov = {{"source", source},
                     {"num_classes", tr.num_classes},
                     {"train_provenance", tr.provenance},
                     {"test_provenance", te.provenance}};
        write_text(p("dataset/provenance.json"), prov.dump(2));
    });
    // Canonicalize through disk so fresh and resumed runs see identical pixels.
    dataset_load();
}

void Pipeline::dataset_load() {
    json prov = read_json(p("dataset/provenance.json"));
    train_ = io_step("loading dataset/train", [&] {
        return load_idx(p("dataset/train-images.idx").string(), p("dataset/train-labels.idx").string());
    });
    test_ = io_step("loading dataset/test", [&] {
        return load_idx(p("dataset/test-images.idx").string(), p("dataset/test-labels.idx").string());
    });
    io_step("parsing dataset/provenance.json", [&] {
        int nc = prov.at("num_classes").get<int>();
        train_.num_classes = test_.num_classes = nc;
        train_.provenance = prov.at("train_provenance").get<std::string>();
        test_.provenance = prov.at("test_provenance").get<std::string>();
    });
    train_.split_tag = "train";
    test_.split_tag = "test";
    train_.validate();
    test_.validate();
}

void Pipeline::train_compute() {
    Model m = build_model(derive_seed(cfg_.seed, "harness.init.regular"));
    TrainConfig tc = cfg_.train;
    tc.seed = derive_seed(cfg_.seed, "harness.train.regular");
    tc.inner_attack.reset();
    TrainResult res = train_regular(m, train_, tc);
    save_model("regular", m, res);
    models_["regular"] = std::move(m);
}

void Pipeline::advtrain_compute() {
    for (const char* tag : kAdvTags) {
        std::string id = std::string("adv-") + tag;
        Model m = build_model(derive_seed(cfg_.seed, "harness.init." + id));
        TrainConfig tc = cfg_.train;
        tc.seed = derive_seed(cfg_.seed, "harness.train." + id);
        AttackSpec inner;
        inner.kind = AttackSpec::Kind::Pgd;
        inner.norm = std::string(tag) == "l2" ? Norm::L2 : Norm::Linf;
        inner.epsilon = std::string(tag) == "l2" ? cfg_.adv_epsilon_l2 : cfg_.adv_epsilon_linf;
        inner.steps = cfg_.adv_steps;
        tc.inner_attack = inner;
        TrainResult res = train_adversarial(m, train_, tc);
        save_model(id, m, res);
        models_[id] = std::move(m);
    }
}

void Pipeline::distill_compute() {
    for (const char* tag : kAdvTags) {
        DistillConfig dc = cfg_.distill;
        dc.seed = derive_seed(cfg_.seed, std::string("harness.distill.") + tag);
        RobustDataset rd = build_robust_dataset(train_, models_.at(std::string("adv-") + tag), dc);
        io_step(std::string("saving robust dataset ") + tag, [&] {
            save_idx(rd.data, p(std::string("distill/robust-") + tag + "-images.idx").string(),
                     p(std::string("distill/robust-") + tag + "-labels.idx").string());
            json side;
            side["num_classes"] = rd.data.num_classes;
            side["provenance"] = rd.data.provenance;
            side["final_distance"] = rd.final_distance;
            std::vector<std::string> hashes;
            hashes.reserve(rd.init_hash.size());
            for (std::uint64_t h : rd.init_hash) hashes.push_back(checksum_hex(h));
            side["init_hash"] = hashes;
            side["failed"] = std::vector<int>(rd.failed.begin(), rd.failed.end());
            write_text(p(std::string("distill/robust-") + tag + ".json"), side.dump(2));
        });
        distill_load_one(tag);
    }
}

void Pipeline::distill_load_one(const std::string& tag) {
    Dataset d = io_step("loading distill/robust-" + tag, [&] {
        return load_idx(p("distill/robust-" + tag + "-images.idx").string(),
                        p("distill/robust-" + tag + "-labels.idx").string());
    });
    json side = read_json(p("distill/robust-" + tag + ".json"));
    io_step("parsing distill/robust-" + tag + ".json", [&] {
        d.num_classes = side.at("num_classes").get<int>();
        d.provenance = side.at("provenance").get<std::string>();
    });
    d.split_tag = "train";
    d.validate();
    robust_[tag] = std::move(d);
}

void Pipeline::robusttrain_compute() {
    for (const char* tag : kAdvTags) {
        std::string id = std::string("robust-") + tag;
        TrainConfig tc = cfg_.train;
        tc.seed = derive_seed(cfg_.seed, "harness.train." + id);
        tc.inner_attack.reset();
        Model fresh = reinit_like(models_.at(std::string("adv-") + tag), derive_seed(tc.seed, "robust.init"));
        TrainResult res = train_regular(fresh, robust_.at(tag), tc);
        save_model(id, fresh, res);
        models_[id] = std::move(fresh);
    }
}

void Pipeline::grid_compute() {
    std::vector<std::pair<std::string, const Model*>> list;
    for (const char* tag : kModelTags) list.emplace_back(tag, &models_.at(tag));
    grid_ = evaluate_grid(list, grid_specs(), test_);
    io_step("saving grid", [&] {
        write_eval_csv(grid_, p("grid.csv").string());
        write_text(p("grid.json"), grid_json().dump(2));
    });
    grid_load();
}

json Pipeline::grid_json() const {
    json rows = json::array();
    for (const EvalRow& r : grid_.rows) {
        json row = {{"model", r.model_id}, {"accuracy", r.accuracy}, {"no_attack", r.no_attack}};
        if (!r.no_attack) {
            row["kind"] = attack_kind_name(r.spec.kind);
            row["norm"] = norm_name(r.spec.norm);
            row["epsilon"] = r.spec.epsilon;
            row["steps"] = r.spec.steps;
        }
        rows.push_back(row);
    }
    return json{{"rows", rows}};
}

void Pipeline::grid_load() {
    json g = read_json(p("grid.json"));
    io_step("parsing grid.json", [&] {
        EvalGrid out;
        for (const json& r : g.at("rows")) {
            EvalRow row;
            row.model_id = r.at("model").get<std::string>();
            row.accuracy = r.at("accuracy").get<double>();
            row.no_attack = r.at("no_attack").get<bool>();
            if (!row.no_attack) {
                row.spec.kind = attack_kind_from_string(r.at("kind").get<std::string>());
                row.spec.norm = norm_from_string(r.at("norm").get<std::string>());
                row.spec.epsilon = r.at("epsilon").get<double>();
                row.spec.steps = r.at("steps").get<int>();
            }
            out.rows.push_back(std::move(row));
        }
        grid_ = std::move(out);
    });
}

void Pipeline::analysis_compute() {
    Dataset batch = first_n(test_, std::min(cfg_.analysis.svcca_batch, test_.size()));
    std::vector<AttackSpec> specs = grid_specs();

    if (cfg_.analysis.svcca) {
        json rows = json::array();
        std::vector<std::vector<double>> means(std::size(kModelTags), std::vector<double>(specs.size(), 0.0));
        for (std::size_t t = 0; t < std::size(kModelTags); ++t) {
            for (std::size_t i = 0; i < specs.size(); ++i) {
                AttackSpec s = specs[i];
                s.seed = derive_seed(cfg_.seed, std::string("harness.svcca.") + kModelTags[t], i);
                double mean = svcca_under_attack(models_.at(kModelTags[t]), batch, s, cfg_.analysis.variance_keep);
                means[t][i] = mean;
                json row = attack_echo(specs[i]);
                row["model"] = kModelTags[t];
                row["mean"] = mean;
                rows.push_back(row);
            }
        }
        svcca_ = {{"variance_keep", cfg_.analysis.variance_keep}, {"batch", batch.size()}, {"rows", rows}};
        io_step("saving svcca", [&] {
            write_text(p("analysis/svcca.json"), svcca_.dump(2));
            std::ostringstream csv;
            csv << "attack,norm,epsilon,steps";
            for (const char* tag : kModelTags) csv << "," << tag;
            csv << "\n";
            char buf[64];
            for (std::size_t i = 0; i < specs.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%g", specs[i].epsilon);
                csv << attack_kind_name(specs[i].kind) << "," << norm_name(specs[i].norm) << "," << buf << ","
                    << specs[i].steps;
                for (std::size_t t = 0; t < std::size(kModelTags); ++t) {
                    std::snprintf(buf, sizeof buf, "%.6f", means[t][i]);
                    csv << "," << buf;
                }
                csv << "\n";
            }
            write_text(p("analysis/svcca.csv"), csv.str());
        });
    }

    if (cfg_.analysis.ks) {
        json rows = json::array();
        for (const char* tag : kAdvTags) {
            std::string rid = std::string("robust-") + tag, aid = std::string("adv-") + tag;
            std::vector<double> a = attack_accuracies(grid_, rid);
            std::vector<double> b = attack_accuracies(grid_, aid);
            if (cfg_.analysis.include_no_attack) {
                a.insert(a.begin(), clean_accuracy(grid_, rid));
                b.insert(b.begin(), clean_accuracy(grid_, aid));
            }
            if (a.empty() || b.empty()) continue;
            KsResult ks = ks_two_sample(a, b);
            rows.push_back({{"robust", rid},
                            {"adversarial", aid},
                            {"statistic", ks.statistic},
                            {"p_value", ks.p_value},
                            {"n_a", ks.n_a},
                            {"n_b", ks.n_b}});
        }
        ks_ = {{"include_no_attack", cfg_.analysis.include_no_attack}, {"rows", rows}};
        io_step("saving ks", [&] { write_text(p("analysis/ks.json"), ks_.dump(2)); });
    }

    if (cfg_.analysis.boundary) {
        Dataset bsub = first_n(test_, std::min(cfg_.analysis.boundary_samples, test_.size()));
        AttackSpec dspec;
        dspec.kind = AttackSpec::Kind::Deepfool;
        dspec.steps = cfg_.analysis.boundary_steps;
        dspec.epsilon = 0.0;
        dspec.overshoot = 0.0;
        json rows = json::array();
        std::ostringstream csv;
        csv << "model,mean_l2,mean_linf,mean_steps,measured,exhausted\n";
        char buf[128];
        for (const char* tag : kModelTags) {
            BoundaryReport rep = boundary_distance(models_.at(tag), bsub, dspec);
            rows.push_back({{"model", tag},
                            {"mean_l2", rep.mean_l2},
                            {"mean_linf", rep.mean_linf},
                            {"mean_steps", rep.mean_steps},
                            {"measured", rep.measured},
                            {"exhausted", rep.exhausted}});
            std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%llu,%llu\n", tag, rep.mean_l2, rep.mean_linf,
                          rep.mean_steps, static_cast<unsigned long long>(rep.measured),
                          static_cast<unsigned long long>(rep.exhausted));
            csv << buf;
        }
        boundary_ = {{"samples", bsub.size()}, {"steps", cfg_.analysis.boundary_steps}, {"rows", rows}};
        io_step("saving boundary", [&] {
            write_text(p("analysis/boundary.json"), boundary_.dump(2));
            write_text(p("analysis/boundary.csv"), csv.str());
        });
    }

    if (cfg_.analysis.pca) {
        json paths = json::array();
        pca_paths_.clear();
        if (!specs.empty()) {
            for (const char* tag : kModelTags) {
                AttackSpec s = specs[0];
                s.seed = derive_seed(cfg_.seed, std::string("harness.pca.") + tag);
                const Model& m = models_.at(tag);
                Tensor x = m.conform(batch.images);
                AdvBatch ab = run_attack(m, x, batch.labels, s);
                Tensor rep_clean = m.representation(x);
                Tensor rep_adv = m.representation(ab.adversarials);
                std::string rel = std::string("analysis/pca-") + tag + ".csv";
                io_step("saving " + rel, [&] { write_pca_csv(rep_clean, rep_adv, batch.labels, p(rel).string(), 2); });
                pca_paths_.push_back(rel);
                paths.push_back(rel);
            }
        }
        pca_ = {{"attack", specs.empty() ? json() : attack_echo(specs[0])}, {"paths", paths}};
        io_step("saving pca index", [&] { write_text(p("analysis/pca.json"), pca_.dump(2)); });
    }
}

void Pipeline::analysis_load() {
    if (cfg_.analysis.svcca) svcca_ = read_json(p("analysis/svcca.json"));
    if (cfg_.analysis.ks) ks_ = read_json(p("analysis/ks.json"));
    if (cfg_.analysis.boundary) boundary_ = read_json(p("analysis/boundary.json"));
    if (cfg_.analysis.pca) {
        pca_ = read_json(p("analysis/pca.json"));
        io_step("parsing analysis/pca.json", [&] {
            pca_paths_.clear();
            for (const json& path : pca_.at("paths")) pca_paths_.push_back(path.get<std::string>());
        });
        for (const std::string& rel : pca_paths_)
            if (!fs::exists(p(rel))) throw IoError(rel + " is missing; rerun with --stage analysis");
    }
}

void Pipeline::write_report(const std::string& command, RunReport& out) {
    json rep;
    rep["command"] = command;
    rep["spec_version"] = 1;
    rep["config"] = json::parse(cfg_.echo_json());
    json stages = json::array();
    for (const StageTiming& t : timings_)
        stages.push_back({{"name", t.name}, {"seconds", t.seconds}, {"resumed", t.resumed}});
    rep["stages"] = stages;
    if (!grid_.rows.empty()) {
        rep["grid"] = grid_json()["rows"];
        rep["grid_csv"] = "grid.csv";
    } else {
        rep["grid"] = nullptr;
    }
    rep["svcca"] = svcca_;
    rep["ks"] = ks_;
    rep["boundary"] = boundary_;
    rep["pca_csv"] = pca_paths_;

    std::map<std::string, std::string> sums;
    io_step("checksumming artifacts", [&] {
        for (const auto& entry : fs::recursive_directory_iterator(root_)) {
            if (!entry.is_regular_file()) continue;
            std::string rel = fs::relative(entry.path(), root_).generic_string();
            if (rel == "report.json") continue;
            sums[rel] = checksum_hex(file_checksum(entry.path().string()));
        }
    });
    rep["checksums"] = sums;

    std::string text = rep.dump(2) + "\n";
    io_step("writing report.json", [&] { write_text(p("report.json"), text); });
    out.command = command;
    out.stages = timings_;
    out.checksums = std::move(sums);
    out.json = std::move(text);
}

void Pipeline::run(const std::string& command, RunReport& report) {
    static const std::vector<std::string> names = {"dataset", "train",    "adv-train", "distill",
                                                   "robust-train", "grid", "analysis"};
    std::size_t last = 0;
    if (command == "train") last = 3;
    else if (command == "distill") last = 5;
    else if (command == "attack") last = 6;
    else if (command == "analyze" || command == "pipeline") last = 7;
    else if (command == "report") {
        last = 7;
        load_only_ = true;
    } else {
        throw ConfigError("unknown command '" + command + "'");
    }

    if (!opt_.resume_stage.empty()) {
        if (load_only_) throw ConfigError("report only loads artifacts; drop --stage");
        bool known = false;
        for (std::size_t i = 0; i < last; ++i) known = known || names[i] == opt_.resume_stage;
        if (!known) throw ConfigError("unknown stage '" + opt_.resume_stage + "' for command " + command);
    }

    if (last >= 4 && model_by_id(cfg_.arch, 784, 10, 0).representation_tap < 0)
        throw ConfigError("architecture " + cfg_.arch +
                          " has no representation tap; distillation and representation analysis need one");

    io_step("creating output directories", [&] {
        fs::create_directories(p("dataset"));
        fs::create_directories(p("models"));
        fs::create_directories(p("distill"));
        fs::create_directories(p("analysis"));
    });

    stage("dataset",
          {"dataset/train-images.idx", "dataset/train-labels.idx", "dataset/test-images.idx",
           "dataset/test-labels.idx", "dataset/provenance.json"},
          [&] { dataset_compute(); }, [&] { dataset_load(); });
    if (last >= 2)
        stage("train", {"models/regular.advl", "models/regular-curve.csv"}, [&] { train_compute(); },
              [&] { models_["regular"] = load_model_file("regular"); });
    if (last >= 3)
        stage("adv-train",
              {"models/adv-l2.advl", "models/adv-l2-curve.csv", "models/adv-linf.advl", "models/adv-linf-curve.csv"},
              [&] { advtrain_compute(); },
              [&] {
                  models_["adv-l2"] = load_model_file("adv-l2");
                  models_["adv-linf"] = load_model_file("adv-linf");
              });
    if (last >= 4)
        stage("distill",
              {"distill/robust-l2-images.idx", "distill/robust-l2-labels.idx", "distill/robust-l2.json",
               "distill/robust-linf-images.idx", "distill/robust-linf-labels.idx", "distill/robust-linf.json"},
              [&] { distill_compute(); },
              [&] {
                  distill_load_one("l2");
                  distill_load_one("linf");
              });
    if (last >= 5)
        stage("robust-train",
              {"models/robust-l2.advl", "models/robust-l2-curve.csv", "models/robust-linf.advl",
               "models/robust-linf-curve.csv"},
              [&] { robusttrain_compute(); },
              [&] {
                  models_["robust-l2"] = load_model_file("robust-l2");
                  models_["robust-linf"] = load_model_file("robust-linf");
              });
    if (last >= 6)
        stage("grid", {"grid.csv", "grid.json"}, [&] { grid_compute(); }, [&] { grid_load(); });
    if (last >= 7) {
        std::vector<std::string> arts;
        if (cfg_.analysis.svcca) {
            arts.push_back("analysis/svcca.json");
            arts.push_back("analysis/svcca.csv");
        }
        if (cfg_.analysis.ks) arts.push_back("analysis/ks.json");
        if (cfg_.analysis.boundary) {
            arts.push_back("analysis/boundary.json");
            arts.push_back("analysis/boundary.csv");
        }
        if (cfg_.analysis.pca) arts.push_back("analysis/pca.json");
        if (!arts.empty())
            stage("analysis", arts, [&] { analysis_compute(); }, [&] { analysis_load(); });
    }
    write_report(command, report);
}

}  // namespace

std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char buf[1 << 16];
    std::uint64_t h = 0xcbf29ce484222325ULL;
    while (in) {
        in.read(buf, sizeof buf);
        std::streamsize got = in.gcount();
        if (got <= 0) break;
        h = fnv1a64(buf, static_cast<std::size_t>(got), h);
    }
    if (in.bad()) throw IoError("read failed for " + path);
    return h;
}

std::string checksum_hex(std::uint64_t h) {
    char b[17];
    std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(h));
    return b;
}

int run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options,
                RunReport* out_report) {
    try {
        config.validate();
        if (options.jobs > 0) set_compute_jobs(options.jobs);
        Pipeline pipe(config, options);
        RunReport rep;
        pipe.run(command, rep);
        if (out_report) *out_report = std::move(rep);
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure in stage %s: %s\n", e.stage.c_str(), e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace advlab
