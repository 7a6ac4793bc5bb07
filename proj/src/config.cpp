#include "advlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "advlab/model.hpp"

namespace advlab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

struct Entry {
    std::string key, value;
    int line = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

double to_double(const Entry& e) {
    try {
        std::size_t pos = 0;
        double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        fail(e.line, "key " + e.key + ": expected a number, got '" + e.value + "'");
    }
}

long long to_ll(const Entry& e) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        fail(e.line, "key " + e.key + ": expected an integer, got '" + e.value + "'");
    }
}

int to_int(const Entry& e) {
    long long v = to_ll(e);
    if (v < -2147483648LL || v > 2147483647LL) fail(e.line, "key " + e.key + ": integer out of range");
    return static_cast<int>(v);
}

std::size_t to_size(const Entry& e) {
    long long v = to_ll(e);
    if (v < 0) fail(e.line, "key " + e.key + ": expected a nonnegative integer");
    return static_cast<std::size_t>(v);
}

std::uint64_t to_u64(const Entry& e) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(e.value, &pos);
        if (pos != e.value.size() || (!e.value.empty() && e.value[0] == '-')) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        fail(e.line, "key " + e.key + ": expected an unsigned integer, got '" + e.value + "'");
    }
}

bool to_bool(const Entry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    fail(e.line, "key " + e.key + ": expected true/false, got '" + e.value + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void no_duplicates(const Section& sec) {
    std::set<std::string> seen;
    for (const Entry& e : sec.entries)
        if (!seen.insert(e.key).second) fail(e.line, "duplicate key " + e.key + " in [" + sec.name + "]");
}

void apply_experiment(const Section& sec, ExperimentConfig& cfg) {
    for (const Entry& e : sec.entries) {
        if (e.key == "name") cfg.name = e.value;
        else if (e.key == "arch") cfg.arch = e.value;
        else if (e.key == "out") cfg.out_dir = e.value;
        else if (e.key == "seed") cfg.seed = to_u64(e);
        else if (e.key == "analysis") {
            cfg.analysis.svcca = cfg.analysis.pca = cfg.analysis.ks = cfg.analysis.boundary = false;
            for (const std::string& t : split_list(e.value)) {
                if (t == "svcca") cfg.analysis.svcca = true;
                else if (t == "pca") cfg.analysis.pca = true;
                else if (t == "ks") cfg.analysis.ks = true;
                else if (t == "boundary") cfg.analysis.boundary = true;
                else fail(e.line, "unknown analysis toggle '" + t + "'");
            }
        } else fail(e.line, "unknown key " + e.key + " in [experiment]");
    }
}

void apply_dataset(const Section& sec, DatasetSource& ds) {
    std::set<std::string> seen;
    for (const Entry& e : sec.entries) {
        seen.insert(e.key);
        if (e.key == "source") {
            if (e.value == "desk") ds.kind = DatasetSource::Kind::Desk;
            else if (e.value == "blobs") ds.kind = DatasetSource::Kind::Blobs;
            else if (e.value == "idx") ds.kind = DatasetSource::Kind::Idx;
            else fail(e.line, "unknown dataset source '" + e.value + "'");
        } else if (e.key == "per_class") ds.per_class = to_size(e);
        else if (e.key == "classes") ds.classes = to_int(e);
        else if (e.key == "test_fraction") ds.test_fraction = to_double(e);
        else if (e.key == "dim") ds.dim = to_size(e);
        else if (e.key == "separation") ds.separation = to_double(e);
        else if (e.key == "train_images") ds.train_images = e.value;
        else if (e.key == "train_labels") ds.train_labels = e.value;
        else if (e.key == "test_images") ds.test_images = e.value;
        else if (e.key == "test_labels") ds.test_labels = e.value;
        else fail(e.line, "unknown key " + e.key + " in [dataset]");
    }
    auto only_for = [&](const char* key, bool allowed, const char* kinds) {
        if (seen.count(key) && !allowed)
            fail(sec.line, std::string("key ") + key + " is only valid for " + kinds + " datasets");
    };
    bool desk = ds.kind == DatasetSource::Kind::Desk;
    bool blobs = ds.kind == DatasetSource::Kind::Blobs;
    bool idx = ds.kind == DatasetSource::Kind::Idx;
    only_for("per_class", desk || blobs, "desk/blobs");
    only_for("classes", desk || blobs, "desk/blobs");
    only_for("test_fraction", desk || blobs, "desk/blobs");
    only_for("dim", blobs, "blobs");
    only_for("separation", blobs, "blobs");
    only_for("train_images", idx, "idx");
    only_for("train_labels", idx, "idx");
    only_for("test_images", idx, "idx");
    only_for("test_labels", idx, "idx");
}

void apply_train(const Section& sec, TrainConfig& t) {
    for (const Entry& e : sec.entries) {
        if (e.key == "epochs") t.epochs = to_int(e);
        else if (e.key == "batch") t.batch_size = to_size(e);
        else if (e.key == "lr") t.lr = to_double(e);
        else if (e.key == "momentum") t.momentum = to_double(e);
        else fail(e.line, "unknown key " + e.key + " in [train]");
    }
}

void apply_adversarial(const Section& sec, ExperimentConfig& cfg) {
    for (const Entry& e : sec.entries) {
        if (e.key == "epsilon_linf") cfg.adv_epsilon_linf = to_double(e);
        else if (e.key == "epsilon_l2") cfg.adv_epsilon_l2 = to_double(e);
        else if (e.key == "steps") cfg.adv_steps = to_int(e);
        else fail(e.line, "unknown key " + e.key + " in [adversarial]");
    }
}

void apply_distill(const Section& sec, DistillConfig& d) {
    for (const Entry& e : sec.entries) {
        if (e.key == "steps") d.steps = to_int(e);
        else if (e.key == "lr") d.lr = to_double(e);
        else if (e.key == "init") {
            if (e.value == "noise") d.init = DistillConfig::Init::Noise;
            else if (e.value == "other-image") d.init = DistillConfig::Init::OtherImage;
            else if (e.value == "target") d.init = DistillConfig::Init::Target;
            else fail(e.line, "unknown distill init '" + e.value + "'");
        } else fail(e.line, "unknown key " + e.key + " in [distill]");
    }
}

void apply_analysis(const Section& sec, AnalysisConfig& a) {
    for (const Entry& e : sec.entries) {
        if (e.key == "svcca_batch") a.svcca_batch = to_size(e);
        else if (e.key == "variance_keep") a.variance_keep = to_double(e);
        else if (e.key == "boundary_samples") a.boundary_samples = to_size(e);
        else if (e.key == "boundary_steps") a.boundary_steps = to_int(e);
        else if (e.key == "include_no_attack") a.include_no_attack = to_bool(e);
        else fail(e.line, "unknown key " + e.key + " in [analysis]");
    }
}

AttackSpec apply_attack(const Section& sec) {
    AttackSpec spec;
    bool has_kind = false;
    for (const Entry& e : sec.entries) {
        try {
            if (e.key == "kind") {
                spec.kind = attack_kind_from_string(e.value);
                has_kind = true;
            } else if (e.key == "norm") spec.norm = norm_from_string(e.value);
            else if (e.key == "epsilon") spec.epsilon = to_double(e);
            else if (e.key == "steps") spec.steps = to_int(e);
            else if (e.key == "step_size") spec.step_size = to_double(e);
            else if (e.key == "random_start") spec.random_start = to_bool(e);
            else if (e.key == "overshoot") spec.overshoot = to_double(e);
            else if (e.key == "confidence") spec.cw_confidence = to_double(e);
            else fail(e.line, "unknown key " + e.key + " in [attack]");
        } catch (const std::invalid_argument& ex) {
            fail(e.line, ex.what());
        }
    }
    if (!has_kind) fail(sec.line, "[attack] section is missing the kind key");
    return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    std::vector<Section> sections;
    Section top{"", 0, {}};
    Section* cur = &top;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "unterminated section header");
            std::string name = trim(s.substr(1, s.size() - 2));
            if (name.empty()) fail(line, "empty section name");
            sections.push_back(Section{name, line, {}});
            cur = &sections.back();
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        Entry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
        if (e.key.empty()) fail(line, "empty key");
        cur->entries.push_back(std::move(e));
    }

    bool versioned = false;
    for (const Entry& e : top.entries) {
        if (e.key == "spec_version") {
            if (versioned) fail(e.line, "duplicate spec_version");
            if (to_int(e) != 1) fail(e.line, "unsupported spec_version " + e.value + " (expected 1)");
            versioned = true;
        } else {
            fail(e.line, "key " + e.key + " appears before any section (only spec_version is allowed there)");
        }
    }
    if (!versioned) throw ConfigError("config: missing required top-level key spec_version = 1");

    ExperimentConfig cfg;
    std::set<std::string> seen_sections;
    for (const Section& sec : sections) {
        if (sec.name != "attack") {
            if (!seen_sections.insert(sec.name).second) fail(sec.line, "duplicate section [" + sec.name + "]");
            no_duplicates(sec);
        } else {
            no_duplicates(sec);
        }
        if (sec.name == "experiment") apply_experiment(sec, cfg);
        else if (sec.name == "dataset") apply_dataset(sec, cfg.dataset);
        else if (sec.name == "train") apply_train(sec, cfg.train);
        else if (sec.name == "adversarial") apply_adversarial(sec, cfg);
        else if (sec.name == "distill") apply_distill(sec, cfg.distill);
        else if (sec.name == "analysis") apply_analysis(sec, cfg.analysis);
        else if (sec.name == "attack") cfg.grid.push_back(apply_attack(sec));
        else fail(sec.line, "unknown section [" + sec.name + "]");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

void ExperimentConfig::validate() const {
    auto want = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    want(!name.empty(), "experiment name must be nonempty");
    want(!out_dir.empty(), "output directory must be nonempty");
    try {
        (void)model_by_id(arch, 784, 10, 0);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    want(dataset.per_class >= 1, "dataset per_class must be >= 1");
    want(dataset.classes >= 2, "dataset classes must be >= 2");
    want(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0, "test_fraction must be in (0,1)");
    want(dataset.dim >= 1, "blobs dim must be >= 1");
    want(dataset.separation > 0.0, "blobs separation must be positive");
    if (dataset.kind == DatasetSource::Kind::Idx) {
        want(!dataset.train_images.empty() && !dataset.train_labels.empty() && !dataset.test_images.empty() &&
                 !dataset.test_labels.empty(),
             "idx datasets need all four file paths");
    }
    try {
        train.validate();
        distill.validate();
        for (const AttackSpec& spec : grid) spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    want(adv_epsilon_linf > 0.0, "adversarial epsilon_linf must be positive");
    want(adv_epsilon_l2 > 0.0, "adversarial epsilon_l2 must be positive");
    want(adv_steps >= 1, "adversarial steps must be >= 1");
    want(analysis.svcca_batch >= 4, "svcca_batch must be >= 4");
    want(analysis.variance_keep > 0.0 && analysis.variance_keep <= 1.0, "variance_keep must be in (0,1]");
    want(analysis.boundary_samples >= 1, "boundary_samples must be >= 1");
    want(analysis.boundary_steps >= 1, "boundary_steps must be >= 1");
}

std::string ExperimentConfig::echo_json() const {
    nlohmann::json j;
    j["spec_version"] = 1;
    j["name"] = name;
    j["arch"] = arch;
    j["out"] = out_dir;
    j["seed"] = seed;

    nlohmann::json d;
    switch (dataset.kind) {
        case DatasetSource::Kind::Desk: d["source"] = "desk"; break;
        case DatasetSource::Kind::Blobs: d["source"] = "blobs"; break;
        case DatasetSource::Kind::Idx: d["source"] = "idx"; break;
    }
    if (dataset.kind == DatasetSource::Kind::Idx) {
        d["train_images"] = dataset.train_images;
        d["train_labels"] = dataset.train_labels;
        d["test_images"] = dataset.test_images;
        d["test_labels"] = dataset.test_labels;
    } else {
        d["per_class"] = dataset.per_class;
        d["classes"] = dataset.classes;
        d["test_fraction"] = dataset.test_fraction;
        if (dataset.kind == DatasetSource::Kind::Blobs) {
            d["dim"] = dataset.dim;
            d["separation"] = dataset.separation;
        }
    }
    j["dataset"] = d;

    j["train"] = {{"epochs", train.epochs},
                  {"batch", train.batch_size},
                  {"lr", train.lr},
                  {"momentum", train.momentum}};
    j["adversarial"] = {{"epsilon_linf", adv_epsilon_linf}, {"epsilon_l2", adv_epsilon_l2}, {"steps", adv_steps}};

    const char* init = distill.init == DistillConfig::Init::Noise        ? "noise"
                       : distill.init == DistillConfig::Init::OtherImage ? "other-image"
                                                                         : "target";
    j["distill"] = {{"steps", distill.steps}, {"lr", distill.lr}, {"init", init}};

    nlohmann::json attacks = nlohmann::json::array();
    for (const AttackSpec& s : grid) {
        attacks.push_back({{"kind", attack_kind_name(s.kind)},
                           {"norm", norm_name(s.norm)},
                           {"epsilon", s.epsilon},
                           {"steps", s.steps},
                           {"step_size", s.step_size},
                           {"random_start", s.random_start},
                           {"overshoot", s.overshoot},
                           {"confidence", s.cw_confidence}});
    }
    j["attacks"] = attacks;

    j["analysis"] = {{"svcca", analysis.svcca},
                     {"pca", analysis.pca},
                     {"ks", analysis.ks},
                     {"boundary", analysis.boundary},
                     {"svcca_batch", analysis.svcca_batch},
                     {"variance_keep", analysis.variance_keep},
                     {"boundary_samples", analysis.boundary_samples},
                     {"boundary_steps", analysis.boundary_steps},
                     {"include_no_attack", analysis.include_no_attack}};
    return j.dump(2);
}

}  // namespace advlab
