#include "earlyrec/pipeline.hpp"

#include "earlyrec/error.hpp"
#include "json_io.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace earlyrec {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Reads keys of one JSON object, remembering which were consumed so that
/// leftovers can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config key '" + display() + "' must be an object");
        }
    }

    template <typename T>
    void read(const std::string& key, T& dst) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) {
            return;
        }
        try {
            dst = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + name(key) + "' has the wrong type");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    Section child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(has(key) ? j_.at(key) : empty, name(key));
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown config key '" + name(key) + "'");
            }
        }
    }

private:
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
auto checked(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const InvalidInput& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

void read_generator(Section s, GeneratorSpec& g) {
    s.read("num_classes", g.num_classes);
    s.read("feature_dim", g.feature_dim);
    s.read("phases_per_class", g.phases_per_class);
    s.read("shared_prefix_len_range", g.shared_prefix_len_range);
    s.read("phase_len_range", g.phase_len_range);
    s.read("class_centroid_scale", g.class_centroid_scale);
    s.read("noise_std", g.noise_std);
    s.read("irrelevant_frame_prob", g.irrelevant_frame_prob);
    std::vector<std::pair<double, double>> durations;
    s.read("durations", durations);
    g.durations.clear();
    for (const auto& [mean, sd] : durations) {
        g.durations.push_back({mean, sd});
    }
    s.finish();
}

void read_train(Section s, TrainConfig& t) {
    s.read("learning_rate", t.learning_rate);
    s.read("momentum", t.momentum);
    s.read("weight_decay", t.weight_decay);
    s.read("epochs", t.epochs);
    s.read("hidden", t.hidden);
    s.read("patience", t.patience);
    s.read("checkpoint_every", t.checkpoint_every);
    s.read("lambda", t.loss.lambda);
    std::string text;
    if (s.has("classification")) {
        s.read("classification", text);
        t.loss.classification = checked(s.name("classification"),
                                        [&] { return classification_kind_from_string(text); });
    } else {
        s.read("classification", text);
    }
    if (s.has("future")) {
        s.read("future", text);
        t.loss.future = checked(s.name("future"), [&] { return future_loss_kind_from_string(text); });
    } else {
        s.read("future", text);
    }
    if (s.has("delta")) {
        s.read("delta", text);
        t.delta = checked(s.name("delta"), [&] { return delta_from_string(text); });
    } else {
        s.read("delta", text);
    }
    s.finish();
}

void read_encoder(Section s, EncoderTrainConfig& e) {
    std::string mode;
    if (s.has("mode")) {
        s.read("mode", mode);
        const auto m = checked(s.name("mode"), [&] { return finetune_mode_from_string(mode); });
        e = EncoderTrainConfig::defaults_for(m);
    } else {
        s.read("mode", mode);
    }
    s.read("embed_dim", e.embed_dim);
    s.read("dropout_prob", e.dropout_prob);
    s.read("segment_len", e.sampling.segment_len);
    s.read("per_segment", e.sampling.per_segment);
    s.read("learning_rate", e.learning_rate);
    s.read("momentum", e.momentum);
    s.read("weight_decay", e.weight_decay);
    s.read("epochs", e.epochs);
    s.read("max_steps", e.max_steps);
    s.finish();
}

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

void apply_override(json& root, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + spec + "' must look like key.path=value");
    }
    const std::string key = spec.substr(0, eq);
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw ConfigError("override key '" + key + "' has an empty component");
        }
        if (!node->is_object()) {
            throw ConfigError("override key '" + key + "' descends into a non-object");
        }
        if (dot == std::string::npos) {
            (*node)[part] = parse_override_value(spec.substr(eq + 1));
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) {
            *node = json::object();
        }
        start = dot + 1;
    }
}

} // namespace

RunConfig parse_run_config(json raw, const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed, std::optional<fs::path> out) {
    if (!raw.is_object()) {
        throw ConfigError("config root must be a JSON object");
    }
    for (const auto& o : overrides) {
        apply_override(raw, o);
    }
    if (seed) {
        raw["seed"] = *seed;
    }
    if (out) {
        raw["out"] = out->string();
    }

    RunConfig cfg;
    Section root(raw, "");
    root.read("seed", cfg.seed);
    std::string out_dir = cfg.out.string();
    root.read("out", out_dir);
    cfg.out = out_dir;

    {
        Section ds = root.child("dataset");
        std::string path;
        ds.read("path", path);
        if (!path.empty()) {
            cfg.dataset_path = path;
        }
        read_generator(ds.child("generator"), cfg.generator);
        ds.read("per_class_counts", cfg.per_class_counts);
        ds.finish();
    }
    read_encoder(root.child("encoder"), cfg.encoder);
    read_train(root.child("teacher"), cfg.teacher);
    read_train(root.child("student"), cfg.student);
    {
        Section ev = root.child("evaluate");
        ev.read("model", cfg.evaluate_model);
        ev.read("checkpoints", cfg.checkpoints);
        ev.read("num_checkpoints", cfg.num_checkpoints);
        ev.finish();
        if (cfg.evaluate_model != "teacher" && cfg.evaluate_model != "student") {
            throw ConfigError("config key 'evaluate.model' must be 'teacher' or 'student'");
        }
        if (cfg.num_checkpoints < 1) {
            throw ConfigError("config key 'evaluate.num_checkpoints' must be >= 1");
        }
    }
    {
        Section ab = root.child("ablate");
        if (ab.has("deltas")) {
            std::vector<std::string> deltas;
            ab.read("deltas", deltas);
            cfg.ablate.deltas.clear();
            for (const auto& d : deltas) {
                cfg.ablate.deltas.push_back(checked(ab.name("deltas"), [&] { return delta_from_string(d); }));
            }
        } else {
            std::vector<std::string> unused;
            ab.read("deltas", unused);
        }
        ab.read("lambdas", cfg.ablate.lambdas);
        if (ab.has("losses")) {
            std::vector<std::string> losses;
            ab.read("losses", losses);
            cfg.ablate.losses.clear();
            for (const auto& l : losses) {
                cfg.ablate.losses.push_back(
                    checked(ab.name("losses"), [&] { return future_loss_kind_from_string(l); }));
            }
        } else {
            std::vector<std::string> unused;
            ab.read("losses", unused);
        }
        ab.read("train_prefix_steps", cfg.ablate.train_prefix_steps);
        ab.finish();
    }
    {
        Section gc = root.child("gradcheck");
        gc.read("instances", cfg.gradcheck_instances);
        gc.finish();
    }
    root.finish();

    // One run seed drives every stochastic component; each uses its own sub-stream.
    cfg.generator.seed = cfg.seed;
    cfg.encoder.seed = cfg.seed;
    cfg.teacher.seed = cfg.seed;
    cfg.student.seed = cfg.seed;
    if (cfg.per_class_counts.empty()) {
        cfg.per_class_counts.assign(static_cast<std::size_t>(std::max(cfg.generator.num_classes, 0)), 10);
    }

    checked("dataset.generator", [&] { cfg.generator.validate(); return 0; });
    checked("encoder", [&] { cfg.encoder.validate(); return 0; });
    checked("teacher", [&] { cfg.teacher.validate(); return 0; });
    checked("student", [&] { cfg.student.validate(); return 0; });
    for (int k : cfg.ablate.train_prefix_steps) {
        if (k < 1) {
            throw ConfigError("config key 'ablate.train_prefix_steps' entries must be >= 1");
        }
    }
    if (cfg.gradcheck_instances < 1) {
        throw ConfigError("config key 'gradcheck.instances' must be >= 1");
    }
    cfg.effective = std::move(raw);
    return cfg;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed, std::optional<fs::path> out) {
    std::ifstream in(path);
    if (!in) {
        throw MissingArtifact("config file not found: " + path.string());
    }
    json raw;
    try {
        raw = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(std::move(raw), overrides, seed, std::move(out));
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string file_checksum(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingArtifact("cannot read " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return fnv1a_hex(buf.str());
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(cfg.effective.dump()); }

namespace {

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

class Stage {
public:
    Stage(std::string name, const RunConfig& cfg) : name_(std::move(name)), cfg_(cfg), paths_{cfg.out} {
        fs::create_directories(paths_.root);
    }

    const RunPaths& paths() const { return paths_; }

    fs::path require(const fs::path& p, const std::string& what) {
        if (!fs::exists(p)) {
            throw MissingArtifact(what + " required: " + p.string() + " does not exist");
        }
        inputs_[p.string()] = file_checksum(p);
        return p;
    }

    void produced(const fs::path& p) { outputs_[p.string()] = file_checksum(p); }

    void finish(json extra = json::object()) {
        const json manifest{
            {"subcommand", name_},
            {"config_hash", config_hash(cfg_)},
            {"seed", cfg_.seed},
            {"config", cfg_.effective},
            {"inputs", inputs_},
            {"outputs", outputs_},
            {"details", std::move(extra)},
            {"timestamp", utc_timestamp()},
        };
        detail::write_json(manifest, paths_.manifest(name_));
    }

private:
    std::string name_;
    const RunConfig& cfg_;
    RunPaths paths_;
    json inputs_ = json::object();
    json outputs_ = json::object();
};

fs::path dataset_file(const RunConfig& cfg) {
    return cfg.dataset_path ? *cfg.dataset_path : RunPaths{cfg.out}.dataset();
}

Dataset load_required_dataset(Stage& stage, const RunConfig& cfg) {
    return load_dataset(stage.require(dataset_file(cfg), "dataset file"));
}

std::vector<int> resolve_checkpoints(const RunConfig& cfg, const std::vector<FrameSequence>& test) {
    if (!cfg.checkpoints.empty()) {
        return cfg.checkpoints;
    }
    std::size_t shortest = test.front().length();
    for (const auto& s : test) {
        shortest = std::min(shortest, s.length());
    }
    return default_checkpoints(static_cast<int>(shortest), cfg.num_checkpoints);
}

void write_eval(const EvalReport& report, const fs::path& dir, Stage& stage) {
    fs::create_directories(dir);
    write_report(report, dir / "accuracy_curve.csv", dir / "report.json");
    stage.produced(dir / "accuracy_curve.csv");
    stage.produced(dir / "report.json");
}

int do_generate(const RunConfig& cfg) {
    Stage stage("generate", cfg);
    const Dataset d = generate_dataset(cfg.generator, cfg.per_class_counts);
    const fs::path out = stage.paths().dataset();
    save_dataset(d, out);
    stage.produced(out);
    stage.finish({{"sequences", d.sequences.size()}});
    return 0;
}

int do_finetune_encoder(const RunConfig& cfg) {
    Stage stage("finetune-encoder", cfg);
    const Dataset d = load_required_dataset(stage, cfg);
    const EncoderTrainResult r = finetune_encoder(d, cfg.encoder);
    save_encoder(r.model, stage.paths().encoder());
    stage.produced(stage.paths().encoder());
    const fs::path log = stage.paths().root / "encoder_log.csv";
    {
        std::ofstream out(log, std::ios::trunc);
        out.precision(17);
        out << "epoch,loss\n";
        for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
            out << e + 1 << ',' << r.epoch_loss[e] << '\n';
        }
    }
    stage.produced(log);
    stage.finish({{"mode", to_string(cfg.encoder.mode)}});
    return 0;
}

TrainCallbacks checkpoint_writer(const RunPaths& paths, const std::string& prefix) {
    TrainCallbacks cb;
    cb.on_checkpoint = [dir = paths.root / "checkpoints", prefix](int epoch, const RecurrentModel& m) {
        fs::create_directories(dir);
        save_model(m, dir / (prefix + "_epoch_" + std::to_string(epoch) + ".json"));
    };
    return cb;
}

int do_train_teacher(const RunConfig& cfg) {
    Stage stage("train-teacher", cfg);
    const Dataset d = load_required_dataset(stage, cfg);
    const EncoderModel enc = load_encoder(stage.require(stage.paths().encoder(), "encoder checkpoint"));
    const TrainResult r = train_teacher(d, enc, cfg.teacher, checkpoint_writer(stage.paths(), "teacher"));
    save_model(r.model, stage.paths().teacher());
    stage.produced(stage.paths().teacher());
    write_training_log(r.log, stage.paths().root / "teacher_log.csv");
    stage.produced(stage.paths().root / "teacher_log.csv");
    stage.finish({{"best_epoch", r.best_epoch}, {"epochs_run", r.epochs_run}});
    return 0;
}

int do_train_fsp(const RunConfig& cfg) {
    Stage stage("train-fsp", cfg);
    const fs::path teacher_path = stage.paths().teacher();
    if (!fs::exists(teacher_path)) {
        throw MissingArtifact("teacher checkpoint required: " + teacher_path.string() +
                              " does not exist (run train-teacher first)");
    }
    const Dataset d = load_required_dataset(stage, cfg);
    const EncoderModel enc = load_encoder(stage.require(stage.paths().encoder(), "encoder checkpoint"));
    const RecurrentModel teacher = load_model(stage.require(teacher_path, "teacher checkpoint"));
    const TrainResult r = train_fsp(d, enc, teacher, cfg.student, checkpoint_writer(stage.paths(), "student"));
    save_model(r.model, stage.paths().student());
    stage.produced(stage.paths().student());
    write_training_log(r.log, stage.paths().root / "student_log.csv");
    stage.produced(stage.paths().root / "student_log.csv");
    stage.finish({{"best_epoch", r.best_epoch}, {"epochs_run", r.epochs_run}});
    return 0;
}

int do_evaluate(const RunConfig& cfg) {
    Stage stage("evaluate", cfg);
    const Dataset d = load_required_dataset(stage, cfg);
    const EncoderModel enc = load_encoder(stage.require(stage.paths().encoder(), "encoder checkpoint"));
    const fs::path model_path = cfg.evaluate_model == "teacher" ? stage.paths().teacher() : stage.paths().student();
    const RecurrentModel model = load_model(stage.require(model_path, cfg.evaluate_model + " checkpoint"));
    const auto test = d.subset(Split::test);
    if (test.empty()) {
        throw InvalidInput("evaluate: the dataset has no test sequences");
    }
    const EvalReport report = evaluate(model, enc, test, resolve_checkpoints(cfg, test));
    write_eval(report, stage.paths().root / ("eval_" + cfg.evaluate_model), stage);
    stage.finish({{"model", cfg.evaluate_model}});
    return 0;
}

int do_gradcheck(const RunConfig& cfg) {
    Stage stage("gradcheck", cfg);
    const GradientSuiteResult r = run_gradient_suite(cfg.gradcheck_instances, cfg.seed);
    constexpr double kTolerance = 1e-4;
    json components = json::object();
    for (const auto& [name, err] : r.components) {
        components[name] = err;
        std::cout << (err < kTolerance ? "PASS " : "FAIL ") << name << " max_rel_error=" << err << '\n';
    }
    const bool ok = r.max_rel_error() < kTolerance;
    const fs::path out = stage.paths().root / "gradcheck.json";
    detail::write_json({{"instances", cfg.gradcheck_instances},
                        {"tolerance", kTolerance},
                        {"components", components},
                        {"redrawn", r.redrawn},
                        {"passed", ok}},
                       out);
    stage.produced(out);
    stage.finish();
    return ok ? 0 : 2;
}

Dataset truncate_training(const Dataset& d, int steps) {
    Dataset out = d;
    for (std::size_t i = 0; i < out.sequences.size(); ++i) {
        auto& f = out.sequences[i].features;
        if (out.splits[i] != Split::test && f.size() > static_cast<std::size_t>(steps)) {
            f.resize(static_cast<std::size_t>(steps));
        }
    }
    return out;
}

int do_ablate(const RunConfig& cfg) {
    Stage stage("ablate", cfg);
    const Dataset d = load_required_dataset(stage, cfg);
    const EncoderModel enc = load_encoder(stage.require(stage.paths().encoder(), "encoder checkpoint"));
    const RecurrentModel teacher = load_model(stage.require(stage.paths().teacher(), "teacher checkpoint"));
    const auto test = d.subset(Split::test);
    if (test.empty()) {
        throw InvalidInput("ablate: the dataset has no test sequences");
    }
    const auto checkpoints = resolve_checkpoints(cfg, test);
    const fs::path root = stage.paths().root / "ablate";

    std::ostringstream summary;
    summary.precision(17);
    summary << "cell,delta,lambda,loss";
    for (int c : checkpoints) {
        summary << ",acc@" << c;
    }
    summary << ",full_video\n";
    auto row = [&](const std::string& cell, const std::string& delta, const std::string& lambda,
                   const std::string& loss, const EvalReport& r) {
        summary << cell << ',' << delta << ',' << lambda << ',' << loss;
        for (double a : r.accuracy) {
            summary << ',' << a;
        }
        summary << ',' << r.full_video.overall << '\n';
        write_eval(r, root / cell, stage);
    };

    row("teacher", "", "", "", evaluate(teacher, enc, test, checkpoints));
    for (const Delta& delta : cfg.ablate.deltas) {
        for (double lambda : cfg.ablate.lambdas) {
            for (FutureLossKind loss : cfg.ablate.losses) {
                TrainConfig tc = cfg.student;
                tc.delta = delta;
                tc.loss.lambda = lambda;
                tc.loss.future = loss;
                const TrainResult r = train_fsp(d, enc, teacher, tc);
                std::ostringstream lam;
                lam << lambda;
                std::string cell = "fsp_" + to_string(delta) + "_lambda_" + lam.str() + "_" +
                                   std::string(to_string(loss));
                std::replace(cell.begin(), cell.end(), ':', '-');
                row(cell, to_string(delta), lam.str(), std::string(to_string(loss)),
                    evaluate(r.model, enc, test, checkpoints));
            }
        }
    }
    for (int steps : cfg.ablate.train_prefix_steps) {
        const Dataset truncated = truncate_training(d, steps);
        EncoderTrainConfig ec = cfg.encoder;
        ec.max_steps = steps;
        // Keep the number of sampled frames per sequence roughly constant.
        double mean_len = 0.0;
        const auto train_idx = d.indices(Split::train);
        for (std::size_t i : train_idx) {
            mean_len += static_cast<double>(d.sequences[i].length());
        }
        mean_len /= static_cast<double>(std::max<std::size_t>(1, train_idx.size()));
        if (steps < mean_len) {
            ec.sampling.segment_len = std::max(
                1, static_cast<int>(std::lround(ec.sampling.segment_len * steps / mean_len)));
        }
        const EncoderModel prefix_enc = finetune_encoder(truncated, ec).model;
        const TrainResult r = train_teacher(truncated, prefix_enc, cfg.teacher);
        row("prefix_" + std::to_string(steps), "", "", "", evaluate(r.model, prefix_enc, test, checkpoints));
    }

    fs::create_directories(root);
    const fs::path summary_path = root / "summary.csv";
    {
        std::ofstream out(summary_path, std::ios::trunc);
        out << summary.str();
    }
    stage.produced(summary_path);
    stage.finish();
    return 0;
}

} // namespace

int run_subcommand(const std::string& name, const RunConfig& cfg) {
    if (name == "generate") {
        return do_generate(cfg);
    }
    if (name == "finetune-encoder") {
        return do_finetune_encoder(cfg);
    }
    if (name == "train-teacher") {
        return do_train_teacher(cfg);
    }
    if (name == "train-fsp") {
        return do_train_fsp(cfg);
    }
    if (name == "evaluate") {
        return do_evaluate(cfg);
    }
    if (name == "gradcheck") {
        return do_gradcheck(cfg);
    }
    if (name == "ablate") {
        return do_ablate(cfg);
    }
    throw ConfigError("unknown subcommand '" + name + "'");
}

} // namespace earlyrec
