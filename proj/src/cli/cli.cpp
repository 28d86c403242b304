#include "mpisentinel/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpisentinel/corpus.hpp"
#include "mpisentinel/embed.hpp"
#include "mpisentinel/error.hpp"
#include "mpisentinel/eval.hpp"
#include "mpisentinel/gnn.hpp"
#include "mpisentinel/graph.hpp"
#include "mpisentinel/ir.hpp"
#include "mpisentinel/ml.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mpisentinel::cli {

Environment process_environment() {
    Environment env;
    for (const char* name : {"MPISENTINEL_COMPILER_CMD", "MPISENTINEL_JOBS"})
        if (const char* v = std::getenv(name)) env[name] = v;
    return env;
}

namespace {

enum class Kind { String, Int, UInt, Bool, Suite, StringList };

/// A flag that, when given, writes its typed value at a JSON pointer.
struct Flag {
    std::string pointer;
    Kind kind;
    CLI::Option* option = nullptr;
    std::shared_ptr<std::string> value = std::make_shared<std::string>();
    std::shared_ptr<std::vector<std::string>> values = std::make_shared<std::vector<std::string>>();
};

std::string suite_name(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "mbi") return "MBI";
    if (s == "corrbench") return "CorrBench";
    if (s == "other") return "Other";
    throw Error("ConfigError", "unknown suite '" + s + "' (expected mbi or corrbench)");
}

json typed(const std::string& flag, Kind kind, const std::string& v) {
    try {
        std::size_t used = 0;
        switch (kind) {
            case Kind::String: return v;
            case Kind::Suite: return suite_name(v);
            case Kind::Bool:
                if (v == "on" || v == "true") return true;
                if (v == "off" || v == "false") return false;
                break;
            case Kind::Int: {
                const long long x = std::stoll(v, &used);
                if (used == v.size()) return x;
                break;
            }
            case Kind::UInt: {
                if (!v.empty() && v[0] == '-') break;
                const unsigned long long x = std::stoull(v, &used);
                if (used == v.size()) return x;
                break;
            }
            case Kind::StringList: return v;
        }
    } catch (const std::logic_error&) {
    }
    throw Error("ConfigError", "invalid value '" + v + "' for " + flag);
}

class Flags {
public:
    explicit Flags(CLI::App* app) : app_(app) {}

    void add(const std::string& name, const std::string& pointer, Kind kind, const std::string& help) {
        Flag f;
        f.pointer = pointer;
        f.kind = kind;
        if (kind == Kind::StringList)
            f.option = app_->add_option(name, *f.values, help);
        else
            f.option = app_->add_option(name, *f.value, help);
        flags_.push_back(std::move(f));
    }

    /// Writes every given flag into `target`.
    void apply(json& target) const {
        for (const Flag& f : flags_) {
            if (f.option->count() == 0) continue;
            const std::string name = f.option->get_name();
            if (f.kind == Kind::StringList) {
                json arr = json::array();
                for (const std::string& v : *f.values) arr.push_back(v);
                target[json::json_pointer(f.pointer)] = std::move(arr);
            } else {
                target[json::json_pointer(f.pointer)] = typed(name, f.kind, *f.value);
            }
        }
    }

private:
    CLI::App* app_;
    std::vector<Flag> flags_;
};

void add_scenario_flags(Flags& f) {
    f.add("--manifest", "/manifest", Kind::String, "Manifest JSON produced by ingest");
    f.add("--scenario", "/scenario", Kind::String, "intra, mix or cross");
    f.add("--backend", "/backend", Kind::String, "ir2vec-dt or gnn");
    f.add("--labels", "/labels", Kind::String, "binary or error-type");
    f.add("--normalization", "/normalization", Kind::String, "none, vector or index");
    f.add("--ga", "/ga", Kind::Bool, "GA feature selection: on or off");
    f.add("--ga-population", "/ga_population", Kind::Int, "GA population size");
    f.add("--ga-generations", "/ga_generations", Kind::Int, "GA generations");
    f.add("--folds", "/folds", Kind::Int, "Cross-validation folds");
    f.add("--seed", "/seed", Kind::UInt, "Seed for folds, GA and GNN initialization");
    f.add("--embedding-seed", "/embedding_seed", Kind::UInt, "Seed of the embedding vocabulary");
    f.add("--suite", "/suite", Kind::Suite, "Intra suite: mbi or corrbench");
    f.add("--train-suite", "/train_suite", Kind::Suite, "Cross training suite");
    f.add("--validate-suite", "/validate_suite", Kind::Suite, "Cross validation suite");
    f.add("--opt", "/opt", Kind::String, "Optimization level of the samples: O0, O2 or Os");
    f.add("--specificity-formula", "/specificity_formula", Kind::String, "standard or paper-literal");
    f.add("--epochs", "/gnn/epochs", Kind::Int, "GNN training epochs");
    f.add("--lr", "/gnn/lr", Kind::String, "GNN learning rate");
    f.add("--jobs", "/jobs", Kind::UInt, "Worker threads (0: one per core)");
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("ConfigError", path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("IoError", "cannot write " + path.string());
}

std::string json_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

void warn(std::ostream& err, const std::string& kind, const std::string& message) {
    err << json_line(json{{"warning", kind}, {"message", message}}) << '\n';
}

/// Defaults, then the --config file, then the environment, then flags.
json resolve_settings(json settings, const std::string& config_path, const Environment& env, const Flags& flags,
                      bool compiler_from_env) {
    if (!config_path.empty()) {
        json file = read_json_file(config_path);
        if (file.is_object() && file.contains("config") && file["config"].is_object()) file = file["config"];
        if (!file.is_object()) throw Error("ConfigError", "--config must hold a JSON object");
        for (const auto& [key, value] : file.items())
            if (!settings.contains(key)) throw Error("ConfigError", "unknown config key '" + key + "'");
        settings.merge_patch(file);
    }
    if (auto it = env.find("MPISENTINEL_JOBS"); it != env.end() && !it->second.empty())
        settings["jobs"] = typed("MPISENTINEL_JOBS", Kind::UInt, it->second);
    if (compiler_from_env)
        if (auto it = env.find("MPISENTINEL_COMPILER_CMD"); it != env.end() && !it->second.empty())
            settings["compiler_cmd"] = it->second;
    flags.apply(settings);
    return settings;
}

unsigned jobs_of(const json& s) {
    if (!s.contains("jobs") || s["jobs"].is_null()) return 0;
    if (!s["jobs"].is_number_unsigned() && !s["jobs"].is_number_integer())
        throw Error("ConfigError", "jobs must be a non-negative integer");
    const long long j = s["jobs"].get<long long>();
    if (j < 0) throw Error("ConfigError", "jobs must be a non-negative integer");
    return static_cast<unsigned>(j);
}

std::string required_string(const json& s, const std::string& key, const std::string& flag) {
    if (!s.contains(key) || !s[key].is_string() || s[key].get<std::string>().empty())
        throw Error("ConfigError", "missing " + flag);
    return s[key].get<std::string>();
}

json scenario_defaults() {
    json d = eval::to_json(eval::ScenarioConfig{});
    d["manifest"] = nullptr;
    d["jobs"] = 0;
    return d;
}

eval::ScenarioConfig scenario_from_settings(json settings) {
    if (settings.contains("gnn") && settings["gnn"].contains("lr") && settings["gnn"]["lr"].is_string()) {
        const std::string lr = settings["gnn"]["lr"].get<std::string>();
        try {
            std::size_t used = 0;
            settings["gnn"]["lr"] = std::stod(lr, &used);
            if (used != lr.size()) throw std::invalid_argument(lr);
        } catch (const std::logic_error&) {
            throw Error("ConfigError", "invalid value '" + lr + "' for --lr");
        }
    }
    eval::ScenarioConfig cfg = eval::scenario_config_from_json(settings);
    cfg.jobs = jobs_of(settings);
    cfg.validate();
    return cfg;
}

std::string fmt(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

// ---------------------------------------------------------------- commands

struct Command {
    CLI::App* app = nullptr;
    std::unique_ptr<Flags> flags;
    std::string config_path;
};

int cmd_ingest(const Command& c, const std::string& out_path, std::ostream& out, std::ostream& err,
               const Environment& env) {
    const json defaults{{"suite", "MBI"},
                        {"dir", nullptr},
                        {"opt", json::array({"O0"})},
                        {"compiler_cmd", "none"},
                        {"timeout", 120},
                        {"header_pattern", corpus::kDefaultMbiHeaderPattern},
                        {"suite_version", "unspecified"},
                        {"work_dir", nullptr},
                        {"jobs", 0}};
    const json s = resolve_settings(defaults, c.config_path, env, *c.flags, true);
    corpus::IngestOptions o;
    try {
        o.suite = corpus::suite_from_string(s.at("suite").get<std::string>());
        o.opts.clear();
        const json opts = s.at("opt").is_array() ? s.at("opt") : json::array({s.at("opt")});
        for (const json& v : opts) o.opts.push_back(corpus::opt_from_string(v.get<std::string>()));
        o.compile.command = s.at("compiler_cmd").get<std::string>();
        const long long timeout = s.at("timeout").get<long long>();
        if (timeout <= 0) throw Error("ConfigError", "timeout must be positive");
        o.compile.timeout = std::chrono::seconds(timeout);
        o.header_pattern = s.at("header_pattern").get<std::string>();
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("bad ingest settings: ") + e.what());
    }
    const fs::path dir = required_string(s, "dir", "--dir");
    if (out_path.empty()) throw Error("ConfigError", "missing --out");
    o.work_dir = s["work_dir"].is_string() ? fs::path(s["work_dir"].get<std::string>())
                                           : fs::path(out_path + ".work");
    o.jobs = jobs_of(s);

    corpus::IngestResult r = corpus::ingest(dir, o);
    r.manifest.provenance["suite_version"] = s["suite_version"];
    r.manifest.provenance["timeout_seconds"] = o.compile.timeout.count();
    corpus::write_manifest(r.manifest, out_path);
    if (r.sources_found == 0) warn(err, "EmptyCorpus", "no sources found under " + dir.string());
    out << "sources: " << r.sources_found << "\nsamples: " << r.manifest.samples.size() << "\nlabeled: " << r.labeled
        << "\nquarantined: " << r.quarantined << "\ncompile errors: " << r.compile_errors << "\nmanifest: " << out_path
        << '\n';
    return kExitOk;
}

void print_metrics(std::ostream& out, const eval::MetricsReport& m) {
    const eval::ConfusionCounts& c = m.counts;
    out << "counts: tp=" << c.tp << " tn=" << c.tn << " fp=" << c.fp << " fn=" << c.fn << " ce=" << c.ce
        << " to=" << c.to << " re=" << c.re << '\n';
    out << "recall " << fmt(m.recall) << "  precision " << fmt(m.precision) << "  f1 " << fmt(m.f1) << "  accuracy "
        << fmt(m.accuracy) << '\n';
    out << "coverage " << fmt(m.coverage) << "  conclusiveness " << fmt(m.conclusiveness) << "  specificity "
        << fmt(m.specificity) << "  overall accuracy " << fmt(m.overall_accuracy) << '\n';
}

int cmd_evaluate(const Command& c, const std::string& report_path, std::ostream& out, std::ostream& err,
                 const Environment& env) {
    const json s = resolve_settings(scenario_defaults(), c.config_path, env, *c.flags, false);
    const eval::ScenarioConfig cfg = scenario_from_settings(s);
    const std::string manifest_path = required_string(s, "manifest", "--manifest");
    const eval::ScenarioReport report = eval::run_scenario(corpus::read_manifest(manifest_path), cfg);
    json j = eval::to_json(report);
    j["config"]["manifest"] = manifest_path;
    const std::string text = j.dump(2) + "\n";
    if (report_path.empty()) {
        out << text;
    } else {
        write_text(report_path, text);
        print_metrics(out, eval::metrics(report.aggregate, cfg.specificity));
        out << "report: " << report_path << '\n';
    }
    for (const eval::SampleFailure& f : report.failures)
        err << json_line(json{{"warning", "SampleFailure"}, {"id", f.id}, {"kind", f.kind}, {"message", f.message}})
            << '\n';
    return report.failures.empty() ? kExitOk : kExitSampleFailures;
}

int cmd_ablate(const Command& c, const std::string& report_path, std::ostream& out, std::ostream& err,
               const Environment& env) {
    json defaults = scenario_defaults();
    defaults["exclude"] = json::array();
    const json s = resolve_settings(defaults, c.config_path, env, *c.flags, false);
    json scenario = s;
    scenario.erase("exclude");
    const eval::ScenarioConfig cfg = scenario_from_settings(scenario);
    const std::string manifest_path = required_string(s, "manifest", "--manifest");
    std::vector<corpus::ErrorLabel> excluded;
    for (const json& v : s["exclude"]) {
        if (!v.is_string()) throw Error("ConfigError", "exclude entries must be label names");
        excluded.push_back(corpus::label_from_string(v.get<std::string>()));
    }
    const eval::AblationReport report = eval::ablation(corpus::read_manifest(manifest_path), excluded, cfg);
    json j = eval::to_json(report);
    j["config"]["manifest"] = manifest_path;
    j["config"]["exclude"] = s["exclude"];
    const std::string text = j.dump(2) + "\n";
    if (report_path.empty()) {
        out << text;
    } else {
        write_text(report_path, text);
        for (const eval::AblationRow& row : report.rows)
            out << corpus::to_string(row.label) << ": " << row.predicted_incorrect << "/" << row.total
                << " predicted incorrect (accuracy " << fmt(row.accuracy) << ")\n";
        out << "report: " << report_path << '\n';
    }
    for (const eval::SampleFailure& f : report.failures)
        err << json_line(json{{"warning", "SampleFailure"}, {"id", f.id}, {"kind", f.kind}, {"message", f.message}})
            << '\n';
    return report.failures.empty() ? kExitOk : kExitSampleFailures;
}

int cmd_train(const Command& c, const std::string& model_path, const std::string& ga_log,
              const std::string& loss_log, std::ostream& out, std::ostream& err, const Environment& env) {
    const json s = resolve_settings(scenario_defaults(), c.config_path, env, *c.flags, false);
    const eval::ScenarioConfig cfg = scenario_from_settings(s);
    const std::string manifest_path = required_string(s, "manifest", "--manifest");
    if (model_path.empty()) throw Error("ConfigError", "missing --model");
    const eval::TrainOutput t = eval::train_model(corpus::read_manifest(manifest_path), cfg);
    write_text(model_path, t.model.dump(2) + "\n");
    if (!ga_log.empty()) ml::write_ga_log_csv(ga_log, t.ga_log);
    if (!loss_log.empty()) gnn::write_loss_log_csv(loss_log, t.epoch_loss);
    for (const eval::SampleFailure& f : t.failures)
        err << json_line(json{{"warning", "SampleFailure"}, {"id", f.id}, {"kind", f.kind}, {"message", f.message}})
            << '\n';
    out << "trained on " << t.trained_on << " samples\nmodel: " << model_path << '\n';
    return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& ir_path, std::ostream& out) {
    if (model_path.empty()) throw Error("ConfigError", "missing --model");
    if (ir_path.empty()) throw Error("ConfigError", "missing --ir");
    const json j = read_json_file(model_path);
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw SchemaViolation("/kind", "model checkpoint without kind");
    const std::string kind = j["kind"].get<std::string>();
    const ir::Module module = ir::parse_ir_file(ir_path);
    json result;
    if (kind == "ir2vec-dt") {
        const ml::TabularModel model = ml::tabular_model_from_json(j);
        const embed::SeedVocab vocab(model.seed);
        const Eigen::MatrixXd x = embed::embed(module, vocab).values.transpose();
        const ml::TreeNode& leaf = model.tree.leaf(model.features(x).row(0));
        json counts = json::object();
        for (std::size_t i = 0; i < model.tree.label_space.size(); ++i)
            counts[model.tree.label_space[i]] = i < leaf.class_counts.size() ? leaf.class_counts[i] : 0;
        result = {{"label", model.tree.label_space[static_cast<std::size_t>(leaf.label)]},
                  {"class_counts", std::move(counts)}};
    } else if (kind == "gnn") {
        const gnn::GnnModel model = gnn::gnn_model_from_json(j);
        const Eigen::RowVectorXd logits = gnn::forward(model, graph::build_graph(module));
        const Eigen::RowVectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
        const Eigen::RowVectorXd probs = p / p.sum();
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        json pj = json::object();
        for (std::size_t i = 0; i < model.label_space().size(); ++i)
            pj[model.label_space()[i]] = probs[static_cast<Eigen::Index>(i)];
        result = {{"label", model.label_space()[static_cast<std::size_t>(best)]}, {"probabilities", std::move(pj)}};
    } else {
        throw SchemaViolation("/kind", "unknown model kind '" + kind + "'");
    }
    out << result.dump() << '\n';
    return kExitOk;
}

int cmd_embed(const std::vector<std::string>& irs, const std::string& manifest_path, const std::string& out_path,
              std::uint64_t seed, const std::string& normalization, std::ostream& out, std::ostream& err) {
    if (out_path.empty()) throw Error("ConfigError", "missing --out");
    std::vector<std::pair<std::string, std::string>> inputs;  // (id, ir path)
    for (const std::string& p : irs) inputs.emplace_back(p, p);
    if (!manifest_path.empty())
        for (const corpus::CorpusSample& s : corpus::read_manifest(manifest_path).samples)
            if (!s.quarantined && s.ir_path) inputs.emplace_back(s.id, s.ir_path->string());
    if (inputs.empty()) throw Error("ConfigError", "nothing to embed: give --ir or --manifest");
    const embed::Normalization strategy = embed::normalization_from_string(normalization);
    const embed::SeedVocab vocab(seed);
    std::vector<embed::EmbeddingVector> vectors;
    for (const auto& [id, path] : inputs) {
        embed::EmbeddingVector v = embed::embed(ir::parse_ir_file(path), vocab);
        v.source_id = id;
        if (v.warning) warn(err, "NonConvergence", id + ": " + *v.warning);
        vectors.push_back(std::move(v));
    }
    embed::Normalizer n(strategy);
    const Eigen::MatrixXd X = embed::stack(vectors);
    n.fit(X);
    const Eigen::MatrixXd Xn = n.transform(X);
    for (std::size_t i = 0; i < vectors.size(); ++i)
        vectors[i].values = Xn.row(static_cast<Eigen::Index>(i)).transpose();
    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
    embed::write_embeddings_csv(out_path, vectors);
    embed::EmbeddingInfo info;
    info.seed = seed;
    info.normalization = strategy;
    embed::write_embedding_sidecar(out_path, info);
    out << "embedded " << vectors.size() << " modules\nembeddings: " << out_path << '\n';
    return kExitOk;
}

int cmd_graph(const std::string& ir_path, const std::string& out_path, std::ostream& out) {
    if (ir_path.empty()) throw Error("ConfigError", "missing --ir");
    const graph::ProgramGraph g = graph::build_graph(ir::parse_ir_file(ir_path));
    const std::string text = graph::to_json(g).dump(2) + "\n";
    if (out_path.empty())
        out << text;
    else
        write_text(out_path, text);
    return kExitOk;
}

json error_json(const Error& e) {
    json j{{"error", e.kind()}, {"message", e.what()}};
    if (const auto* sv = dynamic_cast<const SchemaViolation*>(&e)) j["pointer"] = sv->pointer();
    if (const auto* mi = dynamic_cast<const MalformedIr*>(&e)) j["line"] = mi->line();
    return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Environment& env) {
    CLI::App app{"mpisentinel: MPI bug detection from LLVM IR with embeddings and graph neural networks",
                 "mpisentinel"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mpisentinel 0.1.0");

    std::map<std::string, Command> commands;
    auto command = [&](const std::string& name, const std::string& help) -> Command& {
        Command& c = commands[name];
        c.app = app.add_subcommand(name, help);
        c.flags = std::make_unique<Flags>(c.app);
        return c;
    };

    std::string out_path, report_path, model_path, ga_log, loss_log, ir_path, manifest_path, normalization = "none";
    std::vector<std::string> irs;
    std::uint64_t seed = 0;

    Command& ingest = command("ingest", "Label a corpus and compile it to IR into a manifest");
    ingest.flags->add("--suite", "/suite", Kind::Suite, "mbi or corrbench");
    ingest.flags->add("--dir", "/dir", Kind::String, "Corpus directory");
    ingest.flags->add("--opt", "/opt", Kind::StringList, "Optimization level O0, O2 or Os (repeatable)");
    ingest.flags->add("--compiler-cmd", "/compiler_cmd", Kind::String,
                      "Template with {source}, {output}, {opt}; 'none' uses precompiled .ll files");
    ingest.flags->add("--timeout", "/timeout", Kind::Int, "Compile timeout in seconds");
    ingest.flags->add("--header-pattern", "/header_pattern", Kind::String, "MBI descriptor regex");
    ingest.flags->add("--suite-version", "/suite_version", Kind::String, "Suite version recorded in provenance");
    ingest.flags->add("--work-dir", "/work_dir", Kind::String, "Directory for compiled IR");
    ingest.flags->add("--jobs", "/jobs", Kind::UInt, "Parallel compilations (0: one per core)");
    ingest.app->add_option("--out", out_path, "Manifest output path");

    Command& evaluate = command("evaluate", "Run a cross-validation scenario and write a report");
    add_scenario_flags(*evaluate.flags);
    evaluate.app->add_option("--report", report_path, "Report output path (stdout when absent)");

    Command& ablate = command("ablate", "Exclude one or two labels from training and measure detection");
    add_scenario_flags(*ablate.flags);
    ablate.flags->add("--exclude", "/exclude", Kind::StringList, "Label to exclude (repeatable, at most 2)");
    ablate.app->add_option("--report", report_path, "Report output path (stdout when absent)");

    Command& train = command("train", "Train one model on all evaluable samples");
    add_scenario_flags(*train.flags);
    train.app->add_option("--model", model_path, "Model output path");
    train.app->add_option("--ga-log", ga_log, "Per-generation GA log CSV");
    train.app->add_option("--loss-log", loss_log, "Per-epoch GNN loss CSV");

    Command& predict = command("predict", "Predict the label of one IR file");
    predict.app->add_option("--model", model_path, "Model checkpoint");
    predict.app->add_option("--ir", ir_path, "Textual LLVM IR file");

    Command& embed_cmd = command("embed", "Write embeddings of IR files to CSV");
    embed_cmd.app->add_option("--ir", irs, "IR file (repeatable)");
    embed_cmd.app->add_option("--manifest", manifest_path, "Embed every compiled sample of a manifest");
    embed_cmd.app->add_option("--out", out_path, "CSV output path; a .json sidecar is written next to it");
    embed_cmd.app->add_option("--seed", seed, "Embedding seed");
    embed_cmd.app->add_option("--normalization", normalization, "none, vector or index");

    Command& graph_cmd = command("graph", "Write the program graph of an IR file as JSON");
    graph_cmd.app->add_option("--ir", ir_path, "Textual LLVM IR file");
    graph_cmd.app->add_option("--out", out_path, "Output path (stdout when absent)");

    for (const char* name : {"ingest", "evaluate", "ablate", "train"})
        commands[name].app->add_option("--config", commands[name].config_path,
                                       "JSON settings file; a report's config block is accepted");

    std::string active = "";
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        for (const auto& [name, c] : commands)
            if (c.app->parsed()) active = name;
        if (active == "ingest") return cmd_ingest(ingest, out_path, out, err, env);
        if (active == "evaluate") return cmd_evaluate(evaluate, report_path, out, err, env);
        if (active == "ablate") return cmd_ablate(ablate, report_path, out, err, env);
        if (active == "train") return cmd_train(train, model_path, ga_log, loss_log, out, err, env);
        if (active == "predict") return cmd_predict(model_path, ir_path, out);
        if (active == "embed") return cmd_embed(irs, manifest_path, out_path, seed, normalization, out, err);
        if (active == "graph") return cmd_graph(ir_path, out_path, out);
        throw Error("ConfigError", "no subcommand");
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = &app;
        for (const auto& [name, c] : commands)
            if (c.app->parsed()) target = c.app;
        out << target->help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << json_line(json{{"error", "UsageError"}, {"message", e.what()}}) << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        json j = error_json(e);
        if (!active.empty()) j["command"] = active;
        err << json_line(j) << '\n';
        return e.kind() == "InternalError" ? kExitInternal : kExitUsage;
    } catch (const std::exception& e) {
        json j{{"error", "InternalError"}, {"message", e.what()}};
        if (!active.empty()) j["command"] = active;
        err << json_line(j) << '\n';
        return kExitInternal;
    }
}

}  // namespace mpisentinel::cli
