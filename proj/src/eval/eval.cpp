#include "mpisentinel/eval.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "mpisentinel/error.hpp"
#include "mpisentinel/graph.hpp"
#include "mpisentinel/ir.hpp"
#include "mpisentinel/parallel.hpp"

using nlohmann::json;

namespace mpisentinel::eval {

using corpus::CorpusSample;
using corpus::Manifest;

// ---------------------------------------------------------------- metrics

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    ce += o.ce;
    to += o.to;
    re += o.re;
    return *this;
}

ConfusionCounts confusion(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& truth,
                          const ErrorCounts& errors) {
    if (preds.size() != truth.size())
        throw Error("LengthMismatch", std::to_string(preds.size()) + " predictions for " +
                                          std::to_string(truth.size()) + " labels");
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool predicted_error = preds[i] == BinaryLabel::Incorrect;
        const bool has_error = truth[i] == BinaryLabel::Incorrect;
        if (predicted_error && has_error)
            ++c.tp;
        else if (!predicted_error && !has_error)
            ++c.tn;
        else if (predicted_error)
            ++c.fp;
        else
            ++c.fn;
    }
    c.ce = errors.ce;
    c.to = errors.to;
    c.re = errors.re;
    return c;
}

std::string_view to_string(SpecificityFormula f) {
    return f == SpecificityFormula::Standard ? "standard" : "paper-literal";
}

SpecificityFormula specificity_formula_from_string(std::string_view s) {
    if (s == "standard") return SpecificityFormula::Standard;
    if (s == "paper-literal") return SpecificityFormula::PaperLiteral;
    throw Error("ConfigError", "unknown specificity formula '" + std::string(s) + "'");
}

namespace {

std::optional<double> ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

}  // namespace

MetricsReport metrics(const ConfusionCounts& c, SpecificityFormula specificity) {
    MetricsReport m;
    m.counts = c;
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double total = static_cast<double>(c.total()), errors = static_cast<double>(c.errors());
    m.recall = ratio(tp, tp + fn);
    m.precision = ratio(tp, tp + fp);
    if (m.recall && m.precision && *m.precision + *m.recall > 0.0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    m.accuracy = ratio(tp + tn, total);
    if (total + errors > 0.0) {
        m.coverage = 1.0 - static_cast<double>(c.ce) / (total + errors);
        m.conclusiveness = 1.0 - errors / (total + errors);
        m.overall_accuracy = (tp + tn) / (total + errors);
    }
    m.specificity = ratio(tn, tn + fp);
    if (m.specificity && specificity == SpecificityFormula::PaperLiteral) m.specificity = 1.0 - *m.specificity;
    return m;
}

json to_json(const ConfusionCounts& c) {
    return json{{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"ce", c.ce}, {"to", c.to}, {"re", c.re}};
}

ConfusionCounts confusion_from_json(const json& j) {
    ConfusionCounts c;
    try {
        c.tp = j.at("tp").get<std::size_t>();
        c.tn = j.at("tn").get<std::size_t>();
        c.fp = j.at("fp").get<std::size_t>();
        c.fn = j.at("fn").get<std::size_t>();
        c.ce = j.value("ce", std::size_t{0});
        c.to = j.value("to", std::size_t{0});
        c.re = j.value("re", std::size_t{0});
    } catch (const json::exception& e) {
        throw SchemaViolation("", std::string("bad counts: ") + e.what());
    }
    return c;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const MetricsReport& m) {
    return json{{"recall", opt_json(m.recall)},
                {"precision", opt_json(m.precision)},
                {"f1", opt_json(m.f1)},
                {"accuracy", opt_json(m.accuracy)},
                {"coverage", opt_json(m.coverage)},
                {"conclusiveness", opt_json(m.conclusiveness)},
                {"specificity", opt_json(m.specificity)},
                {"overall_accuracy", opt_json(m.overall_accuracy)}};
}

// ---------------------------------------------------------------- folds

FoldPlan make_folds(const std::vector<std::string>& ids, const std::vector<std::string>& labels, std::size_t k,
                    std::uint64_t seed) {
    if (ids.size() != labels.size()) throw Error("LengthMismatch", "ids and labels differ in length");
    if (k < 2) throw Error("ConfigError", "fold count must be at least 2");
    if (ids.size() < k)
        throw Error("TooFewSamples", std::to_string(ids.size()) + " samples for " + std::to_string(k) + " folds");
    std::vector<std::string> distinct(labels);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<int> y;
    for (const std::string& l : labels)
        y.push_back(static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), l) - distinct.begin()));
    FoldPlan plan;
    for (const auto& fold : ml::stratified_folds(y, ids, k, seed)) {
        std::vector<std::string> f;
        for (std::size_t r : fold) f.push_back(ids[r]);
        plan.folds.push_back(std::move(f));
    }
    return plan;
}

FoldPlan make_folds(const std::vector<CorpusSample>& samples, std::size_t k, std::uint64_t seed) {
    std::vector<std::string> ids, labels;
    for (const CorpusSample& s : samples) {
        if (s.quarantined || !s.label) continue;
        ids.push_back(s.id);
        labels.emplace_back(corpus::to_string(*s.label));
    }
    return make_folds(ids, labels, k, seed);
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(fold) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------- config

std::string_view to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::Intra: return "intra";
        case ScenarioKind::Mix: return "mix";
        case ScenarioKind::Cross: return "cross";
    }
    return "intra";
}

std::string_view to_string(Backend b) { return b == Backend::IrVecDt ? "ir2vec-dt" : "gnn"; }
std::string_view to_string(LabelMode m) { return m == LabelMode::Binary ? "binary" : "error-type"; }

ScenarioKind scenario_from_string(std::string_view s) {
    if (s == "intra") return ScenarioKind::Intra;
    if (s == "mix") return ScenarioKind::Mix;
    if (s == "cross") return ScenarioKind::Cross;
    throw Error("ConfigError", "unknown scenario '" + std::string(s) + "'");
}

Backend backend_from_string(std::string_view s) {
    if (s == "ir2vec-dt") return Backend::IrVecDt;
    if (s == "gnn") return Backend::Gnn;
    throw Error("ConfigError", "unknown backend '" + std::string(s) + "'");
}

LabelMode label_mode_from_string(std::string_view s) {
    if (s == "binary") return LabelMode::Binary;
    if (s == "error-type") return LabelMode::ErrorType;
    throw Error("ConfigError", "unknown label mode '" + std::string(s) + "'");
}

void ScenarioConfig::validate() const {
    if (kind == ScenarioKind::Cross && labels != LabelMode::Binary)
        throw Error("ConfigError", "cross scenario supports binary labels only");
    if (kind != ScenarioKind::Cross && folds < 2) throw Error("ConfigError", "fold count must be at least 2");
    if (ga && (ga_population < 2 || ga_generations < 0)) throw Error("ConfigError", "invalid GA population/generations");
    try {
        gnn.validate();
    } catch (const Error& e) {
        throw Error("ConfigError", e.what());
    }
}

json to_json(const ScenarioConfig& c) {
    return json{{"scenario", to_string(c.kind)},
                {"suite", c.suite ? json(corpus::to_string(*c.suite)) : json(nullptr)},
                {"train_suite", corpus::to_string(c.train_suite)},
                {"validate_suite", corpus::to_string(c.validate_suite)},
                {"backend", to_string(c.backend)},
                {"labels", to_string(c.labels)},
                {"normalization", embed::to_string(c.normalization)},
                {"opt", corpus::to_string(c.opt)},
                {"ga", c.ga},
                {"ga_population", c.ga_population},
                {"ga_generations", c.ga_generations},
                {"folds", c.folds},
                {"seed", c.seed},
                {"embedding_seed", c.embedding_seed},
                {"specificity_formula", to_string(c.specificity)},
                {"gnn", gnn::to_json(c.gnn)}};
}

ScenarioConfig scenario_config_from_json(const json& j) {
    if (!j.is_object()) throw Error("ConfigError", "scenario config must be a JSON object");
    ScenarioConfig c;
    try {
        if (j.contains("scenario")) c.kind = scenario_from_string(j["scenario"].get<std::string>());
        if (j.contains("suite") && !j["suite"].is_null())
            c.suite = corpus::suite_from_string(j["suite"].get<std::string>());
        if (j.contains("train_suite")) c.train_suite = corpus::suite_from_string(j["train_suite"].get<std::string>());
        if (j.contains("validate_suite"))
            c.validate_suite = corpus::suite_from_string(j["validate_suite"].get<std::string>());
        if (j.contains("backend")) c.backend = backend_from_string(j["backend"].get<std::string>());
        if (j.contains("labels")) c.labels = label_mode_from_string(j["labels"].get<std::string>());
        if (j.contains("normalization"))
            c.normalization = embed::normalization_from_string(j["normalization"].get<std::string>());
        if (j.contains("opt")) c.opt = corpus::opt_from_string(j["opt"].get<std::string>());
        if (j.contains("ga")) c.ga = j["ga"].get<bool>();
        if (j.contains("ga_population")) c.ga_population = j["ga_population"].get<int>();
        if (j.contains("ga_generations")) c.ga_generations = j["ga_generations"].get<int>();
        if (j.contains("folds")) c.folds = j["folds"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("embedding_seed")) c.embedding_seed = j["embedding_seed"].get<std::uint64_t>();
        if (j.contains("specificity_formula"))
            c.specificity = specificity_formula_from_string(j["specificity_formula"].get<std::string>());
        if (j.contains("gnn")) c.gnn = gnn::gnn_config_from_json(j["gnn"]);
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("bad scenario config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------- data

namespace {

bool suite_selected(Suite s, const ScenarioConfig& cfg) {
    switch (cfg.kind) {
        case ScenarioKind::Intra: return cfg.suite && s == *cfg.suite;
        case ScenarioKind::Mix: return true;
        case ScenarioKind::Cross: return s == cfg.train_suite || s == cfg.validate_suite;
    }
    return false;
}

ScenarioConfig resolve(const Manifest& manifest, ScenarioConfig cfg) {
    cfg.validate();
    std::set<Suite> present;
    for (const CorpusSample& s : manifest.samples)
        if (!s.quarantined && s.opt == cfg.opt) present.insert(s.suite);
    auto require = [&](Suite s) {
        if (!present.count(s))
            throw Error("SuiteMissing", "manifest has no " + std::string(corpus::to_string(s)) + " samples at " +
                                            std::string(corpus::to_string(cfg.opt)));
    };
    if (cfg.kind == ScenarioKind::Intra) {
        if (!cfg.suite) {
            if (present.size() != 1)
                throw Error("ConfigError", "intra scenario needs a suite when the manifest holds " +
                                               std::to_string(present.size()) + " suites");
            cfg.suite = *present.begin();
        }
        require(*cfg.suite);
    } else if (cfg.kind == ScenarioKind::Cross) {
        require(cfg.train_suite);
        require(cfg.validate_suite);
    } else if (present.empty()) {
        throw Error("SuiteMissing", "manifest has no samples at " + std::string(corpus::to_string(cfg.opt)));
    }
    return cfg;
}

/// Successfully loaded samples with their model inputs.
struct Dataset {
    std::vector<const CorpusSample*> samples;
    std::vector<std::string> ids;
    Eigen::MatrixXd X;
    std::vector<graph::ProgramGraph> graphs;
};

Dataset load(const std::vector<const CorpusSample*>& usable, const ScenarioConfig& cfg,
             std::vector<SampleFailure>& failures) {
    const std::size_t n = usable.size();
    std::vector<std::optional<Eigen::VectorXd>> vectors(n);
    std::vector<std::optional<graph::ProgramGraph>> graphs(n);
    std::vector<std::optional<SampleFailure>> errors(n);
    const embed::SeedVocab vocab(cfg.embedding_seed);
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
        const CorpusSample& s = *usable[i];
        try {
            const ir::Module m = ir::parse_ir_file(s.ir_path->string());
            if (cfg.backend == Backend::IrVecDt) {
                vectors[i] = embed::embed(m, vocab).values;
            } else {
                graph::ProgramGraph g = graph::build_graph(m);
                if (g.nodes.empty()) throw Error("EmptyGraph", "graph has no nodes");
                graphs[i] = std::move(g);
            }
        } catch (const Error& e) {
            errors[i] = SampleFailure{s.id, e.kind(), e.what()};
        } catch (const std::exception& e) {
            errors[i] = SampleFailure{s.id, "RuntimeError", e.what()};
        }
    });
    Dataset d;
    std::vector<Eigen::VectorXd> rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) {
            failures.push_back(*errors[i]);
            continue;
        }
        d.samples.push_back(usable[i]);
        d.ids.push_back(usable[i]->id);
        if (vectors[i]) rows.push_back(std::move(*vectors[i]));
        if (graphs[i]) d.graphs.push_back(std::move(*graphs[i]));
    }
    if (!rows.empty()) {
        d.X.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) d.X.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
    return d;
}

std::vector<std::string> label_space_of(const Dataset& d, LabelMode mode) {
    if (mode == LabelMode::Binary) return {"Correct", "Incorrect"};
    std::set<ErrorLabel> present;
    for (const CorpusSample* s : d.samples) present.insert(*s->label);
    std::vector<std::string> out;
    for (ErrorLabel l : corpus::all_labels())
        if (present.count(l)) out.emplace_back(corpus::to_string(l));
    return out;
}

int target_of(ErrorLabel l, LabelMode mode, const std::vector<std::string>& space) {
    const std::string name(mode == LabelMode::Binary ? corpus::to_string(to_binary(l)) : corpus::to_string(l));
    return static_cast<int>(std::find(space.begin(), space.end(), name) - space.begin());
}

struct FoldOutput {
    std::vector<int> predictions;
    std::vector<int> feature_subset;
    std::optional<embed::IndexScaler> scaler;
};

FoldOutput train_and_predict(const Dataset& d, const std::vector<std::size_t>& train,
                             const std::vector<std::size_t>& validate, const std::vector<int>& targets,
                             const std::vector<std::string>& space, const ScenarioConfig& cfg, std::uint64_t seed,
                             unsigned inner_jobs) {
    if (train.empty()) throw Error("EmptyDataset", "empty training fold");
    FoldOutput out;
    if (cfg.backend == Backend::IrVecDt) {
        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train.size()), d.X.cols());
        ml::LabeledVectors lv{{}, {}, space, {}};
        for (std::size_t r = 0; r < train.size(); ++r) {
            Xtr.row(static_cast<Eigen::Index>(r)) = d.X.row(static_cast<Eigen::Index>(train[r]));
            lv.y.push_back(targets[train[r]]);
            lv.ids.push_back(d.ids[train[r]]);
        }
        embed::Normalizer normalizer(cfg.normalization);
        normalizer.fit(Xtr);
        lv.X = normalizer.transform(Xtr);
        if (cfg.ga) {
            ml::GaConfig ga;
            ga.population = cfg.ga_population;
            ga.generations = cfg.ga_generations;
            ga.rng_seed = seed;
            ga.jobs = inner_jobs;
            out.feature_subset = ml::ga_select(lv, ga).best.indices;
            lv = lv.select_columns(out.feature_subset);
        }
        ml::TabularModel model{ml::train_tree(lv), out.feature_subset, normalizer, cfg.embedding_seed};
        Eigen::MatrixXd Xva(static_cast<Eigen::Index>(validate.size()), d.X.cols());
        for (std::size_t r = 0; r < validate.size(); ++r)
            Xva.row(static_cast<Eigen::Index>(r)) = d.X.row(static_cast<Eigen::Index>(validate[r]));
        if (!validate.empty()) out.predictions = model.predict(Xva);
        out.scaler = normalizer.scaler();
    } else {
        std::vector<graph::ProgramGraph> graphs;
        std::vector<int> y;
        for (std::size_t r : train) {
            graphs.push_back(d.graphs[r]);
            y.push_back(targets[r]);
        }
        gnn::GnnConfig gc = cfg.gnn;
        gc.rng_seed = seed;
        gnn::GnnModel model(gc, gnn::build_vocabulary(graphs), space);
        gnn::train(model, graphs, y);
        for (std::size_t r : validate) out.predictions.push_back(gnn::predict(model, d.graphs[r]));
    }
    return out;
}

/// Train/validate row splits of a scenario over the loaded dataset.
struct Split {
    std::vector<std::size_t> train, validate;
};

std::vector<Split> plan_splits(const Dataset& d, const ScenarioConfig& cfg) {
    std::vector<Split> splits;
    if (cfg.kind == ScenarioKind::Cross) {
        Split s;
        for (std::size_t i = 0; i < d.samples.size(); ++i) {
            if (d.samples[i]->suite == cfg.train_suite) s.train.push_back(i);
            if (d.samples[i]->suite == cfg.validate_suite) s.validate.push_back(i);
        }
        splits.push_back(std::move(s));
        return splits;
    }
    std::vector<std::string> labels;
    for (const CorpusSample* s : d.samples) labels.emplace_back(corpus::to_string(*s->label));
    const FoldPlan plan = make_folds(d.ids, labels, static_cast<std::size_t>(cfg.folds), cfg.seed);
    std::map<std::string, std::size_t> fold_of;
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
        for (const std::string& id : plan.folds[f]) fold_of[id] = f;
    splits.resize(plan.folds.size());
    for (std::size_t i = 0; i < d.ids.size(); ++i) {
        const std::size_t f = fold_of.at(d.ids[i]);
        for (std::size_t g = 0; g < splits.size(); ++g) (g == f ? splits[g].validate : splits[g].train).push_back(i);
    }
    return splits;
}

ErrorCounts compile_error_counts(const std::vector<const CorpusSample*>& failed, std::vector<SampleFailure>& failures) {
    ErrorCounts e;
    for (const CorpusSample* s : failed) {
        if (s->status == corpus::CompileStatus::Timeout)
            ++e.to;
        else
            ++e.ce;
        failures.push_back(SampleFailure{s->id, std::string(corpus::to_string(s->status)), s->status_message});
    }
    return e;
}

std::vector<ErrorLabel> table_labels(const ScenarioConfig& cfg) {
    std::vector<Suite> suites;
    if (cfg.kind == ScenarioKind::Intra) suites = {*cfg.suite};
    if (cfg.kind == ScenarioKind::Mix) suites = {Suite::MBI, Suite::CorrBench};
    if (cfg.kind == ScenarioKind::Cross) suites = {cfg.validate_suite};
    std::vector<ErrorLabel> out;
    for (ErrorLabel l : corpus::all_labels())
        if (std::any_of(suites.begin(), suites.end(), [&](Suite s) { return corpus::label_in_family(l, s); }))
            out.push_back(l);
    return out;
}

BinaryLabel binary_of_prediction(int p, const std::vector<std::string>& space) {
    return space[static_cast<std::size_t>(p)] == "Correct" ? BinaryLabel::Correct : BinaryLabel::Incorrect;
}

json failures_json(const std::vector<SampleFailure>& failures) {
    json out = json::array();
    for (const SampleFailure& f : failures) out.push_back({{"id", f.id}, {"kind", f.kind}, {"message", f.message}});
    return out;
}

json provenance_json(const json& manifest_provenance) {
    return json{{"tool", "mpisentinel"},
                {"report_version", kReportVersion},
                {"folds", "stratified by error label; per-label shuffle, round-robin deal"},
                {"aggregation", "micro: counts summed over folds"},
                {"manifest", manifest_provenance}};
}

json fold_json(const FoldRecord& f, std::size_t index, SpecificityFormula spec) {
    return json{{"index", index},
                {"train_size", f.train_ids.size()},
                {"validate_size", f.validate_ids.size()},
                {"feature_subset", f.feature_subset},
                {"counts", to_json(f.counts)},
                {"metrics", to_json(metrics(f.counts, spec))}};
}

unsigned fold_jobs(std::size_t folds, unsigned jobs) {
    return folds > 1 ? std::min<unsigned>(resolve_jobs(jobs), static_cast<unsigned>(folds)) : 1;
}

}  // namespace

ScenarioSamples select_samples(const Manifest& manifest, const ScenarioConfig& cfg) {
    ScenarioSamples out;
    for (const CorpusSample& s : manifest.samples) {
        if (s.quarantined || !s.label || s.opt != cfg.opt || !suite_selected(s.suite, cfg)) continue;
        (s.status == corpus::CompileStatus::Ok && s.ir_path ? out.usable : out.compile_failed).push_back(&s);
    }
    return out;
}

ScenarioReport run_scenario(const Manifest& manifest, const ScenarioConfig& config) {
    ScenarioReport report;
    report.config = resolve(manifest, config);
    const ScenarioConfig& cfg = report.config;
    report.manifest_provenance = manifest.provenance;

    const ScenarioSamples selected = select_samples(manifest, cfg);
    const ErrorCounts ce = compile_error_counts(selected.compile_failed, report.failures);
    const Dataset d = load(selected.usable, cfg, report.failures);
    const std::size_t load_failures = report.failures.size() - selected.compile_failed.size();

    const std::vector<std::string> space = label_space_of(d, cfg.labels);
    std::vector<int> targets;
    for (const CorpusSample* s : d.samples) targets.push_back(target_of(*s->label, cfg.labels, space));

    const std::vector<Split> splits = plan_splits(d, cfg);
    std::vector<FoldOutput> outputs(splits.size());
    const unsigned outer = fold_jobs(splits.size(), cfg.jobs);
    const unsigned inner = outer > 1 ? 1 : cfg.jobs;
    parallel_for(splits.size(), outer, [&](std::size_t f) {
        outputs[f] = train_and_predict(d, splits[f].train, splits[f].validate, targets, space, cfg,
                                       fold_seed(cfg.seed, f), inner);
    });

    std::map<ErrorLabel, std::pair<std::size_t, std::size_t>> per_label;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        FoldRecord rec;
        for (std::size_t r : splits[f].train) rec.train_ids.push_back(d.ids[r]);
        for (std::size_t r : splits[f].validate) rec.validate_ids.push_back(d.ids[r]);
        rec.feature_subset = outputs[f].feature_subset;
        rec.scaler = outputs[f].scaler;
        std::vector<BinaryLabel> preds, truth;
        for (std::size_t v = 0; v < splits[f].validate.size(); ++v) {
            const std::size_t r = splits[f].validate[v];
            const int p = outputs[f].predictions[v];
            const ErrorLabel l = *d.samples[r]->label;
            preds.push_back(binary_of_prediction(p, space));
            truth.push_back(to_binary(l));
            auto& [total, correct] = per_label[l];
            ++total;
            if (cfg.labels == LabelMode::ErrorType ? p == targets[r] : preds.back() == truth.back()) ++correct;
        }
        rec.counts = confusion(preds, truth);
        report.aggregate += rec.counts;
        report.folds.push_back(std::move(rec));
    }
    report.aggregate.ce = ce.ce;
    report.aggregate.to = ce.to;
    report.aggregate.re = load_failures;

    for (ErrorLabel l : table_labels(cfg)) {
        LabelRow row{l, 0, 0, std::nullopt};
        if (auto it = per_label.find(l); it != per_label.end()) {
            row.total = it->second.first;
            row.correct = it->second.second;
            row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.total);
        }
        report.per_label.push_back(row);
    }
    return report;
}

json to_json(const ScenarioReport& r) {
    json folds = json::array();
    for (std::size_t f = 0; f < r.folds.size(); ++f) folds.push_back(fold_json(r.folds[f], f, r.config.specificity));
    json labels = json::array();
    for (const LabelRow& row : r.per_label)
        labels.push_back({{"label", corpus::to_string(row.label)},
                          {"total", row.total},
                          {"correct", row.correct},
                          {"accuracy", row.accuracy ? json(*row.accuracy) : json("N/A")}});
    return json{{"report_version", kReportVersion},
                {"kind", "scenario"},
                {"config", to_json(r.config)},
                {"provenance", provenance_json(r.manifest_provenance)},
                {"folds", std::move(folds)},
                {"aggregate",
                 {{"counts", to_json(r.aggregate)}, {"metrics", to_json(metrics(r.aggregate, r.config.specificity))}}},
                {"per_label", std::move(labels)},
                {"failures", failures_json(r.failures)}};
}

// ---------------------------------------------------------------- ablation

AblationReport ablation(const Manifest& manifest, const std::vector<ErrorLabel>& excluded,
                        const ScenarioConfig& config) {
    if (excluded.empty() || excluded.size() > 2) throw Error("ConfigError", "ablation excludes one or two labels");
    if (excluded.size() == 2 && excluded[0] == excluded[1]) throw Error("ConfigError", "excluded labels must differ");
    for (ErrorLabel l : excluded)
        if (l == ErrorLabel::Correct) throw Error("ConfigError", "Correct cannot be excluded");
    if (config.kind == ScenarioKind::Cross) throw Error("ConfigError", "ablation uses the k-fold protocol");

    AblationReport report;
    ScenarioConfig cfg = config;
    cfg.labels = LabelMode::Binary;
    report.config = resolve(manifest, cfg);
    report.excluded = excluded;
    report.manifest_provenance = manifest.provenance;

    const ScenarioSamples selected = select_samples(manifest, report.config);
    compile_error_counts(selected.compile_failed, report.failures);
    for (ErrorLabel l : excluded)
        if (std::none_of(selected.usable.begin(), selected.usable.end(),
                         [&](const CorpusSample* s) { return *s->label == l; }))
            throw Error("LabelAbsent", "no samples labeled " + std::string(corpus::to_string(l)));

    const Dataset d = load(selected.usable, report.config, report.failures);
    const std::vector<std::string> space = label_space_of(d, LabelMode::Binary);
    std::vector<int> targets;
    for (const CorpusSample* s : d.samples) targets.push_back(target_of(*s->label, LabelMode::Binary, space));
    auto is_excluded = [&](std::size_t r) {
        return std::find(excluded.begin(), excluded.end(), *d.samples[r]->label) != excluded.end();
    };

    std::vector<Split> splits = plan_splits(d, report.config);
    for (Split& s : splits) {
        s.train.erase(std::remove_if(s.train.begin(), s.train.end(), is_excluded), s.train.end());
        if (std::any_of(s.train.begin(), s.train.end(), is_excluded))
            throw Error("InternalError", "excluded label present in a training fold");
    }
    std::vector<FoldOutput> outputs(splits.size());
    const unsigned outer = fold_jobs(splits.size(), report.config.jobs);
    parallel_for(splits.size(), outer, [&](std::size_t f) {
        outputs[f] = train_and_predict(d, splits[f].train, splits[f].validate, targets, space, report.config,
                                       fold_seed(report.config.seed, f), outer > 1 ? 1 : report.config.jobs);
    });

    std::map<ErrorLabel, std::pair<std::size_t, std::size_t>> hits;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        FoldRecord rec;
        for (std::size_t r : splits[f].train) rec.train_ids.push_back(d.ids[r]);
        for (std::size_t r : splits[f].validate) rec.validate_ids.push_back(d.ids[r]);
        rec.feature_subset = outputs[f].feature_subset;
        rec.scaler = outputs[f].scaler;
        std::vector<BinaryLabel> preds, truth;
        for (std::size_t v = 0; v < splits[f].validate.size(); ++v) {
            const std::size_t r = splits[f].validate[v];
            preds.push_back(binary_of_prediction(outputs[f].predictions[v], space));
            truth.push_back(to_binary(*d.samples[r]->label));
            if (is_excluded(r)) {
                auto& [total, incorrect] = hits[*d.samples[r]->label];
                ++total;
                if (preds.back() == BinaryLabel::Incorrect) ++incorrect;
            }
        }
        rec.counts = confusion(preds, truth);
        report.folds.push_back(std::move(rec));
    }
    for (ErrorLabel l : excluded) {
        AblationRow row{l, 0, 0, std::nullopt};
        if (auto it = hits.find(l); it != hits.end()) {
            row.total = it->second.first;
            row.predicted_incorrect = it->second.second;
            row.accuracy = static_cast<double>(row.predicted_incorrect) / static_cast<double>(row.total);
        }
        report.rows.push_back(row);
    }
    return report;
}

json to_json(const AblationReport& r) {
    json folds = json::array();
    for (std::size_t f = 0; f < r.folds.size(); ++f) folds.push_back(fold_json(r.folds[f], f, r.config.specificity));
    json excluded = json::array();
    for (ErrorLabel l : r.excluded) excluded.push_back(corpus::to_string(l));
    json rows = json::array();
    for (const AblationRow& row : r.rows)
        rows.push_back({{"label", corpus::to_string(row.label)},
                        {"total", row.total},
                        {"predicted_incorrect", row.predicted_incorrect},
                        {"accuracy", row.accuracy ? json(*row.accuracy) : json("N/A")}});
    return json{{"report_version", kReportVersion},
                {"kind", "ablation"},
                {"config", to_json(r.config)},
                {"excluded", std::move(excluded)},
                {"provenance", provenance_json(r.manifest_provenance)},
                {"folds", std::move(folds)},
                {"rows", std::move(rows)},
                {"failures", failures_json(r.failures)}};
}

}  // namespace mpisentinel::eval

namespace mpisentinel::eval {

TrainOutput train_model(const Manifest& manifest, const ScenarioConfig& config) {
    const ScenarioConfig cfg = resolve(manifest, config);
    TrainOutput out;
    const ScenarioSamples selected = select_samples(manifest, cfg);
    compile_error_counts(selected.compile_failed, out.failures);
    const Dataset d = load(selected.usable, cfg, out.failures);
    const std::vector<std::string> space = label_space_of(d, cfg.labels);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        if (cfg.kind != ScenarioKind::Cross || d.samples[i]->suite == cfg.train_suite) rows.push_back(i);
    if (rows.empty()) throw Error("EmptyDataset", "no trainable samples");
    out.trained_on = rows.size();
    std::vector<int> y;
    for (std::size_t r : rows) y.push_back(target_of(*d.samples[r]->label, cfg.labels, space));

    if (cfg.backend == Backend::IrVecDt) {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d.X.cols());
        std::vector<std::string> ids;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            X.row(static_cast<Eigen::Index>(r)) = d.X.row(static_cast<Eigen::Index>(rows[r]));
            ids.push_back(d.ids[rows[r]]);
        }
        embed::Normalizer normalizer(cfg.normalization);
        normalizer.fit(X);
        ml::LabeledVectors lv{normalizer.transform(X), y, space, ids};
        std::vector<int> subset;
        if (cfg.ga) {
            ml::GaConfig ga;
            ga.population = cfg.ga_population;
            ga.generations = cfg.ga_generations;
            ga.rng_seed = cfg.seed;
            ga.jobs = cfg.jobs;
            const ml::GaResult res = ml::ga_select(lv, ga);
            subset = res.best.indices;
            out.ga_log = res.log;
            lv = lv.select_columns(subset);
        }
        out.model = ml::to_json(ml::TabularModel{ml::train_tree(lv), subset, normalizer, cfg.embedding_seed});
    } else {
        std::vector<graph::ProgramGraph> graphs;
        for (std::size_t r : rows) graphs.push_back(d.graphs[r]);
        gnn::GnnConfig gc = cfg.gnn;
        gc.rng_seed = cfg.seed;
        gnn::GnnModel model(gc, gnn::build_vocabulary(graphs), space);
        out.epoch_loss = gnn::train(model, graphs, y).epoch_loss;
        out.model = gnn::to_json(model);
    }
    return out;
}

}  // namespace mpisentinel::eval
