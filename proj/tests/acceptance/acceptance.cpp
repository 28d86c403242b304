// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mpisentinel/cli.hpp"
#include "mpisentinel/corpus.hpp"
#include "mpisentinel/embed.hpp"
#include "mpisentinel/eval.hpp"
#include "mpisentinel/gnn.hpp"
#include "mpisentinel/graph.hpp"
#include "mpisentinel/ir.hpp"
#include "mpisentinel/ml.hpp"
#include "mpisentinel/random.hpp"

using namespace mpisentinel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = MPISENTINEL_FIXTURE_DIR;

/// Collects failed expectations of one criterion.
struct Check {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 20) failures.push_back(what);
    }
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mpisentinel_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<fs::path> ir_fixtures() {
    std::vector<fs::path> out;
    for (const char* dir : {"ir", "synthetic"})
        for (const auto& e : fs::recursive_directory_iterator(kFixtures / dir))
            if (e.is_regular_file() && e.path().extension() == ".ll") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

const corpus::Manifest& synthetic_manifest() {
    static const corpus::Manifest m = [] {
        corpus::IngestOptions o;
        o.work_dir = temp_dir("synthetic");
        return corpus::ingest(kFixtures / "synthetic", o).manifest;
    }();
    return m;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ------------------------------------------------------------- criterion 1

void metric_oracle(Check& c) {
    eval::ConfusionCounts t2;
    t2.tp = 1043;
    t2.tn = 664;
    t2.fp = 81;
    t2.fn = 73;
    const eval::MetricsReport m2 = eval::metrics(t2);
    c.expect(near(*m2.recall, 0.935, 5e-4), "reference DT recall " + std::to_string(*m2.recall));
    c.expect(near(*m2.precision, 0.928, 5e-4), "reference DT precision " + std::to_string(*m2.precision));
    c.expect(near(*m2.f1, 0.931, 5e-4), "reference DT F1 " + std::to_string(*m2.f1));
    c.expect(near(*m2.accuracy, 0.917, 5e-4), "reference DT accuracy " + std::to_string(*m2.accuracy));

    eval::ConfusionCounts itac;
    itac.tp = 859;
    itac.tn = 738;
    itac.fp = 4;
    itac.fn = 102;
    itac.to = 157;
    itac.re = 1;
    const eval::MetricsReport m3 = eval::metrics(itac);
    c.expect(near(*m3.conclusiveness, 0.915, 5e-4), "ITAC conclusiveness " + std::to_string(*m3.conclusiveness));
    c.expect(near(*m3.specificity, 0.995, 5e-4), "ITAC specificity " + std::to_string(*m3.specificity));
    c.expect(near(*m3.overall_accuracy, 0.858, 5e-4), "ITAC overall accuracy " + std::to_string(*m3.overall_accuracy));
}

// ------------------------------------------------------------- criterion 2

double intra_accuracy(eval::Backend backend, bool ga, std::uint64_t seed) {
    eval::ScenarioConfig cfg;
    cfg.kind = eval::ScenarioKind::Intra;
    cfg.backend = backend;
    cfg.ga = ga;
    cfg.ga_population = 250;
    cfg.ga_generations = 25;
    cfg.folds = 10;
    cfg.seed = seed;
    cfg.gnn.epochs = 10;
    const eval::ScenarioReport r = eval::run_scenario(synthetic_manifest(), cfg);
    return eval::metrics(r.aggregate).accuracy.value_or(0.0);
}

void synthetic_corpus(Check& c) {
    c.expect(synthetic_manifest().samples.size() >= 60, "synthetic corpus has fewer than 60 fixtures");
    struct Arm {
        std::string name;
        eval::Backend backend;
        bool ga;
        double threshold;
    };
    for (const Arm& arm : {Arm{"ir2vec-dt ga off", eval::Backend::IrVecDt, false, 1.0},
                           Arm{"ir2vec-dt ga on", eval::Backend::IrVecDt, true, 1.0},
                           Arm{"gnn 10 epochs", eval::Backend::Gnn, false, 0.9}}) {
        int passed = 0;
        std::ostringstream accs;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const double acc = intra_accuracy(arm.backend, arm.ga, seed);
            passed += acc >= arm.threshold;
            accs << ' ' << acc;
        }
        std::cout << "  " << arm.name << ": accuracies" << accs.str() << " (" << passed << "/5 seeds pass)\n";
        c.expect(passed >= 4, arm.name + ": only " + std::to_string(passed) + "/5 seeds reach the threshold");
    }
}

// ------------------------------------------------------------- criterion 3

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

double worst_gradient_error(gnn::GnnModel m, const graph::ProgramGraph& g, int target, std::size_t per_block,
                            std::uint64_t seed) {
    const std::vector<const graph::ProgramGraph*> graphs{&g};
    const gnn::LossAndGrad lg = gnn::loss_and_gradients(m, graphs, {target});
    Rng rng(seed);
    double worst = 0;
    for (std::size_t b = 0; b < m.params().size(); ++b) {
        std::vector<Eigen::Index> entries(static_cast<std::size_t>(m.params()[b].size()));
        std::iota(entries.begin(), entries.end(), Eigen::Index{0});
        if (per_block < entries.size()) {
            shuffle(entries, rng);
            entries.resize(per_block);
        }
        for (Eigen::Index i : entries) {
            double& x = m.params()[b].reshaped()[i];
            const double saved = x;
            x = saved + 1e-5;
            const double up = gnn::loss_and_gradients(m, graphs, {target}).loss;
            x = saved - 1e-5;
            const double down = gnn::loss_and_gradients(m, graphs, {target}).loss;
            x = saved;
            worst = std::max(worst, rel_err(lg.grads[b].reshaped()[i], (up - down) / 2e-5));
        }
    }
    return worst;
}

void gradient_check(Check& c) {
    const graph::ProgramGraph g = graph::build_graph(ir::parse_ir_file((kFixtures / "ir/two_fn_call.ll").string()));
    c.expect(g.nodes.size() <= 20, "fixture graph has more than 20 nodes");
    gnn::GnnConfig small;
    small.layer_sizes = {4, 3, 2};
    small.node_embed_dim = 3;
    small.fc_hidden = 2;
    small.rng_seed = 3;
    const auto vocab = gnn::build_vocabulary({g});
    const double every = worst_gradient_error(gnn::GnnModel(small, vocab, {"A", "B", "C"}), g, 2, SIZE_MAX, 0);
    std::cout << "  reduced widths, every entry: max relative error " << every << '\n';
    c.expect(every < 1e-3, "reduced model gradient error " + std::to_string(every));
    const double sampled = worst_gradient_error(gnn::GnnModel(gnn::GnnConfig{}, vocab, {"Correct", "Incorrect"}), g, 1, 8, 1);
    std::cout << "  default widths, 8 entries per block: max relative error " << sampled << '\n';
    c.expect(sampled < 1e-3, "default model gradient error " + std::to_string(sampled));
}

// ------------------------------------------------------------- criterion 4

void embedding_oracle(Check& c) {
    const json golden = json::parse(read_text(kFixtures / "embed/golden_seed1.json"));
    const embed::SeedVocab vocab(golden.at("seed").get<std::uint64_t>());
    const embed::SeedVocab again(golden.at("seed").get<std::uint64_t>());
    std::size_t compared = 0;
    for (const fs::path& p : ir_fixtures()) {
        if (p.parent_path().filename() != "ir") continue;
        const std::string name = p.stem().string();
        if (!golden.at("vectors").contains(name)) {
            c.expect(false, "no oracle vector for " + name);
            continue;
        }
        const ir::Module m = ir::parse_ir_file(p.string());
        const Eigen::VectorXd e = embed::embed(m, vocab).values;
        const auto& hex = golden["vectors"][name];
        c.expect(hex.size() == static_cast<std::size_t>(e.size()), name + ": width differs from oracle");
        double worst = 0;
        for (std::size_t i = 0; i < hex.size() && i < static_cast<std::size_t>(e.size()); ++i)
            worst = std::max(worst, std::abs(std::strtod(hex[i].get<std::string>().c_str(), nullptr) -
                                             e[static_cast<Eigen::Index>(i)]));
        c.expect(worst <= 1e-9, name + ": oracle deviation " + std::to_string(worst));
        ++compared;
    }
    c.expect(compared > 0, "no fixtures compared");
    for (const fs::path& p : ir_fixtures()) {
        const ir::Module m = ir::parse_ir_file(p.string());
        c.expect(embed::embed(m, vocab).values == embed::embed(ir::parse_ir_file(p.string()), again).values,
                 p.filename().string() + ": reruns differ");
    }
}

// ------------------------------------------------------------- criterion 5

void graph_invariants(Check& c) {
    for (const fs::path& p : ir_fixtures()) {
        const std::string name = p.filename().string();
        const ir::Module m = ir::parse_ir_file(p.string());
        const graph::ProgramGraph g = graph::build_graph(m);
        c.expect(graph::validate_graph(g).empty(), name + ": validate_graph reports violations");
        std::vector<const ir::Instruction*> instrs;
        for (const auto& f : m.functions)
            for (const auto& b : f.blocks)
                for (const auto& in : b.instructions) instrs.push_back(&in);
        std::vector<std::size_t> data_in(g.nodes.size(), 0);
        for (const auto& e : g.edges)
            if (e.type == graph::EdgeType::Data) ++data_in[e.dst];
        std::size_t k = 0;
        for (const auto& n : g.nodes) {
            if (n.type != graph::NodeType::Control) continue;
            if (k >= instrs.size()) break;
            std::size_t operands = 0;
            for (const auto& op : instrs[k]->operands) operands += op.kind != ir::OperandKind::Label;
            c.expect(data_in[n.id] == operands, name + ": data in-degree differs from operand count");
            ++k;
        }
        c.expect(k == instrs.size() && k == m.instruction_count(), name + ": control node count differs");
    }
}

// ------------------------------------------------------------- criterion 6

Eigen::MatrixXd embeddings_of(const std::vector<const corpus::CorpusSample*>& samples, std::uint64_t seed) {
    const embed::SeedVocab vocab(seed);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(samples.size()), embed::kEmbeddingDim);
    for (std::size_t i = 0; i < samples.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) =
            embed::embed(ir::parse_ir_file(samples[i]->ir_path->string()), vocab).values.transpose();
    return X;
}

void protocol_invariants(Check& c) {
    const corpus::Manifest& full = synthetic_manifest();
    const std::vector<corpus::ErrorLabel> errors{corpus::ErrorLabel::CallOrdering, corpus::ErrorLabel::MessageRace,
                                                 corpus::ErrorLabel::ResourceLeak};
    Rng rng(20240611);
    for (int trial = 0; trial < 100; ++trial) {
        const std::string tag = "manifest " + std::to_string(trial) + ": ";
        corpus::Manifest m;
        m.provenance = full.provenance;
        for (const corpus::CorpusSample& s : full.samples)
            if (uniform01(rng) < 0.55) m.samples.push_back(s);
        std::map<std::string, std::size_t> per_label;
        for (const auto& s : m.samples) ++per_label[std::string(corpus::to_string(*s.label))];
        const std::size_t k = 2 + uniform_index(rng, 9);
        const std::uint64_t seed = rng();

        // Folds: disjoint, covering, stratified within one.
        const eval::FoldPlan plan = eval::make_folds(m.samples, k, seed);
        std::set<std::string> seen;
        std::size_t total = 0;
        std::map<std::string, corpus::ErrorLabel> label_of;
        for (const auto& s : m.samples) label_of[s.id] = *s.label;
        for (const auto& fold : plan.folds)
            for (const std::string& id : fold) {
                c.expect(seen.insert(id).second, tag + "sample in two folds");
                ++total;
            }
        c.expect(plan.folds.size() == k, tag + "wrong fold count");
        c.expect(total == m.samples.size(), tag + "folds do not cover the samples");
        for (const auto& [label, count] : per_label) {
            std::size_t lo = SIZE_MAX, hi = 0;
            for (const auto& fold : plan.folds) {
                const auto n = static_cast<std::size_t>(std::count_if(fold.begin(), fold.end(), [&](const std::string& id) {
                    return corpus::to_string(label_of[id]) == label;
                }));
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            c.expect(hi - lo <= 1, tag + "label " + label + " not stratified");
        }

        // Ablation: excluded labels never reach training; scaler and GA
        // subset are reproducible from the training fold alone.
        std::vector<corpus::ErrorLabel> present;
        for (corpus::ErrorLabel e : errors)
            if (per_label.count(std::string(corpus::to_string(e)))) present.push_back(e);
        shuffle(present, rng);
        if (present.empty()) continue;
        present.resize(std::min<std::size_t>(present.size(), 1 + uniform_index(rng, 2)));
        eval::ScenarioConfig cfg;
        cfg.folds = k;
        cfg.seed = seed;
        cfg.normalization = embed::Normalization::Index;
        cfg.ga = trial % 10 == 0;
        cfg.ga_population = 8;
        cfg.ga_generations = 2;
        const eval::AblationReport r = eval::ablation(m, present, cfg);
        const eval::ScenarioSamples usable = eval::select_samples(m, r.config);
        const Eigen::MatrixXd X = embeddings_of(usable.usable, cfg.embedding_seed);
        std::map<std::string, std::size_t> row;
        for (std::size_t i = 0; i < usable.usable.size(); ++i) row[usable.usable[i]->id] = i;
        for (std::size_t f = 0; f < r.folds.size(); ++f) {
            const eval::FoldRecord& fold = r.folds[f];
            Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(fold.train_ids.size()), X.cols());
            ml::LabeledVectors lv{{}, {}, {"Correct", "Incorrect"}, {}};
            for (std::size_t i = 0; i < fold.train_ids.size(); ++i) {
                const std::size_t src = row.at(fold.train_ids[i]);
                const corpus::ErrorLabel label = *usable.usable[src]->label;
                c.expect(std::find(present.begin(), present.end(), label) == present.end(),
                         tag + "excluded label in training fold");
                Xtr.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(src));
                lv.y.push_back(label == corpus::ErrorLabel::Correct ? 0 : 1);
                lv.ids.push_back(fold.train_ids[i]);
            }
            const std::set<std::string> train(fold.train_ids.begin(), fold.train_ids.end());
            for (const std::string& id : fold.validate_ids)
                c.expect(train.count(id) == 0, tag + "validation sample also trained on");
            const embed::IndexScaler scaler = embed::IndexScaler::fit(Xtr);
            c.expect(fold.scaler && fold.scaler->min == scaler.min && fold.scaler->max == scaler.max,
                     tag + "scaler not reproducible from the training fold");
            if (cfg.ga) {
                lv.X = scaler.apply(Xtr);
                ml::GaConfig ga;
                ga.population = cfg.ga_population;
                ga.generations = cfg.ga_generations;
                ga.rng_seed = eval::fold_seed(cfg.seed, f);
                c.expect(ml::ga_select(lv, ga).best.indices == fold.feature_subset,
                         tag + "GA subset not reproducible from the training fold");
            }
        }
    }
}

// ------------------------------------------------------------- criterion 7

void ga_behavior(Check& c) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(100 + seed);
        Eigen::MatrixXd X(40, 10);
        std::vector<int> y;
        for (int r = 0; r < 40; ++r) {
            for (int col = 0; col < 10; ++col) X(r, col) = uniform01(rng);
            y.push_back(static_cast<int>(uniform_index(rng, 2)));
            X(r, 7) = y.back();
        }
        const ml::LabeledVectors d{X, y, {"Correct", "Incorrect"}, {}};
        ml::GaConfig cfg;
        cfg.population = 50;
        cfg.generations = 10;
        cfg.rng_seed = seed;
        const ml::GaResult r = ml::ga_select(d, cfg);
        const std::string tag = "seed " + std::to_string(seed) + ": ";
        c.expect(std::find(r.best.indices.begin(), r.best.indices.end(), 7) != r.best.indices.end(),
                 tag + "subset misses feature 7");
        c.expect(r.best.fitness == 1.0, tag + "fitness " + std::to_string(r.best.fitness));
        for (std::size_t g = 1; g < r.log.size(); ++g)
            c.expect(r.log[g].best_fitness >= r.log[g - 1].best_fitness, tag + "best-ever fitness decreased");
    }
}

// ------------------------------------------------------------- criterion 8

void normalization_properties(Check& c) {
    Rng rng(8);
    const Eigen::Index width = 16;
    Eigen::MatrixXd rows(1000, width);
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        for (Eigen::Index col = 0; col < width; ++col) rows(r, col) = uniform01(rng) * std::pow(10.0, double(r % 7) - 3);
    const Eigen::MatrixXd v = embed::normalize_vector(rows);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        Eigen::Index before = 0, after = 0;
        rows.row(r).maxCoeff(&before);
        v.row(r).maxCoeff(&after);
        c.expect(v.row(r).minCoeff() >= 0.0 && v.row(r).maxCoeff() <= 1.0, "vector output outside [0,1]");
        c.expect(v.row(r).maxCoeff() == 1.0, "vector row maximum is not 1");
        c.expect(before == after, "vector argmax changed");
    }
    const embed::IndexScaler s = embed::IndexScaler::fit(rows.topRows(500));
    Eigen::MatrixXd validation = rows.bottomRows(500);
    for (Eigen::Index r = 0; r < validation.rows(); ++r) validation.row(r) *= (uniform01(rng) * 4.0 - 1.0);
    const Eigen::MatrixXd out = s.apply(validation);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index col = 0; col < width; ++col) {
            const double x = validation(r, col), lo = s.min[col], hi = s.max[col];
            c.expect(out(r, col) >= 0.0 && out(r, col) <= 1.0, "index output outside [0,1]");
            if (x <= lo) c.expect(out(r, col) == 0.0, "index value below the training minimum not clamped to 0");
            if (x >= hi && hi > lo) c.expect(out(r, col) == 1.0, "index value above the training maximum not clamped to 1");
        }
}

// ------------------------------------------------------------- criterion 9

void end_to_end_determinism(Check& c) {
    const fs::path dir = temp_dir("determinism");
    const std::string manifest = (dir / "manifest.json").string();
    std::ostringstream out, err;
    c.expect(cli::run({"ingest", "--suite", "mbi", "--dir", (kFixtures / "synthetic").string(), "--out", manifest}, out,
                      err) == cli::kExitOk,
             "ingest failed: " + err.str());
    auto evaluate = [&](const std::string& report, const cli::Environment& env) {
        std::ostringstream o, e;
        const int code = cli::run({"evaluate", "--manifest", manifest, "--scenario", "intra", "--backend", "ir2vec-dt",
                                   "--labels", "error-type", "--normalization", "index", "--ga", "on",
                                   "--ga-population", "40", "--ga-generations", "3", "--folds", "5", "--seed", "11",
                                   "--report", (dir / report).string()},
                                  o, e, env);
        c.expect(code == cli::kExitOk, "evaluate failed: " + e.str());
    };
    evaluate("a.json", {});
    evaluate("b.json", {{"MPISENTINEL_JOBS", "1"}});
    const std::string a = read_text(dir / "a.json");
    c.expect(!a.empty(), "empty report");
    c.expect(a == read_text(dir / "b.json"), "reports differ between invocations");
    std::ostringstream o, e;
    cli::run({"evaluate", "--config", (dir / "a.json").string(), "--report", (dir / "c.json").string()}, o, e);
    c.expect(a == read_text(dir / "c.json"), "replaying the embedded config gives a different report");
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        std::string title;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "metric oracle fixtures", metric_oracle},
        {2, "synthetic corpus accuracy (DT ga off/on = 1.0, GNN >= 0.9, 4/5 seeds)", synthetic_corpus},
        {3, "GNN gradient check against central differences", gradient_check},
        {4, "embedding oracle equivalence and determinism", embedding_oracle},
        {5, "graph invariants over every fixture", graph_invariants},
        {6, "evaluation protocol invariants over 100 random manifests", protocol_invariants},
        {7, "GA planted-feature behavior", ga_behavior},
        {8, "normalization properties over 1000 random rows", normalization_properties},
        {9, "end-to-end evaluate determinism", end_to_end_determinism},
    };
    int failed = 0;
    for (const Criterion& cr : criteria) {
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            cr.run(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool pass = check.failures.empty();
        failed += !pass;
        std::cout << "criterion " << cr.number << ": " << (pass ? "PASS" : "FAIL") << " - " << cr.title << " ("
                  << std::fixed << std::setprecision(1) << seconds << " s)" << std::defaultfloat << std::endl;
        for (const std::string& f : check.failures) std::cout << "    " << f << '\n';
    }
    return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
