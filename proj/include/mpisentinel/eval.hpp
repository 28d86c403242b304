#pragma once

// Evaluation harness: confusion counts and the bug-finding metrics,
// stratified k-fold cross-validation, Intra/Mix/Cross scenarios and
// label-exclusion ablation.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpisentinel/corpus.hpp"
#include "mpisentinel/embed.hpp"
#include "mpisentinel/gnn.hpp"
#include "mpisentinel/ml.hpp"

namespace mpisentinel::eval {

using corpus::BinaryLabel;
using corpus::ErrorLabel;
using corpus::Suite;
using corpus::to_binary;

struct ErrorCounts {
    std::size_t ce = 0;
    std::size_t to = 0;
    std::size_t re = 0;
};

/// Positive class is Incorrect.
struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t ce = 0, to = 0, re = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    std::size_t errors() const { return ce + to + re; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws Error("LengthMismatch").
ConfusionCounts confusion(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& truth,
                          const ErrorCounts& errors = {});

enum class SpecificityFormula {
    /// TN / (TN + FP)
    Standard,
    /// 1 - TN / (TN + FP)
    PaperLiteral,
};

std::string_view to_string(SpecificityFormula f);
SpecificityFormula specificity_formula_from_string(std::string_view s);

/// Undefined metrics (zero denominators) are nullopt.
struct MetricsReport {
    std::optional<double> recall, precision, f1, accuracy, coverage, conclusiveness, specificity, overall_accuracy;
    ConfusionCounts counts;
};

MetricsReport metrics(const ConfusionCounts& counts, SpecificityFormula specificity = SpecificityFormula::Standard);

nlohmann::json to_json(const ConfusionCounts& c);
ConfusionCounts confusion_from_json(const nlohmann::json& j);
/// Undefined metrics serialize as null.
nlohmann::json to_json(const MetricsReport& m);

/// k partitions of sample ids.
struct FoldPlan {
    std::vector<std::vector<std::string>> folds;
};

/// Stratified by label: within each label, per-fold counts differ by at most
/// one. Throws Error("ConfigError") for k < 2 and Error("TooFewSamples") when
/// there are fewer samples than folds.
FoldPlan make_folds(const std::vector<std::string>& ids, const std::vector<std::string>& labels, std::size_t k,
                    std::uint64_t seed);
/// Folds over the evaluable (unquarantined, labeled) samples.
FoldPlan make_folds(const std::vector<corpus::CorpusSample>& samples, std::size_t k, std::uint64_t seed);

enum class ScenarioKind { Intra, Mix, Cross };
enum class Backend { IrVecDt, Gnn };
enum class LabelMode { Binary, ErrorType };

std::string_view to_string(ScenarioKind k);
std::string_view to_string(Backend b);
std::string_view to_string(LabelMode m);
ScenarioKind scenario_from_string(std::string_view s);
Backend backend_from_string(std::string_view s);
LabelMode label_mode_from_string(std::string_view s);

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::Intra;
    /// Intra: suite to evaluate; inferred when the manifest holds one suite.
    std::optional<Suite> suite;
    /// Cross only.
    Suite train_suite = Suite::MBI;
    Suite validate_suite = Suite::CorrBench;
    Backend backend = Backend::IrVecDt;
    LabelMode labels = LabelMode::Binary;
    embed::Normalization normalization = embed::Normalization::Vector;
    corpus::OptLevel opt = corpus::OptLevel::O0;
    bool ga = false;
    int ga_population = 2500;
    int ga_generations = 25;
    int folds = 10;
    /// Fold assignment, GA and GNN initialization.
    std::uint64_t seed = 0;
    /// Seed vocabulary of the embedding.
    std::uint64_t embedding_seed = 0;
    SpecificityFormula specificity = SpecificityFormula::Standard;
    gnn::GnnConfig gnn;
    /// Worker threads; 0 means one per hardware thread. Results do not depend on it.
    unsigned jobs = 0;

    /// Throws Error("ConfigError"), e.g. for Cross with error-type labels.
    void validate() const;
};

/// `jobs` is not serialized; it never changes results.
nlohmann::json to_json(const ScenarioConfig& cfg);
/// Missing keys keep their defaults. Throws Error("ConfigError").
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);

struct SampleFailure {
    std::string id;
    /// CompileError, Timeout or the error kind raised while loading.
    std::string kind;
    std::string message;
};

struct FoldRecord {
    std::vector<std::string> train_ids;
    std::vector<std::string> validate_ids;
    /// GA-selected coordinates (IrVecDt with GA on).
    std::vector<int> feature_subset;
    /// Index-normalization scaler fit on the training fold.
    std::optional<embed::IndexScaler> scaler;
    ConfusionCounts counts;
};

struct LabelRow {
    ErrorLabel label;
    std::size_t total = 0;
    std::size_t correct = 0;
    /// nullopt (N/A) when the label never appears in validation.
    std::optional<double> accuracy;
};

struct ScenarioReport {
    ScenarioConfig config;
    std::vector<FoldRecord> folds;
    ConfusionCounts aggregate;
    std::vector<LabelRow> per_label;
    std::vector<SampleFailure> failures;
    nlohmann::json manifest_provenance = nlohmann::json::object();
};

/// Throws Error("SuiteMissing") when the manifest lacks a requested suite.
ScenarioReport run_scenario(const corpus::Manifest& manifest, const ScenarioConfig& cfg);

inline constexpr int kReportVersion = 1;

/// Deterministic: no timestamps, no machine-dependent fields.
nlohmann::json to_json(const ScenarioReport& r);

struct AblationRow {
    ErrorLabel label;
    std::size_t total = 0;
    std::size_t predicted_incorrect = 0;
    std::optional<double> accuracy;
};

struct AblationReport {
    ScenarioConfig config;
    std::vector<ErrorLabel> excluded;
    std::vector<FoldRecord> folds;
    std::vector<AblationRow> rows;
    std::vector<SampleFailure> failures;
    nlohmann::json manifest_provenance = nlohmann::json::object();
};

/// k-fold protocol in binary mode with every excluded-label sample removed
/// from training and kept in validation. Throws Error("ConfigError") for
/// Correct, Cross or a count outside {1, 2}, and Error("LabelAbsent").
AblationReport ablation(const corpus::Manifest& manifest, const std::vector<ErrorLabel>& excluded,
                        const ScenarioConfig& cfg);

nlohmann::json to_json(const AblationReport& r);

/// Evaluable samples of a scenario in manifest order, with compile failures
/// split out. Exposed for verification of the protocol.
struct ScenarioSamples {
    std::vector<const corpus::CorpusSample*> usable;
    std::vector<const corpus::CorpusSample*> compile_failed;
};
ScenarioSamples select_samples(const corpus::Manifest& manifest, const ScenarioConfig& cfg);

/// Seed of fold `fold` derived from the scenario seed.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

struct TrainOutput {
    /// Model checkpoint: ml::to_json(TabularModel) or gnn::to_json(GnnModel).
    nlohmann::json model;
    std::vector<ml::GenerationStats> ga_log;
    std::vector<double> epoch_loss;
    std::vector<SampleFailure> failures;
    std::size_t trained_on = 0;
};

/// Fits one model on every evaluable sample the scenario selects (Intra or
/// Mix; Cross trains on its training suite).
TrainOutput train_model(const corpus::Manifest& manifest, const ScenarioConfig& cfg);

}  // namespace mpisentinel::eval
