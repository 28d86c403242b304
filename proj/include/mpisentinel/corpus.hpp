#pragma once

// Ingestion of MBI-style and MPI-CorrBench-style source corpora into a
// labeled manifest, including debiasing and external compilation to IR.

#include <chrono>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mpisentinel::corpus {

enum class ErrorLabel {
    Correct,
    // MBI family
    InvalidParameter,
    ResourceLeak,
    RequestLifecycle,
    EpochLifecycle,
    LocalConcurrency,
    ParameterMatching,
    MessageRace,
    CallOrdering,
    GlobalConcurrency,
    // CorrBench family
    ArgError,
    ArgMismatch,
    MissplacedCall,
    MissingCall,
};

enum class Suite { MBI, CorrBench, Other };
enum class OptLevel { O0, O2, Os };
enum class BinaryLabel { Correct, Incorrect };
enum class CompileStatus { Ok, CompileError, Timeout };

std::string_view to_string(ErrorLabel l);
std::string_view to_string(Suite s);
std::string_view to_string(OptLevel o);
std::string_view to_string(BinaryLabel b);
std::string_view to_string(CompileStatus s);
/// Throw Error("ConfigError") on unknown names.
ErrorLabel label_from_string(std::string_view s);
Suite suite_from_string(std::string_view s);
OptLevel opt_from_string(std::string_view s);
CompileStatus status_from_string(std::string_view s);

/// All labels, Correct first, MBI family before CorrBench family.
const std::vector<ErrorLabel>& all_labels();
/// True when `l` may label a sample of `suite` (Other accepts every label).
bool label_in_family(ErrorLabel l, Suite suite);
BinaryLabel to_binary(ErrorLabel l);

struct CorpusSample {
    std::string id;
    Suite suite = Suite::Other;
    std::filesystem::path source_path;
    std::optional<std::filesystem::path> ir_path;
    /// Absent for quarantined samples.
    std::optional<ErrorLabel> label;
    OptLevel opt = OptLevel::O0;
    CompileStatus status = CompileStatus::Ok;
    std::string status_message;
    bool quarantined = false;
    std::string quarantine_reason;

    std::optional<BinaryLabel> binary() const;
    friend bool operator==(const CorpusSample&, const CorpusSample&) = default;
};

struct Manifest {
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<CorpusSample> samples;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr int kManifestVersion = 1;

nlohmann::json to_json(const Manifest& m);
/// Throws SchemaViolation with a JSON pointer to the offending value.
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// `#include "mpitest.h"` lines removed; every other line byte-identical.
std::string debias_source(std::string_view text);

/// Descriptor regex: group 1 matches "OK" or the error clause, group 2 the
/// error class name.
inline constexpr const char* kDefaultMbiHeaderPattern = R"(\|\s*(OK|ERROR:\s*([A-Za-z]+)))";

/// MBI error class name to label. Includes the historical names
/// (CallMatching, MissingStart, MissingWait).
std::optional<ErrorLabel> mbi_alias(std::string_view name);

/// Label from the leading comment block of an MBI source; nullopt when no
/// descriptor is found or the class name is unknown. An ERROR descriptor
/// wins over OK when both appear.
std::optional<ErrorLabel> mbi_label(std::string_view source, const std::regex& header_pattern);
/// Label from a CorrBench file name (`<Label>-<rest>.c`) or location under a
/// directory named "correct".
std::optional<ErrorLabel> corrbench_label(const std::filesystem::path& relative_path);

struct CompileOptions {
    /// Shell command with {source}, {output} and {opt} placeholders; {opt}
    /// expands to O0, O2 or Os. "none" selects precompiled IR next to the
    /// source (<stem>.<opt>.ll, then <stem>.ll).
    std::string command = "none";
    std::chrono::seconds timeout{120};
};

struct CompileResult {
    CompileStatus status = CompileStatus::Ok;
    std::optional<std::filesystem::path> ir_path;
    std::string message;
};

/// Throws Error("CompilerNotFound") when the shell reports exit status 127.
CompileResult compile_to_ir(const std::filesystem::path& source, OptLevel opt, const CompileOptions& options,
                            const std::filesystem::path& output);

struct IngestOptions {
    Suite suite = Suite::MBI;
    std::vector<OptLevel> opts{OptLevel::O0};
    CompileOptions compile;
    std::string header_pattern = kDefaultMbiHeaderPattern;
    /// IR outputs and debiased sources go here.
    std::filesystem::path work_dir;
    unsigned jobs = 0;
};

struct IngestResult {
    Manifest manifest;
    std::size_t sources_found = 0;
    std::size_t labeled = 0;
    std::size_t quarantined = 0;
    std::size_t compile_errors = 0;
};

/// Every regular, non-hidden file except *.ll under `dir` is a source; one
/// sample per (source, opt). Throws Error("IoError") for unreadable dirs.
IngestResult ingest(const std::filesystem::path& dir, const IngestOptions& options);

}  // namespace mpisentinel::corpus
