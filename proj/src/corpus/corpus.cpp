#include "mpisentinel/corpus.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "mpisentinel/error.hpp"
#include "mpisentinel/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mpisentinel::corpus {

namespace {

template <typename E, std::size_t N>
E from_table(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, const char* what) {
    for (const auto& [e, name] : table)
        if (name == s) return e;
    throw Error("ConfigError", std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view to_table(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [v, name] : table)
        if (v == e) return name;
    return "";
}

constexpr std::array<std::pair<ErrorLabel, std::string_view>, 14> kLabels{{
    {ErrorLabel::Correct, "Correct"},
    {ErrorLabel::InvalidParameter, "InvalidParameter"},
    {ErrorLabel::ResourceLeak, "ResourceLeak"},
    {ErrorLabel::RequestLifecycle, "RequestLifecycle"},
    {ErrorLabel::EpochLifecycle, "EpochLifecycle"},
    {ErrorLabel::LocalConcurrency, "LocalConcurrency"},
    {ErrorLabel::ParameterMatching, "ParameterMatching"},
    {ErrorLabel::MessageRace, "MessageRace"},
    {ErrorLabel::CallOrdering, "CallOrdering"},
    {ErrorLabel::GlobalConcurrency, "GlobalConcurrency"},
    {ErrorLabel::ArgError, "ArgError"},
    {ErrorLabel::ArgMismatch, "ArgMismatch"},
    {ErrorLabel::MissplacedCall, "MissplacedCall"},
    {ErrorLabel::MissingCall, "MissingCall"},
}};
constexpr std::array<std::pair<Suite, std::string_view>, 3> kSuites{
    {{Suite::MBI, "MBI"}, {Suite::CorrBench, "CorrBench"}, {Suite::Other, "Other"}}};
constexpr std::array<std::pair<OptLevel, std::string_view>, 3> kOpts{
    {{OptLevel::O0, "O0"}, {OptLevel::O2, "O2"}, {OptLevel::Os, "Os"}}};
constexpr std::array<std::pair<CompileStatus, std::string_view>, 3> kStatuses{
    {{CompileStatus::Ok, "Ok"}, {CompileStatus::CompileError, "CompileError"}, {CompileStatus::Timeout, "Timeout"}}};

}  // namespace

std::string_view to_string(ErrorLabel l) { return to_table(l, kLabels); }
std::string_view to_string(Suite s) { return to_table(s, kSuites); }
std::string_view to_string(OptLevel o) { return to_table(o, kOpts); }
std::string_view to_string(BinaryLabel b) { return b == BinaryLabel::Correct ? "Correct" : "Incorrect"; }
std::string_view to_string(CompileStatus s) { return to_table(s, kStatuses); }
ErrorLabel label_from_string(std::string_view s) { return from_table(s, kLabels, "label"); }
Suite suite_from_string(std::string_view s) { return from_table(s, kSuites, "suite"); }
OptLevel opt_from_string(std::string_view s) { return from_table(s, kOpts, "optimization level"); }
CompileStatus status_from_string(std::string_view s) { return from_table(s, kStatuses, "compile status"); }

const std::vector<ErrorLabel>& all_labels() {
    static const std::vector<ErrorLabel> labels = [] {
        std::vector<ErrorLabel> v;
        for (const auto& [l, name] : kLabels) v.push_back(l);
        return v;
    }();
    return labels;
}

bool label_in_family(ErrorLabel l, Suite suite) {
    if (l == ErrorLabel::Correct || suite == Suite::Other) return true;
    const bool corrbench = l >= ErrorLabel::ArgError;
    return corrbench == (suite == Suite::CorrBench);
}

BinaryLabel to_binary(ErrorLabel l) { return l == ErrorLabel::Correct ? BinaryLabel::Correct : BinaryLabel::Incorrect; }

std::optional<BinaryLabel> CorpusSample::binary() const {
    if (!label) return std::nullopt;
    return to_binary(*label);
}

// ---------------------------------------------------------------- manifest

json to_json(const Manifest& m) {
    json samples = json::array();
    for (const CorpusSample& s : m.samples) {
        json j;
        j["id"] = s.id;
        j["suite"] = to_string(s.suite);
        j["source"] = s.source_path.generic_string();
        j["ir"] = s.ir_path ? json(s.ir_path->generic_string()) : json(nullptr);
        j["label"] = s.label ? json(to_string(*s.label)) : json(nullptr);
        j["binary"] = s.label ? json(to_string(to_binary(*s.label))) : json(nullptr);
        j["opt"] = to_string(s.opt);
        j["status"] = to_string(s.status);
        j["message"] = s.status_message;
        j["quarantined"] = s.quarantined;
        j["quarantine_reason"] = s.quarantine_reason;
        samples.push_back(std::move(j));
    }
    return json{{"manifest_version", kManifestVersion}, {"provenance", m.provenance}, {"samples", std::move(samples)}};
}

namespace {

const json& require(const json& j, const std::string& key, const std::string& ptr) {
    if (!j.is_object() || !j.contains(key)) throw SchemaViolation(ptr + "/" + key, "missing field");
    return j.at(key);
}

std::string require_string(const json& j, const std::string& key, const std::string& ptr) {
    const json& v = require(j, key, ptr);
    if (!v.is_string()) throw SchemaViolation(ptr + "/" + key, "expected string");
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const std::string& key, const std::string& ptr) {
    const json& v = require(j, key, ptr);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) throw SchemaViolation(ptr + "/" + key, "expected string or null");
    return v.get<std::string>();
}

template <typename F>
auto parse_enum(F&& f, const std::string& value, const std::string& ptr) {
    try {
        return f(value);
    } catch (const Error& e) {
        throw SchemaViolation(ptr, e.what());
    }
}

}  // namespace

Manifest manifest_from_json(const json& j) {
    if (!j.is_object()) throw SchemaViolation("", "expected object");
    const json& version = require(j, "manifest_version", "");
    if (!version.is_number_integer() || version.get<int>() != kManifestVersion)
        throw SchemaViolation("/manifest_version", "unsupported manifest version");
    Manifest m;
    m.provenance = require(j, "provenance", "");
    if (!m.provenance.is_object()) throw SchemaViolation("/provenance", "expected object");
    const json& samples = require(j, "samples", "");
    if (!samples.is_array()) throw SchemaViolation("/samples", "expected array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string ptr = "/samples/" + std::to_string(i);
        const json& sj = samples[i];
        if (!sj.is_object()) throw SchemaViolation(ptr, "expected object");
        CorpusSample s;
        s.id = require_string(sj, "id", ptr);
        if (!seen.insert(s.id).second) throw SchemaViolation(ptr + "/id", "duplicate sample id '" + s.id + "'");
        s.suite = parse_enum(suite_from_string, require_string(sj, "suite", ptr), ptr + "/suite");
        s.source_path = require_string(sj, "source", ptr);
        if (auto ir = optional_string(sj, "ir", ptr)) s.ir_path = *ir;
        if (auto l = optional_string(sj, "label", ptr))
            s.label = parse_enum(label_from_string, *l, ptr + "/label");
        auto binary = optional_string(sj, "binary", ptr);
        const std::optional<std::string> expected =
            s.label ? std::optional<std::string>(std::string(to_string(to_binary(*s.label)))) : std::nullopt;
        if (binary != expected) throw SchemaViolation(ptr + "/binary", "binary label inconsistent with label");
        s.opt = parse_enum(opt_from_string, require_string(sj, "opt", ptr), ptr + "/opt");
        s.status = parse_enum(status_from_string, require_string(sj, "status", ptr), ptr + "/status");
        if (sj.contains("message")) {
            if (!sj["message"].is_string()) throw SchemaViolation(ptr + "/message", "expected string");
            s.status_message = sj["message"].get<std::string>();
        }
        const json& q = require(sj, "quarantined", ptr);
        if (!q.is_boolean()) throw SchemaViolation(ptr + "/quarantined", "expected boolean");
        s.quarantined = q.get<bool>();
        if (sj.contains("quarantine_reason")) {
            if (!sj["quarantine_reason"].is_string())
                throw SchemaViolation(ptr + "/quarantine_reason", "expected string");
            s.quarantine_reason = sj["quarantine_reason"].get<std::string>();
        }
        if (s.ir_path.has_value() != (s.status == CompileStatus::Ok))
            throw SchemaViolation(ptr + "/ir", "ir must be present exactly when status is Ok");
        if (!s.quarantined && !s.label) throw SchemaViolation(ptr + "/label", "unquarantined sample without label");
        m.samples.push_back(std::move(s));
    }
    return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << to_json(m).dump(2) << '\n';
    if (!out) throw Error("IoError", "cannot write " + path.string());
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaViolation("", std::string("invalid JSON: ") + e.what());
    }
    return manifest_from_json(j);
}

// ---------------------------------------------------------------- labeling

std::string debias_source(std::string_view text) {
    static const std::regex include_re(R"(^\s*#\s*include\s*["<][^">]*mpitest\.h[">])");
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        const std::size_t next = end == std::string_view::npos ? text.size() : end + 1;
        const std::string line(text.substr(pos, next - pos));
        if (!std::regex_search(line, include_re)) out += line;
        pos = next;
    }
    return out;
}

std::optional<ErrorLabel> mbi_alias(std::string_view name) {
    static const std::array<std::pair<std::string_view, ErrorLabel>, 14> aliases{{
        {"InvalidParameter", ErrorLabel::InvalidParameter},
        {"ResourceLeak", ErrorLabel::ResourceLeak},
        {"RequestLifecycle", ErrorLabel::RequestLifecycle},
        {"MissingStart", ErrorLabel::RequestLifecycle},
        {"MissingWait", ErrorLabel::RequestLifecycle},
        {"EpochLifecycle", ErrorLabel::EpochLifecycle},
        {"LocalConcurrency", ErrorLabel::LocalConcurrency},
        {"ParameterMatching", ErrorLabel::ParameterMatching},
        {"MessageRace", ErrorLabel::MessageRace},
        {"CallOrdering", ErrorLabel::CallOrdering},
        {"CallMatching", ErrorLabel::CallOrdering},
        {"GlobalConcurrency", ErrorLabel::GlobalConcurrency},
        {"Correct", ErrorLabel::Correct},
        {"OK", ErrorLabel::Correct},
    }};
    for (const auto& [alias, label] : aliases)
        if (alias == name) return label;
    return std::nullopt;
}

namespace {

// Leading comment block: everything up to the first line that is neither
// blank nor inside/starting a comment.
std::string leading_comments(std::string_view src) {
    std::string out;
    std::size_t pos = 0;
    bool in_block = false;
    while (pos < src.size()) {
        std::size_t end = src.find('\n', pos);
        if (end == std::string_view::npos) end = src.size();
        std::string_view line = src.substr(pos, end - pos);
        std::string_view trimmed = line;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) trimmed.remove_prefix(1);
        if (in_block) {
            out.append(line).push_back('\n');
            if (line.find("*/") != std::string_view::npos) in_block = false;
        } else if (trimmed.empty()) {
        } else if (trimmed.substr(0, 2) == "//") {
            out.append(line).push_back('\n');
        } else if (trimmed.substr(0, 2) == "/*") {
            out.append(line).push_back('\n');
            if (trimmed.find("*/", 2) == std::string_view::npos) in_block = true;
        } else {
            break;
        }
        pos = end + 1;
    }
    return out;
}

}  // namespace

std::optional<ErrorLabel> mbi_label(std::string_view source, const std::regex& header_pattern) {
    const std::string header = leading_comments(source);
    bool saw_ok = false;
    for (auto it = std::sregex_iterator(header.begin(), header.end(), header_pattern); it != std::sregex_iterator();
         ++it) {
        const std::smatch& m = *it;
        if (m.size() > 2 && m[2].matched) return mbi_alias(m[2].str());
        saw_ok = true;
    }
    if (saw_ok) return ErrorLabel::Correct;
    return std::nullopt;
}

std::optional<ErrorLabel> corrbench_label(const fs::path& relative_path) {
    const std::string name = relative_path.filename().string();
    const std::size_t dash = name.find('-');
    if (dash != std::string::npos) {
        const std::string prefix = name.substr(0, dash);
        for (ErrorLabel l : {ErrorLabel::ArgError, ErrorLabel::ArgMismatch, ErrorLabel::MissplacedCall,
                             ErrorLabel::MissingCall})
            if (prefix == to_string(l)) return l;
    }
    const std::string ext = relative_path.extension().string();
    if (ext != ".c" && ext != ".cpp" && ext != ".cc") return std::nullopt;
    for (const fs::path& part : relative_path.parent_path())
        if (part == "correct") return ErrorLabel::Correct;
    return std::nullopt;
}

// ---------------------------------------------------------------- compile

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

std::string expand(std::string tmpl, const std::string& key, const std::string& value) {
    for (std::size_t p = 0; (p = tmpl.find(key, p)) != std::string::npos; p += value.size())
        tmpl.replace(p, key.size(), value);
    return tmpl;
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ShellOutcome {
    bool timed_out = false;
    int exit_code = 0;
    std::string stderr_text;
};

ShellOutcome run_shell(const std::string& command, std::chrono::seconds timeout, const fs::path& stderr_file) {
    const pid_t pid = fork();
    if (pid < 0) throw Error("IoError", "fork failed");
    if (pid == 0) {
        setpgid(0, 0);
        const int null_fd = open("/dev/null", O_RDWR);
        const int err_fd = open(stderr_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (null_fd >= 0) {
            dup2(null_fd, STDIN_FILENO);
            dup2(null_fd, STDOUT_FILENO);
        }
        if (err_fd >= 0) dup2(err_fd, STDERR_FILENO);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);
    ShellOutcome outcome;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw Error("IoError", "waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            outcome.timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    outcome.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    outcome.stderr_text = read_all(stderr_file);
    std::error_code ec;
    fs::remove(stderr_file, ec);
    return outcome;
}

}  // namespace

CompileResult compile_to_ir(const fs::path& source, OptLevel opt, const CompileOptions& options,
                            const fs::path& output) {
    CompileResult result;
    const std::string opt_name(to_string(opt));
    if (options.command == "none") {
        const fs::path dir = source.parent_path();
        const std::string stem = source.stem().string();
        for (const fs::path& candidate : {dir / (stem + "." + opt_name + ".ll"), dir / (stem + ".ll")}) {
            if (fs::is_regular_file(candidate)) {
                result.ir_path = candidate;
                return result;
            }
        }
        result.status = CompileStatus::CompileError;
        result.message = "no precompiled IR for " + source.filename().string() + " at " + opt_name;
        return result;
    }
    std::string cmd = expand(options.command, "{source}", shell_quote(source.string()));
    cmd = expand(cmd, "{output}", shell_quote(output.string()));
    cmd = expand(cmd, "{opt}", opt_name);
    if (!output.parent_path().empty()) fs::create_directories(output.parent_path());
    const ShellOutcome outcome = run_shell(cmd, options.timeout, output.string() + ".stderr");
    if (outcome.timed_out) {
        result.status = CompileStatus::Timeout;
        result.message = "compiler exceeded " + std::to_string(options.timeout.count()) + " s";
        return result;
    }
    if (outcome.exit_code == 127)
        throw Error("CompilerNotFound", "compiler command not found: " + options.command + "\n" + outcome.stderr_text);
    if (outcome.exit_code != 0) {
        result.status = CompileStatus::CompileError;
        result.message = outcome.stderr_text.empty() ? "compiler exited with status " + std::to_string(outcome.exit_code)
                                                     : outcome.stderr_text;
        return result;
    }
    if (!fs::is_regular_file(output)) {
        result.status = CompileStatus::CompileError;
        result.message = "compiler produced no output file";
        return result;
    }
    result.ir_path = output;
    return result;
}

// ---------------------------------------------------------------- ingest

IngestResult ingest(const fs::path& dir, const IngestOptions& options) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error("IoError", "not a readable directory: " + dir.string());
    std::vector<fs::path> sources;
    try {
        for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
            const std::string name = it->path().filename().string();
            if (!name.empty() && name[0] == '.') {
                if (it->is_directory()) it.disable_recursion_pending();
                continue;
            }
            if (!it->is_regular_file() || it->path().extension() == ".ll") continue;
            sources.push_back(fs::relative(it->path(), dir));
        }
    } catch (const fs::filesystem_error& e) {
        throw Error("IoError", e.what());
    }
    std::sort(sources.begin(), sources.end());
    if (options.opts.empty()) throw Error("ConfigError", "no optimization level selected");
    std::regex header_re;
    try {
        header_re = std::regex(options.header_pattern);
    } catch (const std::regex_error& e) {
        throw Error("ConfigError", std::string("invalid header pattern: ") + e.what());
    }

    IngestResult result;
    result.sources_found = sources.size();
    std::vector<CorpusSample>& samples = result.manifest.samples;
    for (const fs::path& rel : sources) {
        std::optional<ErrorLabel> label;
        std::string reason;
        if (options.suite == Suite::CorrBench) {
            label = corrbench_label(rel);
            if (!label) reason = "UnrecognizedName";
        } else {
            label = mbi_label(read_all(dir / rel), header_re);
            if (!label) reason = "UnrecognizedHeader";
        }
        for (OptLevel opt : options.opts) {
            CorpusSample s;
            s.id = rel.generic_string() + "@" + std::string(to_string(opt));
            s.suite = options.suite;
            s.source_path = dir / rel;
            s.label = label;
            s.opt = opt;
            s.quarantined = !label;
            s.quarantine_reason = reason;
            samples.push_back(std::move(s));
        }
    }

    const fs::path work = options.work_dir.empty() ? fs::temp_directory_path() / "mpisentinel" : options.work_dir;
    parallel_for(samples.size(), options.jobs, [&](std::size_t i) {
        CorpusSample& s = samples[i];
        const fs::path rel = fs::relative(s.source_path, dir);
        fs::path source = s.source_path;
        if (options.suite == Suite::CorrBench && options.compile.command != "none") {
            source = work / "debiased" / rel;
            fs::create_directories(source.parent_path());
            std::ofstream(source, std::ios::binary) << debias_source(read_all(s.source_path));
        }
        fs::path output = work / "ir" / rel;
        output.replace_extension("." + std::string(to_string(s.opt)) + ".ll");
        CompileResult r = options.compile.command == "none"
                              ? compile_to_ir(s.source_path, s.opt, options.compile, output)
                              : compile_to_ir(source, s.opt, options.compile, output);
        s.status = r.status;
        s.ir_path = r.ir_path;
        s.status_message = r.message;
    });

    for (const CorpusSample& s : samples) {
        if (s.quarantined)
            ++result.quarantined;
        else
            ++result.labeled;
        if (s.status != CompileStatus::Ok) ++result.compile_errors;
    }
    json opts = json::array();
    for (OptLevel o : options.opts) opts.push_back(to_string(o));
    result.manifest.provenance = {
        {"suite", to_string(options.suite)},
        {"source_dir", dir.generic_string()},
        {"compiler_cmd", options.compile.command},
        {"opt_levels", opts},
        {"header_pattern", options.header_pattern},
        {"debias", options.suite == Suite::CorrBench ? "mpitest.h includes removed" : "none"},
    };
    return result;
}

}  // namespace mpisentinel::corpus
