#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mpisentinel/corpus.hpp"
#include "mpisentinel/error.hpp"
#include "mpisentinel/ir.hpp"

using namespace mpisentinel;
using namespace mpisentinel::corpus;
namespace fs = std::filesystem;

namespace {

const CorpusSample& by_id(const Manifest& m, const std::string& id) {
    for (const CorpusSample& s : m.samples)
        if (s.id == id) return s;
    FAIL("missing sample " << id);
    throw;
}

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_SUITE("corpus") {
    TEST_CASE("labels and binary mapping") {
        CHECK(to_binary(ErrorLabel::Correct) == BinaryLabel::Correct);
        CHECK(to_binary(ErrorLabel::CallOrdering) == BinaryLabel::Incorrect);
        CHECK(to_binary(ErrorLabel::ArgError) == BinaryLabel::Incorrect);
        for (ErrorLabel l : all_labels()) {
            CHECK(label_from_string(to_string(l)) == l);
            const int families = int(label_in_family(l, Suite::MBI)) + int(label_in_family(l, Suite::CorrBench));
            CHECK(families == (l == ErrorLabel::Correct ? 2 : 1));
        }
        CHECK_THROWS_AS(label_from_string("Bogus"), Error);
    }

    TEST_CASE("MBI header extraction") {
        const std::regex re(kDefaultMbiHeaderPattern);
        CHECK(mbi_label("/*\n  | OK\n*/\nint x;", re) == ErrorLabel::Correct);
        CHECK(mbi_label("/*\n  | ERROR: CallOrdering\n*/\n", re) == ErrorLabel::CallOrdering);
        CHECK(mbi_label("/*\n  | ERROR: CallMatching\n*/\n", re) == ErrorLabel::CallOrdering);
        CHECK(mbi_label("/*\n  | ERROR: MissingWait\n*/\n", re) == ErrorLabel::RequestLifecycle);
        CHECK(mbi_label("/*\n  | OK\n  | ERROR: MessageRace\n*/\n", re) == ErrorLabel::MessageRace);
        CHECK_FALSE(mbi_label("/*\n  | ERROR: BufferingHazard\n*/\n", re).has_value());
        CHECK_FALSE(mbi_label("int main() {}\n// | OK\n", re).has_value());
        CHECK_FALSE(mbi_label("", re).has_value());
    }

    TEST_CASE("CorrBench names") {
        CHECK(corrbench_label("ArgError-MPIIRecv-Count-1.c") == ErrorLabel::ArgError);
        CHECK(corrbench_label("MissingCall-Init-1.c") == ErrorLabel::MissingCall);
        CHECK(corrbench_label("ArgMismatch-MPISend-Type-2.c") == ErrorLabel::ArgMismatch);
        CHECK(corrbench_label("MissplacedCall-Finalize-1.c") == ErrorLabel::MissplacedCall);
        CHECK(corrbench_label("correct/sendrecv.c") == ErrorLabel::Correct);
        CHECK_FALSE(corrbench_label("notes.txt").has_value());
        CHECK_FALSE(corrbench_label("correct/notes.txt").has_value());
        CHECK_FALSE(corrbench_label("Unknown-Thing-1.c").has_value());
    }

    TEST_CASE("debias_source") {
        const std::string plain = "#include <mpi.h>\nint main() { return 0; }\n";
        CHECK(debias_source(plain) == plain);
        const std::string with = "#include <mpi.h>\n#include <stdio.h>\n#include \"mpitest.h\"\nint x;\r\n  # include <mpitest.h>\nint y;";
        const std::string out = debias_source(with);
        CHECK(out == "#include <mpi.h>\n#include <stdio.h>\nint x;\r\nint y;");
        CHECK(debias_source(out) == out);

        // Diff check: every surviving line is an original line, in order, and
        // every removed line mentions mpitest.h.
        const std::string src = testing::read_text(testing::fixture_dir() / "corpus/corrbench/correct/sendrecv.c");
        const auto before = lines_of(src);
        const auto after = lines_of(debias_source(src));
        std::size_t j = 0;
        for (const std::string& l : before) {
            if (j < after.size() && after[j] == l)
                ++j;
            else
                CHECK(l.find("mpitest.h") != std::string::npos);
        }
        CHECK(j == after.size());
        CHECK(after.size() + 1 == before.size());
    }

    TEST_CASE("ingest MBI mock corpus") {
        IngestOptions o;
        o.suite = Suite::MBI;
        o.work_dir = testing::temp_dir("ingest_mbi");
        const fs::path dir = testing::fixture_dir() / "corpus/mbi";
        const IngestResult r = ingest(dir, o);
        CHECK(r.sources_found == 5);
        CHECK(r.labeled + r.quarantined == r.sources_found);
        CHECK(r.manifest.samples.size() == 5);
        CHECK(by_id(r.manifest, "ok_basic.c@O0").label == ErrorLabel::Correct);
        CHECK(by_id(r.manifest, "callordering_bcast.c@O0").label == ErrorLabel::CallOrdering);
        CHECK(by_id(r.manifest, "callmatching_legacy.c@O0").label == ErrorLabel::CallOrdering);
        CHECK(by_id(r.manifest, "leak_comm.c@O0").label == ErrorLabel::ResourceLeak);
        const CorpusSample& q = by_id(r.manifest, "no_header.c@O0");
        CHECK(q.quarantined);
        CHECK(q.quarantine_reason == "UnrecognizedHeader");
        CHECK_FALSE(q.label.has_value());
        for (const CorpusSample& s : r.manifest.samples) {
            CHECK(s.status == CompileStatus::Ok);
            REQUIRE(s.ir_path.has_value());
            CHECK_NOTHROW(ir::parse_ir_file(s.ir_path->string()));
            if (s.label) CHECK((*s.binary() == BinaryLabel::Correct) == (*s.label == ErrorLabel::Correct));
        }
    }

    TEST_CASE("ingest CorrBench mock corpus") {
        IngestOptions o;
        o.suite = Suite::CorrBench;
        o.work_dir = testing::temp_dir("ingest_cb");
        const IngestResult r = ingest(testing::fixture_dir() / "corpus/corrbench", o);
        CHECK(r.sources_found == 4);
        CHECK(r.labeled == 3);
        CHECK(r.quarantined == 1);
        CHECK(by_id(r.manifest, "ArgError-MPIIRecv-Count-1.c@O0").label == ErrorLabel::ArgError);
        CHECK(by_id(r.manifest, "MissingCall-Init-1.c@O0").label == ErrorLabel::MissingCall);
        CHECK(by_id(r.manifest, "correct/sendrecv.c@O0").label == ErrorLabel::Correct);
        const CorpusSample& notes = by_id(r.manifest, "notes.txt@O0");
        CHECK(notes.quarantined);
        CHECK(notes.quarantine_reason == "UnrecognizedName");
    }

    TEST_CASE("two opt levels give two samples") {
        IngestOptions o;
        o.opts = {OptLevel::O0, OptLevel::O2};
        o.work_dir = testing::temp_dir("ingest_opts");
        const IngestResult r = ingest(testing::fixture_dir() / "corpus/mbi", o);
        CHECK(r.manifest.samples.size() == 10);
        const CorpusSample& a = by_id(r.manifest, "ok_basic.c@O0");
        const CorpusSample& b = by_id(r.manifest, "ok_basic.c@O2");
        CHECK(a.source_path == b.source_path);
        CHECK(a.ir_path->filename() == "ok_basic.ll");
        CHECK(b.ir_path->filename() == "ok_basic.O2.ll");
    }

    TEST_CASE("ingest errors") {
        const fs::path empty = testing::temp_dir("ingest_empty");
        IngestOptions o;
        o.work_dir = testing::temp_dir("ingest_empty_work");
        const IngestResult r = ingest(empty, o);
        CHECK(r.manifest.samples.empty());
        CHECK(r.sources_found == 0);
        CHECK_THROWS_AS(ingest(empty / "missing", o), Error);
        o.header_pattern = "(";
        write_file(empty / "a.c", "int x;");
        CHECK_THROWS_AS(ingest(empty, o), Error);
    }

    TEST_CASE("compile_to_ir with an external command") {
        const fs::path dir = testing::temp_dir("compile");
        write_file(dir / "ok.c", "int main(void) { return 0; }\n");
        write_file(dir / "bad.c", "int main(void) { return 0 }\n");
        CompileOptions cc;

        // Exit-status rule via a shell stand-in; needs no compiler.
        cc.command = "cp {source} {output}";
        CompileResult r = compile_to_ir(dir / "ok.c", OptLevel::O0, cc, dir / "out/ok.ll");
        CHECK(r.status == CompileStatus::Ok);
        CHECK(fs::exists(dir / "out/ok.ll"));
        cc.command = "echo 'bad.c:1: error: expected ;' >&2; exit 1";
        r = compile_to_ir(dir / "bad.c", OptLevel::O0, cc, dir / "out/bad.ll");
        CHECK(r.status == CompileStatus::CompileError);
        CHECK_FALSE(r.ir_path.has_value());
        CHECK(r.message.find("expected ;") != std::string::npos);
        cc.command = "definitely-not-a-compiler-xyz {source}";
        CHECK_THROWS_WITH_AS(compile_to_ir(dir / "ok.c", OptLevel::O0, cc, dir / "out/x.ll"),
                             doctest::Contains("not found"), Error);
        cc.command = "sleep 5";
        cc.timeout = std::chrono::seconds(1);
        r = compile_to_ir(dir / "ok.c", OptLevel::O0, cc, dir / "out/slow.ll");
        CHECK(r.status == CompileStatus::Timeout);
        cc.timeout = std::chrono::seconds(120);
        cc.command = "printf '%s' {opt} > {output}";
        r = compile_to_ir(dir / "it's ok.c", OptLevel::Os, cc, dir / "out/quoted name.ll");
        CHECK(testing::read_text(dir / "out/quoted name.ll") == "Os");

        const char* env = std::getenv("MPISENTINEL_COMPILER_CMD");
        std::string clang = env ? env : "";
        if (clang.empty() && std::system("command -v clang >/dev/null 2>&1") == 0)
            clang = "clang -S -emit-llvm -{opt} {source} -o {output}";
        if (clang.empty()) {
            MESSAGE("skipped end-to-end compile: no compiler configured");
            return;
        }
        cc.command = clang;
        for (OptLevel opt : {OptLevel::O0, OptLevel::O2, OptLevel::Os}) {
            r = compile_to_ir(dir / "ok.c", opt, cc, dir / ("clang/ok." + std::string(to_string(opt)) + ".ll"));
            REQUIRE(r.status == CompileStatus::Ok);
            CHECK(ir::parse_ir_file(r.ir_path->string()).find_function("main") != nullptr);
        }
        r = compile_to_ir(dir / "bad.c", OptLevel::O0, cc, dir / "clang/bad.ll");
        CHECK(r.status == CompileStatus::CompileError);
        CHECK(r.message.find("error") != std::string::npos);
    }

    TEST_CASE("manifest round-trip and schema") {
        Manifest empty;
        CHECK(manifest_from_json(to_json(empty)) == empty);

        IngestOptions o;
        o.suite = Suite::CorrBench;
        o.work_dir = testing::temp_dir("manifest_rt");
        const Manifest m = ingest(testing::fixture_dir() / "corpus/corrbench", o).manifest;
        const fs::path path = o.work_dir / "manifest.json";
        write_manifest(m, path);
        const Manifest back = read_manifest(path);
        CHECK(back == m);
        CHECK(by_id(back, "notes.txt@O0").quarantined);

        nlohmann::json j = to_json(m);
        j["samples"][2]["id"] = j["samples"][0]["id"];
        try {
            manifest_from_json(j);
            FAIL("expected SchemaViolation");
        } catch (const SchemaViolation& e) {
            CHECK(e.pointer() == "/samples/2/id");
        }
        j = to_json(m);
        j["samples"][1]["binary"] = "Correct";
        CHECK_THROWS_AS(manifest_from_json(j), SchemaViolation);
        j = to_json(m);
        j["manifest_version"] = 2;
        CHECK_THROWS_AS(manifest_from_json(j), SchemaViolation);
        j = to_json(m);
        j["samples"][0].erase("opt");
        try {
            manifest_from_json(j);
            FAIL("expected SchemaViolation");
        } catch (const SchemaViolation& e) {
            CHECK(e.pointer() == "/samples/0/opt");
        }
    }
}
