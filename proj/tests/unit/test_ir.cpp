#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "mpisentinel/error.hpp"
#include "mpisentinel/ir.hpp"

using namespace mpisentinel;
using namespace mpisentinel::ir;

namespace {

Module fixture(const std::string& name) { return parse_ir_file((testing::fixture_dir() / "ir" / name).string()); }

const Instruction& first_instr(const Module& m) { return m.functions.at(0).blocks.at(0).instructions.at(0); }

}  // namespace

TEST_CASE("empty text parses to an empty module") {
    Module m = parse_ir("");
    CHECK(m.functions.empty());
    CHECK(m.instruction_count() == 0);
}

TEST_CASE("minimal one-line function") {
    Module m = parse_ir("define void @f() { ret void }");
    REQUIRE(m.functions.size() == 1);
    const Function& f = m.functions[0];
    CHECK(f.name == "f");
    CHECK_FALSE(f.is_declaration);
    REQUIRE(f.blocks.size() == 1);
    REQUIRE(f.blocks[0].instructions.size() == 1);
    const Instruction& in = f.blocks[0].instructions[0];
    CHECK(in.opcode == "ret");
    CHECK(in.type_str == "void");
    CHECK_FALSE(in.result_id);
    CHECK(in.operands.empty());
}

TEST_CASE("add_loop fixture matches its hand-parsed golden table") {
    Module m = fixture("add_loop.ll");
    auto golden = nlohmann::json::parse(testing::read_text(testing::fixture_dir() / "ir" / "add_loop.golden.json"));
    REQUIRE(m.functions.size() == 1);
    const Function& fn = m.functions[0];

    CHECK(m.instruction_count() == golden["instruction_count"].get<std::size_t>());

    std::map<std::string, int> opcodes;
    for (const Block& b : fn.blocks)
        for (const Instruction& in : b.instructions) ++opcodes[in.opcode];
    CHECK(opcodes == golden["opcodes"].get<std::map<std::string, int>>());

    CHECK(successor_map(fn) == golden["successors"].get<std::map<std::string, std::vector<std::string>>>());

    DefUseMap uses = def_use_map(fn);
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> got;
    for (const auto& [id, sites] : uses)
        for (const UseSite& s : sites) got[id].emplace_back(s.block_index, s.instr_index);
    for (const auto& [id, sites] : uses)
        if (sites.empty()) got[id];
    CHECK(got == golden["def_use"].get<std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>>>());
}

TEST_CASE("metadata and attributes are stripped") {
    Module m = fixture("add_loop.ll");
    const Instruction& cmp = first_instr(m);
    CHECK(cmp.opcode == "icmp");
    CHECK(cmp.type_str == "i1");
    REQUIRE(cmp.operands.size() == 2);
    CHECK(cmp.operands[0] == Operand{OperandKind::LocalValue, "%n"});
    CHECK(cmp.operands[1] == Operand{OperandKind::Constant, "0"});
    CHECK(m.functions[0].params == std::vector<Param>{{"%n", "i32"}});
}

TEST_CASE("token triples use the canonical tables") {
    SUBCASE("ret void") {
        Module m = parse_ir("define void @f() {\n  ret void\n}\n");
        CHECK(token_triple(first_instr(m)) == TokenTriple{"ret", "void", {}});
    }
    SUBCASE("integer add with a constant") {
        Module m = parse_ir("define void @f(i32 %x) {\n  %a = add i32 %x, 5\n  ret void\n}\n");
        CHECK(token_triple(first_instr(m)) == TokenTriple{"add", "intTy", {"LocalValue", "Constant"}});
    }
    SUBCASE("MPI call") {
        Module m = parse_ir(
            "declare void @MPI_Barrier(i32)\n"
            "define void @f() {\n  call void @MPI_Barrier(i32 1140850688)\n  ret void\n}\n");
        const Instruction& in = m.functions[1].blocks[0].instructions[0];
        CHECK(in.call_target == std::optional<std::string>("MPI_Barrier"));
        CHECK(token_triple(in) == TokenTriple{"call", "void", {"FunctionRef", "Constant"}});
    }
    SUBCASE("labels are excluded") {
        Module m = fixture("add_loop.ll");
        const Instruction& br = m.functions[0].blocks[0].instructions[1];
        CHECK(token_triple(br) == TokenTriple{"br", "void", {"LocalValue"}});
    }
}

TEST_CASE("canonical type classes") {
    CHECK(canonical_type("i1") == "intTy");
    CHECK(canonical_type("i64") == "intTy");
    CHECK(canonical_type("double") == "floatTy");
    CHECK(canonical_type("half") == "floatTy");
    CHECK(canonical_type("ptr") == "ptrTy");
    CHECK(canonical_type("i8**") == "ptrTy");
    CHECK(canonical_type("%struct.S*") == "ptrTy");
    CHECK(canonical_type("<4 x i32>") == "vecTy");
    CHECK(canonical_type("[4 x i8]") == "aggTy");
    CHECK(canonical_type("{ i32, i1 }") == "aggTy");
    CHECK(canonical_type("%struct.S") == "aggTy");
    CHECK(canonical_type("void") == "void");
}

TEST_CASE("def_use_map") {
    SUBCASE("single ret has no definitions") {
        Module m = parse_ir("define void @f() { ret void }");
        CHECK(def_use_map(m.functions[0]).empty());
    }
    SUBCASE("direct counts") {
        Module m = parse_ir(
            "define void @f(i32 %x) {\n  %a = add i32 %x, 1\n  %b = mul i32 %a, %a\n  ret void\n}\n");
        DefUseMap uses = def_use_map(m.functions[0]);
        CHECK(uses.at("%a").size() == 2);
        CHECK(uses.at("%b").empty());
        CHECK(uses.at("%x").size() == 1);
    }
    SUBCASE("undefined local") {
        Module m = parse_ir("define void @f() {\n  %a = add i32 %ghost, 1\n  ret void\n}\n");
        CHECK_THROWS_AS(def_use_map(m.functions[0]), UndefinedLocal);
    }
}

TEST_CASE("malformed input is rejected with a line number") {
    SUBCASE("unclosed body") {
        CHECK_THROWS_AS(parse_ir("define void @f() {\n  ret void\n"), MalformedIr);
    }
    SUBCASE("stray closing brace") { CHECK_THROWS_AS(parse_ir("}\n"), MalformedIr); }
    SUBCASE("instruction outside a function") {
        try {
            parse_ir("\n\n%a = add i32 1, 2\n");
            FAIL("expected MalformedIr");
        } catch (const MalformedIr& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("opcode at module scope") { CHECK_THROWS_AS(parse_ir("ret void\n"), MalformedIr); }
    SUBCASE("block without terminator") {
        CHECK_THROWS_AS(parse_ir("define void @f() {\nentry:\n  %a = add i32 1, 2\nnext:\n  ret void\n}\n"), MalformedIr);
    }
    SUBCASE("branch to a missing block") {
        CHECK_THROWS_AS(parse_ir("define void @f() {\nentry:\n  br label %nowhere\n}\n"), MalformedIr);
    }
    SUBCASE("duplicate function") {
        CHECK_THROWS_AS(parse_ir("define void @f() { ret void }\ndefine void @f() { ret void }\n"), MalformedIr);
    }
    SUBCASE("empty body") { CHECK_THROWS_AS(parse_ir("define void @f() {\n}\n"), MalformedIr); }
}

TEST_CASE("unknown opcodes are parsed generically") {
    Module m = parse_ir("define i32 @f(i32 %a) {\n  %x = frobnicate i32 %a, 3\n  ret i32 %x\n}\n");
    const Instruction& in = first_instr(m);
    CHECK(in.opcode == "frobnicate");
    CHECK(in.type_str == "i32");
    CHECK(in.operands == std::vector<Operand>{{OperandKind::LocalValue, "%a"}, {OperandKind::Constant, "3"}});
}

TEST_CASE("clang output with typed pointers, switch and constant expressions") {
    Module m = fixture("clang_O2.ll");
    const Function* main_fn = m.find_function("main");
    REQUIRE(main_fn);
    CHECK(main_fn->params.size() == 2);
    CHECK(main_fn->blocks.front().label == "2");
    auto succ = successor_map(*main_fn);
    CHECK(succ.at("2") == std::vector<std::string>{"18", "14", "16"});

    bool saw_printf = false;
    for (const Block& b : main_fn->blocks)
        for (const Instruction& in : b.instructions)
            if (in.call_target == std::optional<std::string>("printf")) {
                saw_printf = true;
                CHECK(in.type_str == "i32");
                REQUIRE(in.operands.size() == 4);
                CHECK(in.operands[1].kind == OperandKind::Constant);
                CHECK(in.operands[2] == Operand{OperandKind::LocalValue, "%32"});
            }
    CHECK(saw_printf);
    REQUIRE(m.global_constants.size() == 1);
    CHECK(m.global_constants[0].id == "@.str");
    CHECK(m.global_constants[0].type_str == "[7 x i8]");

    const Function* memset = m.find_function("llvm.memset.p0i8.i64");
    REQUIRE(memset);
    CHECK(memset->is_declaration);
}

TEST_CASE("clang -O0 -g output parses and every local resolves") {
    Module m = fixture("clang_O0_debug.ll");
    CHECK(m.find_function("scale"));
    for (const Function& f : m.functions)
        if (!f.is_declaration) CHECK_NOTHROW(def_use_map(f));
}

TEST_CASE("properties over the fixture corpus") {
    for (const auto& path : testing::all_ir_fixtures()) {
        CAPTURE(path);
        const std::string text = testing::read_text(path);
        Module a = parse_ir(text);
        Module b = parse_ir(text);
        CHECK(a == b);  // determinism

        for (const Function& f : a.functions) {
            if (f.is_declaration) continue;
            CHECK_FALSE(f.blocks.empty());
            for (const Block& blk : f.blocks) {
                REQUIRE_FALSE(blk.instructions.empty());
                CHECK(blk.instructions.back().is_terminator());
                for (std::size_t i = 0; i + 1 < blk.instructions.size(); ++i)
                    CHECK_FALSE(blk.instructions[i].is_terminator());
                for (const Instruction& in : blk.instructions) {
                    CHECK(in.result_id.has_value() == (in.type_str != "void"));
                    const bool is_call = in.opcode == "call" || in.opcode == "invoke";
                    CHECK(in.call_target.has_value() == is_call);
                    for (const Operand& op : in.operands) {
                        if (op.kind == OperandKind::LocalValue) CHECK(op.token.front() == '%');
                        if (op.kind == OperandKind::Label) CHECK(f.block_index(op.token));
                    }
                }
            }
        }

        Module round = parse_ir(render(a));
        CHECK(round.functions == a.functions);
        CHECK(round.global_constants == a.global_constants);
    }
}
