#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "mpisentinel/embed.hpp"
#include "mpisentinel/error.hpp"

using namespace mpisentinel;
using namespace mpisentinel::embed;

namespace {

ir::Module fixture(const char* name) {
    return ir::parse_ir_file((testing::fixture_dir() / "ir" / name).string());
}

}  // namespace

TEST_CASE("seed vectors") {
    const Eigen::VectorXd a = seed_vector(1, "add", 256);
    CHECK(a == seed_vector(1, "add", 256));
    CHECK(a != seed_vector(2, "add", 256));
    CHECK(a != seed_vector(1, "mul", 256));
    CHECK(a.minCoeff() >= -1.0);
    CHECK(a.maxCoeff() < 1.0);
    // Roughly uniform: mean near 0, variance near 1/3.
    const double mean = a.mean();
    CHECK(std::abs(mean) < 0.15);
    CHECK(std::abs((a.array() - mean).square().mean() - 1.0 / 3.0) < 0.08);
    CHECK(seed_vector(1, "add", 4) == a.head(4));
}

TEST_CASE("seed vocabulary is lazy, stable and thread-safe") {
    SeedVocab vocab(7);
    const Eigen::VectorXd* first = &vocab.entry("load");
    CHECK(*first == seed_vector(7, "load", 256));
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&vocab, t] {
            for (int i = 0; i < 200; ++i) vocab.entry("tok" + std::to_string((i * 7 + t) % 50));
        });
    for (auto& th : threads) th.join();
    CHECK(&vocab.entry("load") == first);
    CHECK(vocab.entry("tok3") == seed_vector(7, "tok3", 256));
    CHECK_THROWS_AS(SeedVocab(1, 0), Error);
}

TEST_CASE("symbolic encoding") {
    SeedVocab vocab(1);
    Weights w;
    CHECK(encode_symbolic(ir::Module{}, vocab).isZero(0.0));

    const ir::Module ret = ir::parse_ir("define void @f() {\n  ret void\n}\n");
    CHECK(encode_symbolic(ret, vocab) == 1.0 * vocab.entry("ret") + 0.5 * vocab.entry("void"));

    // Brute-force oracle: coordinate-wise naive sum over token triples.
    const ir::Module m = fixture("add_loop.ll");
    std::vector<double> expect(256, 0.0);
    for (const auto& fn : m.functions)
        for (const auto& b : fn.blocks)
            for (const auto& in : b.instructions) {
                const ir::TokenTriple t = ir::token_triple(in);
                for (int d = 0; d < 256; ++d) {
                    double args = 0.0;
                    for (const auto& a : t.arg_tokens) args += seed_vector(1, a, 256)[d];
                    expect[d] += w.opcode * seed_vector(1, t.opcode_token, 256)[d] +
                                 w.type * seed_vector(1, t.type_token, 256)[d] + w.arg * args;
                }
            }
    const Eigen::VectorXd got = encode_symbolic(m, vocab);
    double diff = 0.0;
    for (int d = 0; d < 256; ++d) diff = std::max(diff, std::abs(got[d] - expect[d]));
    CHECK(diff < 1e-9);
}

TEST_CASE("symbolic encoding is additive over functions") {
    SeedVocab vocab(3);
    for (const auto& path : testing::all_ir_fixtures()) {
        const ir::Module m = ir::parse_ir_file(path.string());
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(256);
        for (const auto& fn : m.functions) {
            ir::Module single;
            single.functions.push_back(fn);
            sum += encode_symbolic(single, vocab);
        }
        CHECK((sum - encode_symbolic(m, vocab)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("flow-aware encoding") {
    SeedVocab vocab(1);
    Weights w;

    SUBCASE("no instruction-to-instruction operands equals symbolic exactly") {
        const ir::Module m = ir::parse_ir(
            "declare void @g(i32)\n"
            "define void @f(i32 %x) {\n  call void @g(i32 %x)\n  call void @g(i32 4)\n  ret void\n}\n");
        FlowResult r = encode_flow_aware(m, vocab);
        CHECK(r.converged);
        CHECK(r.vector == encode_symbolic(m, vocab));
    }

    SUBCASE("acyclic chain matches the hand expansion") {
        const ir::Module m = ir::parse_ir("define i32 @f(i32 %x) {\n  %a = add i32 %x, 1\n  ret i32 %a\n}\n");
        const Eigen::VectorXd add = w.opcode * vocab.entry("add") + w.type * vocab.entry("intTy") +
                                    w.arg * (vocab.entry("LocalValue") + vocab.entry("Constant"));
        const Eigen::VectorXd ret = w.opcode * vocab.entry("ret") + w.type * vocab.entry("void") + w.arg * add;
        FlowResult r = encode_flow_aware(m, vocab);
        CHECK(r.converged);
        CHECK(r.residual < 1e-6);
        // Damped iteration approaches the exact fixed point geometrically.
        CHECK((r.vector - (add + ret)).cwiseAbs().maxCoeff() < 1e-5);
        // Differs from symbolic by Wa * (add - v(LocalValue)) at the ret.
        const Eigen::VectorXd delta = r.vector - encode_symbolic(m, vocab);
        CHECK((delta - w.arg * (add - vocab.entry("LocalValue"))).cwiseAbs().maxCoeff() < 1e-5);
    }

    SUBCASE("phi cycle converges and matches a long brute-force run") {
        const ir::Module m = fixture("add_loop.ll");
        FlowResult r = encode_flow_aware(m, vocab);
        CHECK(r.converged);
        CHECK(r.residual < 1e-6);
        FlowOptions brute;
        brute.tolerance = 0.0;
        brute.max_iterations = 1000;
        FlowResult b = encode_flow_aware(m, vocab, w, brute);
        CHECK((r.vector - b.vector).cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("iteration cap reports non-convergence and keeps the last iterate") {
        FlowOptions capped;
        capped.max_iterations = 1;
        const ir::Module m = fixture("add_loop.ll");
        FlowResult r = encode_flow_aware(m, vocab, w, capped);
        CHECK_FALSE(r.converged);
        CHECK(r.iterations == 1);
        CHECK(r.vector.allFinite());
        EmbeddingVector e = embed::embed(m, vocab, w, capped);
        REQUIRE(e.warning);
        CHECK(e.warning->rfind("NonConvergence", 0) == 0);
        CHECK_FALSE(embed::embed(m, vocab).warning);
    }
}

TEST_CASE("embed concatenates both encodings") {
    SeedVocab vocab(1);
    const EmbeddingVector empty = embed::embed(ir::Module{}, vocab);
    CHECK(empty.values.size() == 512);
    CHECK(empty.values.isZero(0.0));
    for (const auto& path : testing::all_ir_fixtures()) {
        const ir::Module m = ir::parse_ir_file(path.string());
        const EmbeddingVector e = embed::embed(m, vocab);
        REQUIRE(e.values.size() == 512);
        CHECK(e.values.allFinite());
        CHECK(e.values.head(256) == encode_symbolic(m, vocab));
        CHECK(e.values.tail(256) == encode_flow_aware(m, vocab).vector);
        CHECK(embed::embed(ir::parse_ir_file(path.string()), SeedVocab(1)).values == e.values);
    }
}

TEST_CASE("fixture embeddings match the oracle golden bitwise") {
    const auto golden =
        nlohmann::json::parse(testing::read_text(testing::fixture_dir() / "embed" / "golden_seed1.json"));
    SeedVocab vocab(golden.at("seed").get<std::uint64_t>());
    std::size_t compared = 0;
    for (const auto& [name, hex] : golden.at("vectors").items()) {
        CAPTURE(name);
        const EmbeddingVector e = embed::embed(fixture((name + ".ll").c_str()), vocab);
        REQUIRE(hex.size() == 512);
        int mismatches = 0;
        for (int i = 0; i < 512; ++i)
            mismatches += std::strtod(hex[i].get<std::string>().c_str(), nullptr) != e.values[i];
        CHECK(mismatches == 0);
        ++compared;
    }
    CHECK(compared == testing::all_ir_fixtures().size());
}

TEST_CASE("vector normalization") {
    Eigen::MatrixXd m(3, 3);
    m << 2, 4, 8, 0, 0, 0, -2, -4, -1;
    const Eigen::MatrixXd n = normalize_vector(m);
    CHECK(n.row(0) == Eigen::RowVector3d(0.25, 0.5, 1.0));
    CHECK(n.row(1).isZero(0.0));
    CHECK(n.row(2) == Eigen::RowVector3d(-0.5, -1.0, -0.25));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::RowVectorXd row(20);
        for (auto& x : row) x = u(rng);
        Eigen::Index arg_before, arg_after;
        row.maxCoeff(&arg_before);
        const Eigen::RowVectorXd out = normalize_vector(row);
        out.maxCoeff(&arg_after);
        CHECK(out.minCoeff() >= 0.0);
        CHECK(out.maxCoeff() == 1.0);
        CHECK(arg_before == arg_after);
    }
}

TEST_CASE("index normalization") {
    Eigen::MatrixXd train(2, 2);
    train << 3, 1, 7, 1;
    const IndexScaler s = IndexScaler::fit(train);
    CHECK(s.max[0] >= s.min[0]);
    Eigen::MatrixXd val(3, 2);
    val << 5, 1, 9, 2, 1, 0;
    const Eigen::MatrixXd out = s.apply(val);
    CHECK(out(0, 0) == 0.5);
    CHECK(out(1, 0) == 1.0);
    CHECK(out(2, 0) == 0.0);
    CHECK(out.col(1).isZero(0.0));
    CHECK_THROWS_AS(s.apply(Eigen::MatrixXd::Zero(1, 3)), Error);

    Normalizer norm(Normalization::Index);
    CHECK_THROWS_AS(norm.transform(val), Error);
    norm.fit(train);
    CHECK(norm.transform(val) == out);
    CHECK(Normalizer(Normalization::None).transform(val) == val);
    CHECK(normalization_from_string("vector") == Normalization::Vector);
    CHECK_THROWS_AS(normalization_from_string("l2"), Error);
}

TEST_CASE("embedding CSV round trip is bit-exact") {
    SeedVocab vocab(11);
    std::vector<EmbeddingVector> rows;
    for (const auto& path : testing::all_ir_fixtures()) {
        EmbeddingVector e = embed::embed(ir::parse_ir_file(path.string()), vocab);
        e.source_id = path.stem().string();
        rows.push_back(e);
    }
    rows.back().values[3] = 1e-310;  // subnormal
    rows.back().values[4] = -0.1;
    const auto dir = testing::temp_dir("embed_csv");
    write_embeddings_csv(dir / "emb.csv", rows);
    write_embedding_sidecar(dir / "emb.csv", EmbeddingInfo{11, 256, {}, Normalization::Vector});
    const auto back = read_embeddings_csv(dir / "emb.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].source_id == rows[i].source_id);
        CHECK(back[i].values == rows[i].values);
    }
    const auto side = nlohmann::json::parse(testing::read_text(dir / "emb.csv.json"));
    CHECK(side.at("seed") == 11);
    CHECK(side.at("normalization") == "vector");
    CHECK(side.at("weights").at("arg") == 0.2);
}
