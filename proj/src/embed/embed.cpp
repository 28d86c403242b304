#include "mpisentinel/embed.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mpisentinel/error.hpp"

namespace mpisentinel::embed {

namespace {

std::uint64_t fnv1a(std::uint64_t seed, std::string_view token) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
    for (char c : token) mix(static_cast<unsigned char>(c));
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Eigen::VectorXd seed_vector(std::uint64_t seed, std::string_view token, int dim) {
    std::uint64_t state = fnv1a(seed, token);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) {
        const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        v[i] = 2.0 * u - 1.0;
    }
    return v;
}

SeedVocab::SeedVocab(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    if (dim < 1) throw Error("ConfigError", "vocabulary dimension must be positive");
}

const Eigen::VectorXd& SeedVocab::entry(std::string_view token) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(std::string(token));
    if (it == entries_.end())
        it = entries_.emplace(std::string(token), std::make_unique<Eigen::VectorXd>(seed_vector(seed_, token, dim_)))
                 .first;
    return *it->second;
}

namespace {

// Shared by the symbolic and flow-aware encoders so that both produce
// bit-identical results when no operand is an instruction result.
template <typename ArgVector>
Eigen::VectorXd combine(const ir::Instruction& instr, const SeedVocab& vocab, const Weights& w, ArgVector&& arg) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(vocab.dim());
    for (std::size_t k = 0; k < instr.operands.size(); ++k) {
        if (instr.operands[k].kind == ir::OperandKind::Label) continue;
        acc += arg(instr.operands[k]);
    }
    return w.opcode * vocab.entry(instr.opcode) + w.type * vocab.entry(ir::canonical_type(instr.type_str)) +
           w.arg * acc;
}

}  // namespace

Eigen::VectorXd encode_instruction(const ir::Instruction& instr, const SeedVocab& vocab, const Weights& w) {
    return combine(instr, vocab, w,
                   [&](const ir::Operand& op) -> const Eigen::VectorXd& { return vocab.entry(ir::to_string(op.kind)); });
}

Eigen::VectorXd encode_symbolic(const ir::Function& fn, const SeedVocab& vocab, const Weights& w) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(vocab.dim());
    for (const ir::Block& b : fn.blocks)
        for (const ir::Instruction& in : b.instructions) sum += encode_instruction(in, vocab, w);
    return sum;
}

Eigen::VectorXd encode_symbolic(const ir::Module& module, const SeedVocab& vocab, const Weights& w) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(vocab.dim());
    for (const ir::Function& fn : module.functions) sum += encode_symbolic(fn, vocab, w);
    return sum;
}

FlowResult encode_flow_aware(const ir::Function& fn, const SeedVocab& vocab, const Weights& w,
                             const FlowOptions& opts) {
    std::vector<const ir::Instruction*> instrs;
    std::unordered_map<std::string, std::size_t> def_index;
    for (const ir::Block& b : fn.blocks)
        for (const ir::Instruction& in : b.instructions) {
            if (in.result_id) def_index.emplace(*in.result_id, instrs.size());
            instrs.push_back(&in);
        }

    const Eigen::Index n = static_cast<Eigen::Index>(instrs.size());
    Eigen::MatrixXd current(vocab.dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) current.col(i) = encode_instruction(*instrs[i], vocab, w);

    FlowResult result;
    result.vector = Eigen::VectorXd::Zero(vocab.dim());
    if (n == 0) return result;

    Eigen::MatrixXd next(vocab.dim(), n);
    result.converged = false;
    double previous_change = 0.0;
    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd target = combine(*instrs[i], vocab, w, [&](const ir::Operand& op) -> Eigen::VectorXd {
                if (op.kind == ir::OperandKind::LocalValue) {
                    auto it = def_index.find(op.token);
                    if (it != def_index.end()) return current.col(static_cast<Eigen::Index>(it->second));
                }
                return vocab.entry(ir::to_string(op.kind));
            });
            next.col(i) = (1.0 - opts.damping) * current.col(i) + opts.damping * target;
        }
        // Largest per-coordinate total change across instructions; bounds the
        // change of the summed function vector as well as each instruction.
        double change = 0.0;
        for (Eigen::Index d = 0; d < next.rows(); ++d) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) total += std::abs(next(d, i) - current(d, i));
            change = std::max(change, total);
        }
        // A posteriori distance to the fixed point from the observed contraction
        // ratio of successive changes.
        double estimate = change;
        if (change > 0.0) {
            const double ratio = previous_change > 0.0 ? change / previous_change : 1.0;
            estimate = ratio < 1.0 ? std::max(change, change * ratio / (1.0 - ratio))
                                   : std::numeric_limits<double>::infinity();
        }
        previous_change = change;
        result.residual = estimate;
        result.iterations = iter;
        current.swap(next);
        if (result.residual < opts.tolerance) {
            result.converged = true;
            break;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) result.vector += current.col(i);
    return result;
}

FlowResult encode_flow_aware(const ir::Module& module, const SeedVocab& vocab, const Weights& w,
                             const FlowOptions& opts) {
    FlowResult total;
    total.vector = Eigen::VectorXd::Zero(vocab.dim());
    for (const ir::Function& fn : module.functions) {
        FlowResult r = encode_flow_aware(fn, vocab, w, opts);
        total.vector += r.vector;
        total.iterations = std::max(total.iterations, r.iterations);
        total.residual = std::max(total.residual, r.residual);
        total.converged = total.converged && r.converged;
    }
    return total;
}

EmbeddingVector embed(const ir::Module& module, const SeedVocab& vocab, const Weights& w, const FlowOptions& opts) {
    EmbeddingVector out;
    out.source_id = module.name;
    FlowResult flow = encode_flow_aware(module, vocab, w, opts);
    out.values.resize(2 * vocab.dim());
    out.values << encode_symbolic(module, vocab, w), flow.vector;
    if (!flow.converged) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "NonConvergence: %d iterations, residual %.3g", flow.iterations,
                      flow.residual);
        out.warning = buf;
    }
    return out;
}

std::string_view to_string(Normalization n) {
    switch (n) {
        case Normalization::None: return "none";
        case Normalization::Vector: return "vector";
        case Normalization::Index: return "index";
    }
    return "none";
}

Normalization normalization_from_string(std::string_view s) {
    if (s == "none") return Normalization::None;
    if (s == "vector") return Normalization::Vector;
    if (s == "index") return Normalization::Index;
    throw Error("ConfigError", "unknown normalization '" + std::string(s) + "'");
}

Eigen::MatrixXd normalize_vector(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (m.cols() == 0) break;
        const double mx = m.row(r).maxCoeff();
        if (mx > 0.0) {
            out.row(r) /= mx;
            continue;
        }
        const double abs_max = m.row(r).cwiseAbs().maxCoeff();
        if (abs_max > 0.0) out.row(r) /= abs_max;
    }
    return out;
}

IndexScaler IndexScaler::fit(const Eigen::MatrixXd& train) {
    if (train.rows() == 0) throw Error("ConfigError", "cannot fit an index scaler on zero rows");
    return IndexScaler{train.colwise().minCoeff(), train.colwise().maxCoeff()};
}

Eigen::MatrixXd IndexScaler::apply(const Eigen::MatrixXd& m) const {
    if (m.cols() != min.size())
        throw Error("ScalerMismatch", "scaler width " + std::to_string(min.size()) + " but matrix width " +
                                          std::to_string(m.cols()));
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double span = max[c] - min[c];
        if (span <= 0.0) {
            out.col(c).setZero();
            continue;
        }
        out.col(c) = ((m.col(c).array() - min[c]) / span).cwiseMax(0.0).cwiseMin(1.0);
    }
    return out;
}

void Normalizer::fit(const Eigen::MatrixXd& train) {
    if (strategy_ == Normalization::Index) scaler_ = IndexScaler::fit(train);
}

Eigen::MatrixXd Normalizer::transform(const Eigen::MatrixXd& m) const {
    switch (strategy_) {
        case Normalization::None: return m;
        case Normalization::Vector: return normalize_vector(m);
        case Normalization::Index:
            if (!scaler_) throw Error("ScalerMismatch", "index normalizer used before fit");
            return scaler_->apply(m);
    }
    return m;
}

Eigen::MatrixXd stack(const std::vector<EmbeddingVector>& vectors) {
    if (vectors.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), vectors.front().values.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].values.size() != m.cols()) throw Error("ConfigError", "embeddings of unequal width");
        m.row(static_cast<Eigen::Index>(i)) = vectors[i].values.transpose();
    }
    return m;
}

nlohmann::json to_json(const EmbeddingInfo& info) {
    return {{"seed", info.seed},
            {"dim", info.dim},
            {"weights", {{"opcode", info.weights.opcode}, {"type", info.weights.type}, {"arg", info.weights.arg}}},
            {"normalization", std::string(to_string(info.normalization))}};
}

void write_embeddings_csv(const std::filesystem::path& path, const std::vector<EmbeddingVector>& vectors) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    const Eigen::Index width = vectors.empty() ? kEmbeddingDim : vectors.front().values.size();
    out << "sample_id";
    for (Eigen::Index i = 0; i < width; ++i) out << ",v" << i;
    out << '\n';
    char buf[32];
    for (const EmbeddingVector& v : vectors) {
        if (v.source_id.find_first_of(",\n\"") != std::string::npos)
            throw Error("IoError", "sample id not representable in CSV: " + v.source_id);
        out << v.source_id;
        for (Eigen::Index i = 0; i < v.values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", v.values[i]);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw Error("IoError", "failed writing " + path.string());
}

std::vector<EmbeddingVector> read_embeddings_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("sample_id", 0) != 0)
        throw SchemaViolation("/0", "missing sample_id header in " + path.string());
    const auto width = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
    std::vector<EmbeddingVector> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::string pointer = "/" + std::to_string(rows.size() + 1);
        EmbeddingVector v;
        std::size_t comma = line.find(',');
        v.source_id = line.substr(0, comma);
        v.values.resize(width);
        Eigen::Index i = 0;
        while (comma != std::string::npos) {
            const std::size_t start = comma + 1;
            comma = line.find(',', start);
            const std::size_t end = comma == std::string::npos ? line.size() : comma;
            if (i >= width) throw SchemaViolation(pointer, "too many columns");
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + end, value);
            if (ec != std::errc() || ptr != line.data() + end)
                throw SchemaViolation(pointer + "/" + std::to_string(i), "not a number");
            v.values[i++] = value;
        }
        if (i != width) throw SchemaViolation(pointer, "too few columns");
        rows.push_back(std::move(v));
    }
    return rows;
}

void write_embedding_sidecar(const std::filesystem::path& csv_path, const EmbeddingInfo& info) {
    std::filesystem::path p = csv_path;
    p += ".json";
    std::ofstream out(p);
    if (!out) throw Error("IoError", "cannot write " + p.string());
    out << to_json(info).dump(2) << '\n';
}

}  // namespace mpisentinel::embed
