#pragma once

// IR2vec-style program embeddings: a symbolic encoding (sum of seed vectors
// over token triples) and a flow-aware encoding (operands defined by other
// instructions contribute those instructions' embeddings), concatenated into
// one vector per compilation unit.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mpisentinel/ir.hpp"

namespace mpisentinel::embed {

inline constexpr int kEncodingDim = 256;
inline constexpr int kEmbeddingDim = 2 * kEncodingDim;

/// Seed vector for (seed, token): `dim` uniform draws in [-1, 1) from a
/// SplitMix64 stream keyed by FNV-1a over the seed bytes and the token.
Eigen::VectorXd seed_vector(std::uint64_t seed, std::string_view token, int dim);

/// Lazily materialized, thread-safe seed vocabulary.
class SeedVocab {
public:
    explicit SeedVocab(std::uint64_t seed, int dim = kEncodingDim);

    std::uint64_t seed() const { return seed_; }
    int dim() const { return dim_; }
    /// The returned reference stays valid for the lifetime of the vocabulary.
    const Eigen::VectorXd& entry(std::string_view token) const;

private:
    std::uint64_t seed_;
    int dim_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, std::unique_ptr<Eigen::VectorXd>> entries_;
};

struct Weights {
    double opcode = 1.0;
    double type = 0.5;
    double arg = 0.2;

    friend bool operator==(const Weights&, const Weights&) = default;
};

struct FlowOptions {
    double damping = 0.5;
    double tolerance = 1e-6;
    int max_iterations = 100;
};

/// Wo*v(opcode) + Wt*v(type) + Wa*sum(v(arg kind)).
Eigen::VectorXd encode_instruction(const ir::Instruction& instr, const SeedVocab& vocab, const Weights& w = {});

Eigen::VectorXd encode_symbolic(const ir::Function& fn, const SeedVocab& vocab, const Weights& w = {});
Eigen::VectorXd encode_symbolic(const ir::Module& module, const SeedVocab& vocab, const Weights& w = {});

struct FlowResult {
    Eigen::VectorXd vector;
    /// Largest iteration count over the module's functions.
    int iterations = 0;
    /// Largest final update over the module's functions, measured per
    /// coordinate as the total absolute change across instructions.
    double residual = 0.0;
    bool converged = true;
};

/// Per-instruction fixed point by damped Jacobi iteration starting from the
/// symbolic instruction vectors. Non-convergence is reported in the result,
/// with the last iterate as the vector.
FlowResult encode_flow_aware(const ir::Function& fn, const SeedVocab& vocab, const Weights& w = {},
                             const FlowOptions& opts = {});
FlowResult encode_flow_aware(const ir::Module& module, const SeedVocab& vocab, const Weights& w = {},
                             const FlowOptions& opts = {});

struct EmbeddingVector {
    std::string source_id;
    Eigen::VectorXd values;
    /// Set when the flow-aware encoding did not converge.
    std::optional<std::string> warning;
};

/// values[0, 256) symbolic, values[256, 512) flow-aware.
EmbeddingVector embed(const ir::Module& module, const SeedVocab& vocab, const Weights& w = {},
                      const FlowOptions& opts = {});

enum class Normalization { None, Vector, Index };

std::string_view to_string(Normalization n);
/// Throws Error("ConfigError") for unknown names.
Normalization normalization_from_string(std::string_view s);

/// Each row divided by its maximum when positive, by its maximum absolute
/// value when the maximum is not positive; all-zero rows are unchanged.
Eigen::MatrixXd normalize_vector(const Eigen::MatrixXd& m);

struct IndexScaler {
    Eigen::RowVectorXd min;
    Eigen::RowVectorXd max;

    static IndexScaler fit(const Eigen::MatrixXd& train);
    /// Per-column min-max scaling clamped to [0, 1]; constant columns map to 0.
    /// Throws Error("ScalerMismatch") on a width mismatch.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const;
};

/// Fit on training rows, then transform any split with the same parameters.
class Normalizer {
public:
    explicit Normalizer(Normalization strategy = Normalization::None) : strategy_(strategy) {}
    /// Restores a fitted index normalizer.
    Normalizer(Normalization strategy, std::optional<IndexScaler> scaler)
        : strategy_(strategy), scaler_(std::move(scaler)) {}

    void fit(const Eigen::MatrixXd& train);
    Eigen::MatrixXd transform(const Eigen::MatrixXd& m) const;

    Normalization strategy() const { return strategy_; }
    const std::optional<IndexScaler>& scaler() const { return scaler_; }

private:
    Normalization strategy_;
    std::optional<IndexScaler> scaler_;
};

/// Stacks embeddings as matrix rows.
Eigen::MatrixXd stack(const std::vector<EmbeddingVector>& vectors);

struct EmbeddingInfo {
    std::uint64_t seed = 0;
    int dim = kEncodingDim;
    Weights weights;
    Normalization normalization = Normalization::None;
};

nlohmann::json to_json(const EmbeddingInfo& info);

/// CSV with header sample_id,v0,...,v{n-1}; values printed with 17
/// significant digits so that reading back is bit-exact.
void write_embeddings_csv(const std::filesystem::path& path, const std::vector<EmbeddingVector>& vectors);
std::vector<EmbeddingVector> read_embeddings_csv(const std::filesystem::path& path);
/// Writes `<csv>.json` next to the CSV.
void write_embedding_sidecar(const std::filesystem::path& csv_path, const EmbeddingInfo& info);

}  // namespace mpisentinel::embed
