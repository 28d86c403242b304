#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>

#include "mpisentinel/error.hpp"
#include "mpisentinel/ml.hpp"
#include "mpisentinel/parallel.hpp"
#include "mpisentinel/random.hpp"

namespace mpisentinel::ml {

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& y, const std::vector<std::string>& ids,
                                                       std::size_t k, std::uint64_t seed) {
    if (k == 0) throw Error("InvalidConfig", "fold count must be positive");
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (y[a] != y[b]) return y[a] < y[b];
        if (!ids.empty() && ids[a] != ids[b]) return ids[a] < ids[b];
        return a < b;
    });
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t deal = 0;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start;
        while (end < order.size() && y[order[end]] == y[order[start]]) ++end;
        std::vector<std::size_t> group(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
        shuffle(group, rng);
        for (std::size_t r : group) folds[deal++ % k].push_back(r);
        start = end;
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

double fitness(const std::vector<int>& indices, const LabeledVectors& data, std::uint64_t seed) {
    data.validate();
    const LabeledVectors sub = data.select_columns(indices);
    const std::size_t k = std::min<std::size_t>(5, sub.size());
    if (k < 2) return accuracy(train_tree(sub), sub);
    const auto folds = stratified_folds(sub.y, sub.ids, k, seed);
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t f = 0; f < k; ++f) {
        if (folds[f].empty()) continue;
        std::vector<std::size_t> train;
        for (std::size_t g = 0; g < k; ++g)
            if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
        std::sort(train.begin(), train.end());
        total += accuracy(train_tree(sub.select_rows(train)), sub.select_rows(folds[f]));
        ++used;
    }
    return total / static_cast<double>(used);
}

GaConfig GaConfig::small() {
    GaConfig cfg;
    cfg.population = 50;
    cfg.generations = 10;
    return cfg;
}

nlohmann::json to_json(const GaConfig& cfg) {
    return {{"population", cfg.population},
            {"generations", cfg.generations},
            {"crossover_prob", cfg.crossover_prob},
            {"mutation_prob", cfg.mutation_prob},
            {"genes_per_individual", cfg.genes_per_individual},
            {"rng_seed", cfg.rng_seed}};
}

namespace {

using Genes = std::vector<int>;

class Ga {
public:
    Ga(const LabeledVectors& data, const GaConfig& cfg)
        : data_(data), cfg_(cfg), width_(static_cast<std::uint64_t>(data.X.cols())), rng_(cfg.rng_seed) {}

    GaResult run() {
        std::vector<Genes> pop;
        for (int i = 0; i < cfg_.population; ++i) pop.push_back(random_individual());
        std::vector<double> fit = evaluate(pop);

        GaResult result;
        update_best(pop, fit, result);
        log(0, fit, result);
        for (int g = 1; g <= cfg_.generations; ++g) {
            std::vector<Genes> next;
            next.push_back(pop[argmax(fit)]);
            while (static_cast<int>(next.size()) < cfg_.population) {
                Genes a = pop[tournament(fit)];
                Genes b = pop[tournament(fit)];
                if (uniform01(rng_) < cfg_.crossover_prob) crossover(a, b);
                for (Genes* child : {&a, &b}) {
                    if (uniform01(rng_) < cfg_.mutation_prob) mutate(*child);
                    std::sort(child->begin(), child->end());
                    if (static_cast<int>(next.size()) < cfg_.population) next.push_back(std::move(*child));
                }
            }
            pop = std::move(next);
            fit = evaluate(pop);
            update_best(pop, fit, result);
            log(g, fit, result);
        }
        return result;
    }

private:
    Genes random_individual() {
        std::set<int> chosen;
        while (static_cast<int>(chosen.size()) < cfg_.genes_per_individual)
            chosen.insert(static_cast<int>(uniform_index(rng_, width_)));
        return Genes(chosen.begin(), chosen.end());
    }

    int unused_index(const Genes& genes) {
        for (;;) {
            const int candidate = static_cast<int>(uniform_index(rng_, width_));
            if (std::find(genes.begin(), genes.end(), candidate) == genes.end()) return candidate;
        }
    }

    // Replaces the later copy of each duplicated gene with an unused index.
    void repair(Genes& genes) {
        for (std::size_t i = 1; i < genes.size(); ++i)
            if (std::find(genes.begin(), genes.begin() + static_cast<std::ptrdiff_t>(i), genes[i]) !=
                genes.begin() + static_cast<std::ptrdiff_t>(i))
                genes[i] = unused_index(genes);
    }

    void crossover(Genes& a, Genes& b) {
        if (a.size() < 2) return;
        const std::size_t point = 1 + uniform_index(rng_, a.size() - 1);
        for (std::size_t i = point; i < a.size(); ++i) std::swap(a[i], b[i]);
        repair(a);
        repair(b);
    }

    void mutate(Genes& genes) {
        const std::size_t pos = uniform_index(rng_, genes.size());
        genes[pos] = unused_index(genes);
    }

    std::size_t tournament(const std::vector<double>& fit) {
        const std::size_t i = uniform_index(rng_, fit.size());
        const std::size_t j = uniform_index(rng_, fit.size());
        return fit[j] > fit[i] ? j : i;
    }

    static std::size_t argmax(const std::vector<double>& fit) {
        return static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
    }

    std::vector<double> evaluate(const std::vector<Genes>& pop) {
        std::vector<const Genes*> pending;
        std::set<Genes> queued;
        for (const Genes& g : pop)
            if (!cache_.count(g) && queued.insert(g).second) pending.push_back(&g);
        std::vector<double> scores(pending.size());
        parallel_for(pending.size(), cfg_.jobs,
                     [&](std::size_t i) { scores[i] = fitness(*pending[i], data_, cfg_.rng_seed); });
        for (std::size_t i = 0; i < pending.size(); ++i) cache_.emplace(*pending[i], scores[i]);
        std::vector<double> fit;
        for (const Genes& g : pop) fit.push_back(cache_.at(g));
        return fit;
    }

    static void update_best(const std::vector<Genes>& pop, const std::vector<double>& fit, GaResult& result) {
        const std::size_t i = argmax(fit);
        if (result.best.indices.empty() || fit[i] > result.best.fitness) result.best = FeatureSubset{pop[i], fit[i]};
    }

    static void log(int generation, const std::vector<double>& fit, GaResult& result) {
        const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(fit.size());
        result.log.push_back({generation, fit[argmax(fit)], mean});
    }

    const LabeledVectors& data_;
    const GaConfig& cfg_;
    std::uint64_t width_;
    Rng rng_;
    std::map<Genes, double> cache_;
};

}  // namespace

GaResult ga_select(const LabeledVectors& data, const GaConfig& cfg) {
    data.validate();
    if (cfg.population < 1 || cfg.generations < 0 || cfg.genes_per_individual < 1)
        throw Error("InvalidConfig", "population and genes must be positive, generations non-negative");
    if (!(cfg.crossover_prob >= 0.0 && cfg.crossover_prob <= 1.0 && cfg.mutation_prob >= 0.0 &&
          cfg.mutation_prob <= 1.0))
        throw Error("InvalidConfig", "probabilities must lie in [0, 1]");
    if (cfg.genes_per_individual > data.X.cols())
        throw Error("InvalidConfig", "genes_per_individual exceeds the feature count");
    return Ga(data, cfg).run();
}

void write_ga_log_csv(const std::filesystem::path& path, const std::vector<GenerationStats>& log) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << "generation,best_fitness,mean_fitness\n";
    char buf[64];
    for (const GenerationStats& s : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", s.generation, s.best_fitness, s.mean_fitness);
        out << buf;
    }
}

Eigen::MatrixXd TabularModel::features(const Eigen::MatrixXd& embeddings) const {
    Eigen::MatrixXd x = normalizer.transform(embeddings);
    if (feature_subset.empty()) return x;
    Eigen::MatrixXd sel(x.rows(), static_cast<Eigen::Index>(feature_subset.size()));
    for (std::size_t c = 0; c < feature_subset.size(); ++c) {
        if (feature_subset[c] < 0 || feature_subset[c] >= x.cols())
            throw Error("WidthMismatch", "feature subset index beyond embedding width");
        sel.col(static_cast<Eigen::Index>(c)) = x.col(feature_subset[c]);
    }
    return sel;
}

std::vector<int> TabularModel::predict(const Eigen::MatrixXd& embeddings) const {
    const Eigen::MatrixXd x = features(embeddings);
    std::vector<int> out;
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.push_back(tree.predict(x.row(r)));
    return out;
}

nlohmann::json to_json(const embed::Normalizer& n) {
    nlohmann::json j{{"strategy", std::string(embed::to_string(n.strategy()))}};
    if (n.scaler()) {
        j["min"] = std::vector<double>(n.scaler()->min.data(), n.scaler()->min.data() + n.scaler()->min.size());
        j["max"] = std::vector<double>(n.scaler()->max.data(), n.scaler()->max.data() + n.scaler()->max.size());
    }
    return j;
}

embed::Normalizer normalizer_from_json(const nlohmann::json& j) {
    try {
        const auto strategy = embed::normalization_from_string(j.at("strategy").get<std::string>());
        if (!j.contains("min")) return embed::Normalizer(strategy);
        const auto lo = j.at("min").get<std::vector<double>>();
        const auto hi = j.at("max").get<std::vector<double>>();
        if (lo.size() != hi.size()) throw SchemaViolation("/normalization/max", "min and max widths differ");
        embed::IndexScaler s{Eigen::Map<const Eigen::RowVectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                             Eigen::Map<const Eigen::RowVectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
        return embed::Normalizer(strategy, std::move(s));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("/normalization", e.what());
    }
}

nlohmann::json to_json(const TabularModel& model) {
    return {{"kind", "ir2vec-dt"},
            {"tree", to_json(model.tree)},
            {"feature_subset", model.feature_subset},
            {"label_space", model.tree.label_space},
            {"normalization", to_json(model.normalizer)},
            {"seed", model.seed}};
}

TabularModel tabular_model_from_json(const nlohmann::json& j) {
    TabularModel m;
    if (!j.contains("tree")) throw SchemaViolation("/tree", "missing tree");
    m.tree = tree_from_json(j.at("tree"));
    try {
        m.feature_subset = j.at("feature_subset").get<std::vector<int>>();
        m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("/feature_subset", e.what());
    }
    if (!j.contains("normalization")) throw SchemaViolation("/normalization", "missing normalization");
    m.normalizer = normalizer_from_json(j.at("normalization"));
    if (!m.feature_subset.empty() && static_cast<Eigen::Index>(m.feature_subset.size()) != m.tree.width)
        throw SchemaViolation("/feature_subset", "subset size differs from tree width");
    return m;
}

}  // namespace mpisentinel::ml
