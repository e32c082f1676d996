#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbc/dataset.hpp"
#include "kbc/model.hpp"
#include "kbc/types.hpp"

namespace kbc {

struct TrainConfig {
    int dim = 512;
    int batch_size = 2048;
    int negatives = 2000;
    double learning_rate = 1e-3;
    double l2 = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int max_epochs = 1000;
    int patience = 5;     // consecutive evaluations without improvement
    int eval_every = 1;   // epochs between validation evaluations; 0 disables
    int valid_sample = 1000;  // validation queries per evaluation; 0 = all
    std::uint64_t seed = 42;

    void validate() const;  // throws std::invalid_argument naming the field
};

enum class ParamTable : std::uint8_t { Entity, Relation };

inline const char* to_string(ParamTable t) {
    return t == ParamTable::Entity ? "entity" : "relation";
}

// Gradients for the rows a batch touched, keyed by (table, row), with
// contributions to the same row summed. Rows keep insertion order so that
// accumulation is a fixed, reproducible sequence of additions.
class SparseGrads {
public:
    explicit SparseGrads(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t num_rows() const { return keys_.size(); }
    bool empty() const { return keys_.empty(); }

    // Row vector for (table, row), inserted as zeros if absent.
    std::span<double> row(ParamTable table, std::int32_t row_id);
    std::span<const double> row(ParamTable table, std::int32_t row_id) const;
    bool has_row(ParamTable table, std::int32_t row_id) const;

    void accumulate(ParamTable table, std::int32_t row_id, std::span<const double> grad);
    // Adds every row of `other` in other's insertion order.
    void merge(const SparseGrads& other);
    void clear();

    struct Key {
        ParamTable table;
        std::int32_t row;
    };
    const std::vector<Key>& keys() const { return keys_; }
    std::span<const double> grad_at(std::size_t index) const {
        return {data_.data() + index * dim_, static_cast<std::size_t>(dim_)};
    }

private:
    static std::uint64_t pack(ParamTable table, std::int32_t row) {
        return (static_cast<std::uint64_t>(table) << 40) |
               static_cast<std::uint64_t>(static_cast<std::uint32_t>(row));
    }

    int dim_;
    std::vector<Key> keys_;
    std::vector<double> data_;  // keys_.size() x dim_
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

// Adam moment accumulators shaped like the parameters, plus the step counter.
struct AdamState {
    std::vector<double> m_entity, v_entity;
    std::vector<double> m_relation, v_relation;
    std::int64_t step = 0;

    static AdamState like(const ModelParams& params);
};

// min(m, num_entities-1) distinct entity ids drawn uniformly from
// E \ {query.truth}. Other true entities are not excluded.
std::vector<EntityId> sample_negatives(const Query& query, int m, EntityId num_entities,
                                       std::mt19937_64& rng);

struct ExampleGrads {
    double loss = 0.0;
    SparseGrads grads;
};

// NLL of the truth against the pool {truth} ∪ negatives (truth first), with
// exact analytic gradients. When l2 > 0 each touched row's gradient also
// receives l2 * parameter_row, once per distinct row.
ExampleGrads example_loss_and_grads(const ModelParams& params, const Query& query,
                                    std::span<const EntityId> negatives, double l2);

struct BatchGrads {
    double loss_sum = 0.0;
    SparseGrads grads;
};

// Sum of per-example gradients over the batch, merged in example order.
// The parallel version computes example gradients concurrently but merges in
// the same fixed order, so both produce bit-identical results for any thread
// count. negatives[i] belongs to queries[i].
BatchGrads compute_batch_grads_serial(const ModelParams& params,
                                      std::span<const Query> queries,
                                      std::span<const std::vector<EntityId>> negatives,
                                      double l2);
BatchGrads compute_batch_grads_parallel(const ModelParams& params,
                                        std::span<const Query> queries,
                                        std::span<const std::vector<EntityId>> negatives,
                                        double l2);

// One bias-corrected Adam update over exactly the rows present in grads;
// the step counter advances once per call and untouched rows (moments and
// parameters) are left bit-identical. Throws on non-finite gradients,
// naming the offending row.
void adam_step(ModelParams& params, AdamState& state, const SparseGrads& grads,
               const TrainConfig& config);

// Shuffles `queries` in place with `rng`, draws fresh negatives per query,
// applies one adam_step per batch of config.batch_size summed gradients, and
// returns the mean per-example loss.
double train_epoch(ModelParams& params, AdamState& state, std::vector<Query>& queries,
                   const TrainConfig& config, std::mt19937_64& rng);

struct EvalPoint {
    int epoch = 0;
    double valid_hits10 = 0.0;
};

struct TrainHistory {
    std::vector<double> epoch_mean_loss;  // index = epoch-1
    std::vector<EvalPoint> evaluations;
    int best_epoch = 0;  // 0 = never evaluated
    std::string stopped_reason;  // "max_epochs" or "early_stop"
};

struct FitResult {
    ModelParams params;  // best-validation snapshot when evaluations ran
    TrainHistory history;
};

// Full training loop: filtered validation Hits@10 every eval_every epochs
// (on a fixed seeded subsample of valid_sample queries when set), early stop
// after `patience` evaluations without strict improvement, best snapshot
// returned. Deterministic given (dataset, config).
FitResult fit(const Dataset& dataset, const TrainConfig& config);

// One JSON record per line: each epoch's loss, each evaluation, and a final
// summary record.
void write_history_jsonl(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace kbc
