#include "kbc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "kbc/evaluator.hpp"
#include "kbc/random.hpp"

namespace kbc {

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
    if (dim < 1) fail("dim must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (negatives < 1) fail("negatives must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (l2 < 0.0) fail("l2 must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
    if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
    if (max_epochs < 0) fail("max_epochs must be >= 0");
    if (patience < 1) fail("patience must be >= 1");
    if (eval_every < 0) fail("eval_every must be >= 0");
    if (valid_sample < 0) fail("valid_sample must be >= 0");
}

std::span<double> SparseGrads::row(ParamTable table, std::int32_t row_id) {
    auto [it, inserted] = index_.try_emplace(pack(table, row_id), keys_.size());
    if (inserted) {
        keys_.push_back(Key{table, row_id});
        data_.resize(data_.size() + dim_, 0.0);
    }
    return {data_.data() + it->second * dim_, static_cast<std::size_t>(dim_)};
}

std::span<const double> SparseGrads::row(ParamTable table, std::int32_t row_id) const {
    auto it = index_.find(pack(table, row_id));
    if (it == index_.end())
        throw std::out_of_range("SparseGrads: no gradient for " +
                                std::string(to_string(table)) + " row " +
                                std::to_string(row_id));
    return {data_.data() + it->second * dim_, static_cast<std::size_t>(dim_)};
}

bool SparseGrads::has_row(ParamTable table, std::int32_t row_id) const {
    return index_.count(pack(table, row_id)) != 0;
}

void SparseGrads::accumulate(ParamTable table, std::int32_t row_id,
                             std::span<const double> grad) {
    auto dst = row(table, row_id);
    for (int i = 0; i < dim_; ++i) dst[i] += grad[i];
}

void SparseGrads::merge(const SparseGrads& other) {
    for (std::size_t k = 0; k < other.keys_.size(); ++k)
        accumulate(other.keys_[k].table, other.keys_[k].row, other.grad_at(k));
}

void SparseGrads::clear() {
    keys_.clear();
    data_.clear();
    index_.clear();
}

AdamState AdamState::like(const ModelParams& params) {
    AdamState state;
    state.m_entity.assign(params.entity_data.size(), 0.0);
    state.v_entity.assign(params.entity_data.size(), 0.0);
    state.m_relation.assign(params.relation_data.size(), 0.0);
    state.v_relation.assign(params.relation_data.size(), 0.0);
    return state;
}

std::vector<EntityId> sample_negatives(const Query& query, int m, EntityId num_entities,
                                       std::mt19937_64& rng) {
    if (num_entities < 2)
        throw std::invalid_argument("sample_negatives: need at least 2 entities");
    const auto want = static_cast<std::size_t>(
        std::min<std::int64_t>(std::max(m, 0), num_entities - 1));

    std::uniform_int_distribution<EntityId> pick(0, num_entities - 1);
    std::vector<EntityId> negatives;
    negatives.reserve(want);
    std::unordered_set<EntityId> seen;
    seen.reserve(want * 2);
    while (negatives.size() < want) {
        EntityId e = pick(rng);
        if (e == query.truth || !seen.insert(e).second) continue;
        negatives.push_back(e);
    }
    return negatives;
}

namespace {

struct GradWorkspace {
    std::vector<EntityId> pool;
    std::vector<double> scores, coeff, anchor_rel, d_anchor, d_rel, d_cand;
    std::vector<EntityId> touched_entities;
};

// Accumulates one example's gradient contributions into `grads` and returns
// the example loss. Contribution order per example is fixed: candidate rows
// in pool order, then the anchor row, then the relation row, then (for
// l2 > 0) one ridge term per distinct touched row.
double accumulate_example(const ModelParams& params, const Query& query,
                          std::span<const EntityId> negatives, double l2,
                          SparseGrads& grads, GradWorkspace& ws) {
    const int dim = params.dim;
    if (query.anchor < 0 || query.anchor >= params.num_entities ||
        query.truth < 0 || query.truth >= params.num_entities)
        throw std::out_of_range("example gradients: entity id out of range");
    if (query.relation < 0 || query.relation >= params.num_relations)
        throw std::out_of_range("example gradients: relation id out of range");

    ws.pool.clear();
    ws.pool.push_back(query.truth);
    for (EntityId e : negatives) {
        if (e == query.truth)
            throw std::invalid_argument("example gradients: negatives contain the truth");
        if (e < 0 || e >= params.num_entities)
            throw std::out_of_range("example gradients: negative id out of range");
        ws.pool.push_back(e);
    }

    auto anchor = params.entity_row(query.anchor);
    auto rel = params.relation_row(query.relation);

    // same kernel as score_all_candidates: sum_i (anchor_i * cand_i) * rel_i
    ws.scores.resize(ws.pool.size());
    for (std::size_t j = 0; j < ws.pool.size(); ++j) {
        auto cand = params.entity_row(ws.pool[j]);
        double sum = 0.0;
        for (int i = 0; i < dim; ++i) sum += (anchor[i] * cand[i]) * rel[i];
        ws.scores[j] = sum;
    }

    // stable softmax; coeff_j = p_j - [j == truth]
    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : ws.scores) {
        if (!std::isfinite(s))
            throw std::invalid_argument("example gradients: non-finite score");
        max_score = std::max(max_score, s);
    }
    ws.coeff.resize(ws.scores.size());
    double exp_sum = 0.0;
    for (std::size_t j = 0; j < ws.scores.size(); ++j) {
        ws.coeff[j] = std::exp(ws.scores[j] - max_score);
        exp_sum += ws.coeff[j];
    }
    const double loss = std::log(exp_sum) - (ws.scores[0] - max_score);
    for (double& c : ws.coeff) c /= exp_sum;
    ws.coeff[0] -= 1.0;

    ws.anchor_rel.resize(dim);
    for (int i = 0; i < dim; ++i) ws.anchor_rel[i] = anchor[i] * rel[i];

    ws.d_anchor.assign(dim, 0.0);
    ws.d_rel.assign(dim, 0.0);
    ws.d_cand.resize(dim);
    for (std::size_t j = 0; j < ws.pool.size(); ++j) {
        auto cand = params.entity_row(ws.pool[j]);
        const double cj = ws.coeff[j];
        for (int i = 0; i < dim; ++i) {
            ws.d_anchor[i] += cj * (rel[i] * cand[i]);
            ws.d_rel[i] += cj * (anchor[i] * cand[i]);
            ws.d_cand[i] = cj * ws.anchor_rel[i];
        }
        grads.accumulate(ParamTable::Entity, ws.pool[j], ws.d_cand);
    }
    grads.accumulate(ParamTable::Entity, query.anchor, ws.d_anchor);
    grads.accumulate(ParamTable::Relation, query.relation, ws.d_rel);

    if (l2 > 0.0) {
        ws.touched_entities = ws.pool;
        ws.touched_entities.push_back(query.anchor);
        std::sort(ws.touched_entities.begin(), ws.touched_entities.end());
        ws.touched_entities.erase(
            std::unique(ws.touched_entities.begin(), ws.touched_entities.end()),
            ws.touched_entities.end());
        for (EntityId row : ws.touched_entities) {
            auto param_row = params.entity_row(row);
            for (int i = 0; i < dim; ++i) ws.d_cand[i] = l2 * param_row[i];
            grads.accumulate(ParamTable::Entity, row, ws.d_cand);
        }
        for (int i = 0; i < dim; ++i) ws.d_cand[i] = l2 * rel[i];
        grads.accumulate(ParamTable::Relation, query.relation, ws.d_cand);
    }
    return loss;
}

// Examples per reduction chunk, sized so a chunk-local accumulator stays a
// few MB. A pure function of the batch shape, so the reduction order (and
// hence every bit of the result) is independent of the thread count.
std::size_t grad_chunk_size(std::size_t dim, std::size_t negatives_per_example) {
    const std::size_t row_bytes = dim * sizeof(double);
    const std::size_t example_bytes = (negatives_per_example + 3) * row_bytes;
    return std::clamp<std::size_t>((std::size_t{4} << 20) / std::max<std::size_t>(example_bytes, 1),
                                   1, 256);
}

BatchGrads compute_batch_grads_impl(const ModelParams& params,
                                    std::span<const Query> queries,
                                    std::span<const std::vector<EntityId>> negatives,
                                    double l2, bool parallel) {
    if (queries.size() != negatives.size())
        throw std::invalid_argument("compute_batch_grads: negatives/queries size mismatch");
    BatchGrads batch{0.0, SparseGrads(params.dim)};
    const std::size_t n = queries.size();
    if (n == 0) return batch;

    const std::size_t chunk =
        grad_chunk_size(static_cast<std::size_t>(params.dim), negatives[0].size());
    const std::size_t num_chunks = (n + chunk - 1) / chunk;

    auto accumulate_chunk = [&](std::size_t c, SparseGrads& local, GradWorkspace& ws) {
        local.clear();
        double loss = 0.0;
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(begin + chunk, n);
        for (std::size_t i = begin; i < end; ++i)
            loss += accumulate_example(params, queries[i], negatives[i], l2, local, ws);
        return loss;
    };

    if (!parallel) {
        SparseGrads local(params.dim);
        GradWorkspace ws;
        for (std::size_t c = 0; c < num_chunks; ++c) {
            batch.loss_sum += accumulate_chunk(c, local, ws);
            batch.grads.merge(local);
        }
        return batch;
    }

    // Threads fill reusable chunk-local accumulators concurrently; the
    // ordered region merges them in chunk order, which is exactly the
    // reduction sequence of the serial path above. Exceptions may not escape
    // the parallel region, so the first one is stashed and rethrown after.
#ifdef _OPENMP
    std::exception_ptr first_error = nullptr;
#pragma omp parallel
    {
        SparseGrads local(params.dim);
        GradWorkspace ws;
        bool failed = false;
#pragma omp for schedule(static, 1) ordered
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(num_chunks); ++c) {
            double loss = 0.0;
            if (!failed) {
                try {
                    loss = accumulate_chunk(static_cast<std::size_t>(c), local, ws);
                } catch (...) {
                    failed = true;
#pragma omp critical(kbc_batch_grads_error)
                    if (first_error == nullptr) first_error = std::current_exception();
                }
            }
#pragma omp ordered
            {
                if (!failed) {
                    batch.loss_sum += loss;
                    batch.grads.merge(local);
                }
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);
#else
    SparseGrads local(params.dim);
    GradWorkspace ws;
    for (std::size_t c = 0; c < num_chunks; ++c) {
        batch.loss_sum += accumulate_chunk(c, local, ws);
        batch.grads.merge(local);
    }
#endif
    return batch;
}

}  // namespace

ExampleGrads example_loss_and_grads(const ModelParams& params, const Query& query,
                                    std::span<const EntityId> negatives, double l2) {
    ExampleGrads out{0.0, SparseGrads(params.dim)};
    GradWorkspace ws;
    out.loss = accumulate_example(params, query, negatives, l2, out.grads, ws);
    return out;
}

BatchGrads compute_batch_grads_serial(const ModelParams& params,
                                      std::span<const Query> queries,
                                      std::span<const std::vector<EntityId>> negatives,
                                      double l2) {
    return compute_batch_grads_impl(params, queries, negatives, l2, false);
}

BatchGrads compute_batch_grads_parallel(const ModelParams& params,
                                        std::span<const Query> queries,
                                        std::span<const std::vector<EntityId>> negatives,
                                        double l2) {
    return compute_batch_grads_impl(params, queries, negatives, l2, true);
}

void adam_step(ModelParams& params, AdamState& state, const SparseGrads& grads,
               const TrainConfig& config) {
    if (state.m_entity.size() != params.entity_data.size() ||
        state.m_relation.size() != params.relation_data.size())
        throw std::invalid_argument("adam_step: state shape does not match params");
    if (grads.dim() != params.dim)
        throw std::invalid_argument("adam_step: gradient dim does not match params");

    state.step += 1;
    const double beta1 = config.adam_beta1;
    const double beta2 = config.adam_beta2;
    const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    const int dim = params.dim;

    for (std::size_t k = 0; k < grads.keys().size(); ++k) {
        const auto key = grads.keys()[k];
        auto grad = grads.grad_at(k);
        for (int i = 0; i < dim; ++i)
            if (!std::isfinite(grad[i]))
                throw std::runtime_error(std::string("adam_step: non-finite gradient for ") +
                                         to_string(key.table) + " row " +
                                         std::to_string(key.row));

        const bool is_entity = key.table == ParamTable::Entity;
        const auto count = is_entity ? params.num_entities
                                     : static_cast<EntityId>(params.num_relations);
        if (key.row < 0 || key.row >= count)
            throw std::out_of_range(std::string("adam_step: ") + to_string(key.table) +
                                    " row " + std::to_string(key.row) + " out of range");

        const std::size_t offset = static_cast<std::size_t>(key.row) * dim;
        double* theta = (is_entity ? params.entity_data : params.relation_data).data() + offset;
        double* m = (is_entity ? state.m_entity : state.m_relation).data() + offset;
        double* v = (is_entity ? state.v_entity : state.v_relation).data() + offset;
        for (int i = 0; i < dim; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
    }
}

double train_epoch(ModelParams& params, AdamState& state, std::vector<Query>& queries,
                   const TrainConfig& config, std::mt19937_64& rng) {
    if (queries.empty()) throw std::invalid_argument("train_epoch: no queries");

    std::shuffle(queries.begin(), queries.end(), rng);

    const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
    std::vector<std::vector<EntityId>> negatives;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < queries.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, queries.size() - start);
        std::span<const Query> batch(queries.data() + start, count);

        negatives.clear();
        negatives.reserve(count);
        for (const Query& query : batch)
            negatives.push_back(
                sample_negatives(query, config.negatives, params.num_entities, rng));

        BatchGrads grads = compute_batch_grads_parallel(params, batch, negatives, config.l2);
        loss_sum += grads.loss_sum;
        adam_step(params, state, grads.grads, config);
    }
    return loss_sum / static_cast<double>(queries.size());
}

FitResult fit(const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    const EntityId num_entities = dataset.vocab.num_entities();
    const RelationId num_relations = dataset.vocab.num_relations();
    if (num_entities < 2)
        throw std::invalid_argument("fit: need at least 2 entities for negative sampling");

    ModelParams params = init_params(num_entities, num_relations, config.dim,
                                     derive_seed(config.seed, 0));
    TrainHistory history;
    history.stopped_reason = "max_epochs";
    if (config.max_epochs == 0) return FitResult{std::move(params), std::move(history)};

    if (dataset.train.empty()) throw std::invalid_argument("fit: train split is empty");
    if (config.eval_every > 0 && dataset.valid.empty())
        throw std::invalid_argument("fit: validation split is empty but eval_every > 0");

    std::vector<Query> train_queries = expand_queries(dataset.train);

    std::vector<Query> valid_queries = expand_queries(dataset.valid);
    if (config.valid_sample > 0 &&
        valid_queries.size() > static_cast<std::size_t>(config.valid_sample)) {
        auto rng = make_rng(config.seed, 1);
        std::vector<Query> sampled;
        sampled.reserve(static_cast<std::size_t>(config.valid_sample));
        std::sample(valid_queries.begin(), valid_queries.end(), std::back_inserter(sampled),
                    config.valid_sample, rng);
        valid_queries = std::move(sampled);
    }

    AdamState state = AdamState::like(params);
    ModelParams best_params;
    double best_hits10 = -std::numeric_limits<double>::infinity();
    int evals_without_improvement = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto rng = make_rng(config.seed, 1000 + static_cast<std::uint64_t>(epoch));
        history.epoch_mean_loss.push_back(
            train_epoch(params, state, train_queries, config, rng));

        if (config.eval_every > 0 && epoch % config.eval_every == 0) {
            EvalOptions options;
            options.ks = {10};
            EvalReport report =
                evaluate(params, valid_queries, num_entities, dataset.filter, options);
            const double hits10 = report.overall.hits_at.at(10);
            history.evaluations.push_back(EvalPoint{epoch, hits10});

            if (hits10 > best_hits10) {
                best_hits10 = hits10;
                best_params = params;
                history.best_epoch = epoch;
                evals_without_improvement = 0;
            } else if (++evals_without_improvement >= config.patience) {
                history.stopped_reason = "early_stop";
                break;
            }
        }
    }

    if (history.best_epoch > 0)
        return FitResult{std::move(best_params), std::move(history)};
    return FitResult{std::move(params), std::move(history)};
}

void write_history_jsonl(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write history: " + path.string());

    std::size_t next_eval = 0;
    for (std::size_t e = 0; e < history.epoch_mean_loss.size(); ++e) {
        const int epoch = static_cast<int>(e) + 1;
        nlohmann::ordered_json record{
            {"type", "epoch"}, {"epoch", epoch}, {"mean_loss", history.epoch_mean_loss[e]}};
        out << record.dump() << '\n';
        while (next_eval < history.evaluations.size() &&
               history.evaluations[next_eval].epoch == epoch) {
            nlohmann::ordered_json eval_record{
                {"type", "eval"},
                {"epoch", epoch},
                {"valid_hits10", history.evaluations[next_eval].valid_hits10}};
            out << eval_record.dump() << '\n';
            ++next_eval;
        }
    }
    nlohmann::ordered_json summary{{"type", "summary"},
                                   {"epochs", history.epoch_mean_loss.size()},
                                   {"best_epoch", history.best_epoch},
                                   {"stopped_reason", history.stopped_reason}};
    out << summary.dump() << '\n';
}

}  // namespace kbc
