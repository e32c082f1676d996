#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "kbc/dataset.hpp"
#include "kbc/model.hpp"
#include "kbc/types.hpp"

namespace kbc {

enum class TiePolicy { Optimistic, Pessimistic, Average };

const char* to_string(TiePolicy policy);
TiePolicy tie_policy_from_string(const std::string& name);

struct Metrics {
    double mean_rank = 0.0;
    double mean_reciprocal_rank = 0.0;
    std::map<int, double> hits_at;  // k -> fraction in [0,1]
    std::size_t num_queries = 0;
};

Metrics aggregate_metrics(std::span<const double> ranks, const std::vector<int>& ks);

// Filtered candidate set: every entity whose substitution into the open slot
// is NOT a known triple, plus the truth itself. Sorted ascending; the truth
// appears exactly once.
std::vector<EntityId> build_candidates(const Query& query, EntityId num_entities,
                                       const FilterIndex& filter);

// With s* the truth's score, G = #{scores > s*} and T = #{non-truth scores
// == s*}: Optimistic G+1, Pessimistic G+T+1, Average G+1+T/2.
double rank_of_truth(const ScoredCandidates& scored, TiePolicy policy);

// Anything that can score a candidate list for a query; must be safe to call
// from several threads at once against frozen state.
class CandidateScorer {
public:
    virtual ~CandidateScorer() = default;
    virtual ScoredCandidates score_candidates(const Query& query,
                                              std::span<const EntityId> candidates) const = 0;
};

class ModelScorer : public CandidateScorer {
public:
    explicit ModelScorer(const ModelParams& params) : params_(&params) {}
    ScoredCandidates score_candidates(const Query& query,
                                      std::span<const EntityId> candidates) const override;

private:
    const ModelParams* params_;
};

// Filtered rank of every query, in query order. The OpenMP version assigns
// each query's rank to its own slot, so the output is identical to the serial
// reference for any thread count; the serial version is kept as the reference
// kernel for tests and the benchmark.
std::vector<double> compute_ranks_serial(const CandidateScorer& scorer,
                                         std::span<const Query> queries,
                                         EntityId num_entities, const FilterIndex& filter,
                                         TiePolicy policy);
std::vector<double> compute_ranks_parallel(const CandidateScorer& scorer,
                                           std::span<const Query> queries,
                                           EntityId num_entities, const FilterIndex& filter,
                                           TiePolicy policy);

struct EvalOptions {
    TiePolicy policy = TiePolicy::Average;
    std::vector<int> ks = {1, 3, 10};
    bool parallel = true;
};

struct EvalReport {
    Metrics overall;  // head and tail queries pooled
    Metrics head;
    Metrics tail;
    TiePolicy policy = TiePolicy::Average;
    std::vector<double> ranks;                // per query, query order
    std::vector<QueryDirection> directions;   // parallel to ranks
};

EvalReport evaluate(const CandidateScorer& scorer, std::span<const Query> queries,
                    EntityId num_entities, const FilterIndex& filter,
                    const EvalOptions& options = {});
EvalReport evaluate(const ModelParams& params, std::span<const Query> queries,
                    EntityId num_entities, const FilterIndex& filter,
                    const EvalOptions& options = {});

}  // namespace kbc
