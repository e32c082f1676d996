#include "kbc/evaluator.hpp"

#include <algorithm>
#include <stdexcept>

namespace kbc {

const char* to_string(TiePolicy policy) {
    switch (policy) {
        case TiePolicy::Optimistic: return "optimistic";
        case TiePolicy::Pessimistic: return "pessimistic";
        case TiePolicy::Average: return "average";
    }
    return "average";
}

TiePolicy tie_policy_from_string(const std::string& name) {
    if (name == "optimistic") return TiePolicy::Optimistic;
    if (name == "pessimistic") return TiePolicy::Pessimistic;
    if (name == "average") return TiePolicy::Average;
    throw std::invalid_argument("unknown tie policy '" + name +
                                "' (expected optimistic|pessimistic|average)");
}

Metrics aggregate_metrics(std::span<const double> ranks, const std::vector<int>& ks) {
    Metrics metrics;
    metrics.num_queries = ranks.size();
    for (int k : ks) metrics.hits_at[k] = 0.0;
    if (ranks.empty()) return metrics;

    double rank_sum = 0.0;
    double reciprocal_sum = 0.0;
    for (double rank : ranks) {
        rank_sum += rank;
        reciprocal_sum += 1.0 / rank;
        for (int k : ks)
            if (rank <= static_cast<double>(k)) metrics.hits_at[k] += 1.0;
    }
    const auto n = static_cast<double>(ranks.size());
    metrics.mean_rank = rank_sum / n;
    metrics.mean_reciprocal_rank = reciprocal_sum / n;
    for (auto& [k, hits] : metrics.hits_at) hits /= n;
    return metrics;
}

std::vector<EntityId> build_candidates(const Query& query, EntityId num_entities,
                                       const FilterIndex& filter) {
    std::span<const EntityId> known = filter.known_completions(query);

    std::vector<EntityId> candidates;
    candidates.reserve(static_cast<std::size_t>(num_entities) - known.size() + 1);
    std::size_t next_known = 0;  // known is sorted ascending
    for (EntityId e = 0; e < num_entities; ++e) {
        while (next_known < known.size() && known[next_known] < e) ++next_known;
        const bool is_known = next_known < known.size() && known[next_known] == e;
        if (e == query.truth || !is_known) candidates.push_back(e);
    }
    return candidates;
}

double rank_of_truth(const ScoredCandidates& scored, TiePolicy policy) {
    if (scored.scores.size() != scored.candidate_ids.size() || scored.scores.empty() ||
        scored.truth_position >= scored.scores.size())
        throw std::invalid_argument("rank_of_truth: malformed ScoredCandidates");

    const double truth_score = scored.scores[scored.truth_position];
    std::size_t greater = 0;
    std::size_t tied = 0;
    for (std::size_t j = 0; j < scored.scores.size(); ++j) {
        if (scored.scores[j] > truth_score) ++greater;
        else if (scored.scores[j] == truth_score && j != scored.truth_position) ++tied;
    }
    switch (policy) {
        case TiePolicy::Optimistic: return static_cast<double>(greater + 1);
        case TiePolicy::Pessimistic: return static_cast<double>(greater + tied + 1);
        case TiePolicy::Average:
            return static_cast<double>(greater + 1) + static_cast<double>(tied) / 2.0;
    }
    return static_cast<double>(greater + 1);
}

ScoredCandidates ModelScorer::score_candidates(const Query& query,
                                               std::span<const EntityId> candidates) const {
    return score_all_candidates(*params_, query, candidates);
}

namespace {

double query_rank(const CandidateScorer& scorer, const Query& query, EntityId num_entities,
                  const FilterIndex& filter, TiePolicy policy) {
    std::vector<EntityId> candidates = build_candidates(query, num_entities, filter);
    ScoredCandidates scored = scorer.score_candidates(query, candidates);
    return rank_of_truth(scored, policy);
}

}  // namespace

std::vector<double> compute_ranks_serial(const CandidateScorer& scorer,
                                         std::span<const Query> queries,
                                         EntityId num_entities, const FilterIndex& filter,
                                         TiePolicy policy) {
    std::vector<double> ranks(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        ranks[i] = query_rank(scorer, queries[i], num_entities, filter, policy);
    return ranks;
}

std::vector<double> compute_ranks_parallel(const CandidateScorer& scorer,
                                           std::span<const Query> queries,
                                           EntityId num_entities, const FilterIndex& filter,
                                           TiePolicy policy) {
    std::vector<double> ranks(queries.size());
    // Each query writes only its own slot; the result is identical to the
    // serial reference for any thread count.
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(queries.size()); ++i)
        ranks[static_cast<std::size_t>(i)] =
            query_rank(scorer, queries[static_cast<std::size_t>(i)], num_entities, filter,
                       policy);
    return ranks;
}

EvalReport evaluate(const CandidateScorer& scorer, std::span<const Query> queries,
                    EntityId num_entities, const FilterIndex& filter,
                    const EvalOptions& options) {
    if (queries.empty()) throw std::invalid_argument("evaluate: no queries");

    EvalReport report;
    report.policy = options.policy;
    report.ranks = options.parallel
                       ? compute_ranks_parallel(scorer, queries, num_entities, filter,
                                                options.policy)
                       : compute_ranks_serial(scorer, queries, num_entities, filter,
                                              options.policy);
    report.directions.reserve(queries.size());
    for (const Query& query : queries) report.directions.push_back(query.direction);

    report.overall = aggregate_metrics(report.ranks, options.ks);

    std::vector<double> head_ranks, tail_ranks;
    for (std::size_t i = 0; i < report.ranks.size(); ++i) {
        (report.directions[i] == QueryDirection::Head ? head_ranks : tail_ranks)
            .push_back(report.ranks[i]);
    }
    report.head = aggregate_metrics(head_ranks, options.ks);
    report.tail = aggregate_metrics(tail_ranks, options.ks);
    return report;
}

EvalReport evaluate(const ModelParams& params, std::span<const Query> queries,
                    EntityId num_entities, const FilterIndex& filter,
                    const EvalOptions& options) {
    ModelScorer scorer(params);
    return evaluate(scorer, queries, num_entities, filter, options);
}

}  // namespace kbc
