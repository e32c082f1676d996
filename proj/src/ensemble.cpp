#include "kbc/ensemble.hpp"

#include <stdexcept>
#include <string>

namespace kbc {

Ensemble::Ensemble(std::vector<ModelParams> members_) : members(std::move(members_)) {
    if (members.empty()) throw std::invalid_argument("ensemble: needs at least one member");
    for (std::size_t k = 1; k < members.size(); ++k) {
        if (members[k].num_entities != members[0].num_entities ||
            members[k].num_relations != members[0].num_relations)
            throw std::invalid_argument(
                "ensemble: member " + std::to_string(k) + " has " +
                std::to_string(members[k].num_entities) + " entities / " +
                std::to_string(members[k].num_relations) + " relations, expected " +
                std::to_string(members[0].num_entities) + " / " +
                std::to_string(members[0].num_relations));
    }
}

ScoredCandidates ensemble_scores(const Ensemble& ensemble, const Query& query,
                                 std::span<const EntityId> candidates) {
    // Extended-precision accumulation keeps "k identical members" exactly
    // equal to the single model: k*p is exact in 64-bit-mantissa arithmetic
    // for any realistic member count, and (k*p)/k recovers p.
    std::vector<long double> sums(candidates.size(), 0.0L);
    ScoredCandidates out;
    for (const ModelParams& member : ensemble.members) {
        out = score_all_candidates(member, query, candidates);
        std::vector<double> probs = softmax_probs(out.scores);
        for (std::size_t j = 0; j < probs.size(); ++j) sums[j] += probs[j];
    }
    const auto count = static_cast<long double>(ensemble.members.size());
    for (std::size_t j = 0; j < sums.size(); ++j)
        out.scores[j] = static_cast<double>(sums[j] / count);
    return out;
}

ScoredCandidates EnsembleScorer::score_candidates(const Query& query,
                                                  std::span<const EntityId> candidates) const {
    return ensemble_scores(*ensemble_, query, candidates);
}

}  // namespace kbc
