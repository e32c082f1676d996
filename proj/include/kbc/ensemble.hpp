#pragma once

#include <span>
#include <vector>

#include "kbc/evaluator.hpp"
#include "kbc/model.hpp"
#include "kbc/types.hpp"

namespace kbc {

// Prediction-averaging ensemble. Members may have different dims but must
// share the vocabulary (same entity and relation counts); raw scores across
// dims are not comparable, so averaging happens after softmax.
struct Ensemble {
    std::vector<ModelParams> members;

    explicit Ensemble(std::vector<ModelParams> members_);
};

// Each member's candidate scores are softmax-normalized over the candidate
// set and the probability vectors are averaged with equal weights. The
// returned scores form a probability distribution.
ScoredCandidates ensemble_scores(const Ensemble& ensemble, const Query& query,
                                 std::span<const EntityId> candidates);

class EnsembleScorer : public CandidateScorer {
public:
    explicit EnsembleScorer(const Ensemble& ensemble) : ensemble_(&ensemble) {}
    ScoredCandidates score_candidates(const Query& query,
                                      std::span<const EntityId> candidates) const override;

private:
    const Ensemble* ensemble_;
};

}  // namespace kbc
