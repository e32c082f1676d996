#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kbc/types.hpp"

namespace kbc {

// DistMult parameters: dense row-major embedding tables, 64-bit floats.
// Rows are never normalized at any point.
struct ModelParams {
    int dim = 0;
    EntityId num_entities = 0;
    RelationId num_relations = 0;
    std::vector<double> entity_data;    // num_entities x dim
    std::vector<double> relation_data;  // num_relations x dim

    std::span<double> entity_row(EntityId id) {
        return {entity_data.data() + static_cast<std::size_t>(id) * dim,
                static_cast<std::size_t>(dim)};
    }
    std::span<const double> entity_row(EntityId id) const {
        return {entity_data.data() + static_cast<std::size_t>(id) * dim,
                static_cast<std::size_t>(dim)};
    }
    std::span<double> relation_row(RelationId id) {
        return {relation_data.data() + static_cast<std::size_t>(id) * dim,
                static_cast<std::size_t>(dim)};
    }
    std::span<const double> relation_row(RelationId id) const {
        return {relation_data.data() + static_cast<std::size_t>(id) * dim,
                static_cast<std::size_t>(dim)};
    }

    bool operator==(const ModelParams&) const = default;
};

// Entries i.i.d. normal(0, 1/sqrt(dim)) from a seeded generator; the same
// seed reproduces the same tables bit for bit.
ModelParams init_params(EntityId num_entities, RelationId num_relations, int dim,
                        std::uint64_t seed);

// s(h,r,t) = sum_i h_i r_i t_i, accumulated in ascending index order with the
// per-index product computed as (h_i * t_i) * r_i. Multiplying the two entity
// components first makes score(h,r,t) == score(t,r,h) bit-exact.
double score(const ModelParams& params, EntityId h, RelationId r, EntityId t);

// log P(target) with max-subtraction. Throws on a non-finite score.
double log_softmax(std::span<const double> scores, std::size_t target);

// Softmax probabilities over the whole vector, same stabilization.
std::vector<double> softmax_probs(std::span<const double> scores);

struct ScoredCandidates {
    std::vector<EntityId> candidate_ids;
    std::vector<double> scores;  // parallel to candidate_ids
    std::size_t truth_position = 0;
};

// Scores every candidate against the query with the same kernel as score():
// tail queries score (anchor, r, candidate), head queries (candidate, r,
// anchor); both reduce to sum_i (anchor_i * candidate_i) * r_i, so the result
// is bit-identical to per-candidate score() calls in either direction.
ScoredCandidates score_all_candidates(const ModelParams& params, const Query& query,
                                      std::span<const EntityId> candidates);

// Checkpoint: text header "distmult v1 <|E|> <|R|> <N>\n" followed by the
// entity then relation table as row-major little-endian 64-bit floats.
// Round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace kbc
