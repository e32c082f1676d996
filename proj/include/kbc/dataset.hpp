#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "kbc/types.hpp"
#include "kbc/vocabulary.hpp"

namespace kbc {

// Reads one split file: UTF-8 text, one triple per line, exactly three
// tab-separated fields (head, relation, tail). Blank lines are skipped.
// Throws std::runtime_error naming the file and 1-based line on format errors.
std::vector<RawTriple> load_split(const std::filesystem::path& path);

// Assigns dense ids by first appearance, scanning train then valid then test,
// head before tail within each triple. Deterministic for fixed input.
Vocabulary build_vocabulary(const std::vector<RawTriple>& train,
                            const std::vector<RawTriple>& valid,
                            const std::vector<RawTriple>& test);

// Order-preserving id translation; throws naming the unknown token.
std::vector<Triple> encode(const std::vector<RawTriple>& raw, const Vocabulary& vocab);
std::vector<RawTriple> decode(const std::vector<Triple>& triples, const Vocabulary& vocab);

// Each triple becomes a tail query ⟨h,r,?⟩ followed by a head query ⟨?,r,t⟩.
std::vector<Query> expand_queries(std::span<const Triple> triples);

// Deduplicated membership over train ∪ valid ∪ test, plus grouped access to
// the known-true completions of a (anchor, relation, direction) slot, which is
// what filtered candidate construction walks. Immutable after construction.
class FilterIndex {
public:
    FilterIndex() = default;
    FilterIndex(std::span<const Triple> train,
                std::span<const Triple> valid,
                std::span<const Triple> test,
                EntityId num_entities, RelationId num_relations);

    bool contains(const Triple& triple) const;

    // Sorted, deduplicated known-true tails of (h, r); empty span if none.
    std::span<const EntityId> known_tails(EntityId h, RelationId r) const;
    std::span<const EntityId> known_heads(EntityId t, RelationId r) const;
    std::span<const EntityId> known_completions(const Query& query) const;

    std::size_t size() const { return size_; }

private:
    void insert(const Triple& triple);

    static std::uint64_t pack(std::int64_t a, std::int64_t b) {
        return (static_cast<std::uint64_t>(a) << 21) | static_cast<std::uint64_t>(b);
    }

    std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_by_hr_;
    std::unordered_map<std::uint64_t, std::vector<EntityId>> heads_by_tr_;
    std::size_t size_ = 0;
};

FilterIndex build_filter_index(std::span<const Triple> train,
                               std::span<const Triple> valid,
                               std::span<const Triple> test,
                               EntityId num_entities, RelationId num_relations);

struct Dataset {
    Vocabulary vocab;
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
    FilterIndex filter;
};

// Loads train.txt/valid.txt/test.txt from `dir` and builds everything above.
Dataset load_dataset(const std::filesystem::path& dir);

// Vocabulary dump: one token per line, line number = id.
void save_vocabulary(const Vocabulary& vocab,
                     const std::filesystem::path& entities_path,
                     const std::filesystem::path& relations_path);
Vocabulary load_vocabulary(const std::filesystem::path& entities_path,
                           const std::filesystem::path& relations_path);

}  // namespace kbc
