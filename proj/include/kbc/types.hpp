#pragma once

#include <cstdint>
#include <string>

namespace kbc {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

// A fact as it appears in the input files, before id translation.
struct RawTriple {
    std::string head;
    std::string relation;
    std::string tail;

    bool operator==(const RawTriple&) const = default;
};

struct Triple {
    EntityId h;
    RelationId r;
    EntityId t;

    bool operator==(const Triple&) const = default;
};

// Tail: ⟨anchor, relation, ?⟩ with the missing tail as truth.
// Head: ⟨?, relation, anchor⟩ with the missing head as truth.
enum class QueryDirection : std::uint8_t { Tail, Head };

inline const char* to_string(QueryDirection d) {
    return d == QueryDirection::Tail ? "tail" : "head";
}

struct Query {
    EntityId anchor;
    RelationId relation;
    QueryDirection direction;
    EntityId truth;

    bool operator==(const Query&) const = default;

    // The triple this query was expanded from.
    Triple triple() const {
        if (direction == QueryDirection::Tail)
            return Triple{anchor, relation, truth};
        return Triple{truth, relation, anchor};
    }

    // The triple obtained by substituting `candidate` into the open slot.
    Triple substituted(EntityId candidate) const {
        if (direction == QueryDirection::Tail)
            return Triple{anchor, relation, candidate};
        return Triple{candidate, relation, anchor};
    }
};

}  // namespace kbc
