#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbc/types.hpp"

namespace kbc {

// Bidirectional string<->id maps for entities and relations.
// Ids are dense and assigned in insertion order, so the maps and the
// id-indexed arrays stay mutually inverse by construction.
class Vocabulary {
public:
    EntityId add_entity(const std::string& name) {
        auto [it, inserted] = entity_to_id_.try_emplace(
            name, static_cast<EntityId>(id_to_entity_.size()));
        if (inserted) id_to_entity_.push_back(name);
        return it->second;
    }

    RelationId add_relation(const std::string& name) {
        auto [it, inserted] = relation_to_id_.try_emplace(
            name, static_cast<RelationId>(id_to_relation_.size()));
        if (inserted) id_to_relation_.push_back(name);
        return it->second;
    }

    std::optional<EntityId> entity_id(const std::string& name) const {
        auto it = entity_to_id_.find(name);
        if (it == entity_to_id_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<RelationId> relation_id(const std::string& name) const {
        auto it = relation_to_id_.find(name);
        if (it == relation_to_id_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& entity_name(EntityId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_entity_.size())
            throw std::out_of_range("entity id " + std::to_string(id) + " out of range");
        return id_to_entity_[static_cast<std::size_t>(id)];
    }

    const std::string& relation_name(RelationId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_relation_.size())
            throw std::out_of_range("relation id " + std::to_string(id) + " out of range");
        return id_to_relation_[static_cast<std::size_t>(id)];
    }

    EntityId num_entities() const { return static_cast<EntityId>(id_to_entity_.size()); }
    RelationId num_relations() const { return static_cast<RelationId>(id_to_relation_.size()); }

    const std::vector<std::string>& entities() const { return id_to_entity_; }
    const std::vector<std::string>& relations() const { return id_to_relation_; }

    bool operator==(const Vocabulary& other) const {
        return id_to_entity_ == other.id_to_entity_ &&
               id_to_relation_ == other.id_to_relation_;
    }

private:
    std::unordered_map<std::string, EntityId> entity_to_id_;
    std::vector<std::string> id_to_entity_;
    std::unordered_map<std::string, RelationId> relation_to_id_;
    std::vector<std::string> id_to_relation_;
};

}  // namespace kbc
