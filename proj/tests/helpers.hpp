#pragma once

// Shared test utilities: temp dirs, synthetic datasets, and the independent
// oracles (brute-force ranking, finite differences) the suites check against.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "kbc/dataset.hpp"
#include "kbc/evaluator.hpp"
#include "kbc/model.hpp"
#include "kbc/trainer.hpp"
#include "kbc/types.hpp"

namespace testutil {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("kbc_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Random dataset over dense ids, duplicates allowed within and across splits.
inline kbc::Dataset random_dataset(std::mt19937_64& rng, int max_entities = 30,
                                   int max_relations = 5, int max_triples = 200) {
    std::uniform_int_distribution<int> pick_entities(3, max_entities);
    std::uniform_int_distribution<int> pick_relations(1, max_relations);
    std::uniform_int_distribution<int> pick_triples(3, max_triples);

    kbc::Dataset dataset;
    const int num_entities = pick_entities(rng);
    const int num_relations = pick_relations(rng);
    for (int i = 0; i < num_entities; ++i) dataset.vocab.add_entity("e" + std::to_string(i));
    for (int i = 0; i < num_relations; ++i) dataset.vocab.add_relation("r" + std::to_string(i));

    std::uniform_int_distribution<kbc::EntityId> entity(0, num_entities - 1);
    std::uniform_int_distribution<kbc::RelationId> relation(0, num_relations - 1);
    const int total = pick_triples(rng);
    auto random_triple = [&] { return kbc::Triple{entity(rng), relation(rng), entity(rng)}; };
    for (int i = 0; i < total; ++i) {
        auto& split = i % 5 == 3 ? dataset.valid : (i % 5 == 4 ? dataset.test : dataset.train);
        split.push_back(random_triple());
    }
    if (dataset.train.empty()) dataset.train.push_back(random_triple());
    if (dataset.valid.empty()) dataset.valid.push_back(random_triple());
    if (dataset.test.empty()) dataset.test.push_back(random_triple());
    dataset.filter = kbc::FilterIndex(dataset.train, dataset.valid, dataset.test,
                                      num_entities, num_relations);
    return dataset;
}

// 50 entities in 5 clusters of 10; relation r holds for every (source,
// target) pair of clusters (r%5, (2r+1)%5), giving exactly 500 learnable
// triples split 450/25/25.
inline kbc::Dataset clustered_dataset(std::uint64_t seed) {
    constexpr int kClusters = 5, kClusterSize = 10, kRelations = 5;
    kbc::Dataset dataset;
    for (int i = 0; i < kClusters * kClusterSize; ++i)
        dataset.vocab.add_entity("e" + std::to_string(i));
    for (int i = 0; i < kRelations; ++i) dataset.vocab.add_relation("r" + std::to_string(i));

    std::vector<kbc::Triple> all;
    for (kbc::RelationId r = 0; r < kRelations; ++r) {
        const int src = r % kClusters;
        const int dst = (2 * r + 1) % kClusters;
        for (int i = 0; i < kClusterSize; ++i)
            for (int j = 0; j < kClusterSize; ++j)
                all.push_back(kbc::Triple{src * kClusterSize + i, r, dst * kClusterSize + j});
    }
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);

    dataset.train.assign(all.begin(), all.begin() + 450);
    dataset.valid.assign(all.begin() + 450, all.begin() + 475);
    dataset.test.assign(all.begin() + 475, all.end());
    dataset.filter = kbc::FilterIndex(dataset.train, dataset.valid, dataset.test,
                                      dataset.vocab.num_entities(),
                                      dataset.vocab.num_relations());
    return dataset;
}

// Writes a dataset back out as the three split files.
inline void write_dataset_files(const kbc::Dataset& dataset,
                                const std::filesystem::path& dir) {
    auto dump = [&](const std::vector<kbc::Triple>& triples, const char* name) {
        std::ofstream out(dir / name, std::ios::binary);
        for (const kbc::Triple& triple : triples)
            out << dataset.vocab.entity_name(triple.h) << '\t'
                << dataset.vocab.relation_name(triple.r) << '\t'
                << dataset.vocab.entity_name(triple.t) << '\n';
    };
    dump(dataset.train, "train.txt");
    dump(dataset.valid, "valid.txt");
    dump(dataset.test, "test.txt");
}

// Independent brute-force rank: re-scores every entity with its own loop,
// filters by scanning the raw split lists, sorts by score, and reads the
// rank off the sorted order.
inline double oracle_rank(const kbc::ModelParams& params, const kbc::Query& query,
                          const std::vector<kbc::Triple>& train,
                          const std::vector<kbc::Triple>& valid,
                          const std::vector<kbc::Triple>& test, kbc::EntityId num_entities,
                          kbc::TiePolicy policy) {
    auto in_splits = [&](const kbc::Triple& triple) {
        for (const auto* split : {&train, &valid, &test})
            if (std::find(split->begin(), split->end(), triple) != split->end()) return true;
        return false;
    };
    auto naive_score = [&](kbc::EntityId h, kbc::RelationId r, kbc::EntityId t) {
        double sum = 0.0;
        for (int i = 0; i < params.dim; ++i)
            sum += (params.entity_data[static_cast<std::size_t>(h) * params.dim + i] *
                    params.entity_data[static_cast<std::size_t>(t) * params.dim + i]) *
                   params.relation_data[static_cast<std::size_t>(r) * params.dim + i];
        return sum;
    };

    std::vector<std::pair<double, bool>> pool;  // (score, is_truth)
    for (kbc::EntityId e = 0; e < num_entities; ++e) {
        if (e != query.truth && in_splits(query.substituted(e))) continue;
        const kbc::Triple triple = query.substituted(e);
        pool.emplace_back(naive_score(triple.h, triple.r, triple.t), e == query.truth);
    }
    std::sort(pool.begin(), pool.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::size_t truth_idx = 0;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].second) truth_idx = i;
    const double truth_score = pool[truth_idx].first;
    std::size_t first = truth_idx, last = truth_idx;
    while (first > 0 && pool[first - 1].first == truth_score) --first;
    while (last + 1 < pool.size() && pool[last + 1].first == truth_score) ++last;

    switch (policy) {
        case kbc::TiePolicy::Optimistic: return static_cast<double>(first + 1);
        case kbc::TiePolicy::Pessimistic: return static_cast<double>(last + 1);
        case kbc::TiePolicy::Average:
            return (static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0;
    }
    return static_cast<double>(first + 1);
}

// Params with entries quantized to {-1, -0.5, 0, 0.5, 1}: every score is
// exact in binary floating point, so genuine ties occur and all tie policies
// get exercised.
inline kbc::ModelParams quantized_params(kbc::EntityId num_entities,
                                         kbc::RelationId num_relations, int dim,
                                         std::mt19937_64& rng) {
    kbc::ModelParams params = kbc::init_params(num_entities, num_relations, dim, rng());
    std::uniform_int_distribution<int> level(-2, 2);
    for (double& value : params.entity_data) value = level(rng) * 0.5;
    for (double& value : params.relation_data) value = level(rng) * 0.5;
    return params;
}

// NLL objective used by the finite-difference oracle; with l2 > 0 it adds the
// ridge term (l2/2)*||row||^2 over the distinct rows the example touches,
// matching the documented gradient contribution l2 * row.
inline double fd_objective(const kbc::ModelParams& params, const kbc::Query& query,
                           std::span<const kbc::EntityId> negatives, double l2) {
    double loss = kbc::example_loss_and_grads(params, query, negatives, 0.0).loss;
    if (l2 > 0.0) {
        std::vector<kbc::EntityId> rows{query.truth};
        rows.insert(rows.end(), negatives.begin(), negatives.end());
        rows.push_back(query.anchor);
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        double sumsq = 0.0;
        for (kbc::EntityId row : rows)
            for (int i = 0; i < params.dim; ++i) {
                const double v = params.entity_data[static_cast<std::size_t>(row) * params.dim + i];
                sumsq += v * v;
            }
        for (int i = 0; i < params.dim; ++i) {
            const double v =
                params.relation_data[static_cast<std::size_t>(query.relation) * params.dim + i];
            sumsq += v * v;
        }
        loss += 0.5 * l2 * sumsq;
    }
    return loss;
}

// Central finite difference of fd_objective wrt one parameter entry.
inline double fd_grad(kbc::ModelParams params, const kbc::Query& query,
                      std::span<const kbc::EntityId> negatives, double l2,
                      kbc::ParamTable table, std::int32_t row, int i, double eps = 1e-5) {
    double& entry = (table == kbc::ParamTable::Entity ? params.entity_data
                                                      : params.relation_data)
        [static_cast<std::size_t>(row) * params.dim + i];
    const double saved = entry;
    entry = saved + eps;
    const double plus = fd_objective(params, query, negatives, l2);
    entry = saved - eps;
    const double minus = fd_objective(params, query, negatives, l2);
    entry = saved;
    return (plus - minus) / (2.0 * eps);
}

// Max relative error between analytic and finite-difference gradients over
// every touched entry. Components below the 1e-4 floor are compared against
// it instead, since central differences carry ~1e-10 absolute noise.
inline double max_grad_rel_error(const kbc::ModelParams& params, const kbc::Query& query,
                                 std::span<const kbc::EntityId> negatives, double l2) {
    kbc::ExampleGrads example = kbc::example_loss_and_grads(params, query, negatives, l2);
    double worst = 0.0;
    for (std::size_t k = 0; k < example.grads.keys().size(); ++k) {
        const auto key = example.grads.keys()[k];
        auto grad = example.grads.grad_at(k);
        for (int i = 0; i < params.dim; ++i) {
            const double fd = fd_grad(params, query, negatives, l2, key.table, key.row, i);
            const double denom = std::max({std::fabs(grad[i]), std::fabs(fd), 1e-4});
            worst = std::max(worst, std::fabs(grad[i] - fd) / denom);
        }
    }
    return worst;
}

// Random gradient-check instance at the scale the acceptance gate pins.
struct GradCheckInstance {
    kbc::ModelParams params;
    kbc::Query query;
    std::vector<kbc::EntityId> negatives;
};

inline GradCheckInstance random_grad_instance(std::mt19937_64& rng, double* l2 = nullptr) {
    std::uniform_int_distribution<int> pick_dim(1, 8);
    std::uniform_int_distribution<int> pick_entities(3, 12);
    std::uniform_int_distribution<int> pick_relations(1, 4);
    std::uniform_int_distribution<int> pick_negatives(1, 5);

    GradCheckInstance instance;
    const kbc::EntityId num_entities = pick_entities(rng);
    const kbc::RelationId num_relations = pick_relations(rng);
    instance.params = kbc::init_params(num_entities, num_relations, pick_dim(rng), rng());

    std::uniform_int_distribution<kbc::EntityId> entity(0, num_entities - 1);
    std::uniform_int_distribution<kbc::RelationId> relation(0, num_relations - 1);
    instance.query.anchor = entity(rng);
    instance.query.relation = relation(rng);
    instance.query.truth = entity(rng);
    instance.query.direction =
        rng() % 2 == 0 ? kbc::QueryDirection::Tail : kbc::QueryDirection::Head;
    instance.negatives =
        kbc::sample_negatives(instance.query, pick_negatives(rng), num_entities, rng);
    if (l2 != nullptr) *l2 = (rng() % 2 == 0) ? 0.0 : 0.01;
    return instance;
}

}  // namespace testutil
