#include "kbc/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace kbc {

namespace {

void check_entity(const ModelParams& params, EntityId id) {
    if (id < 0 || id >= params.num_entities)
        throw std::out_of_range("entity id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(params.num_entities) + ")");
}

void check_relation(const ModelParams& params, RelationId id) {
    if (id < 0 || id >= params.num_relations)
        throw std::out_of_range("relation id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(params.num_relations) + ")");
}

}  // namespace

ModelParams init_params(EntityId num_entities, RelationId num_relations, int dim,
                        std::uint64_t seed) {
    if (num_entities <= 0) throw std::invalid_argument("init_params: zero entities");
    if (num_relations <= 0) throw std::invalid_argument("init_params: zero relations");
    if (dim < 1) throw std::invalid_argument("init_params: dim must be >= 1");

    ModelParams params;
    params.dim = dim;
    params.num_entities = num_entities;
    params.num_relations = num_relations;
    params.entity_data.resize(static_cast<std::size_t>(num_entities) * dim);
    params.relation_data.resize(static_cast<std::size_t>(num_relations) * dim);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (double& value : params.entity_data) value = normal(rng);
    for (double& value : params.relation_data) value = normal(rng);
    return params;
}

double score(const ModelParams& params, EntityId h, RelationId r, EntityId t) {
    check_entity(params, h);
    check_relation(params, r);
    check_entity(params, t);
    auto hv = params.entity_row(h);
    auto rv = params.relation_row(r);
    auto tv = params.entity_row(t);
    double sum = 0.0;
    for (int i = 0; i < params.dim; ++i) sum += (hv[i] * tv[i]) * rv[i];
    return sum;
}

double log_softmax(std::span<const double> scores, std::size_t target) {
    if (scores.empty()) throw std::invalid_argument("log_softmax: empty scores");
    if (target >= scores.size()) throw std::out_of_range("log_softmax: target out of range");

    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("log_softmax: non-finite score");
        max_score = std::max(max_score, s);
    }
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - max_score);
    return (scores[target] - max_score) - std::log(sum);
}

std::vector<double> softmax_probs(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("softmax_probs: empty scores");
    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("softmax_probs: non-finite score");
        max_score = std::max(max_score, s);
    }
    std::vector<double> probs(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        probs[i] = std::exp(scores[i] - max_score);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

ScoredCandidates score_all_candidates(const ModelParams& params, const Query& query,
                                      std::span<const EntityId> candidates) {
    if (candidates.empty())
        throw std::invalid_argument("score_all_candidates: empty candidate list");
    check_entity(params, query.anchor);
    check_relation(params, query.relation);

    ScoredCandidates out;
    out.candidate_ids.assign(candidates.begin(), candidates.end());
    out.scores.resize(candidates.size());

    auto anchor = params.entity_row(query.anchor);
    auto rel = params.relation_row(query.relation);
    std::size_t truth_count = 0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        check_entity(params, candidates[j]);
        auto cand = params.entity_row(candidates[j]);
        double sum = 0.0;
        for (int i = 0; i < params.dim; ++i) sum += (anchor[i] * cand[i]) * rel[i];
        out.scores[j] = sum;
        if (candidates[j] == query.truth) {
            out.truth_position = j;
            ++truth_count;
        }
    }
    if (truth_count != 1)
        throw std::invalid_argument("score_all_candidates: truth entity " +
                                    std::to_string(query.truth) + " appears " +
                                    std::to_string(truth_count) + " times in candidates");
    return out;
}

namespace {

// Checkpoints are little-endian on disk regardless of host order.
void write_doubles(std::ofstream& out, const std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        for (double value : values) {
            auto bits = std::bit_cast<std::uint64_t>(value);
            char bytes[8];
            for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(bytes, 8);
        }
    }
}

void read_doubles(std::ifstream& in, std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        for (double& value : values) {
            char bytes[8];
            in.read(bytes, 8);
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
            value = std::bit_cast<double>(bits);
        }
    }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << "distmult v1 " << params.num_entities << ' ' << params.num_relations << ' '
        << params.dim << '\n';
    write_doubles(out, params.entity_data);
    write_doubles(out, params.relation_data);
    if (!out) throw std::runtime_error("short write to checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());

    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("checkpoint missing header: " + path.string());
    std::istringstream hs(header);
    std::string magic, version;
    ModelParams params;
    if (!(hs >> magic >> version >> params.num_entities >> params.num_relations >> params.dim) ||
        magic != "distmult" || version != "v1")
        throw std::runtime_error("bad checkpoint header in " + path.string() + ": '" + header + "'");
    if (params.num_entities <= 0 || params.num_relations <= 0 || params.dim <= 0)
        throw std::runtime_error("bad checkpoint shape in " + path.string());

    params.entity_data.resize(static_cast<std::size_t>(params.num_entities) * params.dim);
    params.relation_data.resize(static_cast<std::size_t>(params.num_relations) * params.dim);
    read_doubles(in, params.entity_data);
    read_doubles(in, params.relation_data);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return params;
}

}  // namespace kbc
