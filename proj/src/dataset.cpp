#include "kbc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

namespace kbc {

namespace {

constexpr EntityId kMaxIdBits = 21;  // pack() fits two 21-bit ids into 64 bits
constexpr std::int64_t kMaxIds = std::int64_t{1} << kMaxIdBits;

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

std::vector<RawTriple> load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open split file: " + path.string());

    std::vector<RawTriple> triples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3)
            throw std::runtime_error(path.string() + ": expected 3 fields, got " +
                                     std::to_string(fields.size()) + " at line " +
                                     std::to_string(line_no));

        RawTriple triple{trim(fields[0]), trim(fields[1]), trim(fields[2])};
        if (triple.head.empty() || triple.relation.empty() || triple.tail.empty())
            throw std::runtime_error(path.string() + ": empty field at line " +
                                     std::to_string(line_no));
        triples.push_back(std::move(triple));
    }
    return triples;
}

Vocabulary build_vocabulary(const std::vector<RawTriple>& train,
                            const std::vector<RawTriple>& valid,
                            const std::vector<RawTriple>& test) {
    Vocabulary vocab;
    for (const auto* split : {&train, &valid, &test}) {
        for (const RawTriple& triple : *split) {
            vocab.add_entity(triple.head);
            vocab.add_entity(triple.tail);
            vocab.add_relation(triple.relation);
        }
    }
    return vocab;
}

std::vector<Triple> encode(const std::vector<RawTriple>& raw, const Vocabulary& vocab) {
    std::vector<Triple> out;
    out.reserve(raw.size());
    for (const RawTriple& triple : raw) {
        auto h = vocab.entity_id(triple.head);
        if (!h) throw std::runtime_error("unknown entity '" + triple.head + "'");
        auto r = vocab.relation_id(triple.relation);
        if (!r) throw std::runtime_error("unknown relation '" + triple.relation + "'");
        auto t = vocab.entity_id(triple.tail);
        if (!t) throw std::runtime_error("unknown entity '" + triple.tail + "'");
        out.push_back(Triple{*h, *r, *t});
    }
    return out;
}

std::vector<RawTriple> decode(const std::vector<Triple>& triples, const Vocabulary& vocab) {
    std::vector<RawTriple> out;
    out.reserve(triples.size());
    for (const Triple& triple : triples)
        out.push_back(RawTriple{vocab.entity_name(triple.h),
                                vocab.relation_name(triple.r),
                                vocab.entity_name(triple.t)});
    return out;
}

std::vector<Query> expand_queries(std::span<const Triple> triples) {
    std::vector<Query> queries;
    queries.reserve(triples.size() * 2);
    for (const Triple& triple : triples) {
        queries.push_back(Query{triple.h, triple.r, QueryDirection::Tail, triple.t});
        queries.push_back(Query{triple.t, triple.r, QueryDirection::Head, triple.h});
    }
    return queries;
}

FilterIndex::FilterIndex(std::span<const Triple> train, std::span<const Triple> valid,
                         std::span<const Triple> test, EntityId num_entities,
                         RelationId num_relations) {
    if (num_entities >= kMaxIds || num_relations >= kMaxIds)
        throw std::invalid_argument("FilterIndex supports at most 2^21 entities/relations");
    for (const auto& split : {train, valid, test})
        for (const Triple& triple : split) insert(triple);
    for (auto& [key, tails] : tails_by_hr_) {
        std::sort(tails.begin(), tails.end());
        tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
        size_ += tails.size();
    }
    for (auto& [key, heads] : heads_by_tr_) {
        std::sort(heads.begin(), heads.end());
        heads.erase(std::unique(heads.begin(), heads.end()), heads.end());
    }
}

void FilterIndex::insert(const Triple& triple) {
    tails_by_hr_[pack(triple.h, triple.r)].push_back(triple.t);
    heads_by_tr_[pack(triple.t, triple.r)].push_back(triple.h);
}

bool FilterIndex::contains(const Triple& triple) const {
    auto it = tails_by_hr_.find(pack(triple.h, triple.r));
    if (it == tails_by_hr_.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), triple.t);
}

std::span<const EntityId> FilterIndex::known_tails(EntityId h, RelationId r) const {
    auto it = tails_by_hr_.find(pack(h, r));
    if (it == tails_by_hr_.end()) return {};
    return it->second;
}

std::span<const EntityId> FilterIndex::known_heads(EntityId t, RelationId r) const {
    auto it = heads_by_tr_.find(pack(t, r));
    if (it == heads_by_tr_.end()) return {};
    return it->second;
}

std::span<const EntityId> FilterIndex::known_completions(const Query& query) const {
    if (query.direction == QueryDirection::Tail)
        return known_tails(query.anchor, query.relation);
    return known_heads(query.anchor, query.relation);
}

FilterIndex build_filter_index(std::span<const Triple> train, std::span<const Triple> valid,
                               std::span<const Triple> test, EntityId num_entities,
                               RelationId num_relations) {
    return FilterIndex(train, valid, test, num_entities, num_relations);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    for (const char* name : {"train.txt", "valid.txt", "test.txt"})
        if (!std::filesystem::exists(dir / name))
            throw std::runtime_error("missing split file: " + (dir / name).string());

    auto raw_train = load_split(dir / "train.txt");
    auto raw_valid = load_split(dir / "valid.txt");
    auto raw_test = load_split(dir / "test.txt");

    Dataset dataset;
    dataset.vocab = build_vocabulary(raw_train, raw_valid, raw_test);
    dataset.train = encode(raw_train, dataset.vocab);
    dataset.valid = encode(raw_valid, dataset.vocab);
    dataset.test = encode(raw_test, dataset.vocab);
    dataset.filter = FilterIndex(dataset.train, dataset.valid, dataset.test,
                                 dataset.vocab.num_entities(), dataset.vocab.num_relations());
    return dataset;
}

namespace {

void dump_tokens(const std::vector<std::string>& tokens, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const std::string& token : tokens) out << token << '\n';
}

std::vector<std::string> slurp_tokens(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return tokens;
}

}  // namespace

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& entities_path,
                     const std::filesystem::path& relations_path) {
    dump_tokens(vocab.entities(), entities_path);
    dump_tokens(vocab.relations(), relations_path);
}

Vocabulary load_vocabulary(const std::filesystem::path& entities_path,
                           const std::filesystem::path& relations_path) {
    Vocabulary vocab;
    for (const std::string& entity : slurp_tokens(entities_path)) vocab.add_entity(entity);
    for (const std::string& relation : slurp_tokens(relations_path))
        vocab.add_relation(relation);
    return vocab;
}

}  // namespace kbc
