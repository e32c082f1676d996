#include "kbc/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kbc/ensemble.hpp"

namespace kbc {

namespace {

using nlohmann::ordered_json;

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return parts;
}

template <typename T>
T parse_number(const std::string& value, const std::string& source, const std::string& key) {
    const std::string v = trim(value);
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw std::invalid_argument(source + ": invalid value '" + v + "' for key '" + key + "'");
    return out;
}

double parse_real(const std::string& value, const std::string& source, const std::string& key) {
    const std::string v = trim(value);
    try {
        std::size_t consumed = 0;
        double out = std::stod(v, &consumed);
        if (consumed != v.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument(source + ": invalid value '" + v + "' for key '" + key + "'");
    }
}

// Walks key=value lines, dispatching each to `apply`. Shared by the config
// and sweep parsers so both report errors the same way.
void for_each_pair(std::istream& in, const std::string& source,
                   const std::function<void(const std::string&, const std::string&)>& apply) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(source + " line " + std::to_string(line_no) +
                                        ": expected key=value, got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument(source + " line " + std::to_string(line_no) +
                                        ": missing key");
        apply(key, value);
    }
}

void apply_scalar_key(TrainConfig& config, const std::string& key, const std::string& value,
                      const std::string& source) {
    if (value.empty())
        throw std::invalid_argument(source + ": empty value for key '" + key + "'");
    if (key == "dim") config.dim = parse_number<int>(value, source, key);
    else if (key == "batch_size") config.batch_size = parse_number<int>(value, source, key);
    else if (key == "negatives") config.negatives = parse_number<int>(value, source, key);
    else if (key == "learning_rate") config.learning_rate = parse_real(value, source, key);
    else if (key == "l2") config.l2 = parse_real(value, source, key);
    else if (key == "adam_beta1") config.adam_beta1 = parse_real(value, source, key);
    else if (key == "adam_beta2") config.adam_beta2 = parse_real(value, source, key);
    else if (key == "adam_epsilon") config.adam_epsilon = parse_real(value, source, key);
    else if (key == "max_epochs") config.max_epochs = parse_number<int>(value, source, key);
    else if (key == "patience") config.patience = parse_number<int>(value, source, key);
    else if (key == "eval_every") config.eval_every = parse_number<int>(value, source, key);
    else if (key == "valid_sample") config.valid_sample = parse_number<int>(value, source, key);
    else if (key == "seed") config.seed = parse_number<std::uint64_t>(value, source, key);
    else throw std::invalid_argument(source + ": unknown key '" + key + "'");
}

std::vector<int> parse_int_list(const std::string& value, const std::string& source,
                                const std::string& key) {
    if (trim(value).empty())
        throw std::invalid_argument(source + ": empty value list for key '" + key + "'");
    std::vector<int> out;
    for (const std::string& part : split(value, ','))
        out.push_back(parse_number<int>(part, source, key));
    return out;
}

std::string fmt_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

ordered_json metrics_to_json(const Metrics& metrics) {
    ordered_json hits = ordered_json::object();
    for (const auto& [k, fraction] : metrics.hits_at) hits[std::to_string(k)] = fraction;
    return ordered_json{{"mr", metrics.mean_rank},
                        {"mrr", metrics.mean_reciprocal_rank},
                        {"hits", hits},
                        {"num_queries", metrics.num_queries}};
}

ordered_json config_to_json(const TrainConfig& config) {
    return ordered_json{{"dim", config.dim},
                        {"batch_size", config.batch_size},
                        {"negatives", config.negatives},
                        {"learning_rate", config.learning_rate},
                        {"l2", config.l2},
                        {"adam_beta1", config.adam_beta1},
                        {"adam_beta2", config.adam_beta2},
                        {"adam_epsilon", config.adam_epsilon},
                        {"max_epochs", config.max_epochs},
                        {"patience", config.patience},
                        {"eval_every", config.eval_every},
                        {"valid_sample", config.valid_sample},
                        {"seed", config.seed}};
}

void print_metrics_line(const std::string& label, const Metrics& metrics) {
    std::ostringstream line;
    line << label << ": MR " << fmt_double(metrics.mean_rank) << "  MRR "
         << fmt_double(metrics.mean_reciprocal_rank);
    for (const auto& [k, fraction] : metrics.hits_at)
        line << "  Hits@" << k << " " << fmt_double(fraction * 100.0) << "%";
    line << "  (" << metrics.num_queries << " queries)";
    std::cout << line.str() << '\n';
}

Metrics eval_split_or_empty(const ModelParams& params, const std::vector<Triple>& split,
                            const Dataset& dataset) {
    if (split.empty()) return Metrics{};
    std::vector<Query> queries = expand_queries(split);
    return evaluate(params, queries, dataset.vocab.num_entities(), dataset.filter).overall;
}

struct TrainedRun {
    RunRecord record;
    int epochs_trained = 0;
};

// Shared by cmd_train and cmd_sweep: fit on an already-loaded dataset and
// write all run artifacts under out_dir.
TrainedRun train_into_dir(const Dataset& dataset, const TrainConfig& config,
                          const std::filesystem::path& out_dir, const std::string& fingerprint,
                          bool quiet) {
    std::filesystem::create_directories(out_dir);

    FitResult result = fit(dataset, config);

    RunRecord record;
    record.config = config;
    record.fingerprint = fingerprint;
    record.checkpoint_path = "model.ckpt";
    record.history_path = "history.jsonl";

    save_checkpoint(result.params, out_dir / record.checkpoint_path);
    save_vocabulary(dataset.vocab, out_dir / "entities.txt", out_dir / "relations.txt");
    write_history_jsonl(result.history, out_dir / record.history_path);

    record.valid_metrics = eval_split_or_empty(result.params, dataset.valid, dataset);
    record.test_metrics = eval_split_or_empty(result.params, dataset.test, dataset);

    std::ofstream run_out(out_dir / "run.json", std::ios::binary);
    if (!run_out) throw std::runtime_error("cannot write " + (out_dir / "run.json").string());
    ordered_json run_json = ordered_json::parse(run_record_json(record));
    run_json["epochs_trained"] = result.history.epoch_mean_loss.size();
    run_json["best_epoch"] = result.history.best_epoch;
    run_out << run_json.dump(2) << '\n';

    if (!quiet) {
        print_metrics_line("valid", record.valid_metrics);
        print_metrics_line("test", record.test_metrics);
    }
    return TrainedRun{std::move(record),
                      static_cast<int>(result.history.epoch_mean_loss.size())};
}

}  // namespace

TrainConfig parse_train_config(std::istream& in, const std::string& source_name,
                               TrainConfig base) {
    for_each_pair(in, source_name, [&](const std::string& key, const std::string& value) {
        apply_scalar_key(base, key, value, source_name);
    });
    return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    return parse_train_config(in, path.filename().string(), base);
}

SweepSpec parse_sweep_spec(std::istream& in, const std::string& source_name) {
    SweepSpec spec;
    for_each_pair(in, source_name, [&](const std::string& key, const std::string& value) {
        if (key == "dim") spec.dims = parse_int_list(value, source_name, key);
        else if (key == "batch_size") spec.batch_sizes = parse_int_list(value, source_name, key);
        else if (key == "negatives") spec.negatives = parse_int_list(value, source_name, key);
        else apply_scalar_key(spec.base, key, value, source_name);
    });
    if (spec.dims.empty()) spec.dims = {spec.base.dim};
    if (spec.batch_sizes.empty()) spec.batch_sizes = {spec.base.batch_size};
    if (spec.negatives.empty()) spec.negatives = {spec.base.negatives};
    return spec;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sweep file: " + path.string());
    return parse_sweep_spec(in, path.filename().string());
}

std::string dataset_fingerprint(const std::filesystem::path& data_dir) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a 64
    auto feed = [&hash](const char* data, std::size_t size) {
        for (std::size_t i = 0; i < size; ++i) {
            hash ^= static_cast<unsigned char>(data[i]);
            hash *= 0x100000001b3ULL;
        }
    };
    for (const char* name : {"train.txt", "valid.txt", "test.txt"}) {
        const auto path = data_dir / name;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("missing split file: " + path.string());
        feed("\x1f", 1);
        char buf[1 << 16];
        while (in.read(buf, sizeof buf) || in.gcount() > 0)
            feed(buf, static_cast<std::size_t>(in.gcount()));
    }
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << hash;
    return hex.str();
}

std::string run_record_json(const RunRecord& record) {
    ordered_json json{{"config", config_to_json(record.config)},
                      {"dataset_fingerprint", record.fingerprint},
                      {"checkpoint", record.checkpoint_path},
                      {"history", record.history_path},
                      {"metrics", ordered_json{{"valid", metrics_to_json(record.valid_metrics)},
                                               {"test", metrics_to_json(record.test_metrics)}}}};
    return json.dump(2);
}

RunRecord cmd_train(const TrainCliOptions& options) {
    Dataset dataset = load_dataset(options.data_dir);
    const std::string fingerprint = dataset_fingerprint(options.data_dir);

    TrainConfig config;
    if (!options.config_path.empty()) config = load_train_config(options.config_path);
    if (options.seed) config.seed = *options.seed;
    if (options.valid_sample) config.valid_sample = *options.valid_sample;

    return train_into_dir(dataset, config, options.out_dir, fingerprint, options.quiet).record;
}

std::string metrics_json(const EvalReport& report) {
    ordered_json json = metrics_to_json(report.overall);
    json["tie_policy"] = to_string(report.policy);
    json["per_direction"] = ordered_json{{"head", metrics_to_json(report.head)},
                                         {"tail", metrics_to_json(report.tail)}};
    return json.dump(2);
}

EvalReport cmd_eval(const EvalCliOptions& options) {
    if (options.checkpoints.empty())
        throw std::invalid_argument("eval: at least one checkpoint required");

    Dataset dataset = load_dataset(options.data_dir);

    const std::vector<Triple>* split = nullptr;
    if (options.split == "train") split = &dataset.train;
    else if (options.split == "valid") split = &dataset.valid;
    else if (options.split == "test") split = &dataset.test;
    else throw std::invalid_argument("eval: unknown split '" + options.split +
                                     "' (expected train|valid|test)");
    if (split->empty())
        throw std::invalid_argument("eval: split '" + options.split + "' is empty");

    std::vector<ModelParams> members;
    for (const auto& path : options.checkpoints) {
        ModelParams params = load_checkpoint(path);
        if (params.num_entities != dataset.vocab.num_entities() ||
            params.num_relations != dataset.vocab.num_relations())
            throw std::runtime_error(
                "checkpoint " + path.string() + " has " +
                std::to_string(params.num_entities) + " entities / " +
                std::to_string(params.num_relations) + " relations, dataset has " +
                std::to_string(dataset.vocab.num_entities()) + " / " +
                std::to_string(dataset.vocab.num_relations()));
        // A vocabulary dump next to the checkpoint must agree token for token.
        const auto dir = path.parent_path();
        if (std::filesystem::exists(dir / "entities.txt") &&
            std::filesystem::exists(dir / "relations.txt")) {
            Vocabulary dumped = load_vocabulary(dir / "entities.txt", dir / "relations.txt");
            if (!(dumped == dataset.vocab))
                throw std::runtime_error("checkpoint " + path.string() +
                                         " was trained on a different vocabulary");
        }
        members.push_back(std::move(params));
    }

    std::vector<Query> queries = expand_queries(*split);
    EvalOptions eval_options;
    eval_options.policy = options.policy;
    eval_options.ks = options.ks;

    EvalReport report;
    if (members.size() == 1) {
        report = evaluate(members[0], queries, dataset.vocab.num_entities(), dataset.filter,
                          eval_options);
    } else {
        Ensemble ensemble(std::move(members));
        EnsembleScorer scorer(ensemble);
        report = evaluate(scorer, queries, dataset.vocab.num_entities(), dataset.filter,
                          eval_options);
    }

    const std::string json = metrics_json(report);
    if (!options.quiet) std::cout << json << '\n';
    if (!options.out_json.empty()) {
        std::ofstream out(options.out_json, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + options.out_json.string());
        out << json << '\n';
    }
    if (!options.ranks_csv.empty()) {
        std::ofstream out(options.ranks_csv, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + options.ranks_csv.string());
        out << "query_index,direction,rank\n";
        for (std::size_t i = 0; i < report.ranks.size(); ++i)
            out << i << ',' << to_string(report.directions[i]) << ','
                << fmt_double(report.ranks[i]) << '\n';
    }
    return report;
}

SweepOutcome cmd_sweep(const SweepCliOptions& options) {
    SweepSpec spec = load_sweep_spec(options.sweep_path);
    Dataset dataset = load_dataset(options.data_dir);
    const std::string fingerprint = dataset_fingerprint(options.data_dir);

    std::filesystem::create_directories(options.out_dir);
    SweepOutcome outcome;
    outcome.csv_path = options.out_dir / "sweep.csv";
    std::ofstream csv(outcome.csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + outcome.csv_path.string());
    csv << "N,b,M,H1,H10,MRR,MR,epochs,wall_seconds\n";

    std::ofstream failures;  // opened lazily on the first failure
    std::size_t index = 0;
    for (int dim : spec.dims) {
        for (int batch : spec.batch_sizes) {
            for (int negatives : spec.negatives) {
                TrainConfig config = spec.base;
                config.dim = dim;
                config.batch_size = batch;
                config.negatives = negatives;
                config.seed = spec.base.seed + index;

                std::ostringstream name;
                name << "run_" << index << "_N" << dim << "_b" << batch << "_M" << negatives;
                if (!options.quiet)
                    std::cout << "[" << (index + 1) << "/" << spec.grid_size() << "] "
                              << name.str() << std::endl;

                const auto started = std::chrono::steady_clock::now();
                try {
                    TrainedRun run =
                        train_into_dir(dataset, config, options.out_dir / "runs" / name.str(),
                                       fingerprint, true);
                    const double wall_seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                            .count();
                    const Metrics& m = run.record.valid_metrics;
                    csv << dim << ',' << batch << ',' << negatives << ','
                        << fmt_double(m.hits_at.at(1)) << ',' << fmt_double(m.hits_at.at(10))
                        << ',' << fmt_double(m.mean_reciprocal_rank) << ','
                        << fmt_double(m.mean_rank) << ',' << run.epochs_trained << ','
                        << fmt_double(wall_seconds) << '\n';
                    csv.flush();
                    ++outcome.completed;
                } catch (const std::exception& error) {
                    if (!failures.is_open())
                        failures.open(options.out_dir / "failures.log", std::ios::binary);
                    failures << name.str() << ": " << error.what() << '\n';
                    failures.flush();
                    std::cerr << name.str() << " failed: " << error.what() << '\n';
                    ++outcome.failed;
                }
                ++index;
            }
        }
    }
    return outcome;
}

void cmd_plot_data(const PlotCliOptions& options) {
    static const std::map<std::string, std::string> column_names = {
        {"b", "b"}, {"N", "N"}, {"M", "M"},
        {"H1", "H1"}, {"H10", "H10"}, {"MRR", "MRR"}, {"MR", "MR"}};

    if (!column_names.count(options.x))
        throw std::invalid_argument("plot-data: unknown x column '" + options.x + "'");
    for (const std::string& y : options.ys)
        if (!column_names.count(y))
            throw std::invalid_argument("plot-data: unknown y column '" + y + "'");

    std::ifstream in(options.sweep_csv);
    if (!in) throw std::runtime_error("cannot open sweep CSV: " + options.sweep_csv.string());

    std::ostringstream out;
    std::string header_line;
    if (std::getline(in, header_line)) {
        if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
        std::vector<std::string> header = split(header_line, ',');
        auto column_of = [&](const std::string& name) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end())
                throw std::invalid_argument("plot-data: column '" + name + "' not in " +
                                            options.sweep_csv.string());
            return static_cast<std::size_t>(it - header.begin());
        };

        const std::size_t x_col = column_of(options.x);
        std::vector<std::size_t> y_cols;
        for (const std::string& y : options.ys) y_cols.push_back(column_of(y));

        std::vector<std::vector<std::string>> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            std::vector<std::string> fields = split(line, ',');
            if (fields.size() != header.size())
                throw std::runtime_error("plot-data: malformed row '" + line + "'");
            rows.push_back(std::move(fields));
        }
        std::stable_sort(rows.begin(), rows.end(),
                         [&](const auto& a, const auto& b) {
                             return std::stod(a[x_col]) < std::stod(b[x_col]);
                         });

        out << options.x;
        for (const std::string& y : options.ys) out << '\t' << y;
        out << '\n';
        for (const auto& row : rows) {
            out << row[x_col];
            for (std::size_t c : y_cols) out << '\t' << row[c];
            out << '\n';
        }
    }

    if (options.out_tsv.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream file(options.out_tsv, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + options.out_tsv.string());
        file << out.str();
    }
}

}  // namespace kbc
