#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "kbc/evaluator.hpp"
#include "kbc/trainer.hpp"

namespace kbc {

// ---- config files: plain-text key=value, one per line, '#' comments ----

// Parses onto `base`, so file values override defaults and CLI flags can
// override file values afterwards. Throws naming the source and key.
TrainConfig parse_train_config(std::istream& in, const std::string& source_name,
                               TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

// Sweep file: same keys, but dim/batch_size/negatives accept comma-separated
// value lists. The grid is their cartesian product.
struct SweepSpec {
    std::vector<int> dims;
    std::vector<int> batch_sizes;
    std::vector<int> negatives;
    TrainConfig base;

    std::size_t grid_size() const {
        return dims.size() * batch_sizes.size() * negatives.size();
    }
};
SweepSpec parse_sweep_spec(std::istream& in, const std::string& source_name);
SweepSpec load_sweep_spec(const std::filesystem::path& path);

// FNV-1a 64 over train.txt, valid.txt, test.txt bytes, as 16 hex digits.
std::string dataset_fingerprint(const std::filesystem::path& data_dir);

// ---- train ----

struct TrainCliOptions {
    std::filesystem::path data_dir;
    std::filesystem::path config_path;  // empty: defaults
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;   // flag overrides
    std::optional<int> valid_sample;
    bool quiet = false;
};

struct RunRecord {
    TrainConfig config;
    std::string fingerprint;
    std::string checkpoint_path;  // relative to the run directory
    std::string history_path;
    Metrics valid_metrics;
    Metrics test_metrics;
};

std::string run_record_json(const RunRecord& record);

// Trains, then writes model.ckpt, entities.txt/relations.txt, history.jsonl
// and run.json under out_dir and prints final validation metrics.
RunRecord cmd_train(const TrainCliOptions& options);

// ---- eval ----

struct EvalCliOptions {
    std::vector<std::filesystem::path> checkpoints;  // >1 = ensemble
    std::filesystem::path data_dir;
    std::string split = "test";  // train | valid | test
    TiePolicy policy = TiePolicy::Average;
    std::vector<int> ks = {1, 3, 10};
    std::filesystem::path out_json;   // optional
    std::filesystem::path ranks_csv;  // optional per-query rank dump
    bool quiet = false;
};

std::string metrics_json(const EvalReport& report);

// Evaluates checkpoint(s) under the filtered protocol; prints and optionally
// writes the metrics JSON and the per-query rank CSV. Returns the report.
EvalReport cmd_eval(const EvalCliOptions& options);

// ---- sweep ----

struct SweepCliOptions {
    std::filesystem::path data_dir;
    std::filesystem::path sweep_path;
    std::filesystem::path out_dir;
    bool quiet = false;
};

struct SweepOutcome {
    std::filesystem::path csv_path;
    std::size_t completed = 0;
    std::size_t failed = 0;
};

// Runs every grid point sequentially (seed = base seed + grid index) and
// writes one leaderboard row per completed run:
// N,b,M,H1,H10,MRR,MR,epochs,wall_seconds. Failures are recorded in
// failures.log and skipped.
SweepOutcome cmd_sweep(const SweepCliOptions& options);

// ---- plot-data ----

struct PlotCliOptions {
    std::filesystem::path sweep_csv;
    std::string x = "b";                      // b | N | M
    std::vector<std::string> ys = {"H10", "H1"};  // H1 | H10 | MRR | MR
    std::filesystem::path out_tsv;  // empty: stdout
};

// Re-shapes a sweep CSV into a TSV of (x, metric...) rows sorted by x.
void cmd_plot_data(const PlotCliOptions& options);

}  // namespace kbc
