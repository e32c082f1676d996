#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kbc/commands.hpp"

namespace {

std::vector<int> parse_hits(const std::string& csv) {
    std::vector<int> ks;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto comma = csv.find(',', start);
        const std::string part = csv.substr(start, comma - start);
        if (part.empty()) throw CLI::ValidationError("--hits", "empty k in '" + csv + "'");
        int k = std::stoi(part);
        if (k < 1) throw CLI::ValidationError("--hits", "k must be >= 1");
        ks.push_back(k);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DistMult knowledge base completion: training, filtered evaluation, "
                 "ensembling and hyper-parameter sweeps"};
    app.require_subcommand(1);

    // train
    kbc::TrainCliOptions train_options;
    std::uint64_t seed_flag = 0;
    int valid_sample_flag = 0;
    auto* train = app.add_subcommand("train", "Train a model and write a run directory");
    train->add_option("--data", train_options.data_dir, "Directory with train/valid/test.txt")
        ->required();
    train->add_option("--config", train_options.config_path,
                      "key=value config file (defaults match the best FB15k setting)");
    train->add_option("--out", train_options.out_dir, "Output run directory")->required();
    auto* train_seed = train->add_option("--seed", seed_flag, "Override the config seed");
    auto* train_vs = train->add_option("--valid-sample", valid_sample_flag,
                                       "Validation queries per evaluation (0 = all)");

    // eval
    kbc::EvalCliOptions eval_options;
    std::string policy_name = "average";
    std::string hits_csv = "1,3,10";
    auto* eval = app.add_subcommand("eval", "Filtered evaluation of checkpoint(s); several "
                                            "checkpoints form a prediction-averaging ensemble");
    eval->add_option("--checkpoint", eval_options.checkpoints, "Checkpoint path(s)")
        ->required()
        ->expected(-1);
    eval->add_option("--data", eval_options.data_dir, "Directory with train/valid/test.txt")
        ->required();
    eval->add_option("--split", eval_options.split, "Split to evaluate: train|valid|test")
        ->default_val("test");
    eval->add_option("--tie-policy", policy_name, "optimistic|pessimistic|average")
        ->default_val("average");
    eval->add_option("--hits", hits_csv, "Comma-separated k values for Hits@k")
        ->default_val("1,3,10");
    eval->add_option("--out", eval_options.out_json, "Write metrics JSON here");
    eval->add_option("--ranks-csv", eval_options.ranks_csv, "Write per-query ranks here");

    // sweep
    kbc::SweepCliOptions sweep_options;
    auto* sweep = app.add_subcommand("sweep", "Run a hyper-parameter grid and write a "
                                              "leaderboard CSV");
    sweep->add_option("--data", sweep_options.data_dir, "Directory with train/valid/test.txt")
        ->required();
    sweep->add_option("--sweep", sweep_options.sweep_path,
                      "Sweep file: config keys, dim/batch_size/negatives may be comma lists")
        ->required();
    sweep->add_option("--out", sweep_options.out_dir, "Output directory")->required();

    // plot-data
    kbc::PlotCliOptions plot_options;
    std::string ys_csv = "H10,H1";
    auto* plot = app.add_subcommand("plot-data", "Extract sorted (x, metric) columns from a "
                                                 "sweep CSV as TSV");
    plot->add_option("--sweep", plot_options.sweep_csv, "sweep.csv from the sweep command")
        ->required();
    plot->add_option("--x", plot_options.x, "x column: b|N|M")->default_val("b");
    plot->add_option("--y", ys_csv, "Comma-separated metrics: H1|H10|MRR|MR")
        ->default_val("H10,H1");
    plot->add_option("--out", plot_options.out_tsv, "Output TSV (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            if (*train_seed) train_options.seed = seed_flag;
            if (*train_vs) train_options.valid_sample = valid_sample_flag;
            kbc::cmd_train(train_options);
        } else if (*eval) {
            eval_options.policy = kbc::tie_policy_from_string(policy_name);
            eval_options.ks = parse_hits(hits_csv);
            kbc::cmd_eval(eval_options);
        } else if (*sweep) {
            kbc::SweepOutcome outcome = kbc::cmd_sweep(sweep_options);
            std::cout << "sweep: " << outcome.completed << " completed, " << outcome.failed
                      << " failed, leaderboard at " << outcome.csv_path.string() << '\n';
        } else if (*plot) {
            plot_options.ys.clear();
            std::size_t start = 0;
            while (start <= ys_csv.size()) {
                auto comma = ys_csv.find(',', start);
                plot_options.ys.push_back(ys_csv.substr(start, comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            kbc::cmd_plot_data(plot_options);
        }
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 1;
    }
    return 0;
}
