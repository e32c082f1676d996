#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <memory>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "helpers.hpp"
#include "kbc/commands.hpp"

using namespace kbc;
using nlohmann::json;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

namespace {

// One small trained run shared by the eval-side tests.
struct TrainedFixture {
    TempDir data_dir{"cli_data"};
    TempDir out_a{"cli_run_a"};
    TempDir out_b{"cli_run_b"};
    std::string config_text =
        "# toy setup\n"
        "dim = 16\n"
        "batch_size = 64\n"
        "negatives = 10\n"
        "max_epochs = 40\n"
        "patience = 40\n"
        "seed = 5\n";
    RunRecord record;

    TrainedFixture() {
        auto dataset = testutil::clustered_dataset(31);
        testutil::write_dataset_files(dataset, data_dir.path());
        write_file(data_dir.path() / "config.cfg", config_text);

        TrainCliOptions options;
        options.data_dir = data_dir.path();
        options.config_path = data_dir.path() / "config.cfg";
        options.out_dir = out_a.path();
        options.quiet = true;
        record = cmd_train(options);

        options.out_dir = out_b.path();
        cmd_train(options);
    }
};

TrainedFixture& fixture() {
    static TrainedFixture instance;
    return instance;
}

int run_cli(const std::string& args) {
    const std::string command = std::string(KBC_CLI_BINARY) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(command.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("an empty config keeps the best-FB15k defaults") {
    std::istringstream in("");
    TrainConfig config = parse_train_config(in, "empty.cfg");
    CHECK(config.dim == 512);
    CHECK(config.batch_size == 2048);
    CHECK(config.negatives == 2000);
    CHECK(config.learning_rate == 0.001);
    CHECK(config.l2 == 0.0);
    CHECK(config.adam_beta1 == 0.9);
    CHECK(config.adam_beta2 == 0.999);
    CHECK(config.adam_epsilon == 1e-8);
    CHECK(config.eval_every == 1);
    CHECK(config.patience == 5);
    CHECK(config.valid_sample == 1000);
}

TEST_CASE("config files override defaults, comments are ignored") {
    std::istringstream in(
        "# comment line\n"
        "\n"
        "dim = 64\n"
        "learning_rate = 0.01\n"
        "seed=9\n");
    TrainConfig config = parse_train_config(in, "test.cfg");
    CHECK(config.dim == 64);
    CHECK(config.learning_rate == 0.01);
    CHECK(config.seed == 9);
    CHECK(config.batch_size == 2048);  // untouched keys keep defaults
}

TEST_CASE("config errors name the source and key") {
    std::istringstream unknown("negativity = 3\n");
    CHECK_THROWS_WITH_AS(parse_train_config(unknown, "bad.cfg"),
                         doctest::Contains("bad.cfg: unknown key 'negativity'"),
                         std::invalid_argument);

    std::istringstream invalid("dim = twelve\n");
    CHECK_THROWS_WITH_AS(parse_train_config(invalid, "bad.cfg"),
                         doctest::Contains("invalid value 'twelve' for key 'dim'"),
                         std::invalid_argument);

    std::istringstream no_eq("dim 12\n");
    CHECK_THROWS_WITH_AS(parse_train_config(no_eq, "bad.cfg"),
                         doctest::Contains("line 1"), std::invalid_argument);

    std::istringstream empty_value("dim =\n");
    CHECK_THROWS_AS(parse_train_config(empty_value, "bad.cfg"), std::invalid_argument);
}

TEST_CASE("sweep specs expand comma lists into a grid") {
    std::istringstream in(
        "dim = 16\n"
        "batch_size = 16,64,256\n"
        "negatives = 5,10\n"
        "max_epochs = 3\n");
    SweepSpec spec = parse_sweep_spec(in, "sweep.cfg");
    CHECK(spec.dims == std::vector<int>{16});
    CHECK(spec.batch_sizes == std::vector<int>{16, 64, 256});
    CHECK(spec.negatives == std::vector<int>{5, 10});
    CHECK(spec.grid_size() == 6);
    CHECK(spec.base.max_epochs == 3);
}

TEST_CASE("sweep specs reject empty grid lists") {
    std::istringstream in("batch_size =\n");
    CHECK_THROWS_WITH_AS(parse_sweep_spec(in, "sweep.cfg"),
                         doctest::Contains("batch_size"), std::invalid_argument);
    std::istringstream gap("batch_size = 16,,64\n");
    CHECK_THROWS_AS(parse_sweep_spec(gap, "sweep.cfg"), std::invalid_argument);
}

TEST_CASE("sweep specs without lists fall back to the base config") {
    std::istringstream in("dim = 8\nmax_epochs = 1\n");
    SweepSpec spec = parse_sweep_spec(in, "sweep.cfg");
    CHECK(spec.grid_size() == 1);
    CHECK(spec.dims == std::vector<int>{8});
    CHECK(spec.batch_sizes == std::vector<int>{2048});
    CHECK(spec.negatives == std::vector<int>{2000});
}

TEST_CASE("dataset fingerprints track content") {
    TempDir dir("fp");
    auto dataset = testutil::clustered_dataset(1);
    testutil::write_dataset_files(dataset, dir.path());
    const std::string a = dataset_fingerprint(dir.path());
    const std::string b = dataset_fingerprint(dir.path());
    CHECK(a == b);
    CHECK(a.size() == 16);

    auto text = read_file(dir.path() / "test.txt");
    write_file(dir.path() / "test.txt", text + "e0\tr0\te1\n");
    CHECK(dataset_fingerprint(dir.path()) != a);
}

TEST_CASE("cmd_train writes the full run directory") {
    auto& f = fixture();
    for (const char* name :
         {"model.ckpt", "entities.txt", "relations.txt", "history.jsonl", "run.json"})
        CHECK(std::filesystem::exists(f.out_a.path() / name));

    json run = json::parse(read_file(f.out_a.path() / "run.json"));
    CHECK(run["config"]["dim"] == 16);
    CHECK(run["config"]["seed"] == 5);
    CHECK(run["checkpoint"] == "model.ckpt");
    CHECK(run["dataset_fingerprint"] == dataset_fingerprint(f.data_dir.path()));
    CHECK(run["metrics"]["valid"]["num_queries"] == 50);
    CHECK(run["metrics"]["test"]["num_queries"] == 50);
    CHECK(run["epochs_trained"] == 40);

    // checkpoint loads and matches the vocabulary dump
    auto params = load_checkpoint(f.out_a.path() / "model.ckpt");
    CHECK(params.num_entities == 50);
    CHECK(params.num_relations == 5);
    CHECK(params.dim == 16);
    auto vocab = load_vocabulary(f.out_a.path() / "entities.txt",
                                 f.out_a.path() / "relations.txt");
    CHECK(vocab.num_entities() == 50);
}

TEST_CASE("two identically-seeded runs are byte-identical") {
    auto& f = fixture();
    CHECK(read_file(f.out_a.path() / "model.ckpt") == read_file(f.out_b.path() / "model.ckpt"));
    CHECK(read_file(f.out_a.path() / "run.json") == read_file(f.out_b.path() / "run.json"));
    CHECK(read_file(f.out_a.path() / "history.jsonl") ==
          read_file(f.out_b.path() / "history.jsonl"));
}

TEST_CASE("cmd_train names a missing split file") {
    TempDir dir("incomplete");
    auto dataset = testutil::clustered_dataset(2);
    testutil::write_dataset_files(dataset, dir.path());
    std::filesystem::remove(dir.path() / "valid.txt");

    TrainCliOptions options;
    options.data_dir = dir.path();
    options.out_dir = dir.path() / "out";
    options.quiet = true;
    CHECK_THROWS_WITH_AS(cmd_train(options), doctest::Contains("valid.txt"),
                         std::runtime_error);
}

TEST_CASE("flag overrides beat config file values") {
    TempDir out("override");
    auto& f = fixture();
    TrainCliOptions options;
    options.data_dir = f.data_dir.path();
    options.config_path = f.data_dir.path() / "config.cfg";
    options.out_dir = out.path();
    options.seed = 99;
    options.quiet = true;
    // keep it cheap: rewrite a shorter config for this run
    write_file(f.data_dir.path() / "config_short.cfg",
               "dim = 8\nbatch_size = 64\nnegatives = 5\nmax_epochs = 1\n");
    options.config_path = f.data_dir.path() / "config_short.cfg";
    RunRecord record = cmd_train(options);
    CHECK(record.config.seed == 99);
    CHECK(record.config.dim == 8);
}

TEST_CASE("the toy checkpoint memorizes its training split") {
    auto& f = fixture();
    EvalCliOptions options;
    options.checkpoints = {f.out_a.path() / "model.ckpt"};
    options.data_dir = f.data_dir.path();
    options.split = "train";
    options.quiet = true;
    EvalReport report = cmd_eval(options);
    CHECK(report.overall.num_queries == 900);
    CHECK(report.overall.hits_at.at(1) >= 0.9);
    CHECK(report.overall.hits_at.at(10) >= 0.99);
}

TEST_CASE("identical checkpoints ensemble to the single-model metrics") {
    auto& f = fixture();
    EvalCliOptions options;
    options.checkpoints = {f.out_a.path() / "model.ckpt"};
    options.data_dir = f.data_dir.path();
    options.split = "valid";
    options.quiet = true;
    EvalReport single = cmd_eval(options);

    options.checkpoints = {f.out_a.path() / "model.ckpt", f.out_b.path() / "model.ckpt",
                           f.out_a.path() / "model.ckpt"};
    EvalReport triple = cmd_eval(options);
    CHECK(single.ranks == triple.ranks);
    CHECK(metrics_json(single) == metrics_json(triple));
}

TEST_CASE("eval emits exactly the requested hits ks") {
    auto& f = fixture();
    TempDir out("evalout");
    EvalCliOptions options;
    options.checkpoints = {f.out_a.path() / "model.ckpt"};
    options.data_dir = f.data_dir.path();
    options.split = "test";
    options.ks = {1, 10};
    options.out_json = out.path() / "metrics.json";
    options.ranks_csv = out.path() / "ranks.csv";
    options.quiet = true;
    cmd_eval(options);

    json metrics = json::parse(read_file(out.path() / "metrics.json"));
    CHECK(metrics["hits"].size() == 2);
    CHECK(metrics["hits"].contains("1"));
    CHECK(metrics["hits"].contains("10"));
    CHECK_FALSE(metrics["hits"].contains("3"));
    CHECK(metrics["tie_policy"] == "average");
    CHECK(metrics["per_direction"]["head"]["num_queries"] == 25);
    CHECK(metrics["per_direction"]["tail"]["num_queries"] == 25);

    std::istringstream csv(read_file(out.path() / "ranks.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "query_index,direction,rank");
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 50);
}

TEST_CASE("eval rejects foreign checkpoints and unknown splits") {
    auto& f = fixture();
    TempDir other_data("cli_other");
    // same entity/relation counts but different tokens: counts pass, the
    // vocabulary dump comparison must catch it
    auto other = testutil::clustered_dataset(77);
    for (auto& triple : other.train) std::swap(triple.h, triple.t);
    TempDir other_out("cli_other_out");
    {
        kbc::Dataset renamed;
        for (int i = 0; i < 50; ++i) renamed.vocab.add_entity("x" + std::to_string(i));
        for (int i = 0; i < 5; ++i) renamed.vocab.add_relation("q" + std::to_string(i));
        renamed.train = other.train;
        renamed.valid = other.valid;
        renamed.test = other.test;
        testutil::write_dataset_files(renamed, other_data.path());
    }

    EvalCliOptions options;
    options.checkpoints = {f.out_a.path() / "model.ckpt"};
    options.data_dir = other_data.path();
    options.split = "test";
    options.quiet = true;
    CHECK_THROWS_WITH_AS(cmd_eval(options), doctest::Contains("different vocabulary"),
                         std::runtime_error);

    options.data_dir = f.data_dir.path();
    options.split = "dev";
    CHECK_THROWS_WITH_AS(cmd_eval(options), doctest::Contains("unknown split 'dev'"),
                         std::invalid_argument);

    options.split = "test";
    options.checkpoints.clear();
    CHECK_THROWS_AS(cmd_eval(options), std::invalid_argument);
}

TEST_CASE("eval rejects checkpoints whose shape contradicts the dataset") {
    auto& f = fixture();
    TempDir out("shape");
    auto wrong = init_params(49, 5, 4, 1);
    save_checkpoint(wrong, out.path() / "wrong.ckpt");

    EvalCliOptions options;
    options.checkpoints = {out.path() / "wrong.ckpt"};
    options.data_dir = f.data_dir.path();
    options.quiet = true;
    CHECK_THROWS_WITH_AS(cmd_eval(options), doctest::Contains("49 entities"),
                         std::runtime_error);
}

TEST_CASE("cmd_sweep writes one leaderboard row per grid point") {
    auto& f = fixture();
    TempDir out("sweep");
    write_file(out.path() / "sweep.cfg",
               "dim = 8\n"
               "batch_size = 32,128\n"
               "negatives = 5\n"
               "max_epochs = 2\n"
               "patience = 2\n"
               "seed = 3\n");

    SweepCliOptions options;
    options.data_dir = f.data_dir.path();
    options.sweep_path = out.path() / "sweep.cfg";
    options.out_dir = out.path() / "results";
    options.quiet = true;
    SweepOutcome outcome = cmd_sweep(options);
    CHECK(outcome.completed == 2);
    CHECK(outcome.failed == 0);

    std::istringstream csv(read_file(outcome.csv_path));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "N,b,M,H1,H10,MRR,MR,epochs,wall_seconds");
    std::vector<std::string> rows;
    while (std::getline(csv, line))
        if (!line.empty()) rows.push_back(line);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].substr(0, 5) == "8,32,");
    CHECK(rows[1].substr(0, 6) == "8,128,");

    // per-run directories carry their own artifacts
    CHECK(std::filesystem::exists(options.out_dir / "runs" / "run_0_N8_b32_M5" / "model.ckpt"));
    CHECK(std::filesystem::exists(options.out_dir / "runs" / "run_1_N8_b128_M5" / "run.json"));

    // rerunning reproduces every column except the quarantined wall clock
    options.out_dir = out.path() / "results2";
    SweepOutcome again = cmd_sweep(options);
    auto strip_wall = [](const std::string& text) {
        std::istringstream lines(text);
        std::string line, kept;
        while (std::getline(lines, line))
            kept += line.substr(0, line.rfind(',')) + '\n';
        return kept;
    };
    CHECK(strip_wall(read_file(outcome.csv_path)) == strip_wall(read_file(again.csv_path)));
}

TEST_CASE("sweep failures are recorded and skipped") {
    auto& f = fixture();
    TempDir out("sweepfail");
    write_file(out.path() / "sweep.cfg",
               "dim = 8,-4\n"
               "batch_size = 32\n"
               "negatives = 5\n"
               "max_epochs = 1\n");

    SweepCliOptions options;
    options.data_dir = f.data_dir.path();
    options.sweep_path = out.path() / "sweep.cfg";
    options.out_dir = out.path() / "results";
    options.quiet = true;
    SweepOutcome outcome = cmd_sweep(options);
    CHECK(outcome.completed == 1);
    CHECK(outcome.failed == 1);

    std::istringstream csv(read_file(outcome.csv_path));
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1);
    CHECK(read_file(options.out_dir / "failures.log").find("run_1_N-4_b32_M5") !=
          std::string::npos);
}

TEST_CASE("plot-data reshapes and sorts the sweep CSV") {
    TempDir dir("plot");
    write_file(dir.path() / "sweep.csv",
               "N,b,M,H1,H10,MRR,MR,epochs,wall_seconds\n"
               "32,2048,20,0.7,0.9,0.8,3.2,10,1.5\n"
               "32,16,20,0.5,0.75,0.6,5.0,10,1.1\n");

    PlotCliOptions options;
    options.sweep_csv = dir.path() / "sweep.csv";
    options.x = "b";
    options.ys = {"H10", "H1"};
    options.out_tsv = dir.path() / "plot.tsv";
    cmd_plot_data(options);
    CHECK(read_file(dir.path() / "plot.tsv") ==
          "b\tH10\tH1\n"
          "16\t0.75\t0.5\n"
          "2048\t0.9\t0.7\n");

    options.ys = {"accuracy"};
    CHECK_THROWS_WITH_AS(cmd_plot_data(options), doctest::Contains("accuracy"),
                         std::invalid_argument);
    options.x = "epoch";
    options.ys = {"H10"};
    CHECK_THROWS_AS(cmd_plot_data(options), std::invalid_argument);
}

TEST_CASE("plot-data on an empty CSV emits empty output and succeeds") {
    TempDir dir("plotempty");
    write_file(dir.path() / "empty.csv", "");
    PlotCliOptions options;
    options.sweep_csv = dir.path() / "empty.csv";
    options.out_tsv = dir.path() / "plot.tsv";
    CHECK_NOTHROW(cmd_plot_data(options));
    CHECK(read_file(dir.path() / "plot.tsv").empty());
}

TEST_CASE("the installed binary wires the subcommands end to end") {
    auto& f = fixture();
    TempDir out("e2e");
    write_file(out.path() / "tiny.cfg",
               "dim = 8\nbatch_size = 64\nnegatives = 5\nmax_epochs = 2\npatience = 2\n");

    CHECK(run_cli("train --data " + f.data_dir.path().string() + " --config " +
                  (out.path() / "tiny.cfg").string() + " --out " +
                  (out.path() / "run").string() + " --seed 11") == 0);
    CHECK(std::filesystem::exists(out.path() / "run" / "model.ckpt"));

    CHECK(run_cli("eval --checkpoint " + (out.path() / "run" / "model.ckpt").string() +
                  " --data " + f.data_dir.path().string() +
                  " --split valid --tie-policy pessimistic --hits 1,10 --out " +
                  (out.path() / "m.json").string()) == 0);
    json metrics = json::parse(read_file(out.path() / "m.json"));
    CHECK(metrics["tie_policy"] == "pessimistic");

    // ensemble form: repeated checkpoint paths
    CHECK(run_cli("eval --checkpoint " + (out.path() / "run" / "model.ckpt").string() + " " +
                  (out.path() / "run" / "model.ckpt").string() + " --data " +
                  f.data_dir.path().string() + " --split valid") == 0);

    CHECK(run_cli("train --out /tmp/nowhere") != 0);   // missing --data
    CHECK(run_cli("eval --checkpoint /nonexistent.ckpt --data " +
                  f.data_dir.path().string()) != 0);
    CHECK(run_cli("definitely-not-a-subcommand") != 0);
}
