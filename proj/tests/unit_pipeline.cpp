#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "alnid/pipeline.hpp"
#include "support/synthetic_kdd.hpp"

namespace fs = std::filesystem;
namespace pipeline = alnid::pipeline;
namespace kdd = alnid::kdd;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Full synthetic run directory: ingest + train + relearn + zsl.
pipeline::RunConfig run_all(const TempDir& dir, int per_class = 25) {
  const fs::path data = dir.path / "data.txt";
  synth::write_dataset(data.string(), synth::small_all_classes(per_class));
  pipeline::RunConfig cfg;
  cfg.data = data.string();
  cfg.out = (dir.path / "run").string();
  std::ostringstream log;
  REQUIRE(pipeline::cmd_ingest(cfg, log) == pipeline::kExitOk);
  REQUIRE(pipeline::cmd_train(cfg, log) == pipeline::kExitOk);
  REQUIRE(pipeline::cmd_relearn(cfg, log) == pipeline::kExitOk);
  REQUIRE(pipeline::cmd_zsl(cfg, log) == pipeline::kExitOk);
  return cfg;
}

}  // namespace

TEST_CASE("config document parsing") {
  pipeline::RunConfig defaults;
  const json j{{"version", 1}, {"data", "x.gz"}, {"gamma", 0.5}, {"subsample", 100}};
  const auto cfg = pipeline::config_from_json(j, defaults);
  CHECK(cfg.data == "x.gz");
  CHECK(cfg.gamma == 0.5);
  CHECK(cfg.subsample == 100);
  CHECK(cfg.lambda == defaults.lambda);
  CHECK(cfg.out == defaults.out);

  CHECK_THROWS_AS(pipeline::config_from_json(json{{"gama", 1.0}}), alnid::Error);
  CHECK_THROWS_AS(pipeline::config_from_json(json{{"version", 9}}), alnid::Error);
  CHECK_THROWS_AS(pipeline::config_from_json(json::array()), alnid::Error);

  const auto round = pipeline::config_from_json(pipeline::config_to_json(cfg));
  CHECK(round.data == cfg.data);
  CHECK(round.gamma == cfg.gamma);

  pipeline::RunConfig bad;
  bad.k = 0;
  CHECK_THROWS_AS(pipeline::validate(bad), alnid::Error);
  bad = pipeline::RunConfig{};
  bad.train_grouping = "nope";
  CHECK_THROWS_AS(pipeline::validate(bad), alnid::Error);
}

TEST_CASE("ingest emits census and statistics") {
  TempDir dir("alnid_pipe_ingest");
  const fs::path data = dir.path / "data.txt";
  synth::write_dataset(data.string(), synth::small_all_classes(5));

  pipeline::RunConfig cfg;
  cfg.data = data.string();
  cfg.out = (dir.path / "run").string();
  std::ostringstream log;
  CHECK(pipeline::cmd_ingest(cfg, log) == pipeline::kExitOk);

  // census.csv: header + 23 classes, counts all 5
  {
    std::ifstream in(fs::path(cfg.out) / "census.csv");
    const auto rows = alnid::csv::read(in);
    REQUIRE(rows.size() == 24);
    CHECK(rows[0] == (std::vector<std::string>{"class", "category", "count"}));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      REQUIRE(rows[i].size() == 3);
      CHECK(rows[i][2] == "5");
    }
  }
  // stats CSV: header + 12 attributes
  {
    std::ifstream in(fs::path(cfg.out) / "stats_original.csv");
    const auto rows = alnid::csv::read(in);
    REQUIRE(rows.size() == 13);
    CHECK(rows[1][0] == "duration");
  }
  const json ingest = pipeline::read_json_file(fs::path(cfg.out) / "ingest.json");
  CHECK(ingest.at("instances").get<int>() == 5 * 23);
  CHECK_FALSE(ingest.at("census_mismatches").empty());  // synthetic != canonical

  // strict mode turns the census mismatch into exit 3
  cfg.strict = true;
  std::ostringstream log2;
  CHECK(pipeline::cmd_ingest(cfg, log2) == pipeline::kExitStrict);

  // empty input file is a data error, no partial reports
  const fs::path empty = dir.path / "empty.txt";
  std::ofstream(empty).close();
  pipeline::RunConfig empty_cfg;
  empty_cfg.data = empty.string();
  empty_cfg.out = (dir.path / "run2").string();
  std::ostringstream log3;
  CHECK_THROWS_AS(pipeline::cmd_ingest(empty_cfg, log3), alnid::Error);
  CHECK_FALSE(fs::exists(fs::path(empty_cfg.out) / "census.csv"));
}

TEST_CASE("train builds a perfect tree on separable synthetic data") {
  TempDir dir("alnid_pipe_train");
  const fs::path data = dir.path / "data.txt";
  synth::write_dataset(data.string(), synth::small_all_classes(20));

  pipeline::RunConfig cfg;
  cfg.data = data.string();
  cfg.out = (dir.path / "run").string();
  std::ostringstream log;
  REQUIRE(pipeline::cmd_train(cfg, log) == pipeline::kExitOk);

  const json metrics = pipeline::read_json_file(fs::path(cfg.out) / "train_metrics.json");
  CHECK(metrics.at("training_accuracy").get<double>() == 1.0);
  CHECK(metrics.at("train_instances").get<int>() == 15 * 20);  // seen classes only
  CHECK(metrics.at("rule_count") == metrics.at("leaf_count"));

  const auto t = alnid::tree::DecisionTree::from_json(
      pipeline::read_json_file(fs::path(cfg.out) / "tree.json"));
  CHECK(t.leaf_count() ==
        pipeline::read_json_file(fs::path(cfg.out) / "train_metrics.json")
            .at("leaf_count")
            .get<std::size_t>());

  // rules.txt: one line per leaf, spec format
  std::istringstream rules(read_file(fs::path(cfg.out) / "rules.txt"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(rules, line)) {
    ++lines;
    CHECK(line.rfind("IF ", 0) == 0);
    CHECK(line.find(" THEN ") != std::string::npos);
  }
  CHECK(lines == t.leaf_count());

  // a rerun produces byte-identical artifacts
  const std::string tree_bytes = read_file(fs::path(cfg.out) / "tree.json");
  std::ostringstream log2;
  REQUIRE(pipeline::cmd_train(cfg, log2) == pipeline::kExitOk);
  CHECK(read_file(fs::path(cfg.out) / "tree.json") == tree_bytes);

  // a single-leaf configuration predicts the majority class
  pipeline::RunConfig stump_cfg = cfg;
  stump_cfg.out = (dir.path / "stump").string();
  stump_cfg.min_leaf_size = 100000;
  std::ostringstream log3;
  REQUIRE(pipeline::cmd_train(stump_cfg, log3) == pipeline::kExitOk);
  const json stump = pipeline::read_json_file(fs::path(stump_cfg.out) / "train_metrics.json");
  CHECK(stump.at("leaf_count").get<int>() == 1);
  CHECK(stump.at("training_accuracy").get<double>() ==
        Catch::Approx(1.0 / 15.0).margin(1e-9));
}

TEST_CASE("relearn emits learned data and separability reports") {
  TempDir dir("alnid_pipe_relearn");
  const auto cfg = run_all(dir, 20);

  // learned.csv: header + one row per instance, all non-negative integers
  std::ifstream in(fs::path(cfg.out) / "learned.csv");
  const auto rows = alnid::csv::read(in);
  REQUIRE(rows.size() == 23 * 20 + 1);
  REQUIRE(rows[0].size() == kdd::kNumAttributes + 2);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    for (std::size_t a = 0; a < kdd::kNumAttributes; ++a) {
      const long v = std::stol(rows[i][a]);
      CHECK(v >= 0);
    }
    CHECK_NOTHROW(kdd::category_from_name(rows[i][kdd::kNumAttributes + 1]));
  }

  const json sep = pipeline::read_json_file(fs::path(cfg.out) / "separability.json");
  CHECK(sep.at("attributes").size() == kdd::kNumAttributes);
  CHECK(sep.at("instances").get<int>() == 23 * 20);
  CHECK(sep.at("root_attribute_min").get<int>() >= 1);

  std::ifstream sep_csv(fs::path(cfg.out) / "separability.csv");
  CHECK(alnid::csv::read(sep_csv).size() == kdd::kNumAttributes + 1);

  std::ifstream stats(fs::path(cfg.out) / "stats_learned.csv");
  CHECK(alnid::csv::read(stats).size() == kdd::kNumAttributes + 1);
}

TEST_CASE("zsl trains, persists and evaluates") {
  TempDir dir("alnid_pipe_zsl");
  const auto cfg = run_all(dir, 25);

  const json eval = pipeline::read_json_file(fs::path(cfg.out) / "eval.json");
  CHECK(eval.at("unseen_instances").get<int>() == 8 * 25);
  CHECK(eval.at("eszsl_relative_residual").get<double>() <= 1e-8);

  for (const char* method : {"eszsl_learned", "knn_learned", "eszsl_original", "knn_original"}) {
    const json& m = eval.at("methods").at(method);
    REQUIRE(m.at("labels").size() == 5);
    const auto confusion = m.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
    REQUIRE(confusion.size() == 5);
    std::int64_t total = 0;
    for (const auto& row : confusion)
      for (auto v : row) total += v;
    CHECK(total == 8 * 25);
  }
  // synthetic categories are engineered to be separable: zero-shot transfer
  // must beat chance comfortably
  CHECK(eval.at("methods").at("eszsl_learned").at("overall_accuracy").get<double>() > 0.2);

  // model reload reproduces predictions
  const json model_doc = pipeline::read_json_file(fs::path(cfg.out) / "model.json");
  const auto model = alnid::zsl::model_from_json(model_doc.at("eszsl"));
  const auto cat_sig = alnid::zsl::signature_from_json(model_doc.at("category_signatures"));
  CHECK(model.class_labels.size() == 15);
  CHECK(cat_sig.labels.size() == 5);
  const auto scores =
      alnid::zsl::eszsl_scores(model, std::vector<double>(12, 1.0), cat_sig.values);
  CHECK(scores.size() == 5);

  // confusion CSV parses and matches the JSON
  std::ifstream in(fs::path(cfg.out) / "eval_confusion.csv");
  const auto rows = alnid::csv::read(in);
  REQUIRE(rows.size() == 6);
  const auto confusion =
      eval.at("methods").at("eszsl_learned").at("confusion").get<std::vector<std::vector<std::int64_t>>>();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(rows[r + 1][c + 1] == std::to_string(confusion[r][c]));

  // identical rerun produces byte-identical reports
  const std::string eval_bytes = read_file(fs::path(cfg.out) / "eval.json");
  std::ostringstream log;
  REQUIRE(pipeline::cmd_zsl(cfg, log) == pipeline::kExitOk);
  CHECK(read_file(fs::path(cfg.out) / "eval.json") == eval_bytes);
}

TEST_CASE("zsl variants: grid search, category grouping, instance knn, subsample") {
  TempDir dir("alnid_pipe_zsl_variants");
  const fs::path data = dir.path / "data.txt";
  synth::write_dataset(data.string(), synth::small_all_classes(30));

  pipeline::RunConfig cfg;
  cfg.data = data.string();
  cfg.out = (dir.path / "run").string();
  std::ostringstream log;
  REQUIRE(pipeline::cmd_train(cfg, log) == pipeline::kExitOk);

  cfg.grid_search = true;
  cfg.train_grouping = "category";
  cfg.knn_instances = true;
  cfg.subsample = 300;
  cfg.k = 3;
  REQUIRE(pipeline::cmd_zsl(cfg, log) == pipeline::kExitOk);

  const json eval = pipeline::read_json_file(fs::path(cfg.out) / "eval.json");
  CHECK(eval.at("train_grouping") == "category");
  CHECK(eval.at("grid_search") == true);
  CHECK(eval.at("methods").contains("knn_instances_learned"));
  CHECK(eval.at("train_instances").get<int>() <= 310);

  const json model_doc = pipeline::read_json_file(fs::path(cfg.out) / "model.json");
  CHECK(alnid::zsl::model_from_json(model_doc.at("eszsl")).class_labels.size() == 5);
}

TEST_CASE("report aggregates a run directory") {
  TempDir dir("alnid_pipe_report");
  const auto cfg = run_all(dir, 20);

  std::ostringstream log;
  CHECK(pipeline::cmd_report(cfg, log) == pipeline::kExitOk);
  const json report = pipeline::read_json_file(fs::path(cfg.out) / "report.json");

  // synthetic data cannot match the canonical census or statistics
  CHECK(report.at("census").at("status") == "fail");
  CHECK(report.at("stats").at("status") == "fail");
  // but the run-level checks hold
  CHECK(report.at("training").at("status") == "pass");
  CHECK(report.at("relearn").at("status") == "pass");
  CHECK(report.at("zsl").at("status") == "pass");
  CHECK(report.at("summary").at("hard_failures").get<int>() >= 2);

  // strict report exits 3 on hard failures
  pipeline::RunConfig strict = cfg;
  strict.strict = true;
  std::ostringstream log2;
  CHECK(pipeline::cmd_report(strict, log2) == pipeline::kExitStrict);

  // missing artifacts are reported, not thrown
  pipeline::RunConfig fresh;
  fresh.out = (dir.path / "nothing").string();
  std::ostringstream log3;
  CHECK(pipeline::cmd_report(fresh, log3) == pipeline::kExitOk);
  const json empty_report = pipeline::read_json_file(fs::path(fresh.out) / "report.json");
  CHECK(empty_report.at("census").at("status") == "missing");
  CHECK(empty_report.at("zsl").at("status") == "missing");
}

TEST_CASE("strict census gate blocks training") {
  TempDir dir("alnid_pipe_strict");
  const fs::path data = dir.path / "data.txt";
  synth::write_dataset(data.string(), synth::small_all_classes(3));
  pipeline::RunConfig cfg;
  cfg.data = data.string();
  cfg.out = (dir.path / "run").string();
  cfg.strict = true;
  std::ostringstream log;
  CHECK(pipeline::cmd_train(cfg, log) == pipeline::kExitStrict);
  CHECK_FALSE(fs::exists(fs::path(cfg.out) / "tree.json"));
}
