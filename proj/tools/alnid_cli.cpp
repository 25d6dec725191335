// Command-line pipeline: ingest -> train -> relearn -> zsl -> report.
// Each command reads and writes one run directory (--out).

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "alnid/pipeline.hpp"

namespace {

using alnid::pipeline::RunConfig;

struct CommonOpts {
  std::string config;
  std::string data;
  std::string out;
  std::string train_grouping;
  std::size_t min_leaf_size = 0;
  std::size_t max_depth = 0;
  std::size_t subsample = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  int k = 0;
  std::uint64_t seed = 0;
  bool strict = false;
  bool grid_search = false;
  bool knn_instances = false;

  CLI::Option* o_config = nullptr;
  CLI::Option* o_data = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_grouping = nullptr;
  CLI::Option* o_min_leaf = nullptr;
  CLI::Option* o_max_depth = nullptr;
  CLI::Option* o_subsample = nullptr;
  CLI::Option* o_gamma = nullptr;
  CLI::Option* o_lambda = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_strict = nullptr;
  CLI::Option* o_grid = nullptr;
  CLI::Option* o_knn_instances = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  o.o_config = cmd->add_option("--config", o.config, "JSON config file (CLI flags override it)");
  o.o_data = cmd->add_option("--data", o.data, "dataset path (plain or gzip, 42-field records)");
  o.o_out = cmd->add_option("--out", o.out, "run directory for all reports");
  o.o_min_leaf = cmd->add_option("--min-leaf-size", o.min_leaf_size, "minimum examples in a node");
  o.o_max_depth = cmd->add_option("--max-depth", o.max_depth, "depth limit (0 = unlimited)");
  o.o_subsample =
      cmd->add_option("--subsample", o.subsample, "stratified subsample size (0 = full data)");
  o.o_seed = cmd->add_option("--seed", o.seed, "subsampling seed");
  o.o_gamma = cmd->add_option("--gamma", o.gamma, "feature-side regularizer weight");
  o.o_lambda = cmd->add_option("--lambda", o.lambda, "signature-side regularizer weight");
  o.o_k = cmd->add_option("--k", o.k, "neighbour count for k-NN inference");
  o.o_grid = cmd->add_flag("--grid-search", o.grid_search,
                           "select gamma/lambda on a held-out seen-class split");
  o.o_grouping = cmd->add_option("--train-grouping", o.train_grouping,
                                 "signature grouping at training time: class or category");
  o.o_knn_instances = cmd->add_flag("--knn-instances", o.knn_instances,
                                    "also run instance-level k-NN against seen instances");
  o.o_strict = cmd->add_flag("--strict", o.strict, "abort on census deviations");
}

RunConfig build_config(const CommonOpts& o) {
  RunConfig cfg;
  if (o.o_config->count() > 0)
    cfg = alnid::pipeline::config_from_json(alnid::pipeline::read_json_file(o.config), cfg);
  if (o.o_data->count() > 0) cfg.data = o.data;
  if (o.o_out->count() > 0) cfg.out = o.out;
  if (o.o_min_leaf->count() > 0) cfg.min_leaf_size = o.min_leaf_size;
  if (o.o_max_depth->count() > 0) cfg.max_depth = o.max_depth;
  if (o.o_subsample->count() > 0) cfg.subsample = o.subsample;
  if (o.o_seed->count() > 0) cfg.seed = o.seed;
  if (o.o_gamma->count() > 0) cfg.gamma = o.gamma;
  if (o.o_lambda->count() > 0) cfg.lambda = o.lambda;
  if (o.o_k->count() > 0) cfg.k = o.k;
  if (o.o_grid->count() > 0) cfg.grid_search = true;
  if (o.o_grouping->count() > 0) cfg.train_grouping = o.train_grouping;
  if (o.o_knn_instances->count() > 0) cfg.knn_instances = true;
  if (o.o_strict->count() > 0) cfg.strict = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute relearning and zero-shot inference for KDD Cup 99 connection records"};
  app.require_subcommand(1);

  CommonOpts ingest_opts;
  CommonOpts train_opts;
  CommonOpts relearn_opts;
  CommonOpts zsl_opts;
  CommonOpts report_opts;
  CLI::App* ingest = app.add_subcommand("ingest", "parse the dataset, emit census and statistics");
  CLI::App* train = app.add_subcommand("train", "induce the decision tree on the seen classes");
  CLI::App* relearn = app.add_subcommand("relearn", "relearn attribute values from tree paths");
  CLI::App* zsl = app.add_subcommand("zsl", "train the embedding and evaluate unseen classes");
  CLI::App* report = app.add_subcommand("report", "compare a run directory against the references");
  add_common(ingest, ingest_opts);
  add_common(train, train_opts);
  add_common(relearn, relearn_opts);
  add_common(zsl, zsl_opts);
  add_common(report, report_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : alnid::pipeline::kExitUsage;
  }

  try {
    if (ingest->parsed()) return alnid::pipeline::cmd_ingest(build_config(ingest_opts), std::cout);
    if (train->parsed()) return alnid::pipeline::cmd_train(build_config(train_opts), std::cout);
    if (relearn->parsed())
      return alnid::pipeline::cmd_relearn(build_config(relearn_opts), std::cout);
    if (zsl->parsed()) return alnid::pipeline::cmd_zsl(build_config(zsl_opts), std::cout);
    if (report->parsed()) return alnid::pipeline::cmd_report(build_config(report_opts), std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return alnid::pipeline::kExitData;
  }
  return alnid::pipeline::kExitUsage;
}
