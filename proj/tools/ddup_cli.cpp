// Command-line driver: prepare data, train a model, write an insertion
// stream, run a full experiment and render its report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ddup/csv.hpp"
#include "ddup/datasets.hpp"
#include "ddup/experiment.hpp"

namespace fs = std::filesystem;
using namespace ddup;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

nlohmann::json json_arg(const std::string& text_or_path) {
  if (text_or_path.empty()) return nlohmann::json::object();
  try {
    if (fs::exists(text_or_path)) {
      std::ifstream in(text_or_path);
      return nlohmann::json::parse(in);
    }
    return nlohmann::json::parse(text_or_path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model settings are neither a JSON file nor inline JSON: " + std::string(e.what()));
  }
}

Table load_checked(const std::string& csv, const std::string& schema_path) {
  if (!fs::exists(csv)) throw ConfigError("data file not found: " + csv);
  if (!fs::exists(schema_path)) throw ConfigError("schema file not found: " + schema_path);
  auto loaded = load_table(csv, Schema::load(schema_path));
  if (loaded.rejected) {
    std::cerr << "warning: rejected " << loaded.rejected << " rows outside the schema\n";
    for (const auto& why : loaded.rejections) std::cerr << "  " << why << '\n';
  }
  return std::move(loaded.table);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect distribution shifts in inserted data and update learned database models"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Write a dataset (generated or validated CSV) and its schema");
  std::string gen, prep_csv, prep_schema, prep_out = "data";
  std::size_t prep_rows = 0;
  std::uint64_t prep_seed = 7;
  prepare->add_option("--generator", gen, "census or mog");
  prepare->add_option("--csv", prep_csv, "Existing CSV to validate against --schema");
  prepare->add_option("--schema", prep_schema, "Schema JSON for --csv");
  prepare->add_option("--rows", prep_rows, "Generated row count (0: generator default)");
  prepare->add_option("--seed", prep_seed, "Generator seed");
  prepare->add_option("--out", prep_out, "Output directory");

  // train
  auto* trainc = app.add_subcommand("train", "Train a model on a CSV table and save a checkpoint");
  std::string tr_data, tr_schema, tr_family = "darn", tr_model, tr_out = "model.json";
  TrainConfig tcfg;
  trainc->add_option("--data", tr_data, "CSV table")->required();
  trainc->add_option("--schema", tr_schema, "Schema JSON")->required();
  trainc->add_option("--family", tr_family, "mdn, darn or tvae");
  trainc->add_option("--model", tr_model, "Model settings: JSON file or inline JSON");
  trainc->add_option("--epochs", tcfg.epochs, "Training epochs");
  trainc->add_option("--batch-size", tcfg.batch_size, "Minibatch size");
  trainc->add_option("--lr", tcfg.base_lr, "Learning rate");
  trainc->add_option("--seed", tcfg.seed, "Shuffling seed");
  trainc->add_option("--out", tr_out, "Checkpoint path");

  // stream
  auto* streamc = app.add_subcommand("stream", "Write an insertion stream sampled from a table");
  std::string st_data, st_schema, st_out = "stream", st_cols;
  double st_fraction = 0.2;
  int st_batches = 1;
  bool st_no_drift = false;
  std::uint64_t st_seed = 5;
  streamc->add_option("--data", st_data, "CSV table")->required();
  streamc->add_option("--schema", st_schema, "Schema JSON")->required();
  streamc->add_option("--fraction", st_fraction, "Inserted share of the table");
  streamc->add_option("--batches", st_batches, "Number of batches");
  streamc->add_flag("--no-drift", st_no_drift, "Insert unperturbed rows");
  streamc->add_option("--drift-columns", st_cols, "Comma separated columns to permute (default all)");
  streamc->add_option("--seed", st_seed, "Sampling seed");
  streamc->add_option("--out", st_out, "Output directory");

  // run
  auto* runc = app.add_subcommand("run", "Run an experiment described by a JSON config, then report");
  std::string run_cfg, run_out, run_policies;
  std::uint64_t run_seed = 0;
  bool run_no_report = false;
  runc->add_option("--config", run_cfg, "Experiment config JSON")->required();
  runc->add_option("--out", run_out, "Override the output directory");
  runc->add_option("--seed", run_seed, "Override the experiment seed");
  runc->add_option("--policies", run_policies, "Override the policies (comma separated)");
  runc->add_flag("--no-report", run_no_report, "Skip the report step");

  // report
  auto* reportc = app.add_subcommand("report", "Write CSV summaries and SVG plots for a run directory");
  std::string rep_dir;
  reportc->add_option("run_dir", rep_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*prepare) {
      Table t;
      if (!gen.empty()) {
        if (!prep_csv.empty()) throw ConfigError("prepare: give either --generator or --csv, not both");
        DatasetSpec spec;
        spec.generator = gen;
        spec.rows = prep_rows;
        spec.seed = prep_seed;
        t = load_dataset(spec);
      } else {
        if (prep_csv.empty() || prep_schema.empty()) throw ConfigError("prepare: need --generator or --csv with --schema");
        t = load_checked(prep_csv, prep_schema);
      }
      fs::create_directories(prep_out);
      write_table(prep_out + "/data.csv", t);
      t.schema().save(prep_out + "/schema.json");
      std::cout << "wrote " << t.row_count() << " rows to " << prep_out << "/data.csv\n";
    } else if (*trainc) {
      const auto family = family_from_string(tr_family);
      const auto settings = json_arg(tr_model);
      const Table t = load_checked(tr_data, tr_schema);
      auto m = make_model(family, settings, t);
      const auto stats = train(*m, t, tcfg);
      save_model(*m, tr_out);
      std::cout << "trained " << tr_family << " for " << stats.epoch_loss.size() << " epochs in " << stats.wall_seconds
                << " s, final loss " << stats.epoch_loss.back() << "; saved " << tr_out << '\n';
    } else if (*streamc) {
      if (!(st_fraction > 0.0 && st_fraction <= 1.0)) throw ConfigError("stream: --fraction must be in (0, 1]");
      if (st_batches < 1) throw ConfigError("stream: --batches must be positive");
      const Table t = load_checked(st_data, st_schema);
      const auto s = make_update_stream(t, st_fraction, st_batches, !st_no_drift, st_seed, split_list(st_cols));
      write_stream(st_out, s);
      std::cout << "wrote " << s.size() << " batches to " << st_out << '\n';
    } else if (*runc) {
      auto j = [&] {
        std::ifstream in(run_cfg);
        if (!in) throw ConfigError("cannot open config '" + run_cfg + "'");
        try {
          return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError("config '" + run_cfg + "' is not valid JSON: " + e.what());
        }
      }();
      if (!run_out.empty()) j["out_dir"] = run_out;
      if (run_seed) j["seed"] = run_seed;
      if (!run_policies.empty()) j["policies"] = split_list(run_policies);
      const auto cfg = ExperimentConfig::from_json(j);
      const auto dir = run_experiment(cfg);
      std::cout << "run written to " << dir << '\n';
      if (!run_no_report)
        for (const auto& f : report(dir)) std::cout << "  " << f << '\n';
    } else if (*reportc) {
      if (!fs::is_directory(rep_dir)) throw ConfigError("not a run directory: " + rep_dir);
      for (const auto& f : report(rep_dir)) std::cout << f << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
