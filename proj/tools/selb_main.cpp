#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "selb/error.hpp"
#include "selb/experiment.hpp"
#include "selb/serialize.hpp"

namespace {

int emit_error(const std::string& code, const std::string& message) {
  nlohmann::json j;
  j["error"] = code;
  j["message"] = message;
  std::fprintf(stderr, "%s\n", j.dump().c_str());
  return 1;
}

struct Overrides {
  std::uint64_t seed = 0;
  std::size_t ece_bins = 0;
  std::string eq4_mode;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "override the config seed");
  cmd->add_option("--ece-bins", ov.ece_bins, "override the calibration bin count");
  cmd->add_option("--eq4-mode", ov.eq4_mode, "population | raw_sum")
      ->check(CLI::IsMember({"population", "raw_sum"}));
}

void apply_overrides(const CLI::App* cmd, const Overrides& ov, selb::ExperimentConfig& cfg) {
  if (cmd->count("--seed")) cfg.train.seed = ov.seed;
  if (cmd->count("--ece-bins")) cfg.ece_bins = ov.ece_bins;
  if (cmd->count("--eq4-mode")) cfg.eq4_mode = selb::parse_eq4_mode(ov.eq4_mode);
}

std::string opt_cell(const nlohmann::json& v) {
  if (v.is_null()) return "NA";
  return selb::format_double(v.get<double>());
}

void print_report_summary(const nlohmann::json& j) {
  const nlohmann::json& r = j.at("report");
  std::printf("method:   %s (%s)\n", j.at("method").get<std::string>().c_str(),
              j.at("strategy").get<std::string>().c_str());
  std::printf("samples:  %zu\n", r.at("n_samples").get<std::size_t>());
  std::printf("accuracy: %s\n", selb::format_double(r.at("accuracy").get<double>()).c_str());
  std::printf("ece:      %s\n", selb::format_double(r.at("ece").get<double>()).c_str());
  std::printf("brier:    %s\n", selb::format_double(r.at("brier").get<double>()).c_str());
  const nlohmann::json& sep = r.at("separation");
  std::printf("uncertainty correct/incorrect:\n");
  std::printf("  avg entropy:    %s / %s\n", opt_cell(sep.at("avg_entropy").at("true")).c_str(),
              opt_cell(sep.at("avg_entropy").at("false")).c_str());
  std::printf("  mean entropy:   %s / %s\n", opt_cell(sep.at("mean_entropy").at("true")).c_str(),
              opt_cell(sep.at("mean_entropy").at("false")).c_str());
  std::printf("  class variance: %s / %s\n",
              opt_cell(sep.at("class_variance").at("true")).c_str(),
              opt_cell(sep.at("class_variance").at("false")).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-loss sub-ensemble training and uncertainty evaluation"};
  app.require_subcommand(1);

  std::string run_config, out_dir = "out";
  Overrides run_ov;
  CLI::App* run_cmd = app.add_subcommand("run", "train and evaluate one config");
  run_cmd->add_option("config", run_config, "experiment config (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "output directory (default: out)");
  add_override_flags(run_cmd, run_ov);

  std::vector<std::string> compare_configs;
  std::string compare_out = "out";
  Overrides compare_ov;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run several configs on shared data, one CSV row each");
  compare_cmd->add_option("configs", compare_configs, "experiment configs (JSON)")->required();
  compare_cmd->add_option("--out", compare_out, "output directory (default: out)");
  add_override_flags(compare_cmd, compare_ov);

  std::string sweep_config, sweep_out = "out";
  std::vector<std::size_t> sweep_heads{1, 2, 3, 4};
  std::size_t sweep_seeds = 5;
  Overrides sweep_ov;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "accuracy vs head count for one config");
  sweep_cmd->add_option("config", sweep_config, "base experiment config (JSON, strategy ours)")
      ->required();
  sweep_cmd->add_option("--heads", sweep_heads, "head counts, e.g. --heads 1,2,3,4")
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "number of seeds per head count (default 5)");
  sweep_cmd->add_option("--out", sweep_out, "output directory (default: out)");
  add_override_flags(sweep_cmd, sweep_ov);

  std::string report_dir;
  CLI::App* report_cmd = app.add_subcommand("report", "print the summary of a finished run");
  report_cmd->add_option("dir", report_dir, "run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("usage", e.what());
  }

  try {
    if (app.got_subcommand(run_cmd)) {
      selb::ExperimentConfig cfg = selb::load_config(run_config);
      apply_overrides(run_cmd, run_ov, cfg);
      selb::RunOutputs out = selb::run_experiment(cfg, out_dir);
      std::printf("%s: accuracy %s, ece %s, brier %s\n", cfg.name.c_str(),
                  selb::format_double(out.report.accuracy).c_str(),
                  selb::format_double(out.report.ece).c_str(),
                  selb::format_double(out.report.brier).c_str());
      std::printf("reports written to %s\n", out_dir.c_str());
    } else if (app.got_subcommand(compare_cmd)) {
      std::vector<selb::ExperimentConfig> cfgs;
      for (const auto& path : compare_configs) {
        selb::ExperimentConfig cfg = selb::load_config(path);
        apply_overrides(compare_cmd, compare_ov, cfg);
        cfgs.push_back(std::move(cfg));
      }
      auto outs = selb::compare_experiments(cfgs, compare_out);
      for (const auto& o : outs) {
        std::printf("%s: accuracy %s, ece %s, brier %s\n", o.config.name.c_str(),
                    selb::format_double(o.report.accuracy).c_str(),
                    selb::format_double(o.report.ece).c_str(),
                    selb::format_double(o.report.brier).c_str());
      }
      std::printf("comparison table written to %s/compare.csv\n", compare_out.c_str());
    } else if (app.got_subcommand(sweep_cmd)) {
      selb::ExperimentConfig cfg = selb::load_config(sweep_config);
      apply_overrides(sweep_cmd, sweep_ov, cfg);
      selb::SweepResult result = selb::heads_sweep(cfg, sweep_heads, sweep_seeds, sweep_out);
      for (const auto& p : result.points) {
        std::printf("heads %zu: accuracy %s +/- %s\n", p.heads,
                    selb::format_double(p.mean).c_str(),
                    selb::format_double(p.stddev).c_str());
      }
      std::printf("sweep written to %s\n", sweep_out.c_str());
    } else if (app.got_subcommand(report_cmd)) {
      std::string path = report_dir + "/report.json";
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(selb::read_text_file(path));
      } catch (const nlohmann::json::exception& e) {
        selb::fail(selb::ErrorCode::bad_value, path + " is not a valid report: " + e.what());
      }
      print_report_summary(j);
    }
    return 0;
  } catch (const selb::Error& e) {
    return emit_error(selb::error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return emit_error("internal", e.what());
  }
}
