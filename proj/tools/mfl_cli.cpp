// Command-line front end. Exit codes: 0 success, 1 configuration error,
// 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfl.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out = "mfl_out";
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "experiment config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seeds, "seed to run (repeatable); overrides the config's seeds");
  cmd->add_option("--out", a.out, "output directory");
}

mfl::ExperimentConfig load(const CommonArgs& a) {
  mfl::ExperimentConfig c = a.config.empty() ? mfl::experiment_from_json(nlohmann::json::object())
                                             : mfl::load_experiment_config(a.config);
  if (!a.seeds.empty()) c.seeds = a.seeds;
  c.validate();
  return c;
}

void print_summary(const std::vector<mfl::RunReport>& reports) {
  for (const auto& r : reports)
    std::cout << r.label << ": output_error=" << mfl::format_double(r.output_error())
              << " targets_meeting=" << r.targets_meeting() << "/" << r.outcomes.size()
              << " machine_queries=" << r.method_queries << "\n";
}

void emit(const std::vector<mfl::RunReport>& reports, const std::string& out) {
  mfl::emit_report(reports, out);
  print_summary(reports);
  std::cout << "wrote " << reports.size() << " report(s) to " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Machine-feedback recipe generation"};
  app.require_subcommand(1);

  CommonArgs train_args, run_args, robust_args, ablation_args, compare_args;
  std::string method;
  auto* train = app.add_subcommand("train-emulator", "fit the emulator per seed and save it with its metrics");
  add_common(train, train_args);
  auto* run = app.add_subcommand("run", "run one method per seed");
  add_common(run, run_args);
  run->add_option("--method", method, "mfl | lsrs-lr | random-search | supervised-inverse (overrides config)");
  auto* robust = app.add_subcommand("robustness", "MFL under perturbed targets");
  add_common(robust, robust_args);
  auto* ablation = app.add_subcommand("ablation", "MFL ablation arms");
  add_common(ablation, ablation_args);
  auto* compare = app.add_subcommand("compare", "all methods per seed, sharing the emulator");
  add_common(compare, compare_args);

  std::vector<std::string> report_files;
  std::string report_out = "mfl_report";
  auto* report = app.add_subcommand("report", "re-emit tables from saved summary.json files");
  report->add_option("summaries", report_files, "summary.json files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "output directory");

  std::string scenario, spec_out;
  auto* export_spec = app.add_subcommand("export-spec", "write a bundled process spec as JSON");
  export_spec->add_option("--scenario", scenario, "etch | cvd | bonding | toy-linear")->required();
  export_spec->add_option("--out", spec_out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      const auto c = load(train_args);
      std::filesystem::create_directories(train_args.out);
      for (const auto& t : mfl::train_emulators(c)) {
        const auto path = std::filesystem::path(train_args.out) / ("emulator_s" + std::to_string(t.seed) + ".mflnet");
        mfl::save_emulator(t.fit, path);
        std::cout << path.string() << ": validation_mse=" << mfl::format_double(t.fit.validation_mse)
                  << " dataset_queries=" << t.dataset_queries << "\n";
      }
    } else if (*run) {
      auto c = load(run_args);
      if (!method.empty()) c.method = method;
      c.validate();
      emit(mfl::run_experiment(c), run_args.out);
    } else if (*robust) {
      emit(mfl::robustness_sweep(load(robust_args)), robust_args.out);
    } else if (*ablation) {
      emit(mfl::ablation_suite(load(ablation_args)), ablation_args.out);
    } else if (*compare) {
      emit(mfl::compare_methods(load(compare_args)), compare_args.out);
    } else if (*report) {
      std::vector<mfl::RunReport> reports;
      for (const auto& f : report_files) reports.push_back(mfl::load_report_file(f));
      emit(reports, report_out);
    } else if (*export_spec) {
      mfl::save_spec_file(mfl::builtin_spec(scenario), spec_out);
      std::cout << "wrote " << spec_out << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const mfl::FormatError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
