// Small end-to-end run on the etch scenario: sample the machine, fit the
// emulator, train the reverse model and print the recipe for one target.
// Budgets are cut down so it finishes in about a second.

#include <iomanip>
#include <iostream>

#include "mfl.hpp"

int main() {
  auto cfg = mfl::experiment_from_json({
      {"scenario", "etch"},
      {"seeds", nlohmann::json::array({0})},
      {"dataset_size", 200},
      {"target_count", 4},
      {"emulator", {{"epochs", 300}}},
      {"mfl", {{"loop_a_iterations", 300}, {"loop_a_gate_start", 250}, {"loop_b_iterations", 20},
               {"loop_b_gate_start", 15}}},
  });
  const mfl::RunReport r = mfl::run_method(cfg, "mfl", 0, "quickstart");
  const mfl::ProcessSpec& spec = r.spec;

  std::cout << std::fixed << std::setprecision(3);
  std::cout << "targets meeting all metrics: " << r.targets_meeting() << "/" << r.outcomes.size()
            << ", machine queries: " << r.total_queries() << "\n\n";

  const auto& o = r.outcomes.front();
  std::cout << "recipe for target 0\n";
  for (std::size_t i = 0; i < spec.inputs.size(); ++i)
    std::cout << "  " << std::setw(24) << std::left << spec.inputs[i].name << std::right << std::setw(12)
              << o.recipe[i] << " " << spec.inputs[i].unit << "\n";
  std::cout << "\nmachine output\n";
  for (std::size_t k = 0; k < spec.outputs.size(); ++k)
    std::cout << "  " << std::setw(24) << std::left << spec.outputs[k].name << std::right << std::setw(12)
              << o.output[k] << "  target " << o.target[k] << "  " << mfl::to_string(o.verdicts[k]) << "\n";
}
