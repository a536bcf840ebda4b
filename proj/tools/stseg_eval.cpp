// Inference-only evaluator. Links the core library alone: no style model, no texture
// encoder, no trainer.

#include <CLI11.hpp>
#include <iostream>

#include "stseg/error.hpp"
#include "stseg/evaluator.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Evaluate a segmentation checkpoint"};
  std::string checkpoint, data = "data", out;
  std::vector<std::string> splits{"val"};
  app.add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  app.add_option("--data", data, "dataset root");
  app.add_option("--splits", splits, "splits to evaluate");
  app.add_option("--out", out, "report directory (empty = no files)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    stseg::EvalOptions opts;
    opts.data_root = data;
    opts.splits = splits;
    const auto r = stseg::evaluate_checkpoint(checkpoint, opts, out, "checkpoint");
    std::cout << stseg::results_to_json(r) << '\n';
  } catch (const stseg::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
