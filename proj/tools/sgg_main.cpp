// Command line entry points: gen-data, train, eval, export. Apart from the
// SGG_SEED override on train, every input arrives through flags and files.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgg/checkpoint.hpp"
#include "sgg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// "all" selects every refinement step; otherwise a comma list of 1-based
// step indices.
std::vector<int> parse_layers(const std::string& spec) {
  if (spec == "all") return {};
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    int v = std::stoi(item, &used);
    if (used != item.size()) throw CLI::ValidationError("--layer", "not a layer index: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--layer", "empty layer list");
  return out;
}

void print_report(const sgg::LayerEval& le, const std::string& split, int top_m) {
  std::cout << "layer " << le.layer << "  (" << split << ", " << le.report.scenes
            << " scenes, top-m " << top_m << ")\n"
            << sgg::report_table(le.report);
  for (const auto& a : le.report.at)
    if (a.zero_shot.value.has_value())
      std::cout << "  zsR@" << a.k << ": " << 100.0 * *a.zero_shot.value << "  ("
                << a.zero_shot.scenes_counted << " scenes)\n";
  std::cout << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"iterative scene graph generation over a synthetic shapes world"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, ckpt_path;
  std::string layer_spec = "all", split = "test";
  int top_m = 0, workers = 0;
  std::vector<int> ks;
  std::vector<std::string> scene_ids;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset from a config");
  gen->add_option("--config", config_path, "run config JSON")->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model on a generated dataset");
  train->add_option("--config", config_path, "run config JSON")->required()
      ->check(CLI::ExistingFile);
  train->add_option("--data", data_path, "dataset manifest")->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "run directory for log and checkpoints")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "checkpoint manifest")->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "dataset manifest")->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--layer", layer_spec, "refinement step to score: 1-based index or 'all'");
  eval->add_option("--top-m", top_m, "predicates ranked per slot (default: from checkpoint)");
  eval->add_option("--k", ks, "recall cutoffs (default: from checkpoint)")->delimiter(',');
  eval->add_option("--split", split, "dataset split")->capture_default_str();
  eval->add_option("--out", out_dir, "directory for report JSON files");
  eval->add_option("--workers", workers, "evaluation threads (default: from checkpoint)");

  CLI::App* exp = app.add_subcommand("export", "assemble scenes into DOT and JSON graphs");
  exp->add_option("--ckpt", ckpt_path, "checkpoint manifest")->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--data", data_path, "dataset manifest")->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--scenes", scene_ids, "scene ids")->required()->delimiter(',');
  exp->add_option("--layers", layer_spec, "refinement steps: comma list or 'all'");
  exp->add_option("--out", out_dir, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    sgg::RunConfig cfg = sgg::RunConfig::load(config_path);
    sgg::GenDataResult r = sgg::gen_data_run(cfg, out_dir);
    std::cout << "manifest " << r.manifest_path << "\n"
              << "manifest hash " << r.manifest_hash << "\n";
    for (const sgg::SplitInfo& s : r.manifest.splits)
      std::cout << "  " << s.name << ": " << s.scenes << " scenes, max " << s.max_triplets
                << " triplets, hash " << s.hash << "\n";
    return 0;
  }

  if (train->parsed()) {
    sgg::RunConfig cfg = sgg::RunConfig::load(config_path);
    if (auto seed = sgg::env_seed_override()) {
      std::cout << "seed " << *seed << " (SGG_SEED override)\n";
      cfg.seed = *seed;
    }
    sgg::TrainResult r = sgg::train_run(cfg, data_path, out_dir);
    std::cout << "log " << r.log_path << "\n";
    if (r.best_epoch >= 0)
      std::cout << "best epoch " << r.best_epoch << " (validation hR "
                << 100.0 * r.best_metric << ")\n";
    std::cout << "best checkpoint " << r.best_checkpoint << "\n"
              << "final checkpoint " << r.final_checkpoint << "\n";
    return 0;
  }

  if (eval->parsed()) {
    std::vector<int> layers = parse_layers(layer_spec);
    std::vector<sgg::LayerEval> reports =
        sgg::eval_run(ckpt_path, data_path, layers, top_m, ks, split, workers);
    json echo = sgg::nn::peek_checkpoint_config(ckpt_path);
    int effective_top_m = top_m >= 1 ? top_m : echo.at("run").at("eval").at("top_m").get<int>();
    for (const sgg::LayerEval& le : reports) print_report(le, split, effective_top_m);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      for (const sgg::LayerEval& le : reports) {
        json j = {{"split", split},
                  {"layer", le.layer},
                  {"top_m", effective_top_m},
                  {"checkpoint", echo},
                  {"report", sgg::report_json(le.report)}};
        std::string path =
            (fs::path(out_dir) / ("eval_" + split + "_layer" + std::to_string(le.layer) + ".json"))
                .string();
        sgg::write_file(path, j.dump(2));
        std::cout << "wrote " << path << "\n";
      }
    }
    return 0;
  }

  // export
  std::vector<int> layers = parse_layers(layer_spec);
  if (out_dir.empty()) out_dir = ".";
  std::vector<std::string> files =
      sgg::export_run(ckpt_path, data_path, scene_ids, layers, out_dir);
  for (const std::string& f : files) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
