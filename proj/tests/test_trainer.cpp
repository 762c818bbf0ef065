#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sgg/checkpoint.hpp"
#include "sgg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using sgg::DetectorOutput;
using sgg::FrequencyTable;
using sgg::LayerEval;
using sgg::LossParams;
using sgg::Manifest;
using sgg::Model;
using sgg::ModelFamily;
using sgg::RunConfig;
using sgg::Scene;
using sgg::Tape;
using sgg::Var;

namespace {

// Scratch tree shared by every case; wiped once per process.
const fs::path& scratch() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "sgg_trainer_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

RunConfig tiny_run() {
  RunConfig c;
  c.world.seed = 7;
  c.n_train = 24;
  c.n_val = 8;
  c.n_test = 8;
  c.encoder.d_model = 16;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.decoder.n_queries = 16;
  c.decoder.n_layers = 2;
  c.decoder.d_model = 16;
  c.decoder.n_heads = 2;
  c.motif.n_steps = 2;
  c.motif.d_feat = 16;  // >= 4 + eta
  c.motif.d_context = 8;
  c.motif.d_label = 4;
  c.motif.n_heads = 2;
  c.alpha = 0;  // splits this small can miss rare predicates entirely
  c.epochs = 3;
  c.batch_size = 6;
  c.lr.initial = 1e-3f;
  c.seed = 11;
  c.ks = {5, 20};
  c.top_m = 1;
  c.workers = 2;
  return c;
}

const sgg::GenDataResult& tiny_data() {
  static const sgg::GenDataResult d =
      sgg::gen_data_run(tiny_run(), (scratch() / "data").string());
  return d;
}

// One trained triple-decoder run reused by the evaluation and export cases.
const sgg::TrainResult& trained_run() {
  static const sgg::TrainResult r =
      sgg::train_run(tiny_run(), tiny_data().manifest_path, (scratch() / "run-main").string());
  return r;
}

std::vector<json> read_log(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<json> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

}  // namespace

TEST_CASE("run config json round trip keeps every field") {
  RunConfig c = tiny_run();
  c.model = ModelFamily::kMotifAug;
  c.joint_loss = false;
  c.decoder.enable_cas = false;
  c.assembly.score_floor = 0.2;
  c.lr.decay_every = 3;
  c.seed = 0xdeadbeefcafe1234ull;

  json j = c.to_json();
  RunConfig back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.model == ModelFamily::kMotifAug);
  CHECK(back.seed == c.seed);
  CHECK_FALSE(back.joint_loss);
  CHECK_FALSE(back.decoder.enable_cas);
  CHECK(back.assembly.score_floor == doctest::Approx(0.2));
}

TEST_CASE("run config fills missing keys with defaults") {
  RunConfig def;
  CHECK(RunConfig::from_json(json::object()).to_json() == def.to_json());

  RunConfig part = RunConfig::from_json(json::parse(R"({"train": {"epochs": 4}})"));
  CHECK(part.epochs == 4);
  CHECK(part.batch_size == def.batch_size);
  CHECK(part.ks == def.ks);

  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"model": "perceptron"})")),
                  std::invalid_argument);
}

TEST_CASE("run config validation rejects inconsistent settings") {
  auto broken = [](auto mutate) {
    RunConfig c = tiny_run();
    mutate(c);
    return c;
  };
  CHECK_NOTHROW(tiny_run().validate());
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.epochs = -1; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.batch_size = 0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ks.clear(); }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ks = {0}; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.top_m = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.alpha = -0.1; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.alpha = 0.1; c.beta = 0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.eos_coef = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.lr.initial = 0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.workers = -1; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.encoder.d_model = 32; }).validate(),
                  std::invalid_argument);  // decoder stays at 16
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.n_val = 0; }).validate(), std::invalid_argument);
}

TEST_CASE("environment seed override parses strictly") {
  unsetenv("SGG_SEED");
  CHECK_FALSE(sgg::env_seed_override().has_value());

  setenv("SGG_SEED", "42", 1);
  CHECK(sgg::env_seed_override() == 42ull);

  setenv("SGG_SEED", "", 1);
  CHECK_FALSE(sgg::env_seed_override().has_value());

  setenv("SGG_SEED", "7seven", 1);
  CHECK_THROWS_AS(sgg::env_seed_override(), std::invalid_argument);
  setenv("SGG_SEED", "banana", 1);
  CHECK_THROWS_AS(sgg::env_seed_override(), std::invalid_argument);
  unsetenv("SGG_SEED");
}

TEST_CASE("motif predicate weights append the no-relation coefficient") {
  FrequencyTable freq = FrequencyTable::from_counts({60, 30, 10});

  std::vector<float> flat = sgg::motif_predicate_weights(freq, 0, 0.75, 0.1);
  REQUIRE(flat.size() == 4);
  for (int i = 0; i < 3; ++i) CHECK(flat[i] == 1.f);
  CHECK(flat[3] == doctest::Approx(0.1));

  // Hand recomputation of w_c = max{(alpha / f_c)^beta, 1}.
  double alpha = 0.14, beta = 0.75;
  std::vector<float> w = sgg::motif_predicate_weights(freq, alpha, beta, 0.1);
  std::vector<float> ref = sgg::class_weights(freq, alpha, beta);
  REQUIRE(w.size() == ref.size() + 1);
  for (size_t i = 0; i < ref.size(); ++i) {
    double expect = std::max(std::pow(alpha / freq.fractions[i], beta), 1.0);
    CHECK(w[i] == doctest::Approx(expect).epsilon(1e-6));
    CHECK(w[i] == ref[i]);
  }
  CHECK(w.back() == doctest::Approx(0.1));
}

TEST_CASE("dataset generation is reproducible and location independent") {
  const sgg::GenDataResult& a = tiny_data();
  sgg::GenDataResult b = sgg::gen_data_run(tiny_run(), (scratch() / "data-b").string());

  CHECK(a.manifest_hash == b.manifest_hash);
  CHECK(fs::exists(a.manifest_path));

  Manifest m = sgg::load_manifest(a.manifest_path);
  CHECK(m.split("train").scenes == 24);
  CHECK(m.split("val").scenes == 8);
  CHECK(m.split("test").scenes == 8);
  // Hash-checked loads succeed from both locations.
  CHECK(sgg::load_split(m, "train").size() == 24);
  Manifest mb = sgg::load_manifest(b.manifest_path);
  CHECK(sgg::load_split(mb, "test").size() == 8);
}

TEST_CASE("per layer loss path composes single layer solutions") {
  RunConfig cfg = tiny_run();
  Manifest m = sgg::load_manifest(tiny_data().manifest_path);
  std::vector<Scene> train = sgg::load_split(m, "train");
  Scene scene;
  for (const Scene& s : train)
    if (!s.graph.triplets.empty()) {
      scene = s;
      break;
    }
  REQUIRE(!scene.graph.triplets.empty());

  Model model = Model::make(cfg, m.cfg);
  LossParams lp;
  lp.predicate_weights = sgg::class_weights(m.frequency, cfg.alpha, cfg.beta);

  Tape t1;
  sgg::LossBreakdown split_lb = sgg::decoder_scene_loss(t1, model, scene, lp, false);
  REQUIRE(split_lb.per_layer.size() == 2);

  // Same computation spelled out by hand: independent assignments, one
  // single-layer loss per step, totals added.
  Tape t2;
  Var z = model.encoder(t2, scene.grid);
  sgg::ForwardResult fwd = model.decoder.forward(t2, z);
  sgg::PredictionSet preds = model.decoder.materialize(t2, fwd);
  auto targets = sgg::pad_targets(scene.graph, cfg.decoder.n_queries);
  auto sigmas = sgg::per_layer_match(targets, preds, lp.lambda_l1, lp.lambda_giou);
  double want = 0;
  for (size_t i = 0; i < fwd.layers.size(); ++i) {
    sgg::ForwardResult one;
    one.layers.push_back(fwd.layers[i]);
    want += sgg::layer_losses(t2, one, targets, sigmas[i], lp).total;
  }
  CHECK(split_lb.total == doctest::Approx(want).epsilon(1e-12));

  Tape t3;
  sgg::LossBreakdown joint_lb = sgg::decoder_scene_loss(t3, model, scene, lp, true);
  REQUIRE(joint_lb.per_layer.size() == 2);
  CHECK(std::isfinite(joint_lb.total));

  // Gradients flow through the stitched scalar.
  model.ps.zero_grad();
  t1.backward(split_lb.total_var);
  bool any = false;
  for (const sgg::nn::Parameter* p : model.ps.all())
    for (float g : p->grad.data) any |= g != 0.f;
  CHECK(any);
}

TEST_CASE("training writes logs and checkpoints and reduces the loss") {
  const sgg::TrainResult& r = trained_run();
  CHECK(fs::exists(r.log_path));
  CHECK(fs::exists(r.best_checkpoint));
  CHECK(fs::exists(r.best_checkpoint + ".bin"));
  CHECK(fs::exists(r.final_checkpoint));
  CHECK(r.best_epoch >= 0);

  std::vector<json> lines = read_log(r.log_path);
  REQUIRE(lines.size() == 5);  // run + 3 epochs + done
  CHECK(lines.front().at("type") == "run");
  CHECK(lines.front().at("manifest_hash") == tiny_data().manifest_hash);
  CHECK(lines.front().at("config") == tiny_run().to_json());
  // alpha = 0: every predicate weight logs as one.
  for (double w : lines.front().at("predicate_weights").get<std::vector<double>>())
    CHECK(w == 1.0);

  double first = 0, last = 0;
  for (size_t i = 1; i + 1 < lines.size(); ++i) {
    const json& e = lines[i];
    CHECK(e.at("type") == "epoch");
    CHECK(e.at("epoch") == static_cast<int>(i - 1));
    double total = e.at("loss").at("total").get<double>();
    CHECK(std::isfinite(total));
    if (i == 1) first = total;
    last = total;
    // Per-layer validation metrics at the largest configured k.
    const json& val = e.at("val");
    REQUIRE(val.size() == 2);
    CHECK(val[0].at("layer") == 1);
    CHECK(val[1].at("layer") == 2);
    for (const json& v : val) {
      CHECK(v.at("k") == 20);
      CHECK(v.at("harmonic").is_number());
    }
  }
  CHECK(lines.back().at("type") == "done");
  CHECK(lines.back().at("best_epoch") == r.best_epoch);
  CHECK(last < first);

  // The checkpoint echoes the full run document.
  json echo = sgg::nn::peek_checkpoint_config(r.best_checkpoint);
  CHECK(echo.at("run") == tiny_run().to_json());
  CHECK(echo.at("manifest_hash") == tiny_data().manifest_hash);
  CHECK(echo.at("epoch") == r.best_epoch);
}

TEST_CASE("identical runs produce identical logs checkpoints and reports") {
  RunConfig cfg = tiny_run();
  cfg.epochs = 2;
  sgg::TrainResult a = sgg::train_run(cfg, tiny_data().manifest_path,
                                      (scratch() / "det-a").string());
  sgg::TrainResult b = sgg::train_run(cfg, tiny_data().manifest_path,
                                      (scratch() / "det-b").string());

  CHECK(sgg::read_file(a.log_path) == sgg::read_file(b.log_path));
  CHECK(sgg::read_file(a.final_checkpoint + ".bin") ==
        sgg::read_file(b.final_checkpoint + ".bin"));
  CHECK(sgg::read_file(a.best_checkpoint + ".bin") == sgg::read_file(b.best_checkpoint + ".bin"));
  CHECK(a.final_loss == b.final_loss);

  auto ra = sgg::eval_run(a.best_checkpoint, tiny_data().manifest_path, {}, -1, {}, "test", 2);
  auto rb = sgg::eval_run(b.best_checkpoint, tiny_data().manifest_path, {}, -1, {}, "test", 2);
  REQUIRE(ra.size() == rb.size());
  for (size_t i = 0; i < ra.size(); ++i)
    CHECK(sgg::report_json(ra[i].report) == sgg::report_json(rb[i].report));
}

TEST_CASE("zero epochs writes only the initialization checkpoint") {
  RunConfig cfg = tiny_run();
  cfg.epochs = 0;
  sgg::TrainResult r =
      sgg::train_run(cfg, tiny_data().manifest_path, (scratch() / "run-zero").string());

  std::vector<json> lines = read_log(r.log_path);
  REQUIRE(lines.size() == 2);  // run + done, no epoch records
  CHECK(lines[0].at("type") == "run");
  CHECK(lines[1].at("type") == "done");
  CHECK(r.best_epoch == -1);

  // Both checkpoints hold the same untouched initialization.
  CHECK(sgg::read_file(r.best_checkpoint + ".bin") == sgg::read_file(r.final_checkpoint + ".bin"));
  json echo = sgg::nn::peek_checkpoint_config(r.final_checkpoint);
  CHECK(echo.at("val_harmonic").is_null());
  auto reports = sgg::eval_run(r.final_checkpoint, tiny_data().manifest_path, {1}, 1, {5}, "val", 1);
  CHECK(reports.size() == 1);
}

TEST_CASE("diverged training aborts with scene diagnostics") {
  RunConfig cfg = tiny_run();
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr.initial = 1e20f;  // first optimizer step destroys the weights
  std::string msg;
  try {
    sgg::train_run(cfg, tiny_data().manifest_path, (scratch() / "run-nan").string());
  } catch (const std::runtime_error& e) {
    msg = e.what();
  }
  CHECK(msg.find("training aborted at epoch") != std::string::npos);
  CHECK(msg.find("scene") != std::string::npos);
}

TEST_CASE("evaluation selects layers and honors overrides") {
  const sgg::TrainResult& r = trained_run();
  const std::string& data = tiny_data().manifest_path;

  auto all = sgg::eval_run(r.best_checkpoint, data, {}, -1, {}, "test", 2);
  REQUIRE(all.size() == 2);
  CHECK(all[0].layer == 1);
  CHECK(all[1].layer == 2);
  for (const LayerEval& le : all) {
    CHECK(le.report.scenes == 8);
    REQUIRE(le.report.at.size() == 2);  // configured ks {5, 20}
    CHECK(le.report.at[0].k == 5);
  }

  auto one = sgg::eval_run(r.best_checkpoint, data, {2}, -1, {7}, "val", 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].layer == 2);
  REQUIRE(one[0].report.at.size() == 1);
  CHECK(one[0].report.at[0].k == 7);

  CHECK_THROWS_AS(sgg::eval_run(r.best_checkpoint, data, {0}, -1, {}, "test", 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(sgg::eval_run(r.best_checkpoint, data, {3}, -1, {}, "test", 1),
                  std::invalid_argument);
  CHECK_THROWS(sgg::eval_run(r.best_checkpoint, data, {}, -1, {}, "holdout", 1));
}

TEST_CASE("evaluation is independent of the worker count") {
  const sgg::TrainResult& r = trained_run();
  const std::string& data = tiny_data().manifest_path;
  auto serial = sgg::eval_run(r.best_checkpoint, data, {}, -1, {}, "test", 1);
  auto pooled = sgg::eval_run(r.best_checkpoint, data, {}, -1, {}, "test", 4);
  REQUIRE(serial.size() == pooled.size());
  for (size_t i = 0; i < serial.size(); ++i)
    CHECK(sgg::report_json(serial[i].report) == sgg::report_json(pooled[i].report));
}

TEST_CASE("full predicate expansion never lowers recall once k covers it") {
  const sgg::TrainResult& r = trained_run();
  const std::string& data = tiny_data().manifest_path;
  // 16 slots * 3 predicates = 48 candidates <= k, so the expanded list is a
  // content superset and the greedy matcher consumes both lists completely.
  auto m1 = sgg::eval_run(r.best_checkpoint, data, {2}, 1, {50}, "test", 2);
  auto m3 = sgg::eval_run(r.best_checkpoint, data, {2}, 3, {50}, "test", 2);
  CHECK(m3[0].report.at[0].recall >= m1[0].report.at[0].recall - 1e-12);
}

TEST_CASE("motif family trains deterministically and evaluates per step") {
  RunConfig cfg = tiny_run();
  cfg.model = ModelFamily::kMotifAug;
  cfg.epochs = 2;
  sgg::TrainResult a =
      sgg::train_run(cfg, tiny_data().manifest_path, (scratch() / "motif-a").string());
  sgg::TrainResult b =
      sgg::train_run(cfg, tiny_data().manifest_path, (scratch() / "motif-b").string());

  CHECK(sgg::read_file(a.log_path) == sgg::read_file(b.log_path));
  std::vector<json> lines = read_log(a.log_path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[1].at("loss").contains("total"));
  CHECK_FALSE(lines[1].at("loss").contains("cls"));  // pair model logs one term

  auto reports = sgg::eval_run(a.best_checkpoint, tiny_data().manifest_path, {}, -1, {}, "val", 2);
  REQUIRE(reports.size() == 2);
  for (const LayerEval& le : reports) CHECK(le.report.scenes == 8);

  // The checkpoint remembers its family.
  json echo = sgg::nn::peek_checkpoint_config(a.best_checkpoint);
  CHECK(echo.at("run").at("model") == "motif-aug");
}

TEST_CASE("export writes one dot and one json per scene and layer") {
  const sgg::TrainResult& r = trained_run();
  const std::string& data = tiny_data().manifest_path;
  fs::path dir = scratch() / "exports";

  std::vector<std::string> files = sgg::export_run(
      r.best_checkpoint, data, {"test-000000", "val-000001"}, {1, 2}, dir.string());
  REQUIRE(files.size() == 8);  // 2 scenes x 2 layers x 2 renderings

  std::set<std::string> names;
  for (const std::string& f : files) {
    CHECK(fs::exists(f));
    names.insert(fs::path(f).filename().string());
  }
  CHECK(names.count("test-000000_t1.dot") == 1);
  CHECK(names.count("val-000001_t2.json") == 1);

  std::string dot = sgg::read_file((dir / "test-000000_t1.dot").string());
  CHECK(dot.rfind("digraph", 0) == 0);

  json gj = json::parse(sgg::read_file((dir / "val-000001_t2.json").string()));
  CHECK(gj.contains("nodes"));
  CHECK(gj.contains("edges"));
  CHECK(gj.at("scene_id") == "val-000001");
  CHECK(gj.at("layer") == 2);

  CHECK_THROWS_WITH_AS(
      sgg::export_run(r.best_checkpoint, data, {"test-999999"}, {1}, dir.string()),
      "unknown scene id: test-999999", std::runtime_error);
  CHECK_THROWS_AS(sgg::export_run(r.best_checkpoint, data, {"test-000000"}, {9}, dir.string()),
                  std::invalid_argument);
}

TEST_CASE("training rejects a query count below the dataset maximum") {
  Manifest m = sgg::load_manifest(tiny_data().manifest_path);
  int max_triplets = 0;
  for (const sgg::SplitInfo& s : m.splits) max_triplets = std::max(max_triplets, s.max_triplets);
  REQUIRE(max_triplets > 2);

  RunConfig cfg = tiny_run();
  cfg.decoder.n_queries = 2;
  CHECK_THROWS_AS(
      sgg::train_run(cfg, tiny_data().manifest_path, (scratch() / "run-tiny-n").string()),
      std::invalid_argument);
}
