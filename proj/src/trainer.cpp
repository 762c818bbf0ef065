#include "sgg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "sgg/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sgg {

std::string to_string(ModelFamily f) {
  return f == ModelFamily::kTripleDecoder ? "triple-decoder" : "motif-aug";
}

ModelFamily model_family_from_string(const std::string& s) {
  if (s == "triple-decoder") return ModelFamily::kTripleDecoder;
  if (s == "motif-aug") return ModelFamily::kMotifAug;
  throw std::invalid_argument("unknown model family: " + s);
}

namespace {

// Fixed substream ids of the run seed. Scene placement uses the world seed's
// streams and detector synthesis hashes scene ids, so these cannot collide
// with anything data-side.
constexpr uint64_t kInitStream = 0;
constexpr uint64_t kShuffleStream = 1u << 20;

const json& group(const json& j, const char* key, const json& fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : *it;
}

template <typename T>
T field(const json& j, const char* key, T def) {
  auto it = j.find(key);
  return it == j.end() ? def : it->get<T>();
}

int resolve_workers(int workers) {
  if (workers > 0) return workers;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Index-sharded worker pool. fn(i) must touch only slot i of any shared
// output, which keeps the result independent of the thread count. The first
// exception wins; remaining workers drain quickly via the failed flag.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n && !failed.load();) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  encoder.validate();
  decoder.validate();
  motif.validate();
  assembly.validate();
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw std::invalid_argument("RunConfig: every split needs at least one scene");
  if (model == ModelFamily::kTripleDecoder && encoder.d_model != decoder.d_model)
    throw std::invalid_argument("RunConfig: encoder and decoder widths differ");
  if (alpha < 0) throw std::invalid_argument("RunConfig: alpha must be >= 0");
  if (alpha > 0 && beta <= 0)
    throw std::invalid_argument("RunConfig: beta must be > 0 when alpha > 0");
  if (lambda_l1 < 0 || lambda_giou < 0)
    throw std::invalid_argument("RunConfig: box loss weights must be >= 0");
  if (eos_coef <= 0) throw std::invalid_argument("RunConfig: eos_coef must be > 0");
  if (epochs < 0) throw std::invalid_argument("RunConfig: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("RunConfig: batch_size must be >= 1");
  if (!(lr.initial > 0)) throw std::invalid_argument("RunConfig: initial lr must be > 0");
  if (!(lr.decay_factor > 0)) throw std::invalid_argument("RunConfig: decay factor must be > 0");
  if (ks.empty()) throw std::invalid_argument("RunConfig: at least one evaluation k");
  for (int k : ks)
    if (k < 1) throw std::invalid_argument("RunConfig: evaluation k must be >= 1");
  if (top_m < 1) throw std::invalid_argument("RunConfig: top_m must be >= 1");
  if (workers < 0) throw std::invalid_argument("RunConfig: workers must be >= 0");
}

json RunConfig::to_json() const {
  json j;
  j["model"] = sgg::to_string(model);
  j["world"] = world.to_json();
  j["data"] = {{"n_train", n_train}, {"n_val", n_val}, {"n_test", n_test}};
  j["encoder"] = {{"d_model", encoder.d_model},
                  {"n_layers", encoder.n_layers},
                  {"n_heads", encoder.n_heads}};
  j["decoder"] = {{"n_queries", decoder.n_queries}, {"n_layers", decoder.n_layers},
                  {"d_model", decoder.d_model},     {"n_heads", decoder.n_heads},
                  {"enable_cws", decoder.enable_cws}, {"enable_cas", decoder.enable_cas}};
  j["motif"] = {{"n_steps", motif.n_steps},     {"d_feat", motif.d_feat},
                {"d_context", motif.d_context}, {"d_label", motif.d_label},
                {"n_heads", motif.n_heads},     {"label_noise", motif.label_noise},
                {"box_jitter", motif.box_jitter}, {"feature_noise", motif.feature_noise}};
  j["loss"] = {{"alpha", alpha},         {"beta", beta},
               {"joint", joint_loss},    {"lambda_l1", lambda_l1},
               {"lambda_giou", lambda_giou}, {"eos_coef", eos_coef}};
  j["train"] = {{"epochs", epochs},
                {"batch_size", batch_size},
                {"seed", seed},
                {"lr",
                 {{"initial", lr.initial},
                  {"decay_factor", lr.decay_factor},
                  {"decay_every", lr.decay_every}}}};
  j["eval"] = {{"k", ks}, {"top_m", top_m}, {"workers", workers}};
  j["assembly"] = {{"nms_iou", assembly.nms_iou},
                   {"score_floor", assembly.score_floor},
                   {"top_m", assembly.top_m}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  const json empty = json::object();
  c.model = model_family_from_string(field<std::string>(j, "model", sgg::to_string(c.model)));
  if (j.contains("world")) c.world = WorldConfig::from_json(j.at("world"));

  const json& d = group(j, "data", empty);
  c.n_train = field<int64_t>(d, "n_train", c.n_train);
  c.n_val = field<int64_t>(d, "n_val", c.n_val);
  c.n_test = field<int64_t>(d, "n_test", c.n_test);

  const json& e = group(j, "encoder", empty);
  c.encoder.d_model = field(e, "d_model", c.encoder.d_model);
  c.encoder.n_layers = field(e, "n_layers", c.encoder.n_layers);
  c.encoder.n_heads = field(e, "n_heads", c.encoder.n_heads);

  const json& dec = group(j, "decoder", empty);
  c.decoder.n_queries = field(dec, "n_queries", c.decoder.n_queries);
  c.decoder.n_layers = field(dec, "n_layers", c.decoder.n_layers);
  c.decoder.d_model = field(dec, "d_model", c.decoder.d_model);
  c.decoder.n_heads = field(dec, "n_heads", c.decoder.n_heads);
  c.decoder.enable_cws = field(dec, "enable_cws", c.decoder.enable_cws);
  c.decoder.enable_cas = field(dec, "enable_cas", c.decoder.enable_cas);

  const json& mo = group(j, "motif", empty);
  c.motif.n_steps = field(mo, "n_steps", c.motif.n_steps);
  c.motif.d_feat = field(mo, "d_feat", c.motif.d_feat);
  c.motif.d_context = field(mo, "d_context", c.motif.d_context);
  c.motif.d_label = field(mo, "d_label", c.motif.d_label);
  c.motif.n_heads = field(mo, "n_heads", c.motif.n_heads);
  c.motif.label_noise = field(mo, "label_noise", c.motif.label_noise);
  c.motif.box_jitter = field(mo, "box_jitter", c.motif.box_jitter);
  c.motif.feature_noise = field(mo, "feature_noise", c.motif.feature_noise);

  const json& lo = group(j, "loss", empty);
  c.alpha = field(lo, "alpha", c.alpha);
  c.beta = field(lo, "beta", c.beta);
  c.joint_loss = field(lo, "joint", c.joint_loss);
  c.lambda_l1 = field(lo, "lambda_l1", c.lambda_l1);
  c.lambda_giou = field(lo, "lambda_giou", c.lambda_giou);
  c.eos_coef = field(lo, "eos_coef", c.eos_coef);

  const json& tr = group(j, "train", empty);
  c.epochs = field(tr, "epochs", c.epochs);
  c.batch_size = field(tr, "batch_size", c.batch_size);
  c.seed = field(tr, "seed", c.seed);
  const json& lr = group(tr, "lr", empty);
  c.lr.initial = field(lr, "initial", c.lr.initial);
  c.lr.decay_factor = field(lr, "decay_factor", c.lr.decay_factor);
  c.lr.decay_every = field(lr, "decay_every", c.lr.decay_every);

  const json& ev = group(j, "eval", empty);
  c.ks = field(ev, "k", c.ks);
  c.top_m = field(ev, "top_m", c.top_m);
  c.workers = field(ev, "workers", c.workers);

  const json& as = group(j, "assembly", empty);
  c.assembly.nms_iou = field(as, "nms_iou", c.assembly.nms_iou);
  c.assembly.score_floor = field(as, "score_floor", c.assembly.score_floor);
  c.assembly.top_m = field(as, "top_m", c.assembly.top_m);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j = json::parse(read_file(path));
  RunConfig c = from_json(j);
  c.validate();
  return c;
}

std::optional<uint64_t> env_seed_override() {
  const char* raw = std::getenv("SGG_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  std::string s(raw);
  size_t used = 0;
  uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("SGG_SEED is not an unsigned integer: " + s);
  }
  if (used != s.size())
    throw std::invalid_argument("SGG_SEED is not an unsigned integer: " + s);
  return v;
}

std::vector<float> motif_predicate_weights(const FrequencyTable& freq, double alpha, double beta,
                                           double eos_coef) {
  std::vector<float> w = class_weights(freq, alpha, beta);
  if (eos_coef <= 0) throw std::invalid_argument("eos_coef must be > 0");
  w.push_back(static_cast<float>(eos_coef));
  return w;
}

Model Model::make(const RunConfig& cfg, const WorldConfig& world) {
  cfg.validate();
  world.validate();
  Model m;
  m.cfg = cfg;
  m.eta = world.eta;
  m.upsilon = world.upsilon;
  Rng rng(derive_seed(cfg.seed, kInitStream));
  if (cfg.model == ModelFamily::kTripleDecoder) {
    m.encoder = Encoder::make(m.ps, "enc", world.grid_channels(), cfg.encoder, rng);
    m.decoder = TripleDecoder::make(m.ps, "dec", cfg.decoder, world.eta, world.upsilon, rng);
  } else {
    m.motif = MotifModel::make(m.ps, "motif", cfg.motif, world.eta, world.upsilon, rng);
  }
  return m;
}

LossBreakdown decoder_scene_loss(Tape& t, const Model& model, const Scene& scene,
                                 const LossParams& params, bool joint) {
  Var z = model.encoder(t, scene.grid);
  ForwardResult fwd = model.decoder.forward(t, z);
  PredictionSet preds = model.decoder.materialize(t, fwd);
  std::vector<TargetTriplet> targets = pad_targets(scene.graph, model.cfg.decoder.n_queries);
  if (joint) {
    std::vector<int> sigma = joint_match(targets, preds, params.lambda_l1, params.lambda_giou);
    return layer_losses(t, fwd, targets, sigma, params);
  }
  std::vector<std::vector<int>> sigmas =
      per_layer_match(targets, preds, params.lambda_l1, params.lambda_giou);
  LossBreakdown out;
  Var total{};
  for (size_t i = 0; i < fwd.layers.size(); ++i) {
    ForwardResult one;
    one.layers.push_back(fwd.layers[i]);
    LossBreakdown lb = layer_losses(t, one, targets, sigmas[i], params);
    out.per_layer.push_back(lb.per_layer.front());
    out.total += lb.total;
    total = i == 0 ? lb.total_var : t.add(total, lb.total_var);
  }
  out.total_var = total;
  return out;
}

std::vector<std::optional<DetectorOutput>> synthesize_detectors(const std::vector<Scene>& scenes,
                                                                const Manifest& m,
                                                                const MotifConfig& mc) {
  std::vector<std::optional<DetectorOutput>> out(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    if (!s.graph.entities.has_value() || s.graph.entities->size() < 2) continue;
    Rng rng(derive_seed(m.cfg.seed, fnv1a64(s.scene_id)));
    out[i] = synthesize_detector(s.graph, m.cfg.eta, m.cfg.upsilon, mc, rng);
  }
  return out;
}

namespace {

// One forward pass; ranked candidates for every refinement step.
std::vector<std::vector<ScoredTriplet>> layer_candidates(const Model& model, const Scene& scene,
                                                         const std::optional<DetectorOutput>& det,
                                                         int top_m) {
  std::vector<std::vector<ScoredTriplet>> out(model.n_layers());
  Tape t;
  PredictionSet preds;
  if (model.is_motif()) {
    if (!det.has_value()) return out;  // unscorable scene; no candidates
    MotifModel::Forward fwd = model.motif.forward(t, *det, /*teacher_forcing=*/false);
    preds = model.motif.materialize(t, fwd, *det);
  } else {
    Var z = model.encoder(t, scene.grid);
    ForwardResult fwd = model.decoder.forward(t, z);
    preds = model.decoder.materialize(t, fwd);
  }
  for (size_t l = 0; l < preds.per_layer.size(); ++l)
    out[l] = scored_triplets(preds.per_layer[l], top_m);
  return out;
}

std::vector<int> unique_layers(const std::vector<int>& layers, int n_layers) {
  std::vector<int> out;
  if (layers.empty()) {
    out.resize(n_layers);
    std::iota(out.begin(), out.end(), 1);
    return out;
  }
  for (int l : layers) {
    if (l < 1 || l > n_layers)
      throw std::invalid_argument("layer " + std::to_string(l) + " out of range [1, " +
                                  std::to_string(n_layers) + "]");
    if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
  }
  return out;
}

const RecallReport::AtK& at_k(const RecallReport& r, int k) {
  for (const RecallReport::AtK& a : r.at)
    if (a.k == k) return a;
  throw std::logic_error("report lacks k = " + std::to_string(k));
}

}  // namespace

std::vector<LayerEval> evaluate_layers(const Model& model, const std::vector<Scene>& scenes,
                                       const std::vector<std::optional<DetectorOutput>>& dets,
                                       const std::vector<int>& layers, int top_m,
                                       const std::vector<int>& ks,
                                       const TripletRegistry* registry,
                                       const HBTPartition* partition, int workers) {
  if (model.is_motif() && dets.size() != scenes.size())
    throw std::invalid_argument("detector cache does not parallel the scenes");
  std::vector<int> want = unique_layers(layers, model.n_layers());
  static const std::optional<DetectorOutput> kNoDet;

  std::vector<std::vector<std::vector<ScoredTriplet>>> cands(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), resolve_workers(workers), [&](int i) {
    const std::optional<DetectorOutput>& det = model.is_motif() ? dets[i] : kNoDet;
    cands[i] = layer_candidates(model, scenes[i], det, top_m);
  });

  std::vector<LayerEval> out;
  out.reserve(want.size());
  for (int l : want) {
    std::vector<SceneResult> rs(scenes.size());
    for (size_t i = 0; i < scenes.size(); ++i)
      rs[i] = SceneResult{scenes[i].graph, std::move(cands[i][l - 1])};
    out.push_back({l, evaluate_recalls(std::move(rs), ks, model.upsilon, registry, partition)});
  }
  return out;
}

GenDataResult gen_data_run(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  GenDataResult r;
  r.manifest = build_dataset(cfg.world, cfg.n_train, cfg.n_val, cfg.n_test, out_dir);
  r.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  r.manifest_hash = hash_hex(fnv1a64_file(r.manifest_path));
  return r;
}

namespace {

// Capacity checks that depend on the dataset rather than the config alone.
void check_fits(const RunConfig& cfg, const Manifest& m) {
  if (cfg.model == ModelFamily::kTripleDecoder) {
    for (const SplitInfo& s : m.splits)
      if (s.max_triplets > cfg.decoder.n_queries)
        throw std::invalid_argument("split '" + s.name + "' has scenes with " +
                                    std::to_string(s.max_triplets) + " triplets but only " +
                                    std::to_string(cfg.decoder.n_queries) +
                                    " query slots are configured");
  } else {
    if (m.cfg.max_entities > kMaxDetectorEntities)
      throw std::invalid_argument("world allows " + std::to_string(m.cfg.max_entities) +
                                  " entities but the detector caps at " +
                                  std::to_string(kMaxDetectorEntities));
  }
}

json val_summary(const std::vector<LayerEval>& evals, int k) {
  json arr = json::array();
  for (const LayerEval& le : evals) {
    const RecallReport::AtK& a = at_k(le.report, k);
    arr.push_back({{"layer", le.layer},
                   {"k", k},
                   {"recall", a.recall},
                   {"mean_recall", a.mean.value},
                   {"harmonic", a.harmonic}});
  }
  return arr;
}

}  // namespace

TrainResult train_run(const RunConfig& cfg, const std::string& manifest_path,
                      const std::string& out_dir) {
  cfg.validate();
  Manifest m = load_manifest(manifest_path);
  check_fits(cfg, m);

  std::vector<Scene> train = load_split(m, "train");
  std::vector<Scene> val = load_split(m, "val");

  Model model = Model::make(cfg, m.cfg);
  std::vector<nn::Parameter*> params = model.ps.all();

  std::vector<float> pred_weights = class_weights(m.frequency, cfg.alpha, cfg.beta);
  LossParams lp;
  lp.lambda_l1 = cfg.lambda_l1;
  lp.lambda_giou = cfg.lambda_giou;
  lp.eos_coef = cfg.eos_coef;
  lp.predicate_weights = pred_weights;
  std::vector<float> motif_weights =
      motif_predicate_weights(m.frequency, cfg.alpha, cfg.beta, cfg.eos_coef);

  std::vector<std::optional<DetectorOutput>> train_dets, val_dets;
  if (model.is_motif()) {
    train_dets = synthesize_detectors(train, m, cfg.motif);
    val_dets = synthesize_detectors(val, m, cfg.motif);
  }

  fs::create_directories(out_dir);
  std::string manifest_hash = hash_hex(fnv1a64_file(manifest_path));
  json echo = cfg.to_json();

  TrainResult res;
  res.log_path = (fs::path(out_dir) / "log.jsonl").string();
  res.best_checkpoint = (fs::path(out_dir) / "best.ckpt.json").string();
  res.final_checkpoint = (fs::path(out_dir) / "final.ckpt.json").string();

  std::ofstream log(res.log_path, std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + res.log_path);

  json run_line = {{"type", "run"},
                   {"model", sgg::to_string(cfg.model)},
                   {"config", echo},
                   {"manifest_hash", manifest_hash},
                   {"parameters", model.ps.total_floats()},
                   {"predicate_weights", pred_weights},
                   {"train_scenes", train.size()},
                   {"val_scenes", val.size()}};
  log << run_line.dump() << "\n" << std::flush;

  auto save = [&](const std::string& path, int epoch, std::optional<double> val_hr) {
    json e;
    e["run"] = echo;
    e["world"] = m.cfg.to_json();
    e["manifest_hash"] = manifest_hash;
    e["epoch"] = epoch;
    e["val_harmonic"] = val_hr.has_value() ? json(*val_hr) : json(nullptr);
    nn::save_checkpoint(path, params, e);
  };

  int max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());

  if (cfg.epochs == 0) {
    save(res.best_checkpoint, -1, std::nullopt);
    save(res.final_checkpoint, -1, std::nullopt);
    json done = {{"type", "done"}, {"epochs", 0}, {"best_epoch", -1}};
    log << done.dump() << "\n" << std::flush;
    return res;
  }

  nn::Adam adam(cfg.lr.initial);
  double best_hr = -1.0;
  std::optional<double> last_hr;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    float lr = cfg.lr.at_epoch(epoch);
    adam.set_lr(lr);

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double sum_loss = 0, sum_cls = 0, sum_l1 = 0, sum_giou = 0;
    int counted = 0, skipped = 0;

    for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
      size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.batch_size));
      int usable = 0;
      for (size_t k = b0; k < b1; ++k)
        usable += !model.is_motif() || train_dets[order[k]].has_value();
      if (usable == 0) {
        skipped += static_cast<int>(b1 - b0);
        continue;
      }
      float inv_batch = 1.f / static_cast<float>(usable);

      model.ps.zero_grad();
      for (size_t k = b0; k < b1; ++k) {
        const Scene& scene = train[order[k]];
        if (model.is_motif() && !train_dets[order[k]].has_value()) {
          ++skipped;
          continue;
        }
        try {
          Tape t;
          Var loss;
          double total = 0;
          if (model.is_motif()) {
            const DetectorOutput& det = *train_dets[order[k]];
            MotifModel::Forward fwd = model.motif.forward(t, det, /*teacher_forcing=*/true);
            loss = motif_loss(t, fwd, det, &motif_weights);
            total = t.val(loss).data[0];
          } else {
            LossBreakdown lb = decoder_scene_loss(t, model, scene, lp, cfg.joint_loss);
            loss = lb.total_var;
            total = lb.total;
            for (const auto& layer : lb.per_layer)
              for (const LossTerms& lt : layer) {
                sum_cls += lt.cls;
                sum_l1 += lt.l1;
                sum_giou += lt.giou;
              }
          }
          if (!std::isfinite(total)) throw std::runtime_error("loss is not finite");
          sum_loss += total;
          ++counted;
          t.backward(t.scale(loss, inv_batch));
        } catch (const std::exception& e) {
          throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                   ", scene '" + scene.scene_id + "': " + e.what());
        }
      }
      adam.step(params);
    }

    std::vector<LayerEval> evals = evaluate_layers(model, val, val_dets, {}, cfg.top_m, cfg.ks,
                                                   &m.registry, &m.hbt, cfg.workers);
    double hr = at_k(evals.back().report, max_k).harmonic;
    last_hr = hr;
    bool is_best = hr > best_hr;
    if (is_best) {
      best_hr = hr;
      res.best_epoch = epoch;
      res.best_metric = hr;
      save(res.best_checkpoint, epoch, hr);
    }

    double denom = std::max(counted, 1);
    json loss_obj;
    if (model.is_motif()) {
      loss_obj = {{"total", sum_loss / denom}};
    } else {
      loss_obj = {{"total", sum_loss / denom},
                  {"cls", sum_cls / denom},
                  {"l1", sum_l1 / denom},
                  {"giou", sum_giou / denom}};
    }
    res.final_loss = sum_loss / denom;

    json line = {{"type", "epoch"},   {"epoch", epoch},
                 {"lr", lr},          {"loss", loss_obj},
                 {"scenes", counted}, {"skipped", skipped},
                 {"val", val_summary(evals, max_k)}, {"best", is_best}};
    log << line.dump() << "\n" << std::flush;
  }

  save(res.final_checkpoint, cfg.epochs - 1, last_hr);
  json done = {{"type", "done"},
               {"epochs", cfg.epochs},
               {"best_epoch", res.best_epoch},
               {"best_val_harmonic", res.best_metric},
               {"final_loss", res.final_loss}};
  log << done.dump() << "\n" << std::flush;
  return res;
}

LoadedModel load_model(const std::string& ckpt_path) {
  json echo = nn::peek_checkpoint_config(ckpt_path);
  RunConfig cfg = RunConfig::from_json(echo.at("run"));
  WorldConfig world = WorldConfig::from_json(echo.at("world"));
  LoadedModel out;
  out.model = Model::make(cfg, world);
  std::vector<nn::Parameter*> params = out.model.ps.all();
  nn::load_checkpoint(ckpt_path, params);
  out.echo = std::move(echo);
  return out;
}

std::vector<LayerEval> eval_run(const std::string& ckpt_path, const std::string& manifest_path,
                                const std::vector<int>& layers, int top_m,
                                const std::vector<int>& ks, const std::string& split,
                                int workers) {
  LoadedModel lm = load_model(ckpt_path);
  Manifest m = load_manifest(manifest_path);
  std::vector<Scene> scenes = load_split(m, split);

  int tm = top_m >= 1 ? top_m : lm.model.cfg.top_m;
  const std::vector<int>& kk = ks.empty() ? lm.model.cfg.ks : ks;
  int w = workers > 0 ? workers : lm.model.cfg.workers;

  std::vector<std::optional<DetectorOutput>> dets;
  if (lm.model.is_motif()) dets = synthesize_detectors(scenes, m, lm.model.cfg.motif);
  return evaluate_layers(lm.model, scenes, dets, layers, tm, kk, &m.registry, &m.hbt, w);
}

std::vector<std::string> export_run(const std::string& ckpt_path,
                                    const std::string& manifest_path,
                                    const std::vector<std::string>& scene_ids,
                                    const std::vector<int>& layers, const std::string& out_dir) {
  if (scene_ids.empty()) throw std::invalid_argument("no scene ids given");
  LoadedModel lm = load_model(ckpt_path);
  const Model& model = lm.model;
  Manifest m = load_manifest(manifest_path);
  std::vector<int> want = unique_layers(layers, model.n_layers());

  // Scene ids carry their split as a prefix, but resolution just scans every
  // split lazily so renamed splits keep working.
  std::map<std::string, std::vector<Scene>> loaded;
  auto find_scene = [&](const std::string& id) -> const Scene& {
    for (const SplitInfo& s : m.splits) {
      auto it = loaded.find(s.name);
      if (it == loaded.end()) it = loaded.emplace(s.name, load_split(m, s.name)).first;
      for (const Scene& sc : it->second)
        if (sc.scene_id == id) return sc;
    }
    throw std::runtime_error("unknown scene id: " + id);
  };

  std::vector<std::string> entity_names;  // default e<i> labels
  std::vector<std::string> predicate_names;
  if (model.upsilon <= 8)
    for (int p = 0; p < model.upsilon; ++p) predicate_names.push_back(predicates::name(p));

  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (const std::string& id : scene_ids) {
    const Scene& scene = find_scene(id);
    std::optional<DetectorOutput> det;
    if (model.is_motif()) {
      if (!scene.graph.entities.has_value() || scene.graph.entities->size() < 2)
        throw std::runtime_error("scene '" + id + "' has fewer than two entities");
      Rng rng(derive_seed(m.cfg.seed, fnv1a64(id)));
      det = synthesize_detector(scene.graph, m.cfg.eta, m.cfg.upsilon, model.cfg.motif, rng);
    }

    Tape t;
    PredictionSet preds;
    if (model.is_motif()) {
      MotifModel::Forward fwd = model.motif.forward(t, *det, /*teacher_forcing=*/false);
      preds = model.motif.materialize(t, fwd, *det);
    } else {
      Var z = model.encoder(t, scene.grid);
      ForwardResult fwd = model.decoder.forward(t, z);
      preds = model.decoder.materialize(t, fwd);
    }

    for (int l : want) {
      AssembledGraph g = assemble(preds.per_layer[l - 1], model.cfg.assembly);
      std::string stem = id + "_t" + std::to_string(l);
      std::string dot_path = (fs::path(out_dir) / (stem + ".dot")).string();
      write_file(dot_path, graph_dot(g, l, entity_names, predicate_names));
      written.push_back(dot_path);

      json gj = graph_json(g);
      gj["scene_id"] = id;
      gj["layer"] = l;
      std::string json_path = (fs::path(out_dir) / (stem + ".json")).string();
      write_file(json_path, gj.dump(2));
      written.push_back(json_path);
    }
  }
  return written;
}

}  // namespace sgg
