#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/assembly.hpp"
#include "sgg/dataset.hpp"
#include "sgg/decoder.hpp"
#include "sgg/encoder.hpp"
#include "sgg/matching.hpp"
#include "sgg/metrics.hpp"
#include "sgg/motif.hpp"
#include "sgg/optim.hpp"

namespace sgg {

// Two model families share the training and evaluation pipeline: the
// query-slot triple decoder over rasterized scenes, and the recurrent
// pair-refinement model over synthetic detections.
enum class ModelFamily { kTripleDecoder, kMotifAug };

std::string to_string(ModelFamily f);
ModelFamily model_family_from_string(const std::string& s);

// Everything a run needs, serialized as one JSON document. Every artifact a
// run produces (training log, checkpoint, evaluation report) embeds a full
// echo of this document, so any logged number traces back to the exact
// configuration, seed, and dataset hash that produced it.
struct RunConfig {
  ModelFamily model = ModelFamily::kTripleDecoder;

  // Dataset generation; training reads the world back from the manifest.
  WorldConfig world;
  int64_t n_train = 2000, n_val = 300, n_test = 300;

  EncoderConfig encoder;
  DecoderConfig decoder;
  MotifConfig motif;

  // Loss. alpha = 0 turns predicate re-weighting off (all weights one).
  double alpha = 0.14;
  double beta = 0.75;
  bool joint_loss = true;  // one assignment shared across layers
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  double eos_coef = 0.1;

  // Training.
  int epochs = 15;
  int batch_size = 12;  // scenes per optimizer step (gradient accumulation)
  nn::LrSchedule lr;
  uint64_t seed = 1;

  // Evaluation.
  std::vector<int> ks = {10, 20, 50};
  int top_m = 1;
  int workers = 0;  // evaluation threads; 0 picks the hardware concurrency

  AssemblyConfig assembly;  // export-time graph assembly

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys fall back to defaults; unknown model names throw.
  static RunConfig from_json(const nlohmann::json& j);
  // Reads, parses, and validates a config file.
  static RunConfig load(const std::string& path);
};

// SGG_SEED overrides the configured run seed. It is the only ambient input:
// everything else a run consumes arrives through flags or config files.
// Unset or empty means no override; anything unparseable throws.
std::optional<uint64_t> env_seed_override();

// Pair-head weights: the shared per-predicate weights followed by eos_coef
// for the trailing no-relation class.
std::vector<float> motif_predicate_weights(const FrequencyTable& freq, double alpha, double beta,
                                           double eos_coef);

// One constructed model of either family plus its parameter store. Creation
// order is deterministic, so (config, world, seed) pins the initialization
// bit for bit. Move-only: the network structs hold pointers into the store.
struct Model {
  RunConfig cfg;
  int eta = 0, upsilon = 0;
  nn::ParamStore ps;

  Encoder encoder;        // triple-decoder family
  TripleDecoder decoder;
  MotifModel motif;       // motif-aug family

  Model() = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;

  static Model make(const RunConfig& cfg, const WorldConfig& world);

  bool is_motif() const { return cfg.model == ModelFamily::kMotifAug; }
  int n_layers() const {
    return is_motif() ? cfg.motif.n_steps : cfg.decoder.n_layers;
  }
};

// Rasterized scene -> per-layer losses. joint shares one assignment across
// the layers; otherwise each layer is matched independently and the
// breakdown is stitched from the per-layer solutions.
LossBreakdown decoder_scene_loss(Tape& t, const Model& model, const Scene& scene,
                                 const LossParams& params, bool joint);

// Synthetic detections for one split, one entry per scene, drawn from
// substreams keyed by (world seed, scene id). Every run over the same
// manifest therefore sees identical detections, independent of the run
// seed. Scenes the pair model cannot digest (fewer than two entities) yield
// nullopt and are skipped by training and scored empty by evaluation.
std::vector<std::optional<DetectorOutput>> synthesize_detectors(const std::vector<Scene>& scenes,
                                                                const Manifest& m,
                                                                const MotifConfig& mc);

struct LayerEval {
  int layer = 0;  // 1-based refinement step
  RecallReport report;
};

// Forwards every scene once (scene-parallel when workers > 1), collects the
// ranked candidates of every requested layer from that single pass, and
// scores each layer separately. dets must parallel scenes for the motif
// family and is ignored otherwise.
std::vector<LayerEval> evaluate_layers(const Model& model, const std::vector<Scene>& scenes,
                                       const std::vector<std::optional<DetectorOutput>>& dets,
                                       const std::vector<int>& layers, int top_m,
                                       const std::vector<int>& ks,
                                       const TripletRegistry* registry,
                                       const HBTPartition* partition, int workers);

struct GenDataResult {
  std::string manifest_path;
  std::string manifest_hash;  // content hash; independent of the output location
  Manifest manifest;
};

GenDataResult gen_data_run(const RunConfig& cfg, const std::string& out_dir);

struct TrainResult {
  std::string log_path;
  std::string best_checkpoint;   // highest validation harmonic recall
  std::string final_checkpoint;  // last epoch (initialization when epochs == 0)
  int best_epoch = -1;           // -1 when no epoch ran
  double best_metric = 0.0;      // validation hR at the largest K, final layer
  double final_loss = 0.0;       // mean training loss of the last epoch
};

// Full training run: deterministic given (config, seed, manifest). Writes
// log.jsonl plus best/final checkpoints into out_dir. Aborts with scene and
// epoch diagnostics the moment any loss stops being finite.
TrainResult train_run(const RunConfig& cfg, const std::string& manifest_path,
                      const std::string& out_dir);

// Rebuilds the model recorded in a checkpoint and loads its weights.
struct LoadedModel {
  Model model;
  nlohmann::json echo;  // config echo stored in the checkpoint
};
LoadedModel load_model(const std::string& ckpt_path);

// Evaluates a checkpoint on one split. layers are 1-based; empty means all.
// top_m < 1 and empty ks fall back to the checkpointed config. Out-of-range
// layers and unknown splits throw.
std::vector<LayerEval> eval_run(const std::string& ckpt_path, const std::string& manifest_path,
                                const std::vector<int>& layers, int top_m,
                                const std::vector<int>& ks, const std::string& split,
                                int workers);

// Assembles the named scenes at the requested layers and writes one DOT and
// one JSON rendering per (scene, layer) pair. Returns the written paths.
// Unknown scene ids throw.
std::vector<std::string> export_run(const std::string& ckpt_path,
                                    const std::string& manifest_path,
                                    const std::vector<std::string>& scene_ids,
                                    const std::vector<int>& layers, const std::string& out_dir);

}  // namespace sgg
