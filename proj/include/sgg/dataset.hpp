#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/scene_graph.hpp"
#include "sgg/util.hpp"

namespace sgg {

// Synthetic world configuration. Entity classes follow a power law with
// exponent tail_skew; rare predicates are gated on the rare classes, so the
// same knob controls both entity and predicate imbalance.
struct WorldConfig {
  int eta = 6;
  int upsilon = 8;
  int grid_w = 6;
  int grid_h = 6;
  int max_entities = 4;
  float tail_skew = 1.5f;
  uint64_t seed = 1;

  int grid_channels() const { return eta + 4; }
  void validate() const;

  nlohmann::json to_json() const;
  static WorldConfig from_json(const nlohmann::json& j);
};

// Dense per-cell features, shape (c, h, w) row-major. Channels [0, eta) hold
// per-class coverage fractions; then total coverage, x/y offsets from the
// cell center to the dominant entity's center, and that entity's area.
struct FeatureGrid {
  int c = 0, h = 0, w = 0;
  std::vector<float> data;

  FeatureGrid() = default;
  FeatureGrid(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, 0.f) {}

  float& at(int ch, int y, int x) { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
};

struct Scene {
  std::string scene_id;
  FeatureGrid grid;
  SceneGraph graph;
};

struct FrequencyTable {
  std::vector<int64_t> counts;     // per predicate class
  std::vector<double> fractions;   // counts / sum, sums to 1

  static FrequencyTable from_counts(std::vector<int64_t> counts);
};

// All (subject_class, predicate_class, object_class) triples seen in
// training; zero-shot evaluation excludes these.
struct TripletRegistry {
  std::set<std::array<int, 3>> triples;

  bool contains(int s, int p, int o) const { return triples.count({s, p, o}) > 0; }
};

struct HBTPartition {
  std::vector<int> head, body, tail;
};

// Predicate ids. Rules are evaluated per ordered entity pair in a fixed
// priority order (rarest first); the first applicable rule wins, so each
// ordered pair carries at most one relation.
namespace predicates {
constexpr int kLeftOf = 0;
constexpr int kAbove = 1;
constexpr int kNear = 2;
constexpr int kOverlaps = 3;
constexpr int kInside = 4;
constexpr int kMirrors = 5;    // gated: same class, similar size, close by
constexpr int kAnchors = 6;    // gated: subject class eta-2, overlapping from below
constexpr int kEncircles = 7;  // gated: subject class eta-1 containing a small object
constexpr std::array<int, 8> kPriority{kEncircles, kAnchors, kMirrors, kInside,
                                       kOverlaps,  kNear,    kLeftOf,  kAbove};
const char* name(int id);
}  // namespace predicates

// Applies the predicate rules to every ordered pair. Output triplets carry
// node indices and recomputed predicate boxes.
std::vector<Triplet> derive_relations(const std::vector<EntityInstance>& entities,
                                      const WorldConfig& cfg);

// Deterministic given (cfg, scene_index): placement draws come from a
// substream seeded by derive_seed(cfg.seed, scene_index).
Scene generate_scene(const WorldConfig& cfg, uint64_t scene_index, const std::string& scene_id);

FeatureGrid rasterize_grid(const std::vector<EntityInstance>& entities, const WorldConfig& cfg);

std::string scene_to_jsonl(const Scene& s);
Scene scene_from_jsonl(const std::string& line);

struct SplitInfo {
  std::string name;
  std::string file;  // relative to the manifest directory
  std::string hash;  // fnv1a64 hex of the file content
  int64_t scenes = 0;
  int max_triplets = 0;
};

struct Manifest {
  WorldConfig cfg;
  std::vector<SplitInfo> splits;
  FrequencyTable frequency;  // train split only
  TripletRegistry registry;  // train split only
  HBTPartition hbt;
  std::string dir;  // directory the manifest was written to / read from

  const SplitInfo& split(const std::string& name) const;
  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

Manifest build_dataset(const WorldConfig& cfg, int64_t n_train, int64_t n_val, int64_t n_test,
                       const std::string& out_dir);

Manifest load_manifest(const std::string& manifest_path);

// Verifies the stored content hash before parsing.
std::vector<Scene> load_split(const Manifest& m, const std::string& split_name);

// head: count >= head_frac * max count; tail: count < tail_frac * max count;
// body: the rest. Classes with zero count land in tail.
HBTPartition hbt_partition(const FrequencyTable& freq, double head_frac = 0.10,
                           double tail_frac = 0.01);

// Training-set statistics for the frequency-prior baseline.
struct PriorStats {
  int eta = 0, upsilon = 0;
  std::map<std::pair<int, int>, std::vector<int64_t>> pair_counts;  // (s_cls,o_cls) -> per-p
  std::vector<int64_t> marginal;                                    // per-p
  std::vector<BBox> mean_box;                                       // per entity class
  std::map<std::pair<int, int>, int64_t> pair_totals;
};

PriorStats build_prior(const std::vector<Scene>& train, int eta, int upsilon);

// P(predicate | subject class, object class), backing off to the marginal
// distribution for pairs never seen in training.
std::vector<double> freq_prior_predict(int subject_class, int object_class,
                                       const PriorStats& stats);

// Scene-independent ranked triplet list: pairs by empirical frequency,
// predicates by conditional probability, boxes from per-class training
// means. The "Freq Prior" baseline emits this same list for every scene.
struct PriorTriplet {
  int s_cls = 0, o_cls = 0, p_cls = 0;
  BBox s_box, o_box;
  double score = 0.0;
};

std::vector<PriorTriplet> prior_candidates(const PriorStats& stats, int max_count);

}  // namespace sgg
