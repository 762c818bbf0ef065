#include "sgg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace sgg {

using nlohmann::json;
namespace fs = std::filesystem;

void WorldConfig::validate() const {
  if (eta < 2) throw std::invalid_argument("WorldConfig: eta must be >= 2");
  if (upsilon < 4) throw std::invalid_argument("WorldConfig: upsilon must be >= 4");
  if (max_entities < 2 || max_entities > 16)
    throw std::invalid_argument("WorldConfig: max_entities must be in [2, 16]");
  if (tail_skew < 0.f) throw std::invalid_argument("WorldConfig: tail_skew must be >= 0");
  if (grid_w < 2 || grid_h < 2) throw std::invalid_argument("WorldConfig: grid too small");
}

json WorldConfig::to_json() const {
  return {{"eta", eta},
          {"upsilon", upsilon},
          {"grid_w", grid_w},
          {"grid_h", grid_h},
          {"max_entities", max_entities},
          {"tail_skew", tail_skew},
          {"seed", seed}};
}

WorldConfig WorldConfig::from_json(const json& j) {
  WorldConfig c;
  c.eta = j.value("eta", c.eta);
  c.upsilon = j.value("upsilon", c.upsilon);
  c.grid_w = j.value("grid_w", c.grid_w);
  c.grid_h = j.value("grid_h", c.grid_h);
  c.max_entities = j.value("max_entities", c.max_entities);
  c.tail_skew = j.value("tail_skew", c.tail_skew);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

FrequencyTable FrequencyTable::from_counts(std::vector<int64_t> counts) {
  FrequencyTable t;
  t.counts = std::move(counts);
  int64_t total = 0;
  for (int64_t c : t.counts) total += c;
  t.fractions.resize(t.counts.size(), 0.0);
  if (total > 0)
    for (size_t i = 0; i < t.counts.size(); ++i)
      t.fractions[i] = static_cast<double>(t.counts[i]) / static_cast<double>(total);
  return t;
}

namespace predicates {
const char* name(int id) {
  switch (id) {
    case kLeftOf: return "left_of";
    case kAbove: return "above";
    case kNear: return "near";
    case kOverlaps: return "overlaps";
    case kInside: return "inside";
    case kMirrors: return "mirrors";
    case kAnchors: return "anchors";
    case kEncircles: return "encircles";
    default: return "?";
  }
}
}  // namespace predicates

namespace {

constexpr float kNearDist = 0.16f;
constexpr float kMirrorDist = 0.28f;
constexpr float kMirrorAreaTol = 0.20f;
constexpr float kEncircleAreaRatio = 4.f;

bool strictly_inside(const BBox& a, const BBox& b) {
  CornerBox ca = to_corner(a), cb = to_corner(b);
  return ca.x1 >= cb.x1 && ca.y1 >= cb.y1 && ca.x2 <= cb.x2 && ca.y2 <= cb.y2 &&
         (ca.x1 > cb.x1 || ca.x2 < cb.x2 || ca.y1 > cb.y1 || ca.y2 < cb.y2);
}

bool boxes_overlap(const BBox& a, const BBox& b) {
  CornerBox ca = to_corner(a), cb = to_corner(b);
  float ix = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  float iy = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  return ix > 0.f && iy > 0.f;
}

float center_dist(const BBox& a, const BBox& b) {
  float dx = a.cx - b.cx, dy = a.cy - b.cy;
  return std::sqrt(dx * dx + dy * dy);
}

// Evaluates one predicate rule for the ordered pair (s, o).
bool rule_applies(int predicate, const EntityInstance& s, const EntityInstance& o,
                  const WorldConfig& cfg) {
  using namespace predicates;
  float dx = o.box.cx - s.box.cx, dy = o.box.cy - s.box.cy;
  switch (predicate) {
    case kEncircles:
      return s.class_id == cfg.eta - 1 && strictly_inside(o.box, s.box) &&
             s.box.area() > kEncircleAreaRatio * o.box.area();
    case kAnchors:
      return s.class_id == cfg.eta - 2 && boxes_overlap(s.box, o.box) &&
             s.box.cy > o.box.cy && s.box.area() > 1.5f * o.box.area();
    case kMirrors:
      return s.class_id == o.class_id && !boxes_overlap(s.box, o.box) &&
             center_dist(s.box, o.box) < kMirrorDist &&
             std::fabs(s.box.area() - o.box.area()) <
                 kMirrorAreaTol * std::max(s.box.area(), o.box.area());
    case kInside:
      return strictly_inside(s.box, o.box);
    case kOverlaps:
      return boxes_overlap(s.box, o.box);
    case kNear:
      return !boxes_overlap(s.box, o.box) && center_dist(s.box, o.box) < kNearDist;
    case kLeftOf:
      return !boxes_overlap(s.box, o.box) && dx > 0.f && std::fabs(dx) >= std::fabs(dy);
    case kAbove:
      return !boxes_overlap(s.box, o.box) && dy > 0.f && std::fabs(dy) > std::fabs(dx);
    default:
      return false;
  }
}

int first_applicable(const EntityInstance& s, const EntityInstance& o, const WorldConfig& cfg) {
  for (int p : predicates::kPriority)
    if (p < cfg.upsilon && rule_applies(p, s, o, cfg)) return p;
  return -1;
}

}  // namespace

std::vector<Triplet> derive_relations(const std::vector<EntityInstance>& entities,
                                      const WorldConfig& cfg) {
  std::vector<Triplet> out;
  for (size_t i = 0; i < entities.size(); ++i) {
    for (size_t j = 0; j < entities.size(); ++j) {
      if (i == j) continue;
      int p = first_applicable(entities[i], entities[j], cfg);
      if (p < 0) continue;
      Triplet t;
      t.subject = {entities[i].class_id, entities[i].box};
      t.object = {entities[j].class_id, entities[j].box};
      t.predicate_class = p;
      t.predicate_box = predicate_box_of(entities[i].box, entities[j].box);
      t.subject_node = static_cast<int>(i);
      t.object_node = static_cast<int>(j);
      out.push_back(t);
    }
  }
  return out;
}

namespace {

int sample_class(Rng& rng, const WorldConfig& cfg) {
  // power-law weights (c+1)^-tail_skew
  std::vector<double> w(cfg.eta);
  double total = 0;
  for (int c = 0; c < cfg.eta; ++c) {
    w[c] = std::pow(static_cast<double>(c + 1), -static_cast<double>(cfg.tail_skew));
    total += w[c];
  }
  double u = rng.uniform() * total;
  for (int c = 0; c < cfg.eta; ++c) {
    u -= w[c];
    if (u <= 0) return c;
  }
  return cfg.eta - 1;
}

BBox place_free(Rng& rng, const std::vector<EntityInstance>& placed) {
  BBox b{};
  // retry a few times so free entities usually land clear of everything else;
  // overlap and containment come from the dedicated placement modes instead
  for (int attempt = 0; attempt < 8; ++attempt) {
    b.w = static_cast<float>(rng.uniform(0.08, 0.30));
    b.h = static_cast<float>(rng.uniform(0.08, 0.30));
    b.cx = static_cast<float>(rng.uniform(b.w / 2, 1.0 - b.w / 2));
    b.cy = static_cast<float>(rng.uniform(b.h / 2, 1.0 - b.h / 2));
    bool clear = true;
    for (const auto& other : placed)
      if (boxes_overlap(b, other.box)) clear = false;
    if (clear) break;
  }
  return b;
}

BBox place_nested(Rng& rng, const BBox& host) {
  float w = host.w * static_cast<float>(rng.uniform(0.25, 0.45));
  float h = host.h * static_cast<float>(rng.uniform(0.25, 0.45));
  float cx = host.cx + static_cast<float>(rng.uniform(-0.5, 0.5)) * (host.w - w) * 0.9f;
  float cy = host.cy + static_cast<float>(rng.uniform(-0.5, 0.5)) * (host.h - h) * 0.9f;
  return {cx, cy, w, h};
}

BBox place_overlapping(Rng& rng, const BBox& host) {
  float w = static_cast<float>(rng.uniform(0.08, 0.25));
  float h = static_cast<float>(rng.uniform(0.08, 0.25));
  // center near the host's boundary so the boxes intersect without nesting
  float cx = host.cx + (rng.uniform() < 0.5 ? -1.f : 1.f) * 0.5f * (host.w + w) *
                           static_cast<float>(rng.uniform(0.5, 0.9));
  float cy = host.cy + (rng.uniform() < 0.5 ? -1.f : 1.f) * 0.5f * (host.h + h) *
                           static_cast<float>(rng.uniform(0.0, 0.5));
  cx = std::clamp(cx, w / 2, 1.f - w / 2);
  cy = std::clamp(cy, h / 2, 1.f - h / 2);
  return {cx, cy, w, h};
}

}  // namespace

FeatureGrid rasterize_grid(const std::vector<EntityInstance>& entities, const WorldConfig& cfg) {
  FeatureGrid g(cfg.grid_channels(), cfg.grid_h, cfg.grid_w);
  float cw = 1.f / cfg.grid_w, chh = 1.f / cfg.grid_h;
  for (int y = 0; y < cfg.grid_h; ++y) {
    for (int x = 0; x < cfg.grid_w; ++x) {
      CornerBox cell{x * cw, y * chh, (x + 1) * cw, (y + 1) * chh};
      float cell_area = cw * chh;
      float best_cov = 0.f;
      int best = -1;
      float total = 0.f;
      for (size_t e = 0; e < entities.size(); ++e) {
        CornerBox b = to_corner(entities[e].box);
        float ix = std::max(0.f, std::min(cell.x2, b.x2) - std::max(cell.x1, b.x1));
        float iy = std::max(0.f, std::min(cell.y2, b.y2) - std::max(cell.y1, b.y1));
        float cov = ix * iy / cell_area;
        if (cov <= 0.f) continue;
        int cls = entities[e].class_id;
        g.at(cls, y, x) = std::min(1.f, g.at(cls, y, x) + cov);
        total += cov;
        if (cov > best_cov) {
          best_cov = cov;
          best = static_cast<int>(e);
        }
      }
      g.at(cfg.eta, y, x) = std::min(1.f, total);
      if (best >= 0) {
        const BBox& b = entities[best].box;
        float ccx = cell.x1 + cw / 2, ccy = cell.y1 + chh / 2;
        g.at(cfg.eta + 1, y, x) = b.cx - ccx;
        g.at(cfg.eta + 2, y, x) = b.cy - ccy;
        g.at(cfg.eta + 3, y, x) = b.area();
      }
    }
  }
  return g;
}

Scene generate_scene(const WorldConfig& cfg, uint64_t scene_index,
                     const std::string& scene_id) {
  Rng rng(derive_seed(cfg.seed, scene_index));
  int n = 2 + static_cast<int>(rng.uniform_int(cfg.max_entities - 1));
  // a small fraction of scenes center on a large rarest-class entity with
  // contents nested inside it
  bool container_scene = rng.uniform() < 0.012;
  std::vector<EntityInstance> entities;
  for (int i = 0; i < n; ++i) {
    EntityInstance e;
    if (container_scene && i == 0) {
      e.class_id = cfg.eta - 1;
      e.box.w = static_cast<float>(rng.uniform(0.40, 0.62));
      e.box.h = static_cast<float>(rng.uniform(0.40, 0.62));
      e.box.cx = static_cast<float>(rng.uniform(e.box.w / 2, 1.0 - e.box.w / 2));
      e.box.cy = static_cast<float>(rng.uniform(e.box.h / 2, 1.0 - e.box.h / 2));
      entities.push_back(e);
      continue;
    }
    e.class_id = sample_class(rng, cfg);
    double mode = rng.uniform();
    const EntityInstance* host = nullptr;
    if (!entities.empty()) {
      // nesting only into hosts large enough to admit a non-degenerate child
      std::vector<const EntityInstance*> big;
      for (const auto& prev : entities)
        if (prev.box.w > 0.14f && prev.box.h > 0.14f) big.push_back(&prev);
      if (container_scene && mode < 0.40) {
        host = &entities[0];
        e.box = place_nested(rng, host->box);
      } else if (mode < 0.12 && !big.empty()) {
        host = big[rng.uniform_int(big.size())];
        e.box = place_nested(rng, host->box);
      } else if (mode < 0.20) {
        const EntityInstance& prev = entities[rng.uniform_int(entities.size())];
        e.box = place_overlapping(rng, prev.box);
      } else {
        e.box = place_free(rng, entities);
      }
    } else {
      e.box = place_free(rng, entities);
    }
    entities.push_back(e);
  }

  Scene s;
  s.scene_id = scene_id;
  s.grid = rasterize_grid(entities, cfg);
  s.graph.scene_id = scene_id;
  s.graph.entities = entities;
  s.graph.triplets = derive_relations(entities, cfg);
  return s;
}

std::string scene_to_jsonl(const Scene& s) {
  json j;
  j["scene_id"] = s.scene_id;
  j["grid"] = {{"shape", {s.grid.c, s.grid.h, s.grid.w}},
               {"data", base64_encode(pack_f32_le(s.grid.data).data(), s.grid.data.size() * 4)}};
  json ents = json::array();
  for (const EntityInstance& e : *s.graph.entities)
    ents.push_back({{"class", e.class_id}, {"box", {e.box.cx, e.box.cy, e.box.w, e.box.h}}});
  j["entities"] = std::move(ents);
  json trips = json::array();
  for (const Triplet& t : s.graph.triplets)
    trips.push_back({{"s", t.subject_node}, {"o", t.object_node}, {"p", t.predicate_class}});
  j["triplets"] = std::move(trips);
  return j.dump();
}

Scene scene_from_jsonl(const std::string& line) {
  json j = json::parse(line);
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  const json& g = j.at("grid");
  s.grid.c = g.at("shape")[0].get<int>();
  s.grid.h = g.at("shape")[1].get<int>();
  s.grid.w = g.at("shape")[2].get<int>();
  s.grid.data = unpack_f32_le(base64_decode(g.at("data").get<std::string>()));
  if (static_cast<int64_t>(s.grid.data.size()) !=
      static_cast<int64_t>(s.grid.c) * s.grid.h * s.grid.w)
    throw std::runtime_error("scene grid size mismatch: " + s.scene_id);

  std::vector<EntityInstance> ents;
  for (const json& e : j.at("entities")) {
    EntityInstance inst;
    inst.class_id = e.at("class").get<int>();
    const json& b = e.at("box");
    inst.box = {b[0].get<float>(), b[1].get<float>(), b[2].get<float>(), b[3].get<float>()};
    ents.push_back(inst);
  }
  s.graph.scene_id = s.scene_id;
  s.graph.entities = ents;
  for (const json& t : j.at("triplets")) {
    Triplet trip;
    trip.subject_node = t.at("s").get<int>();
    trip.object_node = t.at("o").get<int>();
    trip.predicate_class = t.at("p").get<int>();
    if (trip.subject_node < 0 || trip.subject_node >= static_cast<int>(ents.size()) ||
        trip.object_node < 0 || trip.object_node >= static_cast<int>(ents.size()))
      throw std::runtime_error("scene triplet node out of range: " + s.scene_id);
    trip.subject = {ents[trip.subject_node].class_id, ents[trip.subject_node].box};
    trip.object = {ents[trip.object_node].class_id, ents[trip.object_node].box};
    trip.predicate_box = predicate_box_of(trip.subject.box, trip.object.box);
    s.graph.triplets.push_back(trip);
  }
  return s;
}

const SplitInfo& Manifest::split(const std::string& name) const {
  for (const SplitInfo& s : splits)
    if (s.name == name) return s;
  throw std::runtime_error("manifest has no split named " + name);
}

json Manifest::to_json() const {
  json j;
  j["config"] = cfg.to_json();
  json sp = json::array();
  for (const SplitInfo& s : splits)
    sp.push_back({{"name", s.name},
                  {"file", s.file},
                  {"hash", s.hash},
                  {"scenes", s.scenes},
                  {"max_triplets", s.max_triplets}});
  j["splits"] = std::move(sp);
  j["frequency"] = {{"counts", frequency.counts}, {"fractions", frequency.fractions}};
  json reg = json::array();
  for (const auto& t : registry.triples) reg.push_back({t[0], t[1], t[2]});
  j["registry"] = std::move(reg);
  j["hbt"] = {{"head", hbt.head}, {"body", hbt.body}, {"tail", hbt.tail}};
  return j;
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  m.cfg = WorldConfig::from_json(j.at("config"));
  for (const json& s : j.at("splits")) {
    SplitInfo info;
    info.name = s.at("name").get<std::string>();
    info.file = s.at("file").get<std::string>();
    info.hash = s.at("hash").get<std::string>();
    info.scenes = s.at("scenes").get<int64_t>();
    info.max_triplets = s.at("max_triplets").get<int>();
    m.splits.push_back(info);
  }
  m.frequency.counts = j.at("frequency").at("counts").get<std::vector<int64_t>>();
  m.frequency.fractions = j.at("frequency").at("fractions").get<std::vector<double>>();
  for (const json& t : j.at("registry"))
    m.registry.triples.insert({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
  m.hbt.head = j.at("hbt").at("head").get<std::vector<int>>();
  m.hbt.body = j.at("hbt").at("body").get<std::vector<int>>();
  m.hbt.tail = j.at("hbt").at("tail").get<std::vector<int>>();
  return m;
}

HBTPartition hbt_partition(const FrequencyTable& freq, double head_frac, double tail_frac) {
  HBTPartition p;
  int64_t max_count = 0;
  for (int64_t c : freq.counts) max_count = std::max(max_count, c);
  for (size_t i = 0; i < freq.counts.size(); ++i) {
    double c = static_cast<double>(freq.counts[i]);
    if (max_count > 0 && c >= head_frac * max_count)
      p.head.push_back(static_cast<int>(i));
    else if (max_count == 0 || c < tail_frac * max_count)
      p.tail.push_back(static_cast<int>(i));
    else
      p.body.push_back(static_cast<int>(i));
  }
  return p;
}

namespace {

// Streams per-scene stats while writing a split so counts never need a
// second pass.
struct SplitStats {
  std::vector<int64_t> counts;
  std::set<std::array<int, 3>> triples;
  int max_triplets = 0;
};

SplitInfo write_split(const WorldConfig& cfg, const std::string& name, int64_t start_stream,
                      int64_t count, const fs::path& dir, SplitStats* stats) {
  fs::path file = dir / (name + ".jsonl");
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write split file: " + file.string());
  for (int64_t i = 0; i < count; ++i) {
    std::ostringstream id;
    id << name << "-" << std::setw(6) << std::setfill('0') << i;
    Scene s = generate_scene(cfg, static_cast<uint64_t>(start_stream + i), id.str());
    if (stats) {
      stats->max_triplets =
          std::max(stats->max_triplets, static_cast<int>(s.graph.triplets.size()));
      for (const Triplet& t : s.graph.triplets) {
        stats->counts[t.predicate_class]++;
        stats->triples.insert({t.subject.class_id, t.predicate_class, t.object.class_id});
      }
    }
    out << scene_to_jsonl(s) << "\n";
  }
  out.close();
  SplitInfo info;
  info.name = name;
  info.file = name + ".jsonl";
  info.hash = hash_hex(fnv1a64_file(file.string()));
  info.scenes = count;
  return info;
}

}  // namespace

Manifest build_dataset(const WorldConfig& cfg, int64_t n_train, int64_t n_val, int64_t n_test,
                       const std::string& out_dir) {
  cfg.validate();
  fs::path dir(out_dir);
  fs::create_directories(dir);

  Manifest m;
  m.cfg = cfg;
  m.dir = out_dir;

  // Disjoint substream ranges per split keep scenes independent of split
  // sizes elsewhere.
  SplitStats train_stats;
  train_stats.counts.assign(cfg.upsilon, 0);
  SplitStats val_stats = train_stats, test_stats = train_stats;
  SplitInfo train = write_split(cfg, "train", 0, n_train, dir, &train_stats);
  SplitInfo val = write_split(cfg, "val", 1ll << 32, n_val, dir, &val_stats);
  SplitInfo test = write_split(cfg, "test", 1ll << 33, n_test, dir, &test_stats);
  train.max_triplets = train_stats.max_triplets;
  val.max_triplets = val_stats.max_triplets;
  test.max_triplets = test_stats.max_triplets;
  m.splits = {train, val, test};

  m.frequency = FrequencyTable::from_counts(train_stats.counts);
  m.registry.triples = std::move(train_stats.triples);
  m.hbt = hbt_partition(m.frequency);

  write_file((dir / "manifest.json").string(), m.to_json().dump(2));
  return m;
}

Manifest load_manifest(const std::string& manifest_path) {
  Manifest m = Manifest::from_json(json::parse(read_file(manifest_path)));
  m.dir = fs::path(manifest_path).parent_path().string();
  return m;
}

std::vector<Scene> load_split(const Manifest& m, const std::string& split_name) {
  const SplitInfo& info = m.split(split_name);
  std::string path = (fs::path(m.dir) / info.file).string();
  std::string content = read_file(path);
  if (hash_hex(fnv1a64(content)) != info.hash)
    throw std::runtime_error("split content hash mismatch: " + path);
  std::vector<Scene> scenes;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    scenes.push_back(scene_from_jsonl(line));
  }
  if (static_cast<int64_t>(scenes.size()) != info.scenes)
    throw std::runtime_error("split scene count mismatch: " + path);
  return scenes;
}

PriorStats build_prior(const std::vector<Scene>& train, int eta, int upsilon) {
  PriorStats st;
  st.eta = eta;
  st.upsilon = upsilon;
  st.marginal.assign(upsilon, 0);
  st.mean_box.assign(eta, BBox{});
  std::vector<int64_t> class_counts(eta, 0);
  std::vector<std::array<double, 4>> box_sums(eta, {0, 0, 0, 0});
  for (const Scene& s : train) {
    for (const EntityInstance& e : *s.graph.entities) {
      box_sums[e.class_id][0] += e.box.cx;
      box_sums[e.class_id][1] += e.box.cy;
      box_sums[e.class_id][2] += e.box.w;
      box_sums[e.class_id][3] += e.box.h;
      class_counts[e.class_id]++;
    }
    for (const Triplet& t : s.graph.triplets) {
      auto key = std::make_pair(t.subject.class_id, t.object.class_id);
      auto& vec = st.pair_counts[key];
      if (vec.empty()) vec.assign(upsilon, 0);
      vec[t.predicate_class]++;
      st.pair_totals[key]++;
      st.marginal[t.predicate_class]++;
    }
  }
  for (int c = 0; c < eta; ++c) {
    if (class_counts[c] > 0) {
      double n = static_cast<double>(class_counts[c]);
      st.mean_box[c] = {static_cast<float>(box_sums[c][0] / n),
                        static_cast<float>(box_sums[c][1] / n),
                        static_cast<float>(box_sums[c][2] / n),
                        static_cast<float>(box_sums[c][3] / n)};
    } else {
      st.mean_box[c] = {0.5f, 0.5f, 0.2f, 0.2f};
    }
  }
  return st;
}

std::vector<double> freq_prior_predict(int subject_class, int object_class,
                                       const PriorStats& stats) {
  std::vector<double> dist(stats.upsilon, 0.0);
  auto it = stats.pair_counts.find({subject_class, object_class});
  const std::vector<int64_t>* counts = nullptr;
  if (it != stats.pair_counts.end())
    counts = &it->second;
  else
    counts = &stats.marginal;
  int64_t total = 0;
  for (int64_t c : *counts) total += c;
  if (total == 0) {
    std::fill(dist.begin(), dist.end(), 1.0 / stats.upsilon);
    return dist;
  }
  for (int p = 0; p < stats.upsilon; ++p)
    dist[p] = static_cast<double>((*counts)[p]) / static_cast<double>(total);
  return dist;
}

std::vector<PriorTriplet> prior_candidates(const PriorStats& stats, int max_count) {
  int64_t grand_total = 0;
  for (const auto& [key, n] : stats.pair_totals) grand_total += n;
  std::vector<PriorTriplet> out;
  if (grand_total == 0) return out;
  for (const auto& [key, n] : stats.pair_totals) {
    double p_pair = static_cast<double>(n) / static_cast<double>(grand_total);
    std::vector<double> dist = freq_prior_predict(key.first, key.second, stats);
    for (int p = 0; p < stats.upsilon; ++p) {
      if (dist[p] <= 0.0) continue;
      PriorTriplet t;
      t.s_cls = key.first;
      t.o_cls = key.second;
      t.p_cls = p;
      t.s_box = stats.mean_box[key.first];
      t.o_box = stats.mean_box[key.second];
      t.score = p_pair * dist[p];
      out.push_back(t);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PriorTriplet& a, const PriorTriplet& b) { return a.score > b.score; });
  if (static_cast<int>(out.size()) > max_count) out.resize(max_count);
  return out;
}

}  // namespace sgg
