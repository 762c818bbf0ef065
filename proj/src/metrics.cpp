#include "sgg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sgg {

namespace {

std::vector<bool> match_top_k(const SceneResult& sr, int k, double iou_thr) {
  size_t take = std::min(sr.preds.size(), static_cast<size_t>(k));
  std::vector<ScoredTriplet> head(sr.preds.begin(), sr.preds.begin() + take);
  return match_triplets(sr.gt, head, iou_thr);
}

std::optional<double> subset_mean(const std::vector<std::optional<double>>& per_class,
                                  const std::vector<int>& ids) {
  double acc = 0.0;
  int n = 0;
  for (int c : ids) {
    if (c < 0 || static_cast<size_t>(c) >= per_class.size())
      throw std::invalid_argument("partition class id out of range");
    if (!per_class[c]) continue;
    acc += *per_class[c];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return acc / n;
}

}  // namespace

std::vector<bool> match_triplets(const SceneGraph& gt, const std::vector<ScoredTriplet>& preds,
                                 double iou_thr) {
  std::vector<bool> matched(gt.triplets.size(), false);
  for (const ScoredTriplet& p : preds) {
    for (size_t i = 0; i < gt.triplets.size(); ++i) {
      if (matched[i]) continue;
      const Triplet& t = gt.triplets[i];
      if (t.subject.class_id != p.s_class || t.predicate_class != p.p_class ||
          t.object.class_id != p.o_class)
        continue;
      if (iou(t.subject.box, p.s_box) < iou_thr || iou(t.object.box, p.o_box) < iou_thr)
        continue;
      matched[i] = true;
      break;
    }
  }
  return matched;
}

double recall_at_k(const std::vector<SceneResult>& scenes, int k, double iou_thr) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  double acc = 0.0;
  int counted = 0;
  for (const SceneResult& sr : scenes) {
    if (sr.gt.triplets.empty()) continue;
    std::vector<bool> flags = match_top_k(sr, k, iou_thr);
    acc += static_cast<double>(std::count(flags.begin(), flags.end(), true)) /
           static_cast<double>(flags.size());
    ++counted;
  }
  if (counted == 0) throw std::runtime_error("no ground truth");
  return acc / counted;
}

MeanRecall mean_recall_at_k(const std::vector<SceneResult>& scenes, int k,
                            int n_predicate_classes, double iou_thr) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (n_predicate_classes < 1)
    throw std::invalid_argument("predicate class count must be positive");
  std::vector<double> acc(n_predicate_classes, 0.0);
  std::vector<int> scenes_with(n_predicate_classes, 0);
  for (const SceneResult& sr : scenes) {
    if (sr.gt.triplets.empty()) continue;
    std::vector<bool> flags = match_top_k(sr, k, iou_thr);
    std::vector<int> total(n_predicate_classes, 0), hit(n_predicate_classes, 0);
    for (size_t i = 0; i < sr.gt.triplets.size(); ++i) {
      int c = sr.gt.triplets[i].predicate_class;
      if (c < 0 || c >= n_predicate_classes)
        throw std::invalid_argument("predicate class out of range");
      ++total[c];
      if (flags[i]) ++hit[c];
    }
    for (int c = 0; c < n_predicate_classes; ++c) {
      if (total[c] == 0) continue;
      acc[c] += static_cast<double>(hit[c]) / total[c];
      ++scenes_with[c];
    }
  }
  MeanRecall out;
  out.per_class.resize(n_predicate_classes);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_predicate_classes; ++c) {
    if (scenes_with[c] == 0) continue;
    out.per_class[c] = acc[c] / scenes_with[c];
    sum += *out.per_class[c];
    ++present;
  }
  out.value = present == 0 ? 0.0 : sum / present;
  return out;
}

double harmonic_recall(double mean_recall, double recall) {
  if (mean_recall == 0.0 && recall == 0.0) return 0.0;
  return 2.0 * mean_recall * recall / (mean_recall + recall);
}

ZeroShotRecall zero_shot_recall(const std::vector<SceneResult>& scenes,
                                const TripletRegistry& registry, int k, double iou_thr) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  ZeroShotRecall out;
  double acc = 0.0;
  for (const SceneResult& sr : scenes) {
    if (sr.gt.triplets.empty()) continue;
    // matching runs against the full ground truth so seen triplets still
    // consume predictions; only the unseen subset is scored
    std::vector<bool> flags = match_top_k(sr, k, iou_thr);
    int total = 0, hit = 0;
    for (size_t i = 0; i < sr.gt.triplets.size(); ++i) {
      const Triplet& t = sr.gt.triplets[i];
      if (registry.contains(t.subject.class_id, t.predicate_class, t.object.class_id)) continue;
      ++total;
      if (flags[i]) ++hit;
    }
    if (total == 0) continue;
    acc += static_cast<double>(hit) / total;
    ++out.scenes_counted;
  }
  if (out.scenes_counted > 0) out.value = acc / out.scenes_counted;
  return out;
}

HbtRecalls hbt_report(const std::vector<std::optional<double>>& per_class,
                      const HBTPartition& partition) {
  HbtRecalls out;
  out.head = subset_mean(per_class, partition.head);
  out.body = subset_mean(per_class, partition.body);
  out.tail = subset_mean(per_class, partition.tail);
  return out;
}

RecallReport evaluate_recalls(std::vector<SceneResult> scenes, const std::vector<int>& ks,
                              int n_predicate_classes, const TripletRegistry* registry,
                              const HBTPartition* partition, double iou_thr) {
  for (SceneResult& sr : scenes)
    std::stable_sort(sr.preds.begin(), sr.preds.end(),
                     [](const ScoredTriplet& a, const ScoredTriplet& b) { return a.score > b.score; });
  RecallReport rep;
  rep.scenes = static_cast<int>(scenes.size());
  for (int k : ks) {
    RecallReport::AtK at;
    at.k = k;
    at.recall = recall_at_k(scenes, k, iou_thr);
    at.mean = mean_recall_at_k(scenes, k, n_predicate_classes, iou_thr);
    at.harmonic = harmonic_recall(at.mean.value, at.recall);
    if (registry) at.zero_shot = zero_shot_recall(scenes, *registry, k, iou_thr);
    if (partition) at.hbt = hbt_report(at.mean.per_class, *partition);
    rep.at.push_back(std::move(at));
  }
  return rep;
}

namespace {

nlohmann::json pct(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v * 100.0;
}

void cell(std::string& out, const std::optional<double>& v) {
  char buf[16];
  if (v)
    std::snprintf(buf, sizeof buf, "%7.1f", *v * 100.0);
  else
    std::snprintf(buf, sizeof buf, "%7s", "-");
  out += buf;
}

}  // namespace

nlohmann::json report_json(const RecallReport& r) {
  nlohmann::json j;
  j["scenes"] = r.scenes;
  j["at"] = nlohmann::json::array();
  for (const RecallReport::AtK& at : r.at) {
    nlohmann::json a;
    a["k"] = at.k;
    a["recall"] = at.recall * 100.0;
    a["mean_recall"] = at.mean.value * 100.0;
    a["harmonic_recall"] = at.harmonic * 100.0;
    a["zero_shot_recall"] = pct(at.zero_shot.value);
    a["zero_shot_scenes"] = at.zero_shot.scenes_counted;
    a["per_class_recall"] = nlohmann::json::array();
    for (const std::optional<double>& c : at.mean.per_class)
      a["per_class_recall"].push_back(pct(c));
    a["head"] = pct(at.hbt.head);
    a["body"] = pct(at.hbt.body);
    a["tail"] = pct(at.hbt.tail);
    j["at"].push_back(std::move(a));
  }
  return j;
}

std::string report_table(const RecallReport& r) {
  std::string out = "    K   mR@K    R@K   hR@K   head   body   tail\n";
  for (const RecallReport::AtK& at : r.at) {
    char head[8];
    std::snprintf(head, sizeof head, "%5d", at.k);
    out += head;
    cell(out, at.mean.value);
    cell(out, at.recall);
    cell(out, at.harmonic);
    cell(out, at.hbt.head);
    cell(out, at.hbt.body);
    cell(out, at.hbt.tail);
    out += '\n';
  }
  return out;
}

}  // namespace sgg
