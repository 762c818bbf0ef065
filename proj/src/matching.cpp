#include "sgg/matching.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sgg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Optimal assignment cost of cost[rows[i]][cols[j]] over equal-sized index
// subsets: shortest augmenting path with dual potentials, O(k^3). Returns
// the cost only; the lexicographic tie-break happens in the caller.
double subset_assignment_cost(const std::vector<std::vector<double>>& cost,
                              const std::vector<int>& rows, const std::vector<int>& cols) {
  int k = static_cast<int>(rows.size());
  if (k == 0) return 0.0;
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
  std::vector<int> p(k + 1, 0), way(k + 1, 0);  // p[j]: row matched to column j, 1-based
  for (int i = 1; i <= k; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(k + 1, kInf);
    std::vector<char> used(k + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= k; ++j)
        if (!used[j]) {
          double cur = cost[rows[i0 - 1]][cols[j - 1]] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= k; ++j)
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= k; ++j) total += cost[rows[p[j] - 1]][cols[j - 1]];
  return total;
}

double box_loss(const BBox& pred, const BBox& target, double l_l1, double l_giou) {
  double l1 = std::abs(double(pred.cx) - target.cx) + std::abs(double(pred.cy) - target.cy) +
              std::abs(double(pred.w) - target.w) + std::abs(double(pred.h) - target.h);
  return l_l1 * l1 + l_giou * (1.0 - giou(pred, target));
}

const char* component_name(int comp) { return comp == 0 ? "subject" : comp == 1 ? "object" : "predicate"; }

}  // namespace

std::vector<TargetTriplet> pad_targets(const SceneGraph& g, int n_slots) {
  if (static_cast<int>(g.triplets.size()) > n_slots)
    throw std::invalid_argument("scene " + g.scene_id + " has " +
                                std::to_string(g.triplets.size()) + " triplets for " +
                                std::to_string(n_slots) + " slots");
  std::vector<TargetTriplet> out(n_slots);
  for (size_t i = 0; i < g.triplets.size(); ++i) {
    const Triplet& tr = g.triplets[i];
    out[i] = {tr.subject.class_id, tr.object.class_id, tr.predicate_class,
              tr.subject.box,      tr.object.box,      tr.predicate_box};
  }
  return out;
}

std::vector<float> class_weights(const FrequencyTable& freq, double alpha, double beta) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  if (alpha > 0.0 && beta <= 0.0) throw std::invalid_argument("beta must be positive");
  std::vector<float> w(freq.fractions.size(), 1.f);
  if (alpha == 0.0) return w;
  for (size_t c = 0; c < w.size(); ++c) {
    double f = freq.fractions[c];
    double raw = f > 0.0 ? std::pow(alpha / f, beta) : kInf;
    w[c] = static_cast<float>(std::max(raw, 1.0));
  }
  return w;
}

double rel_cost(const TargetTriplet& target, const TripletHypothesis& hyp, double lambda_l1,
                double lambda_giou) {
  if (target.empty()) return 0.0;
  double prob = double(hyp.s_dist[target.s_class]) + hyp.o_dist[target.o_class] +
                hyp.p_dist[target.p_class];
  double box = box_loss(hyp.s_box, target.s_box, lambda_l1, lambda_giou) +
               box_loss(hyp.o_box, target.o_box, lambda_l1, lambda_giou) +
               box_loss(hyp.p_box, target.p_box, lambda_l1, lambda_giou);
  return -prob + box;
}

std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  int n = static_cast<int>(cost.size());
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != n) throw std::invalid_argument("cost matrix not square");
    for (double c : row)
      if (!std::isfinite(c)) throw std::domain_error("non-finite assignment cost");
  }
  if (n == 0) return {};

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  double best = subset_assignment_cost(cost, all, all);

  // fix rows in order to the lowest column index that still completes to the
  // optimum; each probe solves the remaining subproblem exactly
  std::vector<int> sigma(n, -1);
  std::vector<char> used(n, 0);
  double fixed = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<int> rest_rows(all.begin() + i + 1, all.end());
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      std::vector<int> rest_cols;
      rest_cols.reserve(n - i - 1);
      for (int k = 0; k < n; ++k)
        if (!used[k] && k != j) rest_cols.push_back(k);
      double completion = subset_assignment_cost(cost, rest_rows, rest_cols);
      if (fixed + cost[i][j] + completion <= best + 1e-9 * (1.0 + std::abs(best))) {
        sigma[i] = j;
        used[j] = 1;
        fixed += cost[i][j];
        break;
      }
    }
    if (sigma[i] < 0) throw std::logic_error("assignment refinement failed to complete");
  }
  return sigma;
}

namespace {

std::vector<std::vector<double>> layer_cost(const std::vector<TargetTriplet>& targets,
                                            const std::vector<TripletHypothesis>& hyps,
                                            double l_l1, double l_giou, int layer_idx) {
  int n = static_cast<int>(targets.size());
  if (static_cast<int>(hyps.size()) != n)
    throw std::invalid_argument("layer " + std::to_string(layer_idx) + " has " +
                                std::to_string(hyps.size()) + " slots for " + std::to_string(n) +
                                " targets");
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double c = rel_cost(targets[i], hyps[j], l_l1, l_giou);
      if (!std::isfinite(c))
        throw std::domain_error("non-finite matching cost at layer " + std::to_string(layer_idx) +
                                ", target " + std::to_string(i) + ", slot " + std::to_string(j));
      m[i][j] = c;
    }
  return m;
}

}  // namespace

std::vector<int> joint_match(const std::vector<TargetTriplet>& targets,
                             const PredictionSet& preds, double lambda_l1, double lambda_giou) {
  if (preds.per_layer.empty()) throw std::invalid_argument("prediction set has no layers");
  int n = static_cast<int>(targets.size());
  std::vector<std::vector<double>> summed(n, std::vector<double>(n, 0.0));
  for (size_t t = 0; t < preds.per_layer.size(); ++t) {
    std::vector<std::vector<double>> m =
        layer_cost(targets, preds.per_layer[t], lambda_l1, lambda_giou, static_cast<int>(t));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) summed[i][j] += m[i][j];
  }
  return min_cost_assignment(summed);
}

std::vector<std::vector<int>> per_layer_match(const std::vector<TargetTriplet>& targets,
                                              const PredictionSet& preds, double lambda_l1,
                                              double lambda_giou) {
  if (preds.per_layer.empty()) throw std::invalid_argument("prediction set has no layers");
  std::vector<std::vector<int>> out;
  out.reserve(preds.per_layer.size());
  for (size_t t = 0; t < preds.per_layer.size(); ++t)
    out.push_back(min_cost_assignment(
        layer_cost(targets, preds.per_layer[t], lambda_l1, lambda_giou, static_cast<int>(t))));
  return out;
}

LossBreakdown layer_losses(Tape& t, const ForwardResult& fwd,
                           const std::vector<TargetTriplet>& targets,
                           const std::vector<int>& sigma, const LossParams& params) {
  int n = static_cast<int>(targets.size());
  if (fwd.layers.empty()) throw std::invalid_argument("no layers to score");
  if (static_cast<int>(sigma.size()) != n) throw std::invalid_argument("assignment size mismatch");
  std::vector<int> target_of(n, -1);
  for (int i = 0; i < n; ++i) {
    if (sigma[i] < 0 || sigma[i] >= n || target_of[sigma[i]] != -1)
      throw std::invalid_argument("assignment is not a permutation");
    target_of[sigma[i]] = i;
  }

  // matched real rows and their target boxes, in slot order of sigma
  std::vector<int> real_targets;
  for (int i = 0; i < n; ++i)
    if (!targets[i].empty()) real_targets.push_back(i);

  LossBreakdown bd;
  Var total = t.input(nn::Tensor(1, 1));
  for (size_t layer = 0; layer < fwd.layers.size(); ++layer) {
    const LayerOutput& lo = fwd.layers[layer];
    std::array<LossTerms, 3> terms;
    for (int comp = 0; comp < 3; ++comp) {
      Var logp = comp == 0 ? lo.s_logp : comp == 1 ? lo.o_logp : lo.p_logp;
      Var box = comp == 0 ? lo.s_box : comp == 1 ? lo.o_box : lo.p_box;
      int n_cols = t.val(logp).cols;
      int empty_class = n_cols - 1;
      if (t.val(logp).rows != n) throw std::invalid_argument("slot count mismatch");

      // one (slot, class) pick per slot; empty slots target the trailing
      // class at eos weight, predicate targets scale by their class weight
      std::vector<std::pair<int, int>> coords(n);
      nn::Tensor weights(n, 1);
      for (int i = 0; i < n; ++i) {
        const TargetTriplet& tgt = targets[i];
        int slot = sigma[i];
        int cls;
        float w;
        if (tgt.empty()) {
          cls = empty_class;
          w = static_cast<float>(params.eos_coef);
        } else {
          cls = comp == 0 ? tgt.s_class : comp == 1 ? tgt.o_class : tgt.p_class;
          w = 1.f;
          if (comp == 2 && !params.predicate_weights.empty()) {
            if (cls >= static_cast<int>(params.predicate_weights.size()))
              throw std::runtime_error("predicate class " + std::to_string(cls) +
                                       " outside the weight table");
            w = params.predicate_weights[cls];
          }
        }
        if (cls < 0 || cls >= n_cols)
          throw std::invalid_argument("target class out of range for head");
        if (!std::isfinite(w))
          throw std::runtime_error("non-finite class weight for predicate class " +
                                   std::to_string(cls) + " (zero training frequency) at slot " +
                                   std::to_string(slot));
        coords[slot] = {slot, cls};
        weights.at(slot, 0) = w;
      }

      Var picked = t.pick(logp, coords);
      {
        nn::Tensor vals = t.val(picked);  // copied: later ops grow the tape
        for (int j = 0; j < n; ++j)
          if (!std::isfinite(vals.at(j, 0)))
            throw std::runtime_error(std::string("non-finite class term at layer ") +
                                     std::to_string(layer) + ", " + component_name(comp) +
                                     ", slot " + std::to_string(j) + ", class " +
                                     std::to_string(coords[j].second));
      }
      Var cls_term = t.scale(t.sum_all(t.mul(picked, t.input(weights))), -1.f);
      terms[comp].cls = t.val(cls_term).at(0, 0);
      Var comp_total = cls_term;

      if (!real_targets.empty()) {
        std::vector<int> rows;
        nn::Tensor tgt_boxes(static_cast<int>(real_targets.size()), 4);
        nn::Tensor tgt_corners(static_cast<int>(real_targets.size()), 4);
        nn::Tensor tgt_areas(static_cast<int>(real_targets.size()), 1);
        for (size_t r = 0; r < real_targets.size(); ++r) {
          const TargetTriplet& tgt = targets[real_targets[r]];
          const BBox& b = comp == 0 ? tgt.s_box : comp == 1 ? tgt.o_box : tgt.p_box;
          rows.push_back(sigma[real_targets[r]]);
          int ri = static_cast<int>(r);
          tgt_boxes.at(ri, 0) = b.cx;
          tgt_boxes.at(ri, 1) = b.cy;
          tgt_boxes.at(ri, 2) = b.w;
          tgt_boxes.at(ri, 3) = b.h;
          CornerBox c = to_corner(b);
          tgt_corners.at(ri, 0) = c.x1;
          tgt_corners.at(ri, 1) = c.y1;
          tgt_corners.at(ri, 2) = c.x2;
          tgt_corners.at(ri, 3) = c.y2;
          tgt_areas.at(ri, 0) = b.w * b.h;
        }
        int m = static_cast<int>(rows.size());

        Var g = t.gather_rows(box, rows);
        Var l1 = t.sum_all(t.abs_(t.sub(g, t.input(tgt_boxes))));
        terms[comp].l1 = t.val(l1).at(0, 0);

        Var cx = t.slice_cols(g, 0, 1), cy = t.slice_cols(g, 1, 2);
        Var w = t.slice_cols(g, 2, 3), h = t.slice_cols(g, 3, 4);
        Var px1 = t.sub(cx, t.scale(w, 0.5f)), px2 = t.add(cx, t.scale(w, 0.5f));
        Var py1 = t.sub(cy, t.scale(h, 0.5f)), py2 = t.add(cy, t.scale(h, 0.5f));
        Var corners = t.input(tgt_corners);
        Var tx1 = t.slice_cols(corners, 0, 1), ty1 = t.slice_cols(corners, 1, 2);
        Var tx2 = t.slice_cols(corners, 2, 3), ty2 = t.slice_cols(corners, 3, 4);

        Var iw = t.relu(t.sub(t.minimum(px2, tx2), t.maximum(px1, tx1)));
        Var ih = t.relu(t.sub(t.minimum(py2, ty2), t.maximum(py1, ty1)));
        Var inter = t.mul(iw, ih);
        // predicted extents are strictly positive, so union and hull are too
        // even against degenerate targets
        Var uni = t.sub(t.add(t.mul(w, h), t.input(tgt_areas)), inter);
        Var hull = t.mul(t.sub(t.maximum(px2, tx2), t.minimum(px1, tx1)),
                         t.sub(t.maximum(py2, ty2), t.minimum(py1, ty1)));
        Var gi = t.sub(t.div(inter, uni), t.div(t.sub(hull, uni), hull));
        Var gi_term = t.sum_all(t.sub(t.input(nn::Tensor::full(m, 1, 1.f)), gi));
        terms[comp].giou = t.val(gi_term).at(0, 0);

        comp_total = t.add(comp_total, t.scale(l1, static_cast<float>(params.lambda_l1)));
        comp_total = t.add(comp_total, t.scale(gi_term, static_cast<float>(params.lambda_giou)));
      }
      total = t.add(total, comp_total);
    }
    bd.per_layer.push_back(terms);
  }

  bd.total_var = total;
  bd.total = 0.0;
  for (const auto& layer : bd.per_layer)
    for (const LossTerms& terms : layer)
      bd.total += terms.cls + params.lambda_l1 * terms.l1 + params.lambda_giou * terms.giou;
  return bd;
}

}  // namespace sgg
