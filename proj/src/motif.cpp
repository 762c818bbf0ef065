#include "sgg/motif.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sgg {

void MotifConfig::validate() const {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be at least 1");
  if (d_feat < 1) throw std::invalid_argument("d_feat must be positive");
  if (n_heads < 1 || d_feat % n_heads != 0)
    throw std::invalid_argument("d_feat must divide evenly over n_heads");
  if (d_context < 2 || d_context % 2 != 0)
    throw std::invalid_argument("d_context must be positive and even");
  if (d_label < 1) throw std::invalid_argument("d_label must be positive");
  if (label_noise < 0.f || label_noise > 1.f)
    throw std::invalid_argument("label_noise must lie in [0, 1]");
  if (box_jitter < 0.f) throw std::invalid_argument("box_jitter must be non-negative");
  if (feature_noise < 0.f) throw std::invalid_argument("feature_noise must be non-negative");
}

void DetectorOutput::validate() const {
  int n = n_entities();
  if (n < 1) throw std::invalid_argument("detector output has no entities");
  if (n_entity_classes < 1 || n_predicate_classes < 1)
    throw std::invalid_argument("class counts must be positive");
  if (static_cast<int>(labels.size()) != n || static_cast<int>(roi.size()) != n ||
      static_cast<int>(target_class.size()) != n)
    throw std::invalid_argument("per-entity array sizes disagree");
  int expected_pairs = n * (n - 1);
  if (n_pairs() != expected_pairs || static_cast<int>(uni.size()) != n_pairs() ||
      static_cast<int>(target_predicate.size()) != n_pairs())
    throw std::invalid_argument("per-pair array sizes disagree");

  size_t d = roi.empty() ? 0 : roi[0].size();
  if (d < 1) throw std::invalid_argument("roi features are empty");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(labels[i].size()) != n_entity_classes)
      throw std::invalid_argument("label distribution width disagrees with the class count");
    for (float v : labels[i])
      if (!std::isfinite(v)) throw std::invalid_argument("label distribution is not finite");
    if (roi[i].size() != d) throw std::invalid_argument("roi feature widths disagree");
    for (float v : roi[i])
      if (!std::isfinite(v)) throw std::invalid_argument("roi features are not finite");
    if (target_class[i] < 0 || target_class[i] >= n_entity_classes)
      throw std::invalid_argument("entity target class out of range");
  }
  std::vector<bool> seen(static_cast<size_t>(n) * n, false);
  for (int p = 0; p < n_pairs(); ++p) {
    auto [i, j] = pairs[p];
    if (i < 0 || i >= n || j < 0 || j >= n || i == j)
      throw std::invalid_argument("pair indices out of range");
    size_t k = static_cast<size_t>(i) * n + j;
    if (seen[k]) throw std::invalid_argument("duplicate ordered pair");
    seen[k] = true;
    if (uni[p].size() != d) throw std::invalid_argument("union feature widths disagree");
    for (float v : uni[p])
      if (!std::isfinite(v)) throw std::invalid_argument("union features are not finite");
    if (target_predicate[p] < 0 || target_predicate[p] > n_predicate_classes)
      throw std::invalid_argument("pair target predicate out of range");
  }
}

DetectorOutput synthesize_detector(const SceneGraph& gt, int eta, int upsilon,
                                   const MotifConfig& cfg, Rng& rng) {
  cfg.validate();
  if (eta < 1 || upsilon < 1) throw std::invalid_argument("class counts must be positive");
  if (!gt.entities || gt.entities->empty())
    throw std::invalid_argument("scene has no entity list");
  const auto& ents = *gt.entities;
  int n = static_cast<int>(ents.size());
  if (n > kMaxDetectorEntities) throw std::invalid_argument("too many entities for a scene");
  if (cfg.d_feat < 8 || cfg.d_feat < 4 + eta)
    throw std::invalid_argument("d_feat too small for the feature layout");
  for (const Triplet& tr : gt.triplets)
    if (tr.subject_node < 0 || tr.subject_node >= n || tr.object_node < 0 || tr.object_node >= n)
      throw std::invalid_argument("triplet node references out of range");

  // a noisy detector view of the ground truth: jittered boxes, flipped labels
  std::vector<BBox> jb(n);
  std::vector<int> dl(n);
  for (int i = 0; i < n; ++i) {
    BBox b = ents[i].box;
    b.cx += cfg.box_jitter * b.w * static_cast<float>(rng.normal());
    b.cy += cfg.box_jitter * b.h * static_cast<float>(rng.normal());
    b.w *= std::exp(cfg.box_jitter * static_cast<float>(rng.normal()));
    b.h *= std::exp(cfg.box_jitter * static_cast<float>(rng.normal()));
    b.w = std::clamp(b.w, 1e-3f, 1.f);
    b.h = std::clamp(b.h, 1e-3f, 1.f);
    b.cx = std::clamp(b.cx, 0.f, 1.f);
    b.cy = std::clamp(b.cy, 0.f, 1.f);
    jb[i] = b;
    int cls = ents[i].class_id;
    if (rng.uniform() < cfg.label_noise && eta > 1)
      cls = (cls + 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(eta - 1)))) % eta;
    dl[i] = cls;
  }

  // entities enter the recurrent passes left to right by detected center x
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return jb[a].cx < jb[b].cx; });

  DetectorOutput det;
  det.n_entity_classes = eta;
  det.n_predicate_classes = upsilon;
  for (int k = 0; k < n; ++k) {
    int i = order[k];
    det.boxes.push_back(jb[i]);
    std::vector<float> l(eta, 0.f);
    l[dl[i]] = 1.f;
    det.labels.push_back(std::move(l));
    det.target_class.push_back(ents[i].class_id);

    std::vector<float> z(cfg.d_feat, 0.f);
    z[0] = jb[i].cx;
    z[1] = jb[i].cy;
    z[2] = jb[i].w;
    z[3] = jb[i].h;
    z[4 + ents[i].class_id] = 1.f;
    for (float& v : z) v += cfg.feature_noise * static_cast<float>(rng.normal());
    det.roi.push_back(std::move(z));
  }

  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      det.pairs.push_back({a, b});
      const BBox& bi = det.boxes[a];
      const BBox& bj = det.boxes[b];
      BBox ub = predicate_box_of(bi, bj);
      std::vector<float> u(cfg.d_feat, 0.f);
      u[0] = ub.cx;
      u[1] = ub.cy;
      u[2] = ub.w;
      u[3] = ub.h;
      u[4] = bj.cx - bi.cx;
      u[5] = bj.cy - bi.cy;
      u[6] = iou(bi, bj);
      u[7] = bi.area() - bj.area();
      for (float& v : u) v += cfg.feature_noise * static_cast<float>(rng.normal());
      det.uni.push_back(std::move(u));

      int oi = order[a], oj = order[b];
      int pred = upsilon;  // no relation unless the ground truth says otherwise
      for (const Triplet& tr : gt.triplets)
        if (tr.subject_node == oi && tr.object_node == oj) {
          pred = tr.predicate_class;
          break;
        }
      det.target_predicate.push_back(pred);
    }

  det.validate();
  return det;
}

MotifModel MotifModel::make(nn::ParamStore& ps, const std::string& prefix,
                            const MotifConfig& cfg, int eta, int upsilon, Rng& rng) {
  cfg.validate();
  if (eta < 1 || upsilon < 1) throw std::invalid_argument("class counts must be positive");

  MotifModel m;
  m.cfg = cfg;
  m.n_entity_classes = eta;
  m.n_predicate_classes = upsilon;

  // shared trunk first: a deeper model then draws identical leading-step
  // weights as a shallower one under the same seed
  m.label_embed = &ps.add_normal(prefix + ".embed", eta + 1, cfg.d_label, 0.1f, rng);
  m.w_e = nn::Linear::make(ps, prefix + ".we", cfg.d_feat, eta, rng);
  m.w_p = nn::Linear::make(ps, prefix + ".wp", cfg.d_feat, upsilon + 1, rng);
  m.cond_z_h = CondModule::make(ps, prefix + ".cas.z_h", cfg.d_feat, cfg.n_heads, rng);
  m.cond_z_g = CondModule::make(ps, prefix + ".cas.z_g", cfg.d_feat, cfg.n_heads, rng);
  m.cond_z_u = CondModule::make(ps, prefix + ".cas.z_u", cfg.d_feat, cfg.n_heads, rng);
  m.cond_u_h = CondModule::make(ps, prefix + ".cas.u_h", cfg.d_feat, cfg.n_heads, rng);
  m.cond_u_g = CondModule::make(ps, prefix + ".cas.u_g", cfg.d_feat, cfg.n_heads, rng);
  m.cond_u_z = CondModule::make(ps, prefix + ".cas.u_z", cfg.d_feat, cfg.n_heads, rng);

  for (int s = 1; s <= cfg.n_steps; ++s) {
    std::string sp = prefix + ".step" + std::to_string(s);
    StepNets sn;
    sn.ent_ctx = nn::BiLSTM::make(ps, sp + ".ent", cfg.d_feat + eta, cfg.d_context / 2, rng);
    sn.decode = nn::LSTMCell::make(ps, sp + ".dec", cfg.d_context + cfg.d_label, cfg.d_feat, rng);
    sn.prd_ctx =
        nn::BiLSTM::make(ps, sp + ".prd", cfg.d_context + cfg.d_label, cfg.d_context / 2, rng);
    sn.w_h = nn::Linear::make(ps, sp + ".wh", cfg.d_context, cfg.d_feat, rng);
    sn.w_b = nn::Linear::make(ps, sp + ".wb", cfg.d_context, cfg.d_feat, rng);
    m.steps.push_back(sn);
  }
  return m;
}

Var MotifModel::entity_context(Tape& t, int step, Var z, Var det_labels, int n) const {
  if (n < 1) throw std::invalid_argument("entity context needs a non-empty entity list");
  return steps.at(step).ent_ctx(t, t.concat_cols({z, det_labels}), n);
}

MotifModel::Decode MotifModel::entity_decode(Tape& t, int step, Var contexts, int n,
                                             std::optional<Var> h_prev,
                                             const std::vector<int>* teacher) const {
  if (n < 1) throw std::invalid_argument("entity decode needs a non-empty entity list");
  if (teacher && static_cast<int>(teacher->size()) != n)
    throw std::invalid_argument("teacher label count disagrees with the entity count");
  const nn::LSTMCell& cell = steps.at(step).decode;
  nn::LSTMCell::State st{t.input(nn::Tensor(1, cfg.d_feat)), t.input(nn::Tensor(1, cfg.d_feat))};
  Var emb = t.param(*label_embed);

  int fed = n_entity_classes;  // begin-label row
  std::vector<Var> hrows, lrows;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    Var x = t.concat_cols({t.slice_rows(contexts, i, i + 1), t.gather_rows(emb, {fed})});
    st = cell.step(t, x, st);
    // residual on the running representation; the cell keeps its own state
    Var hi = h_prev ? t.add(st.h, t.slice_rows(*h_prev, i, i + 1)) : st.h;
    Var li = w_e(t, hi);
    // the tape grows before these values are used again; copy them out
    nn::Tensor lv = t.val(li);
    int best = 0;
    for (int c = 1; c < lv.cols; ++c)
      if (lv.at(0, c) > lv.at(0, best)) best = c;
    labels[i] = best;
    fed = teacher ? (*teacher)[i] : best;
    hrows.push_back(hi);
    lrows.push_back(li);
  }
  Decode out;
  out.h = t.concat_rows(hrows);
  out.logits = t.concat_rows(lrows);
  out.labels = std::move(labels);
  return out;
}

MotifModel::PairScore MotifModel::predicate_context_and_score(
    Tape& t, int step, Var contexts, const std::vector<int>& labels, Var u,
    const std::vector<std::pair<int, int>>& pairs, std::optional<Var> g_prev, int n) const {
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("label count disagrees with the entity count");
  if (pairs.empty()) throw std::invalid_argument("no entity pairs to score");
  for (int l : labels)
    if (l < 0 || l >= n_entity_classes) throw std::invalid_argument("entity label out of range");

  const StepNets& sn = steps.at(step);
  Var emb_rows = t.gather_rows(t.param(*label_embed), labels);
  Var cp = sn.prd_ctx(t, t.concat_cols({contexts, emb_rows}), n);
  Var hp = sn.w_h(t, cp);
  Var bp = sn.w_b(t, cp);

  std::vector<int> subj, obj;
  subj.reserve(pairs.size());
  obj.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    subj.push_back(i);
    obj.push_back(j);
  }
  Var delta = t.mul(t.mul(t.gather_rows(hp, subj), t.gather_rows(bp, obj)), u);
  PairScore out;
  out.context = cp;
  out.g = g_prev ? t.add(*g_prev, delta) : delta;
  out.logits = w_p(t, out.g);
  return out;
}

std::pair<Var, Var> MotifModel::cas_update(Tape& t, const StepOutput& prev) const {
  Var z = cond_z_h(t, prev.z, prev.z, prev.h, prev.h);
  z = cond_z_g(t, z, z, prev.g, prev.g);
  z = cond_z_u(t, z, z, prev.u, prev.u);
  Var u = cond_u_h(t, prev.u, prev.u, prev.h, prev.h);
  u = cond_u_g(t, u, u, prev.g, prev.g);
  u = cond_u_z(t, u, u, prev.z, prev.z);
  return {z, u};
}

MotifModel::StepOutput MotifModel::residual_step(Tape& t, int step, Var z, Var u, Var det_labels,
                                                 const std::vector<std::pair<int, int>>& pairs,
                                                 const StepOutput* prev,
                                                 const std::vector<int>* teacher) const {
  int n = t.val(z).rows;
  Var ce = entity_context(t, step, z, det_labels, n);
  std::optional<Var> hp = prev ? std::optional<Var>(prev->h) : std::nullopt;
  Decode dec = entity_decode(t, step, ce, n, hp, teacher);
  const std::vector<int>& lab = teacher ? *teacher : dec.labels;
  std::optional<Var> gp = prev ? std::optional<Var>(prev->g) : std::nullopt;
  PairScore score = predicate_context_and_score(t, step, ce, lab, u, pairs, gp, n);

  StepOutput out;
  out.z = z;
  out.u = u;
  out.h = dec.h;
  out.g = score.g;
  out.ent_logits = dec.logits;
  out.ent_prob = t.softmax_rows(dec.logits);
  out.ent_logp = t.log_softmax_rows(dec.logits);
  out.prd_logits = score.logits;
  out.prd_prob = t.softmax_rows(score.logits);
  out.prd_logp = t.log_softmax_rows(score.logits);
  out.labels = dec.labels;
  return out;
}

MotifModel::Forward MotifModel::forward(Tape& t, const DetectorOutput& det,
                                        bool teacher_forcing) const {
  det.validate();
  if (det.n_entity_classes != n_entity_classes ||
      det.n_predicate_classes != n_predicate_classes)
    throw std::invalid_argument("detector class counts do not match the model");
  int n = det.n_entities();
  if (n < 2) throw std::invalid_argument("refinement needs at least two entities");
  if (static_cast<int>(det.roi[0].size()) != cfg.d_feat)
    throw std::invalid_argument("feature width does not match the model");

  nn::Tensor Z(n, cfg.d_feat), L(n, n_entity_classes), U(det.n_pairs(), cfg.d_feat);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < cfg.d_feat; ++c) Z.at(i, c) = det.roi[i][c];
    for (int c = 0; c < n_entity_classes; ++c) L.at(i, c) = det.labels[i][c];
  }
  for (int p = 0; p < det.n_pairs(); ++p)
    for (int c = 0; c < cfg.d_feat; ++c) U.at(p, c) = det.uni[p][c];

  Var z0 = t.input(std::move(Z));
  Var labels = t.input(std::move(L));
  Var u0 = t.input(std::move(U));
  const std::vector<int>* teacher = teacher_forcing ? &det.target_class : nullptr;

  Forward fwd;
  fwd.steps.reserve(cfg.n_steps);
  for (int s = 0; s < cfg.n_steps; ++s) {
    const StepOutput* prev = fwd.steps.empty() ? nullptr : &fwd.steps.back();
    Var zs = z0, us = u0;
    if (prev) std::tie(zs, us) = cas_update(t, *prev);
    fwd.steps.push_back(residual_step(t, s, zs, us, labels, det.pairs, prev, teacher));
  }
  return fwd;
}

PredictionSet MotifModel::materialize(Tape& t, const Forward& fwd,
                                      const DetectorOutput& det) const {
  PredictionSet out;
  out.per_layer.resize(fwd.steps.size());
  for (size_t s = 0; s < fwd.steps.size(); ++s) {
    nn::Tensor ep = t.val(fwd.steps[s].ent_prob);
    nn::Tensor pp = t.val(fwd.steps[s].prd_prob);
    out.per_layer[s].reserve(det.pairs.size());
    for (int p = 0; p < det.n_pairs(); ++p) {
      auto [i, j] = det.pairs[p];
      TripletHypothesis h;
      h.s_dist.assign(ep.cols + 1, 0.f);
      h.o_dist.assign(ep.cols + 1, 0.f);
      for (int c = 0; c < ep.cols; ++c) {
        h.s_dist[c] = ep.at(i, c);
        h.o_dist[c] = ep.at(j, c);
      }
      h.p_dist.assign(pp.cols, 0.f);
      for (int c = 0; c < pp.cols; ++c) h.p_dist[c] = pp.at(p, c);
      h.s_box = det.boxes[i];
      h.o_box = det.boxes[j];
      h.p_box = predicate_box_of(h.s_box, h.o_box);
      out.per_layer[s].push_back(std::move(h));
    }
  }
  return out;
}

namespace {

void collect(const nn::Linear& l, std::vector<nn::Parameter*>& out) {
  out.push_back(l.W);
  out.push_back(l.b);
}
void collect(const nn::LSTMCell& c, std::vector<nn::Parameter*>& out) {
  out.push_back(c.w_ih);
  out.push_back(c.w_hh);
  out.push_back(c.b);
}
void collect(const nn::BiLSTM& b, std::vector<nn::Parameter*>& out) {
  collect(b.fwd, out);
  collect(b.bwd, out);
}
void collect(const MotifModel::CondModule& c, std::vector<nn::Parameter*>& out) {
  collect(c.attn.wq, out);
  collect(c.attn.wk, out);
  collect(c.attn.wv, out);
  collect(c.attn.wo, out);
  collect(c.ffn.l1, out);
  collect(c.ffn.l2, out);
}
void collect(const MotifModel::StepNets& s, std::vector<nn::Parameter*>& out) {
  collect(s.ent_ctx, out);
  collect(s.decode, out);
  collect(s.prd_ctx, out);
  collect(s.w_h, out);
  collect(s.w_b, out);
}

}  // namespace

std::vector<nn::Parameter*> MotifModel::refinement_parameters() const {
  std::vector<nn::Parameter*> out;
  for (size_t s = 1; s < steps.size(); ++s) collect(steps[s], out);
  for (const CondModule* c :
       {&cond_z_h, &cond_z_g, &cond_z_u, &cond_u_h, &cond_u_g, &cond_u_z})
    collect(*c, out);
  return out;
}

Var motif_loss(Tape& t, const MotifModel::Forward& fwd, const DetectorOutput& det,
               const std::vector<float>* predicate_weights) {
  if (fwd.steps.empty()) throw std::invalid_argument("forward pass has no steps");
  int n = det.n_entities(), pairs = det.n_pairs();
  if (pairs < 1) throw std::invalid_argument("no pairs to supervise");
  if (predicate_weights) {
    if (static_cast<int>(predicate_weights->size()) != det.n_predicate_classes + 1)
      throw std::invalid_argument("predicate weight count disagrees with the class count");
    for (float w : *predicate_weights)
      if (!(w > 0.f)) throw std::invalid_argument("predicate weights must be positive");
  }

  std::vector<std::pair<int, int>> ecoords(n), pcoords(pairs);
  for (int i = 0; i < n; ++i) ecoords[i] = {i, det.target_class[i]};
  for (int p = 0; p < pairs; ++p) pcoords[p] = {p, det.target_predicate[p]};

  Var total = t.input(nn::Tensor(1, 1));
  for (const MotifModel::StepOutput& s : fwd.steps) {
    Var ent = t.scale(t.mean_all(t.pick(s.ent_logp, ecoords)), -1.f);
    Var picked = t.pick(s.prd_logp, pcoords);
    Var prd;
    if (predicate_weights) {
      nn::Tensor wc(pairs, 1);
      double wsum = 0.0;
      for (int p = 0; p < pairs; ++p) {
        wc.at(p, 0) = (*predicate_weights)[det.target_predicate[p]];
        wsum += wc.at(p, 0);
      }
      prd = t.scale(t.sum_all(t.mul(picked, t.input(std::move(wc)))),
                    -1.f / static_cast<float>(wsum));
    } else {
      prd = t.scale(t.mean_all(picked), -1.f);
    }
    total = t.add(total, t.add(ent, prd));
  }
  return total;
}

}  // namespace sgg
