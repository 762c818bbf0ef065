#include "sgg/decoder.hpp"

#include <stdexcept>

namespace sgg {

void DecoderConfig::validate() const {
  if (n_queries < 1) throw std::invalid_argument("DecoderConfig: n_queries must be >= 1");
  if (n_layers < 1) throw std::invalid_argument("DecoderConfig: n_layers must be >= 1");
  if (d_model < 4 || n_heads < 1 || d_model % n_heads != 0)
    throw std::invalid_argument("DecoderConfig: n_heads must divide d_model");
}

TripleDecoder::CondModule TripleDecoder::CondModule::make(nn::ParamStore& ps,
                                                          const std::string& prefix, int d_model,
                                                          int n_heads, Rng& rng) {
  CondModule m;
  m.attn = nn::MultiHeadAttention::make(ps, prefix + ".attn", d_model, n_heads, rng);
  m.ffn = nn::FeedForward::make(ps, prefix + ".ffn", d_model, rng);
  return m;
}

Var TripleDecoder::CondModule::operator()(Tape& t, Var base, Var query, Var keys,
                                          Var values) const {
  return t.add(base, ffn(t, attn(t, query, keys, values)));
}

namespace {

TripleDecoder::Heads make_heads(nn::ParamStore& ps, const std::string& prefix, int d,
                                int classes, Rng& rng) {
  TripleDecoder::Heads h;
  h.norm = nn::LayerNorm::make(ps, prefix + ".norm", d);
  h.cls = nn::Linear::make(ps, prefix + ".cls", d, classes, rng);
  h.box1 = nn::Linear::make(ps, prefix + ".box1", d, d, rng);
  h.box2 = nn::Linear::make(ps, prefix + ".box2", d, d, rng);
  h.box3 = nn::Linear::make(ps, prefix + ".box3", d, 4, rng);
  return h;
}

// One pre-norm decoder block: self-attention with additive positional
// encodings on queries and keys, cross-attention into the encoded scene,
// then the feed-forward, all residual.
Var decode_block(Tape& t, const TripleDecoder::Block& b, Var q_hat, Var p_hat, Var z) {
  Var x = q_hat;
  Var n1 = b.ln_self(t, x);
  Var qk = t.add(n1, p_hat);
  x = t.add(x, b.self_attn(t, qk, qk, n1));
  Var n2 = b.ln_cross(t, x);
  x = t.add(x, b.cross_attn(t, t.add(n2, p_hat), z, z));
  x = t.add(x, b.ffn(t, b.ln_ffn(t, x)));
  return x;
}

}  // namespace

TripleDecoder TripleDecoder::make(nn::ParamStore& ps, const std::string& prefix,
                                  const DecoderConfig& cfg, int eta, int upsilon, Rng& rng) {
  cfg.validate();
  if (eta < 1 || upsilon < 1)
    throw std::invalid_argument("TripleDecoder: class counts must be positive");
  TripleDecoder d;
  d.cfg = cfg;
  d.n_entity_classes = eta;
  d.n_predicate_classes = upsilon;

  const std::array<std::string, 3> dec{"s", "o", "p"};
  d.pos_s = &ps.add_normal(prefix + ".s.pos", cfg.n_queries, cfg.d_model, 1.f, rng);
  d.pos_o = &ps.add_normal(prefix + ".o.pos", cfg.n_queries, cfg.d_model, 1.f, rng);
  d.pos_p = &ps.add_normal(prefix + ".p.pos", cfg.n_queries, cfg.d_model, 1.f, rng);

  for (int k = 0; k < 3; ++k) {
    for (int l = 0; l < cfg.n_layers; ++l) {
      std::string bp = prefix + "." + dec[k] + ".layer" + std::to_string(l);
      Block b;
      b.ln_self = nn::LayerNorm::make(ps, bp + ".ln_self", cfg.d_model);
      b.self_attn = nn::MultiHeadAttention::make(ps, bp + ".self", cfg.d_model, cfg.n_heads, rng);
      b.ln_cross = nn::LayerNorm::make(ps, bp + ".ln_cross", cfg.d_model);
      b.cross_attn = nn::MultiHeadAttention::make(ps, bp + ".cross", cfg.d_model, cfg.n_heads, rng);
      b.ln_ffn = nn::LayerNorm::make(ps, bp + ".ln_ffn", cfg.d_model);
      b.ffn = nn::FeedForward::make(ps, bp + ".ffn", cfg.d_model, rng);
      d.blocks[k].push_back(b);
    }
  }

  d.cws_o = CondModule::make(ps, prefix + ".cws_o", cfg.d_model, cfg.n_heads, rng);
  d.cws_p = CondModule::make(ps, prefix + ".cws_p", cfg.d_model, cfg.n_heads, rng);
  d.cas_s = CondModule::make(ps, prefix + ".cas_s", cfg.d_model, cfg.n_heads, rng);
  d.cas_o = CondModule::make(ps, prefix + ".cas_o", cfg.d_model, cfg.n_heads, rng);
  d.cas_p = CondModule::make(ps, prefix + ".cas_p", cfg.d_model, cfg.n_heads, rng);

  d.head_s = make_heads(ps, prefix + ".s.head", cfg.d_model, eta + 1, rng);
  d.head_o = make_heads(ps, prefix + ".o.head", cfg.d_model, eta + 1, rng);
  d.head_p = make_heads(ps, prefix + ".p.head", cfg.d_model, upsilon + 1, rng);
  return d;
}

ForwardResult TripleDecoder::forward(Tape& t, Var z) const {
  int n = cfg.n_queries, d = cfg.d_model;
  Var q_s = t.input(Tensor(n, d));  // initial queries are zeros
  Var q_o = q_s, q_p = q_s;
  Var ps = t.param(*pos_s), po = t.param(*pos_o), pp = t.param(*pos_p);

  auto apply_heads = [&](const Heads& h, Var q, Var& logits, Var& prob, Var& logp, Var& box) {
    Var nq = h.norm(t, q);
    logits = h.cls(t, nq);
    prob = t.softmax_rows(logits);
    logp = t.log_softmax_rows(logits);
    box = t.sigmoid(h.box3(t, t.relu(h.box2(t, t.relu(h.box1(t, nq))))));
  };

  ForwardResult out;
  for (int step = 0; step < cfg.n_layers; ++step) {
    Var qs_hat = q_s, qo_hat = q_o, qp_hat = q_p;
    if (cfg.enable_cas) {
      // conditioned on the previous step's outputs; at the first step these
      // are the zero queries
      Var qt_s = t.add(q_s, ps), qt_o = t.add(q_o, po), qt_p = t.add(q_p, pp);
      Var keys = t.concat_rows({qt_s, qt_o, qt_p});
      Var values = t.concat_rows({q_s, q_o, q_p});
      qs_hat = cas_s(t, q_s, qt_s, keys, values);
      qo_hat = cas_o(t, q_o, qt_o, keys, values);
      qp_hat = cas_p(t, q_p, qt_p, keys, values);
    }

    // subject first: its positional encodings are never conditioned
    Var new_qs = decode_block(t, blocks[0][step], qs_hat, ps, z);

    Var po_hat = po, pp_hat = pp;
    if (cfg.enable_cws) {
      Var qt_s = t.add(new_qs, ps);
      po_hat = cws_o(t, po, po, qt_s, new_qs);
    }
    Var new_qo = decode_block(t, blocks[1][step], qo_hat, po_hat, z);

    if (cfg.enable_cws) {
      Var qt_s = t.add(new_qs, ps);
      Var qt_o = t.add(new_qo, po);
      Var keys = t.concat_rows({qt_s, qt_o});
      Var values = t.concat_rows({new_qs, new_qo});
      pp_hat = cws_p(t, pp, pp, keys, values);
    }
    Var new_qp = decode_block(t, blocks[2][step], qp_hat, pp_hat, z);

    LayerOutput lo;
    lo.q_s = new_qs;
    lo.q_o = new_qo;
    lo.q_p = new_qp;
    apply_heads(head_s, new_qs, lo.s_logits, lo.s_prob, lo.s_logp, lo.s_box);
    apply_heads(head_o, new_qo, lo.o_logits, lo.o_prob, lo.o_logp, lo.o_box);
    apply_heads(head_p, new_qp, lo.p_logits, lo.p_prob, lo.p_logp, lo.p_box);
    out.layers.push_back(lo);

    q_s = new_qs;
    q_o = new_qo;
    q_p = new_qp;
  }
  return out;
}

PredictionSet TripleDecoder::materialize(Tape& t, const ForwardResult& fwd) const {
  PredictionSet set;
  for (const LayerOutput& lo : fwd.layers) {
    const Tensor& sp = t.val(lo.s_prob);
    const Tensor& op = t.val(lo.o_prob);
    const Tensor& pp = t.val(lo.p_prob);
    const Tensor& sb = t.val(lo.s_box);
    const Tensor& ob = t.val(lo.o_box);
    const Tensor& pb = t.val(lo.p_box);
    std::vector<TripletHypothesis> slots(cfg.n_queries);
    for (int i = 0; i < cfg.n_queries; ++i) {
      TripletHypothesis& h = slots[i];
      h.s_dist.assign(sp.data.begin() + size_t(i) * sp.cols,
                      sp.data.begin() + size_t(i + 1) * sp.cols);
      h.o_dist.assign(op.data.begin() + size_t(i) * op.cols,
                      op.data.begin() + size_t(i + 1) * op.cols);
      h.p_dist.assign(pp.data.begin() + size_t(i) * pp.cols,
                      pp.data.begin() + size_t(i + 1) * pp.cols);
      h.s_box = {sb.at(i, 0), sb.at(i, 1), sb.at(i, 2), sb.at(i, 3)};
      h.o_box = {ob.at(i, 0), ob.at(i, 1), ob.at(i, 2), ob.at(i, 3)};
      h.p_box = {pb.at(i, 0), pb.at(i, 1), pb.at(i, 2), pb.at(i, 3)};
    }
    set.per_layer.push_back(std::move(slots));
  }
  return set;
}

}  // namespace sgg
