#include "gpit/prior.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gpit {

namespace {

std::string block_prefix(int b) { return "prior.b" + std::to_string(b); }

}  // namespace

void init_prior_params(ParamStore& store, const PriorConfig& cfg, Rng& rng) {
  const Index w = cfg.width;
  const Index in = cfg.dx() + cfg.time_dim;
  store.add("prior.embed.w", uniform_init(in, w, in, rng));
  store.add("prior.embed.b", uniform_init(1, w, in, rng, 1));
  store.add("prior.slot_emb", uniform_init(cfg.n_slots, w, w, rng));
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = block_prefix(b);
    store.add(p + ".wk", uniform_init(cfg.cond_dim, w, cfg.cond_dim, rng));
    store.add(p + ".wv", uniform_init(cfg.cond_dim, w, cfg.cond_dim, rng));
    store.add(p + ".ln1.gain", Tensor::from_matrix(MatX<double>::Ones(1, w)));
    store.add(p + ".ln1.bias", Tensor::zeros_vec(w));
    store.add(p + ".ff.w1", uniform_init(w, cfg.ff_hidden(), w, rng));
    store.add(p + ".ff.b1", uniform_init(1, cfg.ff_hidden(), w, rng, 1));
    store.add(p + ".ff.w2", uniform_init(cfg.ff_hidden(), w, cfg.ff_hidden(), rng));
    store.add(p + ".ff.b2", uniform_init(1, w, cfg.ff_hidden(), rng, 1));
    store.add(p + ".ln2.gain", Tensor::from_matrix(MatX<double>::Ones(1, w)));
    store.add(p + ".ln2.bias", Tensor::zeros_vec(w));
  }
  store.add("prior.head.w", uniform_init(w, cfg.slot_dim, w, rng));
  store.add("prior.head.b", uniform_init(1, cfg.slot_dim, w, rng, 1));
}

PriorVars bind_prior(Tape& tape, ParamStore& store, const PriorConfig& cfg) {
  PriorVars v;
  v.cfg = cfg;
  v.embed_w = store.bind(tape, "prior.embed.w");
  v.embed_b = store.bind(tape, "prior.embed.b");
  v.slot_emb = store.bind(tape, "prior.slot_emb");
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = block_prefix(b);
    PriorBlockVars bv;
    bv.wk = store.bind(tape, p + ".wk");
    bv.wv = store.bind(tape, p + ".wv");
    bv.ln1_gain = store.bind(tape, p + ".ln1.gain");
    bv.ln1_bias = store.bind(tape, p + ".ln1.bias");
    bv.ff_w1 = store.bind(tape, p + ".ff.w1");
    bv.ff_b1 = store.bind(tape, p + ".ff.b1");
    bv.ff_w2 = store.bind(tape, p + ".ff.w2");
    bv.ff_b2 = store.bind(tape, p + ".ff.b2");
    bv.ln2_gain = store.bind(tape, p + ".ln2.gain");
    bv.ln2_bias = store.bind(tape, p + ".ln2.bias");
    v.blocks.push_back(bv);
  }
  v.head_w = store.bind(tape, "prior.head.w");
  v.head_b = store.bind(tape, "prior.head.b");
  return v;
}

Var cross_attention(Tape& tape, Var query, Var cond, Var w_k, Var w_v) {
  if (tape.value(cond).rows() < 1)
    throw std::invalid_argument("cross_attention: need at least one condition token");
  if (tape.value(cond).cols() != tape.value(w_k).rows() ||
      tape.value(cond).cols() != tape.value(w_v).rows())
    throw std::invalid_argument("cross_attention: projection width mismatch");
  Var k = matmul(cond, w_k);
  Var v = matmul(cond, w_v);
  const Index dk = tape.value(k).cols();
  if (tape.value(query).cols() != dk)
    throw std::invalid_argument("cross_attention: query width mismatch");
  Var scores = scale(matmul(query, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  return matmul(softmax_rows(scores), v);
}

MatX<double> time_features(double t, int dim) {
  if (dim % 2 != 0) throw std::invalid_argument("time_features: dim must be even");
  MatX<double> out(1, dim);
  const int half = dim / 2;
  for (int j = 0; j < half; ++j) {
    const double omega = std::pow(2.0, j) * M_PI;
    out(0, 2 * j) = std::sin(omega * t);
    out(0, 2 * j + 1) = std::cos(omega * t);
  }
  return out;
}

Var denoiser_forward(Tape& tape, const MatX<double>& z, double t, Var cond,
                     const PriorVars& vars) {
  const PriorConfig& cfg = vars.cfg;
  if (z.rows() != 1 || z.cols() != cfg.dx())
    throw std::invalid_argument("denoiser_forward: z must be 1 x " + std::to_string(cfg.dx()));
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("denoiser_forward: t must be in [0,1]");

  MatX<double> input(cfg.n_slots, cfg.dx() + cfg.time_dim);
  const MatX<double> tf = time_features(t, cfg.time_dim);
  for (int s = 0; s < cfg.n_slots; ++s) {
    input.block(s, 0, 1, cfg.dx()) = z;
    input.block(s, cfg.dx(), 1, cfg.time_dim) = tf;
  }
  Var q = add(add_rowvec(matmul(tape.leaf(std::move(input)), vars.embed_w), vars.embed_b),
              vars.slot_emb);
  for (const PriorBlockVars& b : vars.blocks) {
    Var attn = cross_attention(tape, q, cond, b.wk, b.wv);
    q = layer_norm(add(q, attn), b.ln1_gain, b.ln1_bias, cfg.ln_eps);
    Var hidden = relu(add_rowvec(matmul(q, b.ff_w1), b.ff_b1));
    Var ff = add_rowvec(matmul(hidden, b.ff_w2), b.ff_b2);
    q = layer_norm(add(q, ff), b.ln2_gain, b.ln2_bias, cfg.ln_eps);
  }
  Var out_tokens = add_rowvec(matmul(q, vars.head_w), vars.head_b);  // n_slots x slot_dim
  return reshape(out_tokens, 1, cfg.dx());
}

MatX<double> baseline_condition(const std::vector<TokenGrid>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("baseline_condition: no parts");
  const Index d = tokens[0].tokens.rows();
  const Index dim = tokens[0].tokens.cols();
  MatX<double> out(static_cast<Index>(tokens.size()) * d, dim);
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].tokens.rows() != d || tokens[i].tokens.cols() != dim)
      throw std::invalid_argument("baseline_condition: inconsistent token grid shapes");
    out.middleRows(static_cast<Index>(i) * d, d) = tokens[i].tokens.mat();
  }
  return out;
}

TrainStepOut fm_train_step(const FlowBatch& batch, ParamStore& store,
                           const AggregatorConfig& agg_cfg, const PriorConfig& prior_cfg,
                           const LossConfig& loss_cfg, bool baseline) {
  const Index bsz = batch.size();
  if (bsz < 1) throw std::invalid_argument("fm_train_step: empty batch");
  if (batch.x0.rows() != bsz || static_cast<Index>(batch.t.size()) != bsz ||
      batch.mask.rows() != bsz || static_cast<Index>(batch.conditions.size()) != bsz)
    throw std::invalid_argument("fm_train_step: inconsistent batch fields");

  Tape tape;
  Bindings bindings;
  AggregatorVars agg_vars;
  MlpVars edge_mlp;
  if (!baseline) {
    agg_vars = bind_aggregator(tape, store, agg_cfg);
    edge_mlp = bind_edge_mlp(tape, store);
  }
  PriorVars prior_vars = bind_prior(tape, store, prior_cfg);

  // name -> Var associations for gradient collection
  auto note = [&bindings](const std::string& name, Var v) { bindings.emplace(name, v); };
  if (!baseline) {
    for (int l = 0; l < agg_cfg.layers; ++l) {
      const std::string p = "aggregator.l" + std::to_string(l);
      const AggregatorLayerVars& lv = agg_vars.layers[static_cast<size_t>(l)];
      note(p + ".gat.w", lv.gat_w);
      note(p + ".gat.a", lv.gat_a);
      note(p + ".gcn.w", lv.gcn_w);
      note(p + ".sc.w1", lv.sc.w1);
      note(p + ".sc.b1", lv.sc.b1);
      note(p + ".sc.w2", lv.sc.w2);
      note(p + ".sc.b2", lv.sc.b2);
      note(p + ".cs.w1", lv.cs.w1);
      note(p + ".cs.b1", lv.cs.b1);
      note(p + ".cs.w2", lv.cs.w2);
      note(p + ".cs.b2", lv.cs.b2);
      note(p + ".ln_super.gain", lv.ln_super_gain);
      note(p + ".ln_super.bias", lv.ln_super_bias);
      note(p + ".ln_sub.gain", lv.ln_sub_gain);
      note(p + ".ln_sub.bias", lv.ln_sub_bias);
    }
    note("loss.edge.w1", edge_mlp.w1);
    note("loss.edge.b1", edge_mlp.b1);
    note("loss.edge.w2", edge_mlp.w2);
    note("loss.edge.b2", edge_mlp.b2);
  }
  note("prior.embed.w", prior_vars.embed_w);
  note("prior.embed.b", prior_vars.embed_b);
  note("prior.slot_emb", prior_vars.slot_emb);
  for (int b = 0; b < prior_cfg.blocks; ++b) {
    const std::string p = block_prefix(b);
    const PriorBlockVars& bv = prior_vars.blocks[static_cast<size_t>(b)];
    note(p + ".wk", bv.wk);
    note(p + ".wv", bv.wv);
    note(p + ".ln1.gain", bv.ln1_gain);
    note(p + ".ln1.bias", bv.ln1_bias);
    note(p + ".ff.w1", bv.ff_w1);
    note(p + ".ff.b1", bv.ff_b1);
    note(p + ".ff.w2", bv.ff_w2);
    note(p + ".ff.b2", bv.ff_b2);
    note(p + ".ln2.gain", bv.ln2_gain);
    note(p + ".ln2.bias", bv.ln2_bias);
  }
  note("prior.head.w", prior_vars.head_w);
  note("prior.head.b", prior_vars.head_b);

  Var fm_acc = tape.scalar(0.0);
  Var smooth_acc = tape.scalar(0.0);
  Var rel_acc = tape.scalar(0.0);
  for (Index i = 0; i < bsz; ++i) {
    const HierGraph& g = batch.conditions[static_cast<size_t>(i)];
    Var cond;
    if (baseline) {
      cond = tape.leaf(g.sub_block(), false, 2);
    } else {
      AggregateOut out = aggregate_forward(tape, g, agg_vars);
      cond = out.h_sub;
      Var smooth_i = smoothness_loss(tape, out.h_super, g.a_super);
      smooth_acc = add(smooth_acc, smooth_i);
      const auto pairs = all_pairs(g.n_parts);
      if (!pairs.empty()) {
        Var logits = edge_logits(tape, out.h_super, pairs, edge_mlp);
        rel_acc = add(rel_acc, relational_loss(tape, logits, g.a_super, pairs));
      }
    }
    const double ti = batch.t[static_cast<size_t>(i)];
    if (ti < 0.0 || ti > 1.0) throw std::invalid_argument("fm_train_step: t outside [0,1]");
    MatX<double> z_t = (1.0 - ti) * batch.x0.row(i) + ti * batch.x1.row(i);
    MatX<double> v_star = batch.x1.row(i) - batch.x0.row(i);
    Var pred = denoiser_forward(tape, z_t, ti, cond, prior_vars);
    Var err = mul(sub(pred, tape.leaf(std::move(v_star))),
                  tape.leaf(batch.mask.row(i).eval(), false, 2));
    fm_acc = add(fm_acc, sumsq(err));
  }

  const double inv_b = 1.0 / static_cast<double>(bsz);
  Var fm = scale(fm_acc, inv_b);
  Var smooth = scale(smooth_acc, inv_b);
  Var rel = scale(rel_acc, inv_b);
  Var graph = total_graph_loss(tape, smooth, rel, loss_cfg);
  Var grand = add(fm, graph);

  TrainStepOut out;
  out.report.fm = tape.value(fm)(0, 0);
  out.report.smooth = tape.value(smooth)(0, 0);
  out.report.rel = tape.value(rel)(0, 0);
  out.report.graph_total = tape.value(graph)(0, 0);
  out.report.grand_total = tape.value(grand)(0, 0);
  out.grads = reverse_backward(tape, grand, bindings);
  return out;
}

MatX<double> sample(const MatX<double>& h_prime, ParamStore& store, const PriorConfig& cfg,
                    int steps, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
  Rng rng(seed);
  MatX<double> z(1, cfg.dx());
  for (Index c = 0; c < z.cols(); ++c) z(0, c) = rng.normal();
  const double dt = 1.0 / static_cast<double>(steps);
  for (int k = 0; k < steps; ++k) {
    Tape tape;
    PriorVars vars = bind_prior(tape, store, cfg);
    Var cond = tape.leaf(h_prime, false, 2);
    Var v = denoiser_forward(tape, z, static_cast<double>(k) * dt, cond, vars);
    z += dt * tape.value(v);
  }
  return z;
}

}  // namespace gpit
