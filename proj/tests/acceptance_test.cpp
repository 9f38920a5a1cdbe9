// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. The training-based criteria run the desk preset end to end.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gpit/aggregator.hpp"
#include "gpit/harness.hpp"
#include "gpit/losses.hpp"
#include "gpit/prior.hpp"
#include "gpit/rng.hpp"
#include "gpit/synth.hpp"

using namespace gpit;

namespace {

namespace fs = std::filesystem;

int failures = 0;

void report(int idx, bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s  criterion %d: %s  [%s]\n", pass ? "PASS" : "FAIL", idx, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

MatX<double> random_matrix(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  MatX<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// --- criterion 1: gradient fidelity --------------------------------------

void criterion_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = desk_preset();
  GradCheckResult res = cmd_gradcheck(cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream detail;
  detail << "worst " << res.worst << " over";
  for (const auto& g : res.groups) detail << " " << g.name << "=" << g.max_rel_err;
  detail << ", " << secs << " s";
  report(1, res.pass && secs < 60.0, "gradient fidelity < 1e-3 within 60 s", detail.str());
}

// --- criterion 2: geometry oracle -----------------------------------------

long long pixel_cells(const BBox& b) {
  return static_cast<long long>(b.w) * static_cast<long long>(b.h);
}

long long pixel_inter(const BBox& a, const BBox& b) {
  const long long x0 = std::max<long long>(llround(a.x_min), llround(b.x_min));
  const long long x1 = std::min<long long>(llround(a.x_max()), llround(b.x_max()));
  const long long y0 = std::max<long long>(llround(a.y_min), llround(b.y_min));
  const long long y1 = std::min<long long>(llround(a.y_max()), llround(b.y_max()));
  long long count = 0;
  for (long long y = y0; y < y1; ++y)
    for (long long x = x0; x < x1; ++x) ++count;
  return count;
}

void criterion_geometry() {
  Rng rng(2024);
  GraphPriorConfig cfg;  // tau_iou = 0.00 strict, tau_dist = 512
  double max_iou_err = 0.0;
  int adjacency_mismatches = 0;
  for (int rep = 0; rep < 500; ++rep) {
    BBox a{double(rng.uniform_int(0, 900)), double(rng.uniform_int(0, 900)),
           double(rng.uniform_int(1, 300)), double(rng.uniform_int(1, 300))};
    BBox b{double(rng.uniform_int(0, 900)), double(rng.uniform_int(0, 900)),
           double(rng.uniform_int(1, 300)), double(rng.uniform_int(1, 300))};
    const long long inter = pixel_inter(a, b);
    const long long uni = pixel_cells(a) + pixel_cells(b) - inter;
    const double oracle_iou =
        uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    max_iou_err = std::max(max_iou_err, std::abs(iou(a, b) - oracle_iou));

    // pixel-set adjacency: positive cell overlap or centroid distance rule
    const auto ca = centroid(a);
    const auto cb = centroid(b);
    const bool oracle_adj =
        inter > 0 || std::hypot(ca[0] - cb[0], ca[1] - cb[1]) <= cfg.tau_dist;
    const BinMat got = build_adjacency({a, b}, cfg);
    if ((got(0, 1) != 0) != oracle_adj) ++adjacency_mismatches;
  }
  std::ostringstream detail;
  detail << "max iou err " << max_iou_err << ", adjacency mismatches " << adjacency_mismatches
         << "/500";
  report(2, max_iou_err < 1e-6 && adjacency_mismatches == 0,
         "iou and adjacency match the rasterized oracle", detail.str());
}

// --- criterion 3: permutation equivariance ---------------------------------

void criterion_equivariance() {
  Rng rng(3333);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + rng.uniform_int(0, 3);  // N <= 5
    const int d = 2 + rng.uniform_int(0, 2);
    const int dim = 16;
    std::vector<TokenGrid> tokens;
    for (int i = 0; i < n; ++i)
      tokens.push_back(TokenGrid{i, Tensor::from_matrix(random_matrix(d, dim, rng))});
    BinMat a = BinMat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.5) a(i, j) = a(j, i) = 1;

    ParamStore store;
    AggregatorConfig cfg;
    cfg.layers = 2;
    cfg.dim = dim;
    Rng init_rng(900 + rep);
    init_aggregator_params(store, cfg, init_rng);

    AggregateValues base = aggregate_forward_values(assemble_hier_graph(tokens, a), store, cfg);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.uniform_int(0, i))]);
    std::vector<TokenGrid> ptokens;
    BinMat pa = BinMat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      ptokens.push_back(tokens[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
      for (int j = 0; j < n; ++j)
        pa(i, j) = a(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    AggregateValues got = aggregate_forward_values(assemble_hier_graph(ptokens, pa), store, cfg);
    for (int i = 0; i < n; ++i) {
      const int old_i = perm[static_cast<size_t>(i)];
      worst = std::max(worst,
                       (got.h_super.row(i) - base.h_super.row(old_i)).cwiseAbs().maxCoeff());
      for (int k = 0; k < d; ++k)
        worst = std::max(worst, (got.h_sub.row(i * d + k) - base.h_sub.row(old_i * d + k))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
  }
  std::ostringstream detail;
  detail << "worst deviation " << worst;
  report(3, worst <= 1e-10, "aggregate_forward commutes with part permutations", detail.str());
}

// --- criterion 4: degeneration to the no-graph prior -----------------------

void criterion_degeneration() {
  Rng rng(4040);
  RunConfig run = desk_preset();
  PriorConfig pcfg = run.prior_config();
  AggregatorConfig acfg = run.agg_config();
  acfg.layers = 0;

  ParamStore store;
  Rng init_rng(41);
  init_prior_params(store, pcfg, init_rng);

  bool all_equal = true;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + rng.uniform_int(0, run.n_max - 1);
    std::vector<TokenGrid> tokens;
    for (int i = 0; i < n; ++i)
      tokens.push_back(
          TokenGrid{i, Tensor::from_matrix(random_matrix(run.tokens_per_part, run.feat_dim, rng))});
    BinMat a = BinMat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.6) a(i, j) = a(j, i) = 1;

    AggregateValues graph_path =
        aggregate_forward_values(assemble_hier_graph(tokens, a), store, acfg);
    MatX<double> baseline = baseline_condition(tokens);

    MatX<double> z = random_matrix(1, pcfg.dx(), rng);
    const double t_val = rng.uniform();
    MatX<double> out_graph, out_base;
    {
      Tape t;
      PriorVars pv = bind_prior(t, store, pcfg);
      out_graph = t.value(denoiser_forward(t, z, t_val, t.leaf(graph_path.h_sub), pv));
    }
    {
      Tape t;
      PriorVars pv = bind_prior(t, store, pcfg);
      out_base = t.value(denoiser_forward(t, z, t_val, t.leaf(baseline), pv));
    }
    if (!(out_graph == out_base)) all_equal = false;
  }
  report(4, all_equal, "baseline_mode equals the L=0 graph path exactly",
         all_equal ? "20/20 bitwise equal" : "mismatch found");
}

// --- criterion 5: loss closed forms ----------------------------------------

void criterion_loss_closed_forms() {
  Tape t;
  MatX<double> h = MatX<double>::Zero(2, 8);
  h(0, 0) = 1.0;
  h(1, 0) = -1.0;
  BinMat a = BinMat::Zero(2, 2);
  a(0, 1) = a(1, 0) = 1;
  const double smooth = t.value(smoothness_loss(t, t.leaf(h), a))(0, 0);
  const bool smooth_ok = std::abs(smooth - 4.0) <= 1e-12;

  Var logit0 = t.leaf(MatX<double>::Zero(1, 1).eval());
  const double rel = t.value(relational_loss(t, logit0, a, {{0, 1}}))(0, 0);
  const bool rel_ok = std::abs(rel - std::log(2.0)) <= 1e-12;

  Rng rng(55);
  bool linear_ok = true;
  for (int rep = 0; rep < 5; ++rep) {
    const double sv = rng.uniform(0.0, 2.0), rv = rng.uniform(0.0, 2.0);
    const double lg = rng.uniform(0.0, 3.0), lr = rng.uniform(0.0, 3.0);
    Var s = t.leaf(MatX<double>::Constant(1, 1, sv).eval());
    Var r = t.leaf(MatX<double>::Constant(1, 1, rv).eval());
    LossConfig c1{lg, lr};
    LossConfig c2{2 * lg, lr};
    LossConfig c3{lg, 3 * lr};
    const double v1 = t.value(total_graph_loss(t, s, r, c1))(0, 0);
    const double v2 = t.value(total_graph_loss(t, s, r, c2))(0, 0);
    const double v3 = t.value(total_graph_loss(t, s, r, c3))(0, 0);
    if (std::abs(v2 - v1 - lg * sv) > 1e-12) linear_ok = false;
    if (std::abs(v3 - v1 - 2 * lr * rv) > 1e-12) linear_ok = false;
  }
  std::ostringstream detail;
  detail << "smooth " << smooth << ", rel " << rel << ", linearity "
         << (linear_ok ? "ok" : "violated");
  report(5, smooth_ok && rel_ok && linear_ok, "loss closed forms and lambda linearity",
         detail.str());
}

// --- criterion 6: planted-graph certification -------------------------------

void criterion_certification() {
  const SynthConfig scfg;
  const GraphPriorConfig gcfg;
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t seed = mix_seed(0xACCE97, static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(seed % 6);
    PlantedExample ex = make_planted_example(n, gcfg, scfg, seed);
    std::vector<BBox> boxes(ex.layout.boxes.begin(), ex.layout.boxes.begin() + n);
    if (build_adjacency(boxes, gcfg) == ex.a_super) ++ok;
  }
  std::ostringstream detail;
  detail << ok << "/1000 certified";
  report(6, ok == 1000, "planted adjacency certification", detail.str());
}

// --- criteria 7 + 8: ablation direction and conditioning effect -------------

void criterion_training(const std::string& out_root) {
  RunConfig cfg = desk_preset();
  cfg.out_dir = out_root + "/ablate";
  const auto t0 = std::chrono::steady_clock::now();
  AblateResult ab = cmd_ablate(cfg);
  const double med_full = ab.variants[0].median_edge_accuracy;
  const double med_nolap = ab.variants[1].median_edge_accuracy;
  const double med_noedge = ab.variants[2].median_edge_accuracy;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const bool gap_ok = med_full - med_noedge >= 0.05;
  const bool nolap_ok = (med_nolap >= med_noedge - 1e-12 && med_nolap <= med_full + 1e-12) ||
                        std::abs(med_nolap - med_full) <= 0.05;
  const bool time_ok = secs <= 1800.0;
  std::ostringstream detail;
  detail << "median edge-accuracy full " << med_full << " / w/o Laplacian " << med_nolap
         << " / w/o EdgeLoss " << med_noedge << ", " << secs << " s";
  report(7, gap_ok && nolap_ok && time_ok,
         "ablation reproduces the order full >= no-Laplacian > no-EdgeLoss", detail.str());

  // criterion 8 reuses the trained full-model checkpoints
  std::vector<double> matched, shuffled;
  for (int s = 0; s < 3; ++s) {
    const std::string ckpt = cfg.out_dir + "/full_seed" + std::to_string(s) + "/ckpt_final.gpit";
    RunConfig eval_cfg = cfg;
    eval_cfg.seed = cfg.seed + static_cast<std::uint64_t>(s);
    EvalOptions m;
    m.seed = mix_seed(cfg.seed, 0xc0d17ULL) + static_cast<std::uint64_t>(s);
    MetricsReport rm = cmd_eval(ckpt, eval_cfg, m);
    EvalOptions sh = m;
    sh.shuffled_conditions = true;
    MetricsReport rs = cmd_eval(ckpt, eval_cfg, sh);
    matched.push_back(rm.edge_accuracy_mean);
    shuffled.push_back(rs.edge_accuracy_mean);
  }
  const double med_matched = median(matched);
  const double med_shuffled = median(shuffled);
  std::ostringstream detail8;
  detail8 << "median matched " << med_matched << " vs shuffled " << med_shuffled;
  report(8, med_matched - med_shuffled >= 0.15,
         "conditioned samples beat shuffled-adjacency conditioning by >= 0.15", detail8.str());
}

// --- criterion 9: determinism ------------------------------------------------

void criterion_determinism(const std::string& out_root) {
  RunConfig cfg = desk_preset();
  cfg.steps = 25;
  cfg.dataset_size = 64;
  cfg.checkpoint_every = 10;
  RunConfig a = cfg;
  a.out_dir = out_root + "/det_a";
  RunConfig b = cfg;
  b.out_dir = out_root + "/det_b";
  TrainResult ra = cmd_train(a);
  TrainResult rb = cmd_train(b);
  const bool logs_ok = slurp(ra.metrics_path) == slurp(rb.metrics_path);
  const bool ckpt_ok = slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path);
  const bool step_ckpt_ok = slurp(a.out_dir + "/ckpt_step_000010.gpit") ==
                            slurp(b.out_dir + "/ckpt_step_000010.gpit");
  report(9, logs_ok && ckpt_ok && step_ckpt_ok,
         "identical config+seed give byte-identical logs and checkpoints",
         std::string("logs ") + (logs_ok ? "equal" : "differ") + ", checkpoints " +
             (ckpt_ok && step_ckpt_ok ? "equal" : "differ"));
}

}  // namespace

int main() {
  const std::string out_root = "acceptance_out";
  fs::remove_all(out_root);
  fs::create_directories(out_root);

  criterion_gradcheck();
  criterion_geometry();
  criterion_equivariance();
  criterion_degeneration();
  criterion_loss_closed_forms();
  criterion_certification();
  criterion_training(out_root);
  criterion_determinism(out_root);

  if (failures == 0) std::printf("ALL ACCEPTANCE CRITERIA PASSED\n");
  else std::printf("%d ACCEPTANCE CRITERIA FAILED\n", failures);
  return failures == 0 ? 0 : 1;
}
