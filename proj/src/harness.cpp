#include "gpit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "gpit/rng.hpp"

namespace gpit {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Seed stream tags.
constexpr std::uint64_t kDatasetStream = 0xd5a7a5e7ULL;
constexpr std::uint64_t kInitStream = 0x1417ab1eULL;
constexpr std::uint64_t kTrainStream = 0x72a1917aULL;
constexpr std::uint64_t kEvalSetStream = 0xe5a15e7fULL;
constexpr std::uint64_t kEvalSampleStream = 0x5a3b9d01ULL;
constexpr std::uint64_t kEvalBatchStream = 0xf3c0ffeeULL;
constexpr std::uint64_t kPartCountStream = 0x4ec017ULL;

double json_number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError("config error: field '" + field + "' must be a number");
  return j.get<double>();
}

void read_double(const json& obj, const std::string& scope, const char* key, double& target) {
  if (!obj.contains(key)) return;
  target = json_number(obj.at(key), scope + "." + key);
}

void read_int(const json& obj, const std::string& scope, const char* key, int& target) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_number_integer())
    throw ConfigError("config error: field '" + scope + "." + key + "' must be an integer");
  target = j.get<int>();
}

void read_u64(const json& obj, const std::string& scope, const char* key,
              std::uint64_t& target) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_number_unsigned() && !j.is_number_integer())
    throw ConfigError("config error: field '" + scope + "." + key + "' must be an integer");
  target = j.get<std::uint64_t>();
}

void read_bool(const json& obj, const std::string& scope, const char* key, bool& target) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_boolean())
    throw ConfigError("config error: field '" + scope + "." + key + "' must be a boolean");
  target = j.get<bool>();
}

void require_positive(double v, const char* field) {
  if (!(v > 0)) throw ConfigError(std::string("config error: field '") + field + "' must be positive");
}

void require_at_least(int v, int lo, const char* field) {
  if (v < lo)
    throw ConfigError(std::string("config error: field '") + field + "' must be >= " +
                      std::to_string(lo));
}

// Fields that differ between two configs, as dotted names.
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  auto cmp = [&out](auto x, auto y, const char* name) {
    if (x != y) out.push_back(name);
  };
  cmp(a.n_max, b.n_max, "model.n_max");
  cmp(a.tokens_per_part, b.tokens_per_part, "model.tokens_per_part");
  cmp(a.feat_dim, b.feat_dim, "model.feat_dim");
  cmp(a.layers, b.layers, "model.layers");
  cmp(a.prior_width, b.prior_width, "model.prior_width");
  cmp(a.prior_blocks, b.prior_blocks, "model.prior_blocks");
  cmp(a.prior_time_dim, b.prior_time_dim, "model.prior_time_dim");
  cmp(a.graph.tau_iou, b.graph.tau_iou, "graph.tau_iou");
  cmp(a.graph.tau_dist, b.graph.tau_dist, "graph.tau_dist");
  cmp(a.graph.iou_strict, b.graph.iou_strict, "graph.iou_strict");
  cmp(a.loss.lambda_g, b.loss.lambda_g, "loss.lambda_g");
  cmp(a.loss.lambda_r, b.loss.lambda_r, "loss.lambda_r");
  cmp(a.lr, b.lr, "optim.lr");
  cmp(a.beta1, b.beta1, "optim.beta1");
  cmp(a.beta2, b.beta2, "optim.beta2");
  cmp(a.adam_eps, b.adam_eps, "optim.eps");
  cmp(a.grad_accum, b.grad_accum, "optim.grad_accum");
  cmp(a.steps, b.steps, "train.steps");
  cmp(a.batch_size, b.batch_size, "train.batch_size");
  cmp(a.dataset_size, b.dataset_size, "train.dataset_size");
  cmp(a.eval_size, b.eval_size, "train.eval_size");
  cmp(a.n_parts_min, b.n_parts_min, "train.n_parts_min");
  cmp(a.n_parts_max, b.n_parts_max, "train.n_parts_max");
  cmp(a.checkpoint_every, b.checkpoint_every, "train.checkpoint_every");
  cmp(a.sample_steps, b.sample_steps, "train.sample_steps");
  cmp(a.canvas, b.canvas, "data.canvas");
  cmp(a.min_side, b.min_side, "data.min_side");
  cmp(a.max_side, b.max_side, "data.max_side");
  cmp(a.token_noise, b.token_noise, "data.token_noise");
  cmp(a.token_map_seed, b.token_map_seed, "data.token_map_seed");
  cmp(a.seed, b.seed, "seed");
  cmp(a.out_dir, b.out_dir, "out_dir");
  return out;
}

void check_checkpoint_matches(ParamStore& store, const RunConfig& cfg) {
  ParamStore fresh;
  Rng rng(0);
  init_aggregator_params(fresh, cfg.agg_config(), rng);
  init_edge_mlp_params(fresh, cfg.feat_dim, rng);
  init_prior_params(fresh, cfg.prior_config(), rng);
  for (const std::string& name : fresh.names()) {
    if (!store.has(name))
      throw ConfigError("checkpoint/config dimension mismatch: missing parameter '" + name + "'");
    const Tensor& a = fresh.at(name);
    const Tensor& b = store.at(name);
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw ConfigError("checkpoint/config dimension mismatch: parameter '" + name + "' is " +
                        std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                        ", config expects " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()));
  }
}

json report_json(const MetricsReport& r) {
  json m;
  m["fm"] = r.fm;
  m["smooth"] = r.smooth;
  m["rel"] = r.rel;
  m["edge_accuracy_mean"] = r.edge_accuracy_mean;
  m["edge_accuracy_median"] = r.edge_accuracy_median;
  m["seed"] = r.seed;
  m["n_eval"] = r.n_eval;
  return m;
}

}  // namespace

SynthConfig RunConfig::synth_config() const {
  SynthConfig s;
  s.n_max = n_max;
  s.tokens_per_part = tokens_per_part;
  s.feat_dim = feat_dim;
  s.canvas = canvas;
  s.min_side = min_side;
  s.max_side = max_side;
  s.token_map_seed = token_map_seed;
  s.token_noise = token_noise;
  return s;
}

AggregatorConfig RunConfig::agg_config() const {
  AggregatorConfig a;
  a.layers = layers;
  a.dim = feat_dim;
  return a;
}

PriorConfig RunConfig::prior_config() const {
  PriorConfig p;
  p.blocks = prior_blocks;
  p.width = prior_width;
  p.time_dim = prior_time_dim;
  p.n_slots = n_max;
  p.slot_dim = 8;
  p.cond_dim = feat_dim;
  return p;
}

RunConfig desk_preset() { return RunConfig{}; }

RunConfig paper_preset() {
  RunConfig cfg;
  cfg.tokens_per_part = 16;
  cfg.feat_dim = 2048;
  cfg.lr = 1e-5;
  cfg.steps = 10000;
  cfg.batch_size = 4;
  cfg.grad_accum = 4;
  cfg.n_parts_min = 1;
  cfg.n_parts_max = 6;
  return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config error: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config error: top level must be an object");

  RunConfig cfg = desk_preset();
  if (j.contains("preset")) {
    const std::string p = j.at("preset").is_string() ? j.at("preset").get<std::string>() : "";
    if (p == "desk") cfg = desk_preset();
    else if (p == "paper") cfg = paper_preset();
    else throw ConfigError("config error: field 'preset' must be \"desk\" or \"paper\"");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    read_int(m, "model", "n_max", cfg.n_max);
    read_int(m, "model", "tokens_per_part", cfg.tokens_per_part);
    read_int(m, "model", "feat_dim", cfg.feat_dim);
    read_int(m, "model", "layers", cfg.layers);
    read_int(m, "model", "prior_width", cfg.prior_width);
    read_int(m, "model", "prior_blocks", cfg.prior_blocks);
    read_int(m, "model", "prior_time_dim", cfg.prior_time_dim);
  }
  if (j.contains("graph")) {
    const json& g = j.at("graph");
    read_double(g, "graph", "tau_iou", cfg.graph.tau_iou);
    read_double(g, "graph", "tau_dist", cfg.graph.tau_dist);
    read_bool(g, "graph", "iou_strict", cfg.graph.iou_strict);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    read_double(l, "loss", "lambda_g", cfg.loss.lambda_g);
    read_double(l, "loss", "lambda_r", cfg.loss.lambda_r);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    read_double(o, "optim", "lr", cfg.lr);
    read_double(o, "optim", "beta1", cfg.beta1);
    read_double(o, "optim", "beta2", cfg.beta2);
    read_double(o, "optim", "eps", cfg.adam_eps);
    read_int(o, "optim", "grad_accum", cfg.grad_accum);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    read_int(t, "train", "steps", cfg.steps);
    read_int(t, "train", "batch_size", cfg.batch_size);
    read_int(t, "train", "dataset_size", cfg.dataset_size);
    read_int(t, "train", "eval_size", cfg.eval_size);
    read_int(t, "train", "n_parts_min", cfg.n_parts_min);
    read_int(t, "train", "n_parts_max", cfg.n_parts_max);
    read_int(t, "train", "checkpoint_every", cfg.checkpoint_every);
    read_int(t, "train", "sample_steps", cfg.sample_steps);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    read_double(d, "data", "canvas", cfg.canvas);
    read_double(d, "data", "min_side", cfg.min_side);
    read_double(d, "data", "max_side", cfg.max_side);
    read_double(d, "data", "token_noise", cfg.token_noise);
    read_u64(d, "data", "token_map_seed", cfg.token_map_seed);
  }
  read_u64(j, "", "seed", cfg.seed);
  if (j.contains("out_dir")) {
    if (!j.at("out_dir").is_string())
      throw ConfigError("config error: field 'out_dir' must be a string");
    cfg.out_dir = j.at("out_dir").get<std::string>();
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config error: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  RunConfig cfg = parse_run_config(ss.str());
  if (const char* env = std::getenv("GPIT_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (...) {
      throw ConfigError("config error: GPIT_SEED must be an unsigned integer");
    }
  }
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  require_at_least(cfg.n_max, 1, "model.n_max");
  require_at_least(cfg.tokens_per_part, 1, "model.tokens_per_part");
  require_at_least(cfg.feat_dim, 1, "model.feat_dim");
  require_at_least(cfg.layers, 0, "model.layers");
  require_at_least(cfg.prior_width, 1, "model.prior_width");
  require_at_least(cfg.prior_blocks, 1, "model.prior_blocks");
  require_at_least(cfg.prior_time_dim, 2, "model.prior_time_dim");
  if (cfg.prior_time_dim % 2 != 0)
    throw ConfigError("config error: field 'model.prior_time_dim' must be even");
  if (cfg.graph.tau_iou < 0.0 || cfg.graph.tau_iou > 1.0)
    throw ConfigError("config error: field 'graph.tau_iou' must lie in [0,1]");
  if (cfg.graph.tau_dist < 0.0)
    throw ConfigError("config error: field 'graph.tau_dist' must be >= 0");
  if (cfg.loss.lambda_g < 0.0)
    throw ConfigError("config error: field 'loss.lambda_g' must be >= 0");
  if (cfg.loss.lambda_r < 0.0)
    throw ConfigError("config error: field 'loss.lambda_r' must be >= 0");
  require_positive(cfg.lr, "optim.lr");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0)
    throw ConfigError("config error: field 'optim.beta1' must lie in [0,1)");
  if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ConfigError("config error: field 'optim.beta2' must lie in [0,1)");
  require_positive(cfg.adam_eps, "optim.eps");
  require_at_least(cfg.grad_accum, 1, "optim.grad_accum");
  require_at_least(cfg.steps, 1, "train.steps");
  require_at_least(cfg.batch_size, 1, "train.batch_size");
  require_at_least(cfg.dataset_size, 1, "train.dataset_size");
  require_at_least(cfg.eval_size, 1, "train.eval_size");
  require_at_least(cfg.n_parts_min, 1, "train.n_parts_min");
  if (cfg.n_parts_max < cfg.n_parts_min || cfg.n_parts_max > cfg.n_max)
    throw ConfigError(
        "config error: field 'train.n_parts_max' must lie in [n_parts_min, model.n_max]");
  require_at_least(cfg.checkpoint_every, 0, "train.checkpoint_every");
  require_at_least(cfg.sample_steps, 1, "train.sample_steps");
  require_positive(cfg.canvas, "data.canvas");
  require_positive(cfg.min_side, "data.min_side");
  if (cfg.max_side < cfg.min_side)
    throw ConfigError("config error: field 'data.max_side' must be >= data.min_side");
  if (cfg.max_side >= cfg.canvas)
    throw ConfigError("config error: field 'data.max_side' must be smaller than the canvas");
  if (cfg.token_noise < 0.0)
    throw ConfigError("config error: field 'data.token_noise' must be >= 0");
}

void init_model_params(ParamStore& store, const RunConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kInitStream));
  init_aggregator_params(store, cfg.agg_config(), rng);
  init_edge_mlp_params(store, cfg.feat_dim, rng);
  init_prior_params(store, cfg.prior_config(), rng);
}

std::vector<PlantedExample> build_dataset(const RunConfig& cfg, int count,
                                          std::uint64_t stream) {
  const GraphPriorConfig gcfg = cfg.graph;
  const SynthConfig scfg = cfg.synth_config();
  std::vector<PlantedExample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::uint64_t ex_seed = mix_seed(stream, static_cast<std::uint64_t>(i));
    Rng nrng(mix_seed(ex_seed, kPartCountStream));
    const int n = nrng.uniform_int(cfg.n_parts_min, cfg.n_parts_max);
    for (int attempt = 0;; ++attempt) {
      try {
        out.push_back(make_planted_example(n, gcfg, scfg, ex_seed));
        break;
      } catch (const std::runtime_error&) {
        if (attempt >= 8) throw;
        ex_seed = mix_seed(ex_seed, 0x7e5eedULL);
      }
    }
  }
  return out;
}

TrainResult cmd_train(const RunConfig& cfg) {
  validate_config(cfg);
  fs::create_directories(cfg.out_dir);

  std::vector<PlantedExample> dataset =
      build_dataset(cfg, cfg.dataset_size, mix_seed(cfg.seed, kDatasetStream));
  const std::string dataset_path = cfg.out_dir + "/dataset.jsonl";
  write_dataset(dataset_path, dataset);

  ParamStore store;
  init_model_params(store, cfg);

  const SynthConfig scfg = cfg.synth_config();
  const AggregatorConfig agg_cfg = cfg.agg_config();
  const PriorConfig prior_cfg = cfg.prior_config();
  const std::uint64_t train_stream = mix_seed(cfg.seed, kTrainStream);

  const std::string metrics_path = cfg.out_dir + "/train_metrics.jsonl";
  std::ofstream log(metrics_path);
  if (!log) throw std::runtime_error("train: cannot open '" + metrics_path + "' for writing");

  TrainResult result;
  result.metrics_path = metrics_path;
  result.dataset_path = dataset_path;
  result.dataset_hash = file_hash_hex(dataset_path);

  for (int step = 1; step <= cfg.steps; ++step) {
    GradMap grads;
    LossReport rep{};
    try {
      for (int a = 0; a < cfg.grad_accum; ++a) {
        const std::uint64_t bseed = mix_seed(
            train_stream, static_cast<std::uint64_t>(step - 1) * cfg.grad_accum + a);
        FlowBatch batch = make_batch(dataset, cfg.batch_size, bseed, scfg);
        TrainStepOut out = fm_train_step(batch, store, agg_cfg, prior_cfg, cfg.loss);
        if (!std::isfinite(out.report.grand_total))
          throw NumericalError("train: non-finite loss at step " + std::to_string(step));
        for (auto& kv : out.grads) {
          auto it = grads.find(kv.first);
          if (it == grads.end()) grads.emplace(kv.first, kv.second);
          else it->second += kv.second;
        }
        rep.fm += out.report.fm;
        rep.smooth += out.report.smooth;
        rep.rel += out.report.rel;
        rep.graph_total += out.report.graph_total;
        rep.grand_total += out.report.grand_total;
      }
      const double inv = 1.0 / cfg.grad_accum;
      for (auto& kv : grads) kv.second *= inv;
      rep.fm *= inv;
      rep.smooth *= inv;
      rep.rel *= inv;
      rep.graph_total *= inv;
      rep.grand_total *= inv;

      store.adam_step(grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    } catch (const NumericalError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw NumericalError("train: numerical failure at step " + std::to_string(step) + ": " +
                           e.what());
    }

    json line;
    line["step"] = step;
    line["fm"] = rep.fm;
    line["smooth"] = rep.smooth;
    line["rel"] = rep.rel;
    line["graph"] = rep.graph_total;
    line["total"] = rep.grand_total;
    log << line.dump() << "\n";
    result.final_total = rep.grand_total;

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      std::ostringstream name;
      name << cfg.out_dir << "/ckpt_step_" << std::setw(6) << std::setfill('0') << step
           << ".gpit";
      store.save(name.str());
    }
  }
  result.checkpoint_path = cfg.out_dir + "/ckpt_final.gpit";
  store.save(result.checkpoint_path);
  return result;
}

MetricsReport cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg,
                       const EvalOptions& opts) {
  validate_config(cfg);
  const auto t_start = std::chrono::steady_clock::now();
  ParamStore store = ParamStore::load(checkpoint_path);
  check_checkpoint_matches(store, cfg);

  const SynthConfig scfg = cfg.synth_config();
  const AggregatorConfig agg_cfg = cfg.agg_config();
  const PriorConfig prior_cfg = cfg.prior_config();

  std::vector<PlantedExample> eval_set =
      build_dataset(cfg, cfg.eval_size, mix_seed(opts.seed, kEvalSetStream));

  // Conditioning adjacency per example: the example's own graph, a rotated
  // same-size partner (shuffled control), or a user-provided graph.
  std::vector<BinMat> cond_adj(eval_set.size());
  for (size_t i = 0; i < eval_set.size(); ++i) cond_adj[i] = eval_set[i].a_super;
  std::vector<char> active(eval_set.size(), 1);

  if (opts.graph_json_path) {
    const BinMat user = load_graph_json_file(*opts.graph_json_path);
    for (size_t i = 0; i < eval_set.size(); ++i) {
      if (eval_set[i].a_super.rows() == user.rows()) cond_adj[i] = user;
      else active[i] = 0;  // part count differs from the user graph
    }
  } else if (opts.shuffled_conditions) {
    std::map<int, std::vector<size_t>> buckets;
    for (size_t i = 0; i < eval_set.size(); ++i)
      buckets[static_cast<int>(eval_set[i].a_super.rows())].push_back(i);
    for (auto& kv : buckets) {
      const auto& b = kv.second;
      if (b.size() < 2) continue;  // no partner available; keep matched
      for (size_t r = 0; r < b.size(); ++r)
        cond_adj[b[r]] = eval_set[b[(r + 1) % b.size()]].a_super;
    }
  }

  std::vector<double> accs;
  for (size_t i = 0; i < eval_set.size(); ++i) {
    if (!active[i]) continue;
    const PlantedExample& ex = eval_set[i];
    const int n = static_cast<int>(ex.a_super.rows());
    HierGraph g = assemble_hier_graph(ex.tokens, cond_adj[i]);
    AggregateValues vals = aggregate_forward_values(g, store, agg_cfg);
    MatX<double> z = sample(vals.h_sub, store, prior_cfg, cfg.sample_steps,
                            mix_seed(opts.seed, kEvalSampleStream + i));
    LayoutConcept generated = vector_to_layout(z, n, scfg);
    accs.push_back(edge_accuracy(generated, cond_adj[i], cfg.graph));
  }
  if (accs.empty()) throw std::runtime_error("eval: no evaluable examples");

  // Held-out generation loss on matched conditions.
  FlowBatch batch = make_batch(eval_set, static_cast<int>(eval_set.size()),
                               mix_seed(opts.seed, kEvalBatchStream), scfg);
  TrainStepOut fm_out = fm_train_step(batch, store, agg_cfg, prior_cfg, cfg.loss);

  MetricsReport report;
  report.fm = fm_out.report.fm;
  report.smooth = fm_out.report.smooth;
  report.rel = fm_out.report.rel;
  double mean = 0.0;
  for (double a : accs) mean += a;
  report.edge_accuracy_mean = mean / static_cast<double>(accs.size());
  report.edge_accuracy_median = median(accs);
  report.seed = opts.seed;
  report.n_eval = static_cast<int>(accs.size());
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (opts.report_path) {
    json out;
    out["metrics"] = report_json(report);
    out["wall_time_s"] = report.wall_time_s;  // kept outside the deterministic block
    std::ofstream os(*opts.report_path);
    if (!os) throw std::runtime_error("eval: cannot open '" + *opts.report_path + "'");
    os << out.dump(2) << "\n";
  }
  return report;
}

AblateResult cmd_ablate(const RunConfig& cfg) {
  validate_config(cfg);
  fs::create_directories(cfg.out_dir);
  const int n_seeds = 3;

  struct VariantSpec {
    const char* name;
    const char* slug;
    double lambda_g;
    double lambda_r;
    const char* notes;
  };
  const VariantSpec specs[3] = {
      {"Full Graph-PiT", "full", cfg.loss.lambda_g, cfg.loss.lambda_r, "default params"},
      {"w/o Laplacian", "no_laplacian", 0.0, cfg.loss.lambda_r, "lambda_g = 0"},
      {"w/o EdgeLoss", "no_edgeloss", cfg.loss.lambda_g, 0.0, "lambda_r = 0"},
  };

  const std::string log_path = cfg.out_dir + "/ablation_log.jsonl";
  std::ofstream log(log_path);

  AblateResult result;
  result.variants.resize(3);
  for (int v = 0; v < 3; ++v) {
    result.variants[static_cast<size_t>(v)].name = specs[v].name;
    result.variants[static_cast<size_t>(v)].lambda_g = specs[v].lambda_g;
    result.variants[static_cast<size_t>(v)].lambda_r = specs[v].lambda_r;
  }

  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(s);
    std::string seed_hash;
    for (int v = 0; v < 3; ++v) {
      RunConfig base = cfg;
      base.seed = run_seed;
      RunConfig variant = base;
      variant.loss.lambda_g = specs[v].lambda_g;
      variant.loss.lambda_r = specs[v].lambda_r;
      variant.out_dir =
          cfg.out_dir + "/" + specs[v].slug + "_seed" + std::to_string(s);
      RunConfig check = variant;
      check.out_dir = base.out_dir;  // output location is bookkeeping, not part of the ablation
      const std::vector<std::string> diff = config_diff(base, check);
      for (const std::string& field : diff)
        if (field != "loss.lambda_g" && field != "loss.lambda_r")
          throw std::runtime_error("ablate: variants may differ only in lambdas, got " + field);

      TrainResult train = cmd_train(variant);
      EvalOptions eopts;
      eopts.seed = mix_seed(cfg.seed, 0xab1a7eULL) + static_cast<std::uint64_t>(s);
      MetricsReport rep = cmd_eval(train.checkpoint_path, variant, eopts);

      if (v == 0) {
        seed_hash = train.dataset_hash;
        result.dataset_hashes.push_back(seed_hash);
      } else if (train.dataset_hash != seed_hash) {
        throw std::runtime_error("ablate: variants did not share the dataset for seed " +
                                 std::to_string(run_seed));
      }

      json line;
      line["variant"] = specs[v].name;
      line["seed"] = run_seed;
      line["lambda_g"] = specs[v].lambda_g;
      line["lambda_r"] = specs[v].lambda_r;
      line["config_diff"] = diff;
      line["dataset_hash"] = train.dataset_hash;
      line["edge_accuracy"] = rep.edge_accuracy_mean;
      line["eval_fm"] = rep.fm;
      log << line.dump() << "\n";

      result.variants[static_cast<size_t>(v)].edge_accuracy.push_back(rep.edge_accuracy_mean);
      result.variants[static_cast<size_t>(v)].eval_fm.push_back(rep.fm);
    }
  }

  std::ostringstream table;
  table << "Variant          Eval-loss   Edge-accuracy   Notes\n";
  for (int v = 0; v < 3; ++v) {
    AblateVariantResult& var = result.variants[static_cast<size_t>(v)];
    var.median_edge_accuracy = median(var.edge_accuracy);
    var.median_eval_fm = median(var.eval_fm);
    table << std::left << std::setw(17) << specs[v].name << std::setw(12) << std::fixed
          << std::setprecision(4) << var.median_eval_fm << std::setw(16)
          << var.median_edge_accuracy << specs[v].notes << "\n";
  }
  result.table_text = table.str();
  result.table_path = cfg.out_dir + "/ablation.txt";
  std::ofstream table_file(result.table_path);
  table_file << result.table_text;
  return result;
}

GradCheckResult cmd_gradcheck(const RunConfig& cfg) {
  // Forced tiny dims keep the finite-difference sweep well inside a minute.
  RunConfig tiny = cfg;
  tiny.n_max = 3;
  tiny.tokens_per_part = 2;
  tiny.feat_dim = 8;
  tiny.prior_blocks = 1;
  tiny.prior_width = 16;
  tiny.prior_time_dim = 8;
  tiny.n_parts_min = 3;
  tiny.n_parts_max = 3;
  validate_config(tiny);

  ParamStore store;
  init_model_params(store, tiny);

  std::vector<PlantedExample> examples =
      build_dataset(tiny, 2, mix_seed(tiny.seed, kDatasetStream));
  FlowBatch batch = make_batch(examples, 2, mix_seed(tiny.seed, kTrainStream),
                               tiny.synth_config());

  const AggregatorConfig agg_cfg = tiny.agg_config();
  const PriorConfig prior_cfg = tiny.prior_config();
  const LossConfig loss_cfg = tiny.loss;
  LossFn f = [&](ParamStore& ps, GradMap* gm) {
    TrainStepOut out = fm_train_step(batch, ps, agg_cfg, prior_cfg, loss_cfg);
    if (gm) *gm = std::move(out.grads);
    return out.report.grand_total;
  };
  GradCheckReport rep = finite_diff_check<double>(f, store, 1e-5);

  GradCheckResult result;
  std::map<std::string, double> groups;
  for (const auto& kv : rep.per_param) {
    const std::string group = kv.first.substr(0, kv.first.find('.'));
    groups[group] = std::max(groups[group], kv.second);
  }
  for (const auto& kv : groups) {
    result.groups.push_back(GradCheckGroup{kv.first, kv.second});
    result.worst = std::max(result.worst, kv.second);
  }
  result.pass = result.worst < 1e-3;
  return result;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace gpit
