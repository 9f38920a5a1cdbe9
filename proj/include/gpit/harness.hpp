// Run configuration, the joint training loop, evaluation with the
// edge-accuracy metric, the ablation runner, and the gradient-check command.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpit/aggregator.hpp"
#include "gpit/losses.hpp"
#include "gpit/prior.hpp"
#include "gpit/synth.hpp"

namespace gpit {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // model dims
  int n_max = 6;
  int tokens_per_part = 4;  // d
  int feat_dim = 32;        // D
  int layers = 2;           // L
  int prior_width = 32;
  int prior_blocks = 2;
  int prior_time_dim = 16;

  GraphPriorConfig graph;
  LossConfig loss;

  // optimizer
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int grad_accum = 1;

  // training / evaluation
  int steps = 2000;
  int batch_size = 8;
  int dataset_size = 2000;
  int eval_size = 48;
  int n_parts_min = 3;
  int n_parts_max = 6;
  int checkpoint_every = 500;
  int sample_steps = 32;

  // data generation
  double canvas = 1024.0;
  double min_side = 60.0;
  double max_side = 180.0;
  double token_noise = 0.05;
  std::uint64_t token_map_seed = 0x47504954;

  std::uint64_t seed = 1;
  std::string out_dir = "out";

  SynthConfig synth_config() const;
  AggregatorConfig agg_config() const;
  PriorConfig prior_config() const;
};

// Presets: "desk" is the default tuned for CPU-scale runs; "paper" carries the
// published full-scale hyperparameters (valid but far too slow for tests).
RunConfig desk_preset();
RunConfig paper_preset();

// Loads JSON config (preset plus overrides). GPIT_SEED in the environment
// overrides the seed. Throws ConfigError naming the offending field.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
void validate_config(const RunConfig& cfg);

void init_model_params(ParamStore& store, const RunConfig& cfg);

// Deterministic training dataset for a config (seed stream "dataset").
std::vector<PlantedExample> build_dataset(const RunConfig& cfg, int count,
                                          std::uint64_t stream);

struct MetricsReport {
  double fm = 0.0;
  double smooth = 0.0;
  double rel = 0.0;
  double edge_accuracy_mean = 0.0;
  double edge_accuracy_median = 0.0;
  double wall_time_s = 0.0;  // excluded from determinism comparisons
  std::uint64_t seed = 0;
  int n_eval = 0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  std::string dataset_path;
  std::string dataset_hash;
  double final_total = 0.0;
};

TrainResult cmd_train(const RunConfig& cfg);

struct EvalOptions {
  std::uint64_t seed = 0;
  bool shuffled_conditions = false;           // mismatched adjacency control
  std::optional<std::string> graph_json_path; // user-supplied A_super
  std::optional<std::string> report_path;
};

MetricsReport cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg,
                       const EvalOptions& opts);

struct AblateVariantResult {
  std::string name;
  double lambda_g = 0.0;
  double lambda_r = 0.0;
  std::vector<double> edge_accuracy;  // per seed
  std::vector<double> eval_fm;        // per seed
  double median_edge_accuracy = 0.0;
  double median_eval_fm = 0.0;
};

struct AblateResult {
  std::vector<AblateVariantResult> variants;  // full, w/o Laplacian, w/o EdgeLoss
  std::vector<std::string> dataset_hashes;    // one per seed, shared by variants
  std::string table_path;
  std::string table_text;
};

AblateResult cmd_ablate(const RunConfig& cfg);

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckGroup> groups;
  double worst = 0.0;
  bool pass = false;  // all groups < 1e-3
};

// Runs finite differences over aggregator, losses, and prior at forced tiny
// dims (N=3, d=2, D=8, 1 prior block).
GradCheckResult cmd_gradcheck(const RunConfig& cfg);

double median(std::vector<double> v);

}  // namespace gpit
