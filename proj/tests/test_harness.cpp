#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "gpit/gradcheck.hpp"
#include "gpit/harness.hpp"

using namespace gpit;

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

RunConfig tiny_config(const std::string& out_dir) {
  RunConfig cfg;
  cfg.n_max = 4;
  cfg.tokens_per_part = 2;
  cfg.feat_dim = 16;
  cfg.layers = 1;
  cfg.prior_width = 16;
  cfg.prior_blocks = 1;
  cfg.prior_time_dim = 8;
  cfg.steps = 10;
  cfg.batch_size = 4;
  cfg.dataset_size = 16;
  cfg.eval_size = 6;
  cfg.n_parts_min = 2;
  cfg.n_parts_max = 4;
  cfg.checkpoint_every = 4;
  cfg.sample_steps = 4;
  cfg.seed = 3;
  cfg.out_dir = out_dir;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config parsing applies presets and overrides") {
  RunConfig cfg = parse_run_config(R"({
    "preset": "desk",
    "model": {"feat_dim": 16, "layers": 1},
    "train": {"steps": 5},
    "loss": {"lambda_g": 0.5},
    "seed": 9
  })");
  CHECK(cfg.feat_dim == 16);
  CHECK(cfg.layers == 1);
  CHECK(cfg.steps == 5);
  CHECK(cfg.loss.lambda_g == 0.5);
  CHECK(cfg.loss.lambda_r == 1.0);
  CHECK(cfg.seed == 9);

  RunConfig paper = parse_run_config(R"({"preset": "paper"})");
  CHECK(paper.feat_dim == 2048);
  CHECK(paper.tokens_per_part == 16);
  CHECK(paper.lr == 1e-5);
  CHECK(paper.grad_accum == 4);
}

TEST_CASE("config errors name the offending field") {
  try {
    parse_run_config(R"({"train": {"steps": 0}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.steps") != std::string::npos);
  }
  try {
    parse_run_config(R"({"optim": {"lr": -1.0}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("optim.lr") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"preset": "gpu"})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"prior_time_dim": 7}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"n_parts_max": 99}})"), ConfigError);
}

TEST_CASE("GPIT_SEED environment variable overrides the config seed") {
  TempDir dir("gpit_env_seed");
  const std::string cfg_path = dir.str() + "/cfg.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"seed": 5})";
  }
  setenv("GPIT_SEED", "1234", 1);
  RunConfig cfg = load_run_config(cfg_path);
  unsetenv("GPIT_SEED");
  CHECK(cfg.seed == 1234);
  CHECK(load_run_config(cfg_path).seed == 5);
}

TEST_CASE("cmd_train writes one log line per step and a loadable checkpoint") {
  TempDir dir("gpit_train_tiny");
  RunConfig cfg = tiny_config(dir.str());
  TrainResult res = cmd_train(cfg);

  const auto lines = lines_of(slurp(res.metrics_path));
  CHECK(lines.size() == 10);
  CHECK(lines.front().find("\"step\":1") != std::string::npos);
  CHECK(lines.back().find("\"step\":10") != std::string::npos);

  // checkpoint round-trips byte-identically
  ParamStore loaded = ParamStore::load(res.checkpoint_path);
  const std::string resaved = dir.str() + "/resaved.gpit";
  loaded.save(resaved);
  CHECK(slurp(res.checkpoint_path) == slurp(resaved));

  // the periodic checkpoint exists too
  CHECK(fs::exists(dir.path / "ckpt_step_000004.gpit"));
  CHECK(fs::exists(res.dataset_path));
  CHECK(!res.dataset_hash.empty());
}

TEST_CASE("cmd_train with zero lambdas logs an identically zero graph loss") {
  TempDir dir("gpit_train_zero_lambda");
  RunConfig cfg = tiny_config(dir.str());
  cfg.loss.lambda_g = 0.0;
  cfg.loss.lambda_r = 0.0;
  TrainResult res = cmd_train(cfg);
  for (const std::string& line : lines_of(slurp(res.metrics_path)))
    CHECK(line.find("\"graph\":0.0") != std::string::npos);
}

TEST_CASE("cmd_train is bitwise deterministic given (config, seed)") {
  TempDir dir_a("gpit_det_a");
  TempDir dir_b("gpit_det_b");
  RunConfig a = tiny_config(dir_a.str());
  RunConfig b = tiny_config(dir_b.str());
  TrainResult ra = cmd_train(a);
  TrainResult rb = cmd_train(b);
  CHECK(slurp(ra.metrics_path) == slurp(rb.metrics_path));
  CHECK(slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path));
  CHECK(ra.dataset_hash == rb.dataset_hash);
}

TEST_CASE("cmd_train surfaces numerical blowups as NumericalError") {
  TempDir dir("gpit_train_blowup");
  RunConfig cfg = tiny_config(dir.str());
  cfg.lr = 1e18;
  cfg.steps = 6;
  CHECK_THROWS_AS(cmd_train(cfg), NumericalError);
}

TEST_CASE("cmd_eval is deterministic and bounded, and checks dimensions") {
  TempDir dir("gpit_eval_tiny");
  RunConfig cfg = tiny_config(dir.str());
  TrainResult res = cmd_train(cfg);

  EvalOptions opts;
  opts.seed = 11;
  opts.report_path = dir.str() + "/report.json";
  MetricsReport r1 = cmd_eval(res.checkpoint_path, cfg, opts);
  MetricsReport r2 = cmd_eval(res.checkpoint_path, cfg, opts);
  CHECK(r1.edge_accuracy_mean >= 0.0);
  CHECK(r1.edge_accuracy_mean <= 1.0);
  CHECK(r1.edge_accuracy_mean == r2.edge_accuracy_mean);
  CHECK(r1.fm == r2.fm);
  CHECK(r1.n_eval == cfg.eval_size);
  CHECK(fs::exists(*opts.report_path));

  // shuffled-conditions control runs and stays bounded
  EvalOptions shuffled = opts;
  shuffled.report_path.reset();
  shuffled.shuffled_conditions = true;
  MetricsReport rs = cmd_eval(res.checkpoint_path, cfg, shuffled);
  CHECK(rs.edge_accuracy_mean >= 0.0);
  CHECK(rs.edge_accuracy_mean <= 1.0);

  // dimension mismatch is an explicit error
  RunConfig wrong = cfg;
  wrong.feat_dim = 8;
  CHECK_THROWS_AS(cmd_eval(res.checkpoint_path, wrong, opts), ConfigError);
}

TEST_CASE("cmd_eval honors a user-supplied inference graph") {
  TempDir dir("gpit_eval_graph");
  RunConfig cfg = tiny_config(dir.str());
  cfg.n_parts_min = 3;
  cfg.n_parts_max = 3;  // every eval example matches the user graph size
  TrainResult res = cmd_train(cfg);

  const std::string graph_path = dir.str() + "/graph.json";
  {
    std::ofstream os(graph_path);
    os << R"({"n_parts": 3, "edges": [[0,1],[1,2]]})";
  }
  EvalOptions opts;
  opts.seed = 4;
  opts.graph_json_path = graph_path;
  MetricsReport r = cmd_eval(res.checkpoint_path, cfg, opts);
  CHECK(r.n_eval == cfg.eval_size);
  CHECK(r.edge_accuracy_mean >= 0.0);
  CHECK(r.edge_accuracy_mean <= 1.0);
}

TEST_CASE("cmd_gradcheck passes on a fresh model and reports per-module groups") {
  RunConfig cfg = tiny_config("unused");
  GradCheckResult res = cmd_gradcheck(cfg);
  CHECK(res.pass);
  CHECK(res.worst < 1e-3);
  REQUIRE(res.groups.size() == 3);
  CHECK(res.groups[0].name == "aggregator");
  CHECK(res.groups[1].name == "loss");
  CHECK(res.groups[2].name == "prior");
  for (const auto& g : res.groups) CHECK(g.max_rel_err < 1e-3);

  GradCheckResult res2 = cmd_gradcheck(cfg);
  for (size_t i = 0; i < res.groups.size(); ++i)
    CHECK(res.groups[i].max_rel_err == res2.groups[i].max_rel_err);
}

TEST_CASE("a corrupted backward pass is detected by the checker") {
  ParamStore ps;
  ps.add("w", Tensor::scalar(0.8));
  LossFn broken = [](ParamStore& p, GradMap* gm) {
    Tape t;
    Bindings b = p.bind_all(t);
    Var loss = sum(mul(b.at("w"), b.at("w")));
    if (gm) {
      *gm = reverse_backward(t, loss, b);
      (*gm)["w"] *= 1.5;  // deliberate corruption
    }
    return t.value(loss)(0, 0);
  };
  CHECK(finite_diff_check<double>(broken, ps, 1e-5).max_rel_err > 1e-3);
}

TEST_CASE("cmd_ablate runs matched variants over a shared dataset") {
  TempDir dir("gpit_ablate_tiny");
  RunConfig cfg = tiny_config(dir.str());
  cfg.steps = 3;
  cfg.dataset_size = 10;
  cfg.eval_size = 4;
  AblateResult res = cmd_ablate(cfg);

  REQUIRE(res.variants.size() == 3);
  CHECK(res.variants[0].name == "Full Graph-PiT");
  CHECK(res.variants[1].name == "w/o Laplacian");
  CHECK(res.variants[2].name == "w/o EdgeLoss");
  CHECK(res.variants[1].lambda_g == 0.0);
  CHECK(res.variants[2].lambda_r == 0.0);
  for (const auto& v : res.variants) {
    CHECK(v.edge_accuracy.size() == 3);
    for (double a : v.edge_accuracy) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
  }
  CHECK(res.dataset_hashes.size() == 3);
  CHECK(fs::exists(res.table_path));
  const auto rows = lines_of(res.table_text);
  REQUIRE(rows.size() == 4);  // header + 3 variants
  CHECK(rows[1].find("Full Graph-PiT") != std::string::npos);
  CHECK(rows[2].find("w/o Laplacian") != std::string::npos);
  CHECK(rows[3].find("w/o EdgeLoss") != std::string::npos);
}
