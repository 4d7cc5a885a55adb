#include "cli.hpp"

#include "sinkformer/approx.hpp"
#include "sinkformer/error.hpp"
#include "sinkformer/io.hpp"
#include "sinkformer/model.hpp"
#include "sinkformer/selftest.hpp"
#include "sinkformer/transport.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

namespace sinkformer::cli {

namespace {

namespace fs = std::filesystem;
using Rng = std::mt19937_64;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("sinkformer", sink);
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("ST_LOG");
  const std::string level = env == nullptr ? "info" : env;
  if (level == "debug") {
    logger->set_level(spdlog::level::debug);
  } else if (level == "info") {
    logger->set_level(spdlog::level::info);
  } else if (level == "quiet") {
    logger->set_level(spdlog::level::off);
  } else {
    throw UsageError("ST_LOG must be one of debug, info, quiet (got '" + level + "')");
  }
  return logger;
}

// ---------------------------------------------------------------------------
// ot solve

struct OtSolveArgs {
  std::string cost;
  std::string mu;
  std::string nu;
  double epsilon = 1.0;
  double tol = 1e-9;
  int max_iters = 10000;
  bool kernel = false;
};

void ot_solve(const OtSolveArgs& a, std::ostream& out, spdlog::logger& log) {
  const DiscreteMeasure mu = measure_from_json(read_json_file(a.mu));
  const DiscreteMeasure nu = measure_from_json(read_json_file(a.nu));
  const Matrix cost = read_matrix_csv(fs::path(a.cost));
  SinkhornConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.log_domain = !a.kernel;
  log.debug("solving {}x{} problem, epsilon {}", mu.size(), nu.size(), cfg.epsilon);
  const SinkhornSolution sol = sinkhorn_solve(CostMatrix(cost), mu, nu, cfg);
  write_matrix_csv(out, sol.coupling.mass());
  Json diag = {{"iters", sol.iters},
               {"final_violation", sol.final_violation},
               {"row_violation", sol.row_violation},
               {"epsilon", cfg.epsilon},
               {"u", std::vector<double>(sol.u.data(), sol.u.data() + sol.u.size())},
               {"v", std::vector<double>(sol.v.data(), sol.v.data() + sol.v.size())}};
  out << diag.dump() << '\n';
}

// ---------------------------------------------------------------------------
// approx demo

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::exception&) {
      throw UsageError("--k: expected comma-separated positive integers, got '" + text + "'");
    }
  }
  if (ks.empty()) throw UsageError("--k: empty list");
  return ks;
}

// 1-Lipschitz functions for the sum metric, anchored at the support atoms.
std::vector<PairTestFunction> lipschitz_family(const Coupling& pi) {
  std::vector<PairTestFunction> fs;
  const Eigen::Index n = pi.rows().size();
  const Eigen::Index m = pi.cols().size();
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(n, 4); ++i) {
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(m, 4); ++j) {
      const Point px = pi.rows().atom(i);
      const Point py = pi.cols().atom(j);
      fs.emplace_back([px, py](const Point& x, const Point& y) { return (x - px).norm() + (y - py).norm(); });
      fs.emplace_back([px, py](const Point& x, const Point& y) {
        return std::min((x - px).norm(), (y - py).norm());
      });
    }
  }
  for (Eigen::Index c = 0; c < pi.rows().dim(); ++c) {
    fs.emplace_back([c](const Point& x, const Point&) { return x[c]; });
  }
  for (Eigen::Index c = 0; c < pi.cols().dim(); ++c) {
    fs.emplace_back([c](const Point&, const Point& y) { return y[c]; });
  }
  return fs;
}

void approx_demo(const std::string& input, const std::string& k_list, const std::string& out_path,
                 spdlog::logger& log) {
  const std::vector<int> ks = parse_ks(k_list);
  const Coupling pi = coupling_from_json(read_json_file(input));
  const auto tests = lipschitz_family(pi);
  std::ostringstream report;
  report << "k,cells_x,cells_y,w1_gap,max_test_error,bound\n";
  for (const int k : ks) {
    const Partition px = build_partition(pi.rows().support(), k);
    const Partition py = build_partition(pi.cols().support(), k);
    const BlockApproximation blk = block_coupling(pi, px, py);
    double worst = 0.0;
    for (const auto& f : tests) worst = std::max(worst, std::abs(integrate(blk.coupling, f) - integrate(pi, f)));
    const double gap = coupling_w1(blk.coupling, pi);
    log.info("k={} W1 gap {}", k, gap);
    report << k << ',' << px.cells.size() << ',' << py.cells.size() << ',' << format_double(gap) << ','
           << format_double(worst) << ',' << format_double(2.0 / k) << '\n';
  }
  std::ofstream file(out_path);
  if (!file) throw Error(ErrorKind::kInvalidInput, "cannot write " + out_path);
  file << report.str();
}

// ---------------------------------------------------------------------------
// stability

Matrix random_matrix(Eigen::Index r, Eigen::Index c, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Vector random_simplex(Eigen::Index n, Rng& rng) {
  const Vector w = random_matrix(n, 1, 0.1, 1.0, rng).col(0);
  return w / w.sum();
}

DiscreteMeasure random_measure(Eigen::Index n, Rng& rng) {
  return DiscreteMeasure(random_matrix(n, 2, 0.0, 1.0, rng), random_simplex(n, rng));
}

void stability(const std::string& probe, int trials, std::uint64_t seed, double epsilon,
               std::ostream& out) {
  Rng rng(seed);
  std::uniform_int_distribution<int> size(2, 8);
  SinkhornConfig cfg;
  cfg.epsilon = epsilon;
  cfg.tol = 1e-12;
  cfg.max_iters = 1000000;
  if (probe == "lipschitz") {
    out << "trial,n,m,cost_gap,w1,ratio\n";
  } else if (probe == "cost-sequence") {
    out << "trial,n_index,cost_gap,w1_to_limit,objective_gap\n";
  } else if (probe == "shift") {
    out << "trial,n,m,w1\n";
  } else if (probe == "schrodinger") {
    out << "trial,t,uv_deviation,w1_to_limit\n";
  } else {
    throw UsageError("--probe must be lipschitz, cost-sequence, shift or schrodinger");
  }
  for (int t = 0; t < trials; ++t) {
    const int n = size(rng);
    const int m = size(rng);
    const DiscreteMeasure mu = random_measure(n, rng);
    const DiscreteMeasure nu = random_measure(m, rng);
    const Matrix c = random_matrix(n, m, -3.0, 3.0, rng);
    if (probe == "lipschitz") {
      const Matrix c2 = c + random_matrix(n, m, -0.5, 0.5, rng);
      const LipschitzProbe p = lipschitz_probe(CostMatrix(c), CostMatrix(c2), mu, nu, cfg);
      out << t << ',' << n << ',' << m << ',' << format_double(p.cost_gap) << ',' << format_double(p.w1)
          << ',' << format_double(p.ratio) << '\n';
    } else if (probe == "cost-sequence") {
      const Matrix dir = random_matrix(n, m, -1.0, 1.0, rng);
      for (const auto& s : cost_sequence_probe(CostMatrix(c), dir, mu, nu, {1, 2, 4, 8, 16}, cfg)) {
        out << t << ',' << s.n << ',' << format_double(s.cost_gap) << ',' << format_double(s.w1_to_limit)
            << ',' << format_double(s.objective_gap) << '\n';
      }
    } else if (probe == "shift") {
      const Vector alpha = random_matrix(n, 1, -10.0, 10.0, rng).col(0);
      const Vector beta = random_matrix(m, 1, -10.0, 10.0, rng).col(0);
      const Matrix shifted = (c.colwise() + alpha).rowwise() + beta.transpose();
      const double w1 = coupling_w1(sinkhorn_solve(CostMatrix(c), mu, nu, cfg).coupling,
                                    sinkhorn_solve(CostMatrix(shifted), mu, nu, cfg).coupling);
      out << t << ',' << n << ',' << m << ',' << format_double(w1) << '\n';
    } else {
      const Coupling base = sinkhorn_solve(CostMatrix(c), mu, nu, cfg).coupling;
      const Vector eta_a = random_simplex(n, rng);
      const Vector eta_b = random_simplex(m, rng);
      const std::vector<double> sizes = {0.1, 0.05, 0.025};
      std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>> perturbed;
      for (const double s : sizes) {
        perturbed.emplace_back(mu.with_weights((1.0 - s) * mu.weights() + s * eta_a),
                               nu.with_weights((1.0 - s) * nu.weights() + s * eta_b));
      }
      const auto reports = schrodinger_perturbation_probe(density_of(base), mu, nu, perturbed, cfg);
      for (std::size_t i = 0; i < reports.size(); ++i) {
        out << t << ',' << format_double(sizes[i]) << ',' << format_double(reports[i].uv_deviation) << ','
            << format_double(reports[i].w1_to_limit) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// model train / eval

void model_train(const std::string& family, std::uint64_t seed, const std::string& config,
                 const std::string& out_dir, spdlog::logger& log) {
  TrainExperiment exp = config.empty() ? train_experiment_from_json(Json::object())
                                       : train_experiment_from_json(read_json_file(config));
  try {
    exp.data.family = parse_family(family);
  } catch (const Error& e) {
    throw UsageError(std::string("--family: ") + e.what());
  }
  exp.data.seed = seed;
  exp.train.seed = seed;
  const int train_count = exp.data.count;
  exp.data.count = train_count + exp.heldout_count;
  std::vector<CouplingSystemSample> all = synth_coupling_system(exp.data);
  const std::vector<CouplingSystemSample> heldout(all.begin() + train_count, all.end());
  all.erase(all.begin() + train_count, all.end());
  exp.data.count = train_count;

  fs::create_directories(out_dir);
  Rng rng(seed + 1);
  const SinkhornTransformerParams params0 = random_transformer(exp.shape, exp.shared, rng);
  log.info("training on {} samples of family {} for {} iterations", all.size(), family,
           exp.train.iterations);
  const TrainResult res = train(all, heldout, params0, exp.train);

  const fs::path dir(out_dir);
  write_json_file(dir / "params.json", to_json(res.params));
  write_json_file(dir / "heldout.json", dataset_to_json(heldout));
  Json resolved = to_json(exp);
  resolved["family"] = family;
  write_json_file(dir / "config.json", resolved);
  std::ofstream hist(dir / "history.csv");
  if (!hist) throw Error(ErrorKind::kInvalidInput, "cannot write history.csv in " + out_dir);
  hist << "iteration,heldout_loss,sup_w1,sup_rel_w1\n";
  for (const auto& h : res.history) {
    hist << h.iteration << ',' << format_double(h.heldout_loss) << ',' << format_double(h.sup_w1) << ','
         << format_double(h.sup_rel_w1) << '\n';
  }
  log.info("final held-out sup W1 {} ({} of diameter)", res.history.back().sup_w1,
           res.history.back().sup_rel_w1);
}

void model_eval(const std::string& params_path, const std::string& dataset_path, double epsilon,
                double tol, std::ostream& out) {
  const SinkhornTransformerParams params = transformer_from_json(read_json_file(params_path));
  const std::vector<CouplingSystemSample> data = dataset_from_json(read_json_file(dataset_path));
  SinkhornConfig cfg;
  cfg.epsilon = epsilon;
  cfg.tol = tol;
  cfg.max_iters = 1000000;
  out << "sample,n,m,w1,diameter,rel_w1\n";
  for (std::size_t s = 0; s < data.size(); ++s) {
    const SampleW1 r = evaluate_w1(params, data[s], cfg);
    out << s << ',' << data[s].mu.size() << ',' << data[s].nu.size() << ',' << format_double(r.w1) << ','
        << format_double(r.diameter) << ',' << format_double(r.diameter > 0 ? r.w1 / r.diameter : 0.0)
        << '\n';
  }
}

int selftest(bool quick, std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (int id = 1; id <= kCriterionCount; ++id) {
    CriterionResult r;
    if (quick && id == 8) {
      r.id = id;
      r.name = "universal approximation experiment";
      r.skipped = true;
      r.passed = true;
      r.detail = "skipped in quick mode";
    } else {
      r = run_criterion(id, seed);
    }
    ok = ok && r.passed;
    out << format_result_line(r) << '\n' << std::flush;
  }
  out << (ok ? "selftest: all criteria pass" : "selftest: FAILURES") << '\n';
  return ok ? kExitOk : kExitDomain;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sinkhorn Transformer experiments"};
  app.name("sinkformer");
  app.require_subcommand(1);

  auto* ot = app.add_subcommand("ot", "Entropic optimal transport");
  ot->require_subcommand(1);
  OtSolveArgs ot_args;
  auto* ot_solve_cmd = ot->add_subcommand("solve", "Sinkhorn plan of a cost matrix; CSV then diagnostics JSON");
  ot_solve_cmd->add_option("--cost", ot_args.cost, "Cost matrix CSV")->required();
  ot_solve_cmd->add_option("--mu", ot_args.mu, "Row measure JSON")->required();
  ot_solve_cmd->add_option("--nu", ot_args.nu, "Column measure JSON")->required();
  ot_solve_cmd->add_option("--epsilon", ot_args.epsilon, "Regularization")->capture_default_str();
  ot_solve_cmd->add_option("--tol", ot_args.tol, "L1 column violation tolerance")->capture_default_str();
  ot_solve_cmd->add_option("--max-iters", ot_args.max_iters, "Sweep budget")->capture_default_str();
  ot_solve_cmd->add_flag("--kernel", ot_args.kernel, "Kernel-domain iterations instead of log domain");

  auto* approx = app.add_subcommand("approx", "Block approximation of couplings");
  approx->require_subcommand(1);
  std::string approx_input;
  std::string approx_k = "1,2,4,8";
  std::string approx_out;
  auto* demo = approx->add_subcommand("demo", "Per-k W1 gaps and test-function errors as CSV");
  demo->add_option("--input", approx_input, "Coupling JSON")->required();
  demo->add_option("--k", approx_k, "Comma-separated partition scales")->capture_default_str();
  demo->add_option("--out", approx_out, "Report CSV path")->required();

  std::string probe;
  int trials = 10;
  std::uint64_t stab_seed = 0;
  double stab_eps = 1.0;
  auto* stab = app.add_subcommand("stability", "Randomized stability probes as CSV");
  stab->add_option("--probe", probe, "lipschitz | cost-sequence | shift | schrodinger")->required();
  stab->add_option("--trials", trials, "Number of random instances")->capture_default_str()->check(CLI::Range(1, 100000));
  stab->add_option("--seed", stab_seed, "RNG seed")->capture_default_str();
  stab->add_option("--epsilon", stab_eps, "Regularization")->capture_default_str()->check(CLI::PositiveNumber);

  auto* model = app.add_subcommand("model", "Sinkhorn Transformer training");
  model->require_subcommand(1);
  std::string family;
  std::uint64_t train_seed = 0;
  std::string train_config;
  std::string train_out;
  auto* train_cmd = model->add_subcommand("train", "Train on a synthetic coupling system");
  train_cmd->add_option("--family", family, "product | planted-entropic | block")->required();
  train_cmd->add_option("--seed", train_seed, "Data, initialisation and batching seed")->capture_default_str();
  train_cmd->add_option("--config", train_config, "Training config JSON");
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  std::string eval_params;
  std::string eval_dataset;
  double eval_eps = 1.0;
  double eval_tol = 1e-9;
  auto* eval_cmd = model->add_subcommand("eval", "Per-sample W1 of a trained model as CSV");
  eval_cmd->add_option("--params", eval_params, "Parameter JSON")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset JSON")->required();
  eval_cmd->add_option("--epsilon", eval_eps, "Regularization used in training")->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--tol", eval_tol, "Sinkhorn tolerance")->capture_default_str()->check(CLI::PositiveNumber);

  bool quick = false;
  std::uint64_t selftest_seed = kSelftestSeed;
  auto* st = app.add_subcommand("selftest", "Run the acceptance suite and print a pass/fail table");
  st->add_flag("--quick", quick, "Skip the training experiment");
  st->add_option("--seed", selftest_seed, "Suite seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto log = make_logger(err);
    if (ot_solve_cmd->parsed()) {
      ot_solve(ot_args, out, *log);
    } else if (demo->parsed()) {
      approx_demo(approx_input, approx_k, approx_out, *log);
    } else if (stab->parsed()) {
      stability(probe, trials, stab_seed, stab_eps, out);
    } else if (train_cmd->parsed()) {
      model_train(family, train_seed, train_config, train_out, *log);
    } else if (eval_cmd->parsed()) {
      model_eval(eval_params, eval_dataset, eval_eps, eval_tol, out);
    } else if (st->parsed()) {
      return selftest(quick, selftest_seed, out);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
}

}  // namespace sinkformer::cli
