// pne_bench: desk-scale experiment harness.
//
//   pne_bench grid        --config exp.ini --out results --seeds 0,1,2 --threads 4
//   pne_bench sigma-sweep --config exp.ini
//   pne_bench neigh-stats
//   pne_bench gradcheck   [--inject-fault gaussian-jacobian]
//   pne_bench train       --out run1
//   pne_bench eval        --model run1/model.pne
//
// Exit codes: 0 ok, 1 check failed (gradcheck), 2 bad config or input, 3 runtime error.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "pne/errors.hpp"
#include "pne/experiments.hpp"
#include "pne/gradcheck.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string seeds;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_threads) {
  cmd->add_option("--config", c.config, "experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (default: [experiment] output)");
  cmd->add_option("--seeds", c.seeds, "comma-separated seed list, overrides the config");
  if (with_threads) cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1, 256));
}

pne::ExperimentConfig load(const Common& c) {
  pne::ExperimentConfig cfg = c.config.empty() ? pne::default_experiment_config() : pne::load_experiment(c.config);
  if (!c.seeds.empty()) {
    try {
      cfg.seeds = pne::parse_seed_list(c.seeds);
    } catch (const pne::Error& e) {
      throw pne::ConfigError("experiment.seeds", e.what());
    }
  }
  if (!c.out.empty()) cfg.output = c.out;
  pne::validate(cfg);
  return cfg;
}

int run_gradcheck(std::size_t probes, const std::string& fault, const std::string& out) {
  pne::GradcheckOptions opts;
  opts.probes = probes;
  opts.fault = pne::parse_fault(fault);
  const pne::GradcheckReport report = pne::run_gradcheck(opts);

  std::ostringstream csv;
  csv << "component,probes,max_rel_error,tolerance,passed\n";
  std::cout << std::left << std::setw(30) << "component" << std::right << std::setw(8) << "probes" << std::setw(14)
            << "max_rel_err" << std::setw(10) << "tol" << "  result\n";
  for (const auto& c : report.components) {
    std::cout << std::left << std::setw(30) << c.name << std::right << std::setw(8) << c.probes << std::setw(14)
              << std::setprecision(3) << std::scientific << c.max_rel_error << std::setw(10) << std::setprecision(0)
              << c.tolerance << std::defaultfloat << "  " << (c.passed ? "ok" : "FAIL");
    if (!c.note.empty()) std::cout << "  (" << c.note << ")";
    std::cout << '\n';
    csv << c.name << ',' << c.probes << ',' << pne::format_number(c.max_rel_error) << ','
        << pne::format_number(c.tolerance) << ',' << (c.passed ? 1 : 0) << '\n';
  }
  std::cout << report.components.size() << " components, " << std::setprecision(3) << report.seconds << " s\n";
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(std::filesystem::path(out) / "gradcheck.csv", std::ios::binary) << csv.str();
  }
  if (report.passed()) {
    std::cout << "gradcheck: all components passed\n";
    return 0;
  }
  std::cout << "gradcheck: FAILED:";
  for (const auto& name : report.failures()) std::cout << ' ' << name;
  std::cout << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point neighborhood embedding benchmark harness"};
  app.require_subcommand(1);

  Common grid_c, sigma_c, stats_c, train_c, eval_c;
  auto* grid = app.add_subcommand("grid", "embedding x neighborhood grid");
  add_common(grid, grid_c, true);
  auto* sigma = app.add_subcommand("sigma-sweep", "sigma factor sweep for triangular/gaussian kernels");
  add_common(sigma, sigma_c, true);
  auto* stats = app.add_subcommand("neigh-stats", "farthest-neighbor distance statistics per level");
  add_common(stats, stats_c, false);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  std::size_t probes = 1000;
  std::string fault = "none";
  std::string grad_out;
  grad->add_option("--probes", probes, "probes per component")->check(CLI::PositiveNumber);
  grad->add_option("--inject-fault", fault, "corrupt a gradient on purpose")
      ->check(CLI::IsMember({"none", "gaussian-jacobian"}));
  grad->add_option("--out", grad_out, "also write gradcheck.csv here");

  auto* train = app.add_subcommand("train", "train one model (first seed)");
  add_common(train, train_c, false);
  auto* eval = app.add_subcommand("eval", "score a saved model on the test split");
  add_common(eval, eval_c, false);
  std::string model;
  eval->add_option("--model", model, "model file (default: <out>/model.pne)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (grad->parsed()) return run_gradcheck(probes, fault, grad_out);
    if (grid->parsed()) {
      const auto cfg = load(grid_c);
      const auto rows = pne::cmd_grid(cfg, cfg.output, grid_c.threads, &std::cerr);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.metrics ? 0 : 1;
      std::cout << rows.size() << " rows written to " << cfg.output << "/grid.csv";
      if (failed > 0) std::cout << " (" << failed << " failed)";
      std::cout << '\n';
    } else if (sigma->parsed()) {
      const auto cfg = load(sigma_c);
      const auto rows = pne::cmd_sigma_sweep(cfg, cfg.output, sigma_c.threads, &std::cerr);
      std::cout << rows.size() << " rows written to " << cfg.output << "/sigma_sweep.csv\n";
    } else if (stats->parsed()) {
      const auto cfg = load(stats_c);
      const auto rows = pne::cmd_neighborhood_stats(cfg, cfg.output, &std::cerr);
      std::cout << rows.size() << " rows written to " << cfg.output << "/neigh_stats.csv\n";
    } else if (train->parsed()) {
      const auto cfg = load(train_c);
      const auto r = pne::cmd_train(cfg, cfg.output, &std::cerr);
      if (r.final_eval) std::cout << "final oa " << pne::format_number(r.final_eval->overall_accuracy) << '\n';
      std::cout << "model written to " << cfg.output << "/model.pne\n";
    } else if (eval->parsed()) {
      const auto cfg = load(eval_c);
      const std::filesystem::path path = model.empty() ? std::filesystem::path(cfg.output) / "model.pne" : std::filesystem::path(model);
      const auto m = pne::cmd_eval(cfg, path, cfg.output, &std::cerr);
      std::cout << "oa " << pne::format_number(m.overall_accuracy) << " macc " << pne::format_number(m.mean_class_accuracy)
                << " miou " << pne::format_number(m.mean_iou) << '\n';
    }
  } catch (const pne::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const pne::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const pne::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
