// Command-line runner: riccati | simulate | gls | eval | concentration | decouple.
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical failure.

#include "lcrl/lcrl.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = ".";
  int threads = 1;
  int runs = 1;
  std::string policy;
};

std::ofstream open_output(const Options& o, const std::string& name) {
  std::filesystem::create_directories(o.out);
  const auto path = std::filesystem::path(o.out) / name;
  std::ofstream os(path);
  if (!os) throw lcrl::ValidationError("cannot write '" + path.string() + "'");
  return os;
}

lcrl::Policy policy_for(const Options& o, const lcrl::ExperimentConfig& cfg) {
  if (!o.policy.empty()) return lcrl::parse_policy(lcrl::read_json_file(o.policy), cfg);
  if (std::holds_alternative<lcrl::LQCost>(cfg.instance.cost))
    return lcrl::greedy_policy(cfg.instance.theta, std::get<lcrl::LQCost>(cfg.instance.cost), cfg.instance.horizon,
                               cfg.dt);
  return lcrl::ConstantPolicy{lcrl::Vector::Zero(cfg.instance.theta.k())};
}

int cmd_riccati(const Options& o) {
  const auto cfg = lcrl::load_config(o.config);
  const auto& cost = lcrl::require_lq(cfg.instance.cost);
  const auto sol = lcrl::solve_riccati(cfg.instance.theta, cost, cfg.instance.horizon, cfg.dt);
  const auto half = lcrl::solve_riccati(cfg.instance.theta, cost, cfg.instance.horizon, cfg.dt / 2);
  auto os = open_output(o, "riccati.csv");
  lcrl::write_riccati_csv(os, sol);
  std::cout << std::setprecision(12) << "P0_frobenius " << sol.P.front().norm() << '\n'
            << "P0_change_dt_halved " << (sol.P.front() - half.P.front()).norm() << '\n';
  return 0;
}

int cmd_simulate(const Options& o) {
  const auto cfg = lcrl::load_config(o.config);
  const auto policy = policy_for(o, cfg);
  if (o.runs < 1) throw lcrl::ValidationError("--runs must be at least 1");
  const auto batch = lcrl::simulate_batch(cfg.instance, policy, cfg.dt, o.runs, o.seed, o.threads);
  auto os = open_output(o, "trajectory.csv");
  lcrl::write_trajectory_csv(os, batch.trajectories.front());
  double total = 0.0;
  for (const auto& tr : batch.trajectories) total += tr.cost;
  std::cout << std::setprecision(12) << "episodes " << o.runs << '\n'
            << "mean_pathwise_cost " << total / o.runs << '\n'
            << "U\n" << batch.stats.U << "\nV\n" << batch.stats.V << '\n';
  return 0;
}

int cmd_gls(const Options& o) {
  if (!o.seed_given) throw lcrl::ValidationError("gls requires --seed");
  const auto cfg = lcrl::load_config(o.config);
  const auto gls = cfg.gls_config(o.seed, o.threads);
  const auto ensemble = lcrl::run_ensemble(gls, o.runs);
  auto report = open_output(o, "report.jsonl");
  lcrl::write_report_jsonl(report, ensemble.reports);
  auto regret = open_output(o, "regret.csv");
  lcrl::write_regret_csv(regret, ensemble.summary);

  const auto& s = ensemble.summary;
  std::cout << std::setprecision(6) << "runs " << o.runs << " used " << s.used_runs << " aborted " << s.aborted_runs
            << '\n';
  if (s.used_runs == 0) return 3;
  const auto fit = lcrl::regret_slope(s);
  const std::size_t last = s.mean_rel_A.size() - 1;
  const std::size_t probe = last > 0 ? last - 1 : 0;
  std::cout << "update " << probe << " rel_A " << s.mean_rel_A[probe] << " rel_B " << s.mean_rel_B[probe]
            << " relative_gap " << s.mean_relative_gap[probe] << '\n'
            << "final rel_A " << s.mean_rel_A[last] << " rel_B " << s.mean_rel_B[last] << " relative_gap "
            << s.mean_relative_gap[last] << '\n'
            << "regret_total " << s.mean.back() << '\n';
  if (fit.defined)
    std::cout << "regret_slope " << fit.exponent << '\n';
  else
    std::cout << "regret_slope undefined\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const auto cfg = lcrl::load_config(o.config);
  const auto policy = policy_for(o, cfg);
  std::cout << std::setprecision(12);
  if (const auto* lq = std::get_if<lcrl::LQCost>(&cfg.instance.cost);
      lq != nullptr && !std::holds_alternative<lcrl::TabulatedPolicy>(policy)) {
    const double J = lcrl::evaluate_lq_cost(cfg.instance.theta, cfg.instance.noise, *lq, policy, cfg.instance.x0,
                                            cfg.instance.horizon, cfg.dt);
    const double opt = lcrl::greedy_cost(cfg.instance.theta, cfg.instance, cfg.dt);
    std::cout << "expected_cost " << J << '\n' << "optimal_cost " << opt << '\n' << "gap " << J - opt << '\n';
    return 0;
  }
  const auto mc = lcrl::mc_cost(cfg.instance, policy, cfg.dt, cfg.mc_episodes, o.seed, o.threads);
  std::cout << "expected_cost " << mc.mean << '\n' << "standard_error " << mc.std_error << '\n';
  return 0;
}

int cmd_concentration(const Options& o) {
  const auto cfg = lcrl::load_config(o.config);
  const auto policy = policy_for(o, cfg);
  lcrl::ConcentrationConfig cc;
  cc.selector = cfg.concentration.selector;
  cc.epsilon = cfg.concentration.epsilon;
  cc.m_list = cfg.concentration.m_list;
  cc.trials = cfg.concentration.trials;
  cc.dt = cfg.dt;
  cc.seed = o.seed;
  cc.threads = o.threads;
  const auto curve = lcrl::concentration_curve(cfg.instance, policy, cc);
  auto os = open_output(o, "concentration.csv");
  lcrl::write_concentration_csv(os, curve);
  std::cout << std::setprecision(6) << "reference " << curve.reference << '\n'
            << "nonincreasing " << (curve.nonincreasing ? "yes" : "no") << '\n';
  if (curve.decay_defined)
    std::cout << "decay_slope " << curve.decay_slope << '\n';
  else
    std::cout << "decay_slope undefined\n";
  return 0;
}

int cmd_decouple(const Options& o) {
  const auto cfg = lcrl::load_config(o.config);
  const auto field = lcrl::solve_field(cfg.instance, cfg.decouple);
  const auto policy = lcrl::field_to_policy(field, cfg.instance.cost, cfg.instance.theta);
  auto os = open_output(o, "field.csv");
  lcrl::write_field_csv(os, field, policy);
  std::cout << std::setprecision(6) << "time_steps " << field.times.size() - 1 << " dt " << field.dt() << '\n'
            << "space_points " << field.xs.size() << " dx " << field.dx() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning linear-convex control: Riccati, simulation, GLS learning, diagnostics"};
  app.require_subcommand(1);
  Options o;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--runs", o.runs, "ensemble runs or episodes")->check(CLI::PositiveNumber);
    sub->add_option("--policy", o.policy, "JSON policy file")->check(CLI::ExistingFile);
  };
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Command commands[] = {
      {"riccati", "solve the Riccati equation and write riccati.csv", cmd_riccati},
      {"simulate", "simulate episodes and write trajectory.csv", cmd_simulate},
      {"gls", "run the GLS learner and write report.jsonl and regret.csv", cmd_gls},
      {"eval", "print the expected cost of a policy", cmd_eval},
      {"concentration", "estimate exceedance probabilities and write concentration.csv", cmd_concentration},
      {"decouple", "solve the scalar decoupling field and write field.csv", cmd_decouple},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, c.fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (seed) {
    o.seed = *seed;
    o.seed_given = true;
  }
  try {
    for (const auto& [sub, fn] : subs)
      if (sub->parsed()) return fn(o);
  } catch (const lcrl::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const lcrl::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
