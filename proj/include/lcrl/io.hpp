// JSON experiment configuration, policy files and report writers.
#pragma once

#include "lcrl/control.hpp"
#include "lcrl/decouple.hpp"
#include "lcrl/learn.hpp"
#include "lcrl/model.hpp"
#include "lcrl/stats.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lcrl {

using Json = nlohmann::json;

/// Settings of the learning loop that are not part of the problem instance.
struct GLSSettings {
  ModelTheta theta0;  // empty selects the true theta
  int m0 = 4;
  int updates = 11;
  double delta = 0.1;
  bool pooled = false;
  RegretMode regret = RegretMode::expected;
  RidgeNormalization ridge = RidgeNormalization::per_time;
};

struct ConcentrationSettings {
  StatSelector selector;
  double epsilon = 0.1;
  std::vector<int> m_list{4, 8, 16, 32, 64};
  int trials = 200;
};

struct ExperimentConfig {
  ProblemInstance instance;
  double dt = 0.01;
  GLSSettings gls;
  GridParams decouple;
  ConcentrationSettings concentration;
  int mc_episodes = 10000;

  [[nodiscard]] GLSConfig gls_config(std::uint64_t seed, int threads) const {
    GLSConfig c;
    c.instance = instance;
    c.theta0 = gls.theta0.A.size() > 0 ? gls.theta0 : instance.theta;
    c.m0 = gls.m0;
    c.updates = gls.updates;
    c.delta = gls.delta;
    c.seed = seed;
    c.dt = dt;
    c.pooled = gls.pooled;
    c.regret = gls.regret;
    c.ridge = gls.ridge;
    c.threads = threads;
    return c;
  }
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { throw ValidationError("config: " + what); }

inline const Json& member(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) config_error(std::string("missing key '") + key + "'");
  return j.at(key);
}

inline double number(const Json& j, const std::string& what) {
  if (!j.is_number()) config_error(what + " must be a number");
  return j.get<double>();
}

inline int integer(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) config_error(what + " must be an integer");
  return j.get<int>();
}

inline Vector vector_from(const Json& j, const std::string& what) {
  if (!j.is_array()) config_error(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], what);
  return v;
}

inline Matrix matrix_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) config_error(what + " must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) config_error(what + " rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], what);
  }
  return m;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

inline ModelTheta theta_from(const Json& j, const std::string& what) {
  return ModelTheta{matrix_from(member(j, "A"), what + ".A"), matrix_from(member(j, "B"), what + ".B")};
}

inline Json theta_to_json(const ModelTheta& t) { return Json{{"A", to_json(t.A)}, {"B", to_json(t.B)}}; }

inline double number_or(const Json& j, const char* key, double fallback) {
  return j.contains(key) ? number(j.at(key), key) : fallback;
}

inline int integer_or(const Json& j, const char* key, int fallback) {
  return j.contains(key) ? integer(j.at(key), key) : fallback;
}

inline std::string string_or(const Json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) config_error(std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

inline NoiseSpec noise_from(const Json& j) {
  NoiseSpec noise;
  noise.sigma = matrix_from(member(j, "sigma"), "noise.sigma");
  noise.jump_rate = number_or(j, "jump_rate", 0.0);
  noise.tail_order = number_or(j, "tail_order", 0.0);
  if (j.contains("marks")) {
    const Json& m = j.at("marks");
    const std::string law = string_or(m, "law", "none");
    if (law == "none") {
      noise.marks = NoMarks{};
    } else if (law == "discrete") {
      DiscreteMarks d;
      const Json& pts = member(m, "marks");
      if (!pts.is_array()) config_error("noise.marks.marks must be an array");
      for (const auto& p : pts) d.marks.push_back(vector_from(p, "noise.marks.marks"));
      const Vector probs = vector_from(member(m, "probs"), "noise.marks.probs");
      d.probs.assign(probs.data(), probs.data() + probs.size());
      noise.marks = d;
    } else if (law == "exponential") {
      noise.marks = ExponentialMarks{vector_from(member(m, "scale"), "noise.marks.scale")};
    } else {
      config_error("unknown mark law '" + law + "'");
    }
  }
  return noise;
}

inline Json noise_to_json(const NoiseSpec& noise) {
  Json marks;
  if (const auto* d = std::get_if<DiscreteMarks>(&noise.marks)) {
    Json pts = Json::array();
    for (const auto& p : d->marks) pts.push_back(to_json(p));
    marks = Json{{"law", "discrete"}, {"marks", pts}, {"probs", d->probs}};
  } else if (const auto* e = std::get_if<ExponentialMarks>(&noise.marks)) {
    marks = Json{{"law", "exponential"}, {"scale", to_json(e->scale)}};
  } else {
    marks = Json{{"law", "none"}};
  }
  return Json{{"sigma", to_json(noise.sigma)},
              {"jump_rate", noise.jump_rate},
              {"marks", marks},
              {"tail_order", noise.tail_order}};
}

inline CostSpec cost_from(const Json& j) {
  const std::string type = string_or(j, "type", "lq");
  if (type == "lq")
    return LQCost{matrix_from(member(j, "Q"), "cost.Q"), matrix_from(member(j, "R"), "cost.R"),
                  matrix_from(member(j, "G"), "cost.G")};
  if (type == "l1lq")
    return L1LQCost{matrix_from(member(j, "Q"), "cost.Q"), matrix_from(member(j, "R"), "cost.R"),
                    matrix_from(member(j, "G"), "cost.G"), number(member(j, "kappa"), "cost.kappa")};
  if (type == "entropy_linear") {
    const Json& f = member(j, "fbar");
    AffineField fbar{vector_from(member(f, "offset"), "cost.fbar.offset"),
                     vector_from(member(f, "time_slope"), "cost.fbar.time_slope"),
                     matrix_from(member(f, "state"), "cost.fbar.state")};
    return EntropyLinearCost{fbar, number(member(j, "rho"), "cost.rho"), matrix_from(member(j, "Q"), "cost.Q"),
                             matrix_from(member(j, "G"), "cost.G")};
  }
  config_error("unknown cost type '" + type + "'");
}

inline Json cost_to_json(const CostSpec& cost) {
  return std::visit(
      [](const auto& c) -> Json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LQCost>) {
          return Json{{"type", "lq"}, {"Q", to_json(c.Q)}, {"R", to_json(c.R)}, {"G", to_json(c.G)}};
        } else if constexpr (std::is_same_v<T, L1LQCost>) {
          return Json{{"type", "l1lq"},       {"Q", to_json(c.Q)}, {"R", to_json(c.R)},
                      {"G", to_json(c.G)}, {"kappa", c.kappa}};
        } else {
          return Json{{"type", "entropy_linear"},
                      {"Q", to_json(c.Q)},
                      {"G", to_json(c.G)},
                      {"rho", c.rho},
                      {"fbar",
                       {{"offset", to_json(c.fbar.offset)},
                        {"time_slope", to_json(c.fbar.time_slope)},
                        {"state", to_json(c.fbar.state)}}}};
        }
      },
      cost);
}

inline const char* regret_name(RegretMode m) { return m == RegretMode::expected ? "expected" : "realized"; }

inline const char* ridge_name(RidgeNormalization r) {
  return r == RidgeNormalization::per_time ? "per_time" : "per_sample";
}

}  // namespace detail

/// Parses and validates an experiment configuration.
inline ExperimentConfig parse_config(const Json& j) {
  using namespace detail;
  ExperimentConfig cfg;
  try {
    if (!j.is_object()) config_error("top level must be an object");
    cfg.instance.theta = theta_from(member(j, "model"), "model");
    cfg.instance.noise = noise_from(member(j, "noise"));
    cfg.instance.cost = cost_from(member(j, "cost"));
    cfg.instance.horizon = number(member(j, "horizon"), "horizon");
    cfg.instance.x0 = j.contains("x0") ? vector_from(j.at("x0"), "x0") : Vector(Vector::Zero(cfg.instance.theta.n()));
    if (j.contains("sim")) cfg.dt = number_or(j.at("sim"), "dt", cfg.dt);

    if (j.contains("gls")) {
      const Json& g = j.at("gls");
      if (g.contains("theta0") && !g.at("theta0").is_null()) cfg.gls.theta0 = theta_from(g.at("theta0"), "gls.theta0");
      cfg.gls.m0 = integer_or(g, "m0", cfg.gls.m0);
      cfg.gls.updates = integer_or(g, "updates", cfg.gls.updates);
      cfg.gls.delta = number_or(g, "delta", cfg.gls.delta);
      if (g.contains("pooled")) {
        if (!g.at("pooled").is_boolean()) config_error("gls.pooled must be a boolean");
        cfg.gls.pooled = g.at("pooled").get<bool>();
      }
      const std::string regret = string_or(g, "regret", "expected");
      if (regret == "expected")
        cfg.gls.regret = RegretMode::expected;
      else if (regret == "realized")
        cfg.gls.regret = RegretMode::realized;
      else
        config_error("gls.regret must be 'expected' or 'realized'");
      const std::string ridge = string_or(g, "ridge", "per_time");
      if (ridge == "per_time")
        cfg.gls.ridge = RidgeNormalization::per_time;
      else if (ridge == "per_sample")
        cfg.gls.ridge = RidgeNormalization::per_sample;
      else
        config_error("gls.ridge must be 'per_time' or 'per_sample'");
    }

    if (j.contains("decouple")) {
      const Json& d = j.at("decouple");
      cfg.decouple.x_max = number_or(d, "x_max", cfg.decouple.x_max);
      cfg.decouple.dx = number_or(d, "dx", cfg.decouple.dx);
      cfg.decouple.dt = number_or(d, "dt", cfg.decouple.dt);
    }

    if (j.contains("concentration")) {
      const Json& c = j.at("concentration");
      const std::string which = string_or(c, "statistic", "U");
      if (which == "U")
        cfg.concentration.selector.which = StatSelector::Which::U;
      else if (which == "V")
        cfg.concentration.selector.which = StatSelector::Which::V;
      else
        config_error("concentration.statistic must be 'U' or 'V'");
      cfg.concentration.selector.row = integer_or(c, "row", 0);
      cfg.concentration.selector.col = integer_or(c, "col", 0);
      cfg.concentration.epsilon = number_or(c, "epsilon", cfg.concentration.epsilon);
      cfg.concentration.trials = integer_or(c, "trials", cfg.concentration.trials);
      if (c.contains("m_list")) {
        const Json& ms = c.at("m_list");
        if (!ms.is_array()) config_error("concentration.m_list must be an array");
        cfg.concentration.m_list.clear();
        for (const auto& m : ms) cfg.concentration.m_list.push_back(integer(m, "concentration.m_list"));
      }
    }

    if (j.contains("mc")) cfg.mc_episodes = integer_or(j.at("mc"), "episodes", cfg.mc_episodes);
  } catch (const nlohmann::json::exception& e) {
    config_error(e.what());
  }
  require_valid(cfg.instance);
  if (!(cfg.dt > 0.0)) config_error("sim.dt must be positive");
  step_count(cfg.instance.horizon, cfg.dt);
  return cfg;
}

/// Normalized form: every field present, defaults made explicit.
inline Json to_json(const ExperimentConfig& cfg) {
  using namespace detail;
  Json gls{{"m0", cfg.gls.m0},
           {"updates", cfg.gls.updates},
           {"delta", cfg.gls.delta},
           {"pooled", cfg.gls.pooled},
           {"regret", regret_name(cfg.gls.regret)},
           {"ridge", ridge_name(cfg.gls.ridge)},
           {"theta0", cfg.gls.theta0.A.size() > 0 ? theta_to_json(cfg.gls.theta0) : Json(nullptr)}};
  return Json{{"model", theta_to_json(cfg.instance.theta)},
              {"noise", noise_to_json(cfg.instance.noise)},
              {"cost", cost_to_json(cfg.instance.cost)},
              {"horizon", cfg.instance.horizon},
              {"x0", to_json(cfg.instance.x0)},
              {"sim", {{"dt", cfg.dt}}},
              {"gls", gls},
              {"decouple", {{"x_max", cfg.decouple.x_max}, {"dx", cfg.decouple.dx}, {"dt", cfg.decouple.dt}}},
              {"concentration",
               {{"statistic", cfg.concentration.selector.which == StatSelector::Which::U ? "U" : "V"},
                {"row", cfg.concentration.selector.row},
                {"col", cfg.concentration.selector.col},
                {"epsilon", cfg.concentration.epsilon},
                {"m_list", cfg.concentration.m_list},
                {"trials", cfg.concentration.trials}}},
              {"mc", {{"episodes", cfg.mc_episodes}}}};
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

/// Policy description:
///   {"type": "optimal"}                      greedy feedback for the true theta
///   {"type": "greedy", "theta": {A, B}}      greedy feedback for another theta
///   {"type": "constant", "action": [...]}
///   {"type": "linear_gain", "times": [...], "gains": [[[...]]], "offset": [...]}
inline Policy parse_policy(const Json& j, const ExperimentConfig& cfg) {
  using namespace detail;
  try {
    const std::string type = string_or(j, "type", "");
    if (type == "optimal" || type == "greedy") {
      const ModelTheta theta = type == "optimal" ? cfg.instance.theta : theta_from(member(j, "theta"), "policy.theta");
      if (theta.A.rows() != cfg.instance.theta.n() || theta.A.cols() != cfg.instance.theta.n() ||
          theta.B.rows() != cfg.instance.theta.n() || theta.B.cols() != cfg.instance.theta.k())
        config_error("policy theta has the wrong shape");
      return greedy_policy(theta, require_lq(cfg.instance.cost), cfg.instance.horizon, cfg.dt);
    }
    if (type == "constant") return ConstantPolicy{vector_from(member(j, "action"), "policy.action")};
    if (type == "linear_gain") {
      LinearGainPolicy p;
      const Vector times = vector_from(member(j, "times"), "policy.times");
      p.times.assign(times.data(), times.data() + times.size());
      const Json& gains = member(j, "gains");
      if (!gains.is_array()) config_error("policy.gains must be an array of matrices");
      for (const auto& g : gains) p.gains.push_back(matrix_from(g, "policy.gains"));
      if (j.contains("offset")) p.offset = vector_from(j.at("offset"), "policy.offset");
      const auto problems = validate(Policy{p});
      if (!problems.empty()) config_error("policy: " + problems.front());
      return p;
    }
    config_error("unknown policy type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    config_error(e.what());
  }
}

/// One JSON object per update of every run.
inline void write_report_jsonl(std::ostream& os, const std::vector<GLSReport>& reports) {
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const GLSReport& rep = reports[r];
    for (const UpdateRecord& rec : rep.records) {
      Json line{{"run", r},
                {"seed", rep.seed},
                {"update", rec.index},
                {"batch", rec.batch},
                {"rel_A", rec.error.rel_A},
                {"rel_B", rec.error.rel_B},
                {"rel_theta", rec.error.rel_theta},
                {"gap", rec.gap},
                {"relative_gap", rec.relative_gap},
                {"lambda_min_U", rec.lambda_min_U},
                {"condition_number", rec.condition_number},
                {"A", detail::to_json(rec.theta.A)},
                {"B", detail::to_json(rec.theta.B)}};
      os << line.dump() << '\n';
    }
    if (rep.aborted)
      os << Json{{"run", r}, {"seed", rep.seed}, {"aborted_at", rep.abort_update}, {"reason", rep.abort_reason}}.dump()
         << '\n';
  }
}

/// CSV with columns N, R_mean, R_lo, R_hi.
inline void write_regret_csv(std::ostream& os, const EnsembleSummary& s) {
  os << "N,R_mean,R_lo,R_hi\n";
  const auto old = os.precision(17);
  for (std::size_t i = 0; i < s.mean.size(); ++i) os << i << ',' << s.mean[i] << ',' << s.lo[i] << ',' << s.hi[i] << '\n';
  os.precision(old);
}

}  // namespace lcrl
