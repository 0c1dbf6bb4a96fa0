#include "priorloom/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "priorloom/errors.hpp"
#include "priorloom/log.hpp"
#include "priorloom/simuser.hpp"

namespace priorloom {
namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const char* where) {
  if (!obj.is_object()) throw ValidationError(std::string(where) + " must be a json object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError(std::string("unknown key \"") + key + "\" in " + where);
  }
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Everything one repeat needs: its data pool, simulated user and the
// test rows plus the nested training-row order.
struct RepeatData {
  FeatureMatrix pool;
  SimulatedUser user;
  std::vector<std::size_t> test_rows;
  std::vector<std::size_t> train_order;
};

RepeatData prepare_repeat(const ExperimentConfig& cfg, const RepeatSeeds& seeds, const FeatureMatrix* loaded) {
  RepeatData r;
  r.pool = cfg.synthetic ? generate_synthetic(*cfg.synthetic, seeds.data).matrix : *loaded;
  const std::size_t max_train = *std::max_element(cfg.training_sizes.begin(), cfg.training_sizes.end());
  const std::size_t need = cfg.user_set_size + cfg.test_size + max_train;
  if (r.pool.n() < need)
    throw ValidationError("dataset has " + std::to_string(r.pool.n()) + " rows but the experiment needs " +
                          std::to_string(need));
  const auto perm = seeded_permutation(r.pool.n(), seeds.user_set);
  std::vector<std::size_t> user_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.user_set_size));
  std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(cfg.user_set_size), perm.end());
  std::sort(rest.begin(), rest.end());
  r.user = construct_simulated_user(r.pool.rows(sorted(user_rows)), cfg.cluster_k, cfg.session.hypers,
                                    cfg.session.vb);
  const auto order = seeded_permutation(rest.size(), seeds.split);
  for (std::size_t t = 0; t < cfg.test_size; ++t) r.test_rows.push_back(rest[order[t]]);
  r.test_rows = sorted(r.test_rows);
  for (std::size_t t = cfg.test_size; t < cfg.test_size + max_train; ++t) r.train_order.push_back(rest[order[t]]);
  return r;
}

FeatureMatrix training_rows(const RepeatData& r, std::size_t n) {
  return r.pool.rows(sorted(std::vector<std::size_t>(r.train_order.begin(),
                                                     r.train_order.begin() + static_cast<std::ptrdiff_t>(n))));
}

SessionConfig headless(const ExperimentConfig& cfg) {
  SessionConfig s = cfg.session;
  s.visualize = false;
  return s;
}

// Runs `task(repeat)` for every repeat, on up to cfg.threads workers.
template <typename Task>
void for_each_repeat(const ExperimentConfig& cfg, const std::vector<RepeatSeeds>& seeds, Task task) {
  const std::size_t total = seeds.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      try {
        task(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure)
          failure = std::make_exception_ptr(std::runtime_error(
              "repeat (user " + std::to_string(seeds[i].user_construction) + ", selection " +
              std::to_string(seeds[i].data_selection) + ") failed: " + e.what()));
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(total)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<ResultCurve> make_curves(const ExperimentConfig& cfg, const std::vector<double>& x,
                                     const std::vector<Eigen::MatrixXd>& values) {
  std::vector<ResultCurve> curves;
  for (std::size_t b = 0; b < cfg.baselines.size(); ++b) {
    ResultCurve c;
    c.label = to_string(cfg.baselines[b]);
    c.x = x;
    c.per_repeat_mse = values[b];
    for (Eigen::Index i = 0; i < values[b].rows(); ++i) c.mean_mse.push_back(values[b].row(i).mean());
    curves.push_back(std::move(c));
  }
  return curves;
}

std::optional<FeatureMatrix> load_pool(const ExperimentConfig& cfg) {
  if (cfg.synthetic) return std::nullopt;
  return read_feature_matrix(cfg.matrix_path);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (rows == 0 || features == 0 || topics == 0) throw ValidationError("synthetic sizes must be positive");
  if (2 * cluster_size > features) throw ValidationError("planted clusters do not fit in the feature count");
  if (!(feature_scale > 0)) throw ValidationError("feature_scale must be positive");
  if (!(r_squared > 0 && r_squared < 1)) throw ValidationError("r_squared must lie in (0, 1)");
  if (!(feature_noise >= 0 && topic_scale >= 0 && rest_anchor_sd >= 0 && rest_coef_sd >= 0))
    throw ValidationError("synthetic scales must be nonnegative");
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"rows", s.rows},
          {"features", s.features},
          {"topics", s.topics},
          {"cluster_size", s.cluster_size},
          {"cluster_loading", s.cluster_loading},
          {"topic_scale", s.topic_scale},
          {"rest_anchor_sd", s.rest_anchor_sd},
          {"paired_topics", s.paired_topics},
          {"feature_scale", s.feature_scale},
          {"feature_noise", s.feature_noise},
          {"cluster_coef", s.cluster_coef},
          {"rest_coef_sd", s.rest_coef_sd},
          {"r_squared", s.r_squared}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  reject_unknown(j, {"rows", "features", "topics", "cluster_size", "cluster_loading", "topic_scale",
                     "rest_anchor_sd", "paired_topics", "feature_scale", "feature_noise", "cluster_coef", "rest_coef_sd", "r_squared"},
                 "synthetic spec");
  read_opt(j, "rows", s.rows);
  read_opt(j, "features", s.features);
  read_opt(j, "topics", s.topics);
  read_opt(j, "cluster_size", s.cluster_size);
  read_opt(j, "cluster_loading", s.cluster_loading);
  read_opt(j, "topic_scale", s.topic_scale);
  read_opt(j, "rest_anchor_sd", s.rest_anchor_sd);
  read_opt(j, "paired_topics", s.paired_topics);
  read_opt(j, "feature_scale", s.feature_scale);
  read_opt(j, "feature_noise", s.feature_noise);
  read_opt(j, "cluster_coef", s.cluster_coef);
  read_opt(j, "rest_coef_sd", s.rest_coef_sd);
  read_opt(j, "r_squared", s.r_squared);
  s.validate();
  return s;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(spec.rows);
  const auto d = static_cast<Eigen::Index>(spec.features);
  const auto l = static_cast<Eigen::Index>(spec.topics);
  const auto k = static_cast<Eigen::Index>(spec.cluster_size);

  Eigen::MatrixXd W(l, d);
  Eigen::VectorXd beta(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index t = 0; t < l; ++t) W(t, j) = spec.topic_scale * normal(rng);
    if (j < k) {
      W(0, j) = spec.cluster_loading;
      beta(j) = spec.cluster_coef;
    } else if (j < 2 * k) {
      W(0, j) = -spec.cluster_loading;
      beta(j) = -spec.cluster_coef;
    } else {
      W(0, j) = spec.rest_anchor_sd * normal(rng);
      beta(j) = spec.rest_coef_sd * normal(rng);
    }
  }
  if (spec.paired_topics && k > 0)
    for (Eigen::Index t = 1; t < l; ++t) {
      const double shift = W.row(t).segment(0, k).mean() - W.row(t).segment(k, k).mean();
      W.row(t).segment(k, k).array() += shift;
    }
  Eigen::MatrixXd Z(n, l);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < l; ++t) Z(i, t) = normal(rng);
  Eigen::MatrixXd E(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) E(i, j) = spec.feature_noise * normal(rng);

  SyntheticData out;
  out.matrix.X = spec.feature_scale * (Z * W + E);
  beta /= spec.feature_scale;
  const double signal_var = spec.feature_scale * spec.feature_scale *
                            ((W * beta).squaredNorm() + spec.feature_noise * spec.feature_noise * beta.squaredNorm());
  out.noise_sd = std::sqrt(signal_var * (1.0 - spec.r_squared) / spec.r_squared);
  out.matrix.y = out.matrix.X * beta;
  for (Eigen::Index i = 0; i < n; ++i) out.matrix.y(i) += out.noise_sd * normal(rng);
  for (Eigen::Index j = 0; j < d; ++j) out.matrix.feature_names.push_back("f" + std::to_string(j));
  out.beta = beta;
  return out;
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::unit_prior: return "unit_prior";
    case Baseline::without_feedback: return "without_feedback";
    case Baseline::with_feedback: return "with_feedback";
  }
  return "?";
}

Baseline parse_baseline(const std::string& name) {
  if (name == "unit_prior") return Baseline::unit_prior;
  if (name == "without_feedback") return Baseline::without_feedback;
  if (name == "with_feedback") return Baseline::with_feedback;
  throw ValidationError("unknown baseline '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (synthetic.has_value() == !matrix_path.empty())
    throw ValidationError("experiment needs exactly one of a synthetic spec or a matrix path");
  if (synthetic) synthetic->validate();
  if (training_sizes.empty()) throw ValidationError("training_sizes must not be empty");
  for (auto n : training_sizes)
    if (n == 0) throw ValidationError("training sizes must be positive");
  if (test_size == 0 || user_set_size == 0) throw ValidationError("test_size and user_set_size must be positive");
  if (cluster_k < 1 || rounds < 1) throw ValidationError("cluster_k and rounds must be positive");
  if (per_round_similar < 0 || per_round_dissimilar < 0 || per_round_similar + per_round_dissimilar == 0)
    throw ValidationError("feedback per round must be nonnegative and not both zero");
  if (batch_similar < 0 || batch_dissimilar < 0) throw ValidationError("batch feedback counts must be >= 0");
  if (user_constructions < 1 || data_selections < 1) throw ValidationError("repeat counts must be positive");
  if (baselines.empty()) throw ValidationError("at least one baseline is required");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  session.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
  else j["matrix"] = c.matrix_path.string();
  j["training_sizes"] = c.training_sizes;
  j["test_size"] = c.test_size;
  j["user_set_size"] = c.user_set_size;
  j["cluster_k"] = c.cluster_k;
  j["rounds"] = c.rounds;
  j["feedback_per_round"] = {c.per_round_similar, c.per_round_dissimilar};
  j["batch_feedback"] = {c.batch_similar, c.batch_dissimilar};
  j["repeats"] = {c.user_constructions, c.data_selections};
  j["seed"] = c.seed;
  std::vector<std::string> names;
  for (auto b : c.baselines) names.push_back(to_string(b));
  j["baselines"] = names;
  j["session"] = to_json(c.session);
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  reject_unknown(j, {"synthetic", "matrix", "training_sizes", "test_size", "user_set_size", "cluster_k", "rounds",
                     "feedback_per_round", "batch_feedback", "repeats", "seed", "baselines", "session", "threads"},
                 "experiment config");
  try {
    if (j.contains("synthetic")) c.synthetic = synthetic_spec_from_json(j["synthetic"]);
    if (j.contains("matrix")) c.matrix_path = j["matrix"].get<std::string>();
    read_opt(j, "training_sizes", c.training_sizes);
    read_opt(j, "test_size", c.test_size);
    read_opt(j, "user_set_size", c.user_set_size);
    read_opt(j, "cluster_k", c.cluster_k);
    read_opt(j, "rounds", c.rounds);
    auto read_pair = [&](const char* key, int& a, int& b) {
      if (!j.contains(key)) return;
      const auto v = j[key].get<std::vector<int>>();
      if (v.size() != 2) throw ValidationError(std::string(key) + " must be a two-element list");
      a = v[0];
      b = v[1];
    };
    read_pair("feedback_per_round", c.per_round_similar, c.per_round_dissimilar);
    read_pair("batch_feedback", c.batch_similar, c.batch_dissimilar);
    read_pair("repeats", c.user_constructions, c.data_selections);
    read_opt(j, "seed", c.seed);
    if (j.contains("baselines")) {
      c.baselines.clear();
      for (const auto& name : j["baselines"].get<std::vector<std::string>>()) c.baselines.push_back(parse_baseline(name));
    }
    if (j.contains("session")) c.session = session_config_from_json(j["session"]);
    read_opt(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad experiment config value: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("experiment config is not valid json: ") + e.what());
  }
  ExperimentConfig cfg = experiment_config_from_json(doc);
  if (!cfg.matrix_path.empty() && cfg.matrix_path.is_relative())
    cfg.matrix_path = path.parent_path() / cfg.matrix_path;
  return cfg;
}

std::vector<RepeatSeeds> repeat_seeds(const ExperimentConfig& cfg) {
  std::vector<RepeatSeeds> out;
  for (int u = 0; u < cfg.user_constructions; ++u)
    for (int s = 0; s < cfg.data_selections; ++s) {
      RepeatSeeds r;
      r.user_construction = u;
      r.data_selection = s;
      r.data = mix(cfg.seed, 1, static_cast<std::uint64_t>(u));
      r.user_set = mix(cfg.seed, 2, static_cast<std::uint64_t>(u));
      const std::uint64_t pos = static_cast<std::uint64_t>(u) * 1000003ULL + static_cast<std::uint64_t>(s);
      r.split = mix(cfg.seed, 3, pos);
      r.feedback = mix(cfg.seed, 4, pos);
      out.push_back(r);
    }
  return out;
}

void ResultCurve::validate() const {
  if (x.size() != mean_mse.size() || static_cast<Eigen::Index>(x.size()) != per_repeat_mse.rows())
    throw ValidationError("curve '" + label + "' has inconsistent dimensions");
}

std::vector<ResultCurve> run_batch_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto seeds = repeat_seeds(cfg);
  const auto loaded = load_pool(cfg);
  const SessionConfig session_cfg = headless(cfg);
  const int n_sim = cfg.batch_similar > 0 || cfg.batch_dissimilar > 0 ? cfg.batch_similar
                                                                       : cfg.rounds * cfg.per_round_similar;
  const int n_dis = cfg.batch_similar > 0 || cfg.batch_dissimilar > 0 ? cfg.batch_dissimilar
                                                                       : cfg.rounds * cfg.per_round_dissimilar;
  const auto n_sizes = static_cast<Eigen::Index>(cfg.training_sizes.size());
  std::vector<Eigen::MatrixXd> values(cfg.baselines.size(),
                                      Eigen::MatrixXd::Zero(n_sizes, static_cast<Eigen::Index>(seeds.size())));

  for_each_repeat(cfg, seeds, [&](std::size_t rep) {
    const auto data = prepare_repeat(cfg, seeds[rep], loaded ? &*loaded : nullptr);
    const auto test = data.pool.rows(data.test_rows);
    const auto batch = generate_feedback(data.user, n_sim, n_dis, {}, seeds[rep].feedback);
    if (batch.exhausted) warn("simulated feedback budget exceeds the available pairs; using all of them");
    for (Eigen::Index s = 0; s < n_sizes; ++s) {
      const auto train = training_rows(data, cfg.training_sizes[static_cast<std::size_t>(s)]);
      for (std::size_t b = 0; b < cfg.baselines.size(); ++b) {
        double value = 0.0;
        switch (cfg.baselines[b]) {
          case Baseline::unit_prior: value = fit_unit_prior(train, test, session_cfg).test_mse; break;
          case Baseline::without_feedback: value = fit_without_feedback(train, test, session_cfg).test_mse; break;
          case Baseline::with_feedback: {
            auto session = start_session(train, session_cfg);
            if (!batch.pairs.empty()) session = submit_feedback(session, batch.pairs);
            value = finalize_and_fit(session, test).test_mse;
            break;
          }
        }
        values[b](s, static_cast<Eigen::Index>(rep)) = value;
      }
    }
  });

  std::vector<double> x;
  for (auto n : cfg.training_sizes) x.push_back(static_cast<double>(n));
  return make_curves(cfg, x, values);
}

std::vector<ResultCurve> run_sequential_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto seeds = repeat_seeds(cfg);
  const auto loaded = load_pool(cfg);
  const SessionConfig session_cfg = headless(cfg);
  const Eigen::Index points = cfg.rounds + 1;
  std::vector<Eigen::MatrixXd> values(cfg.baselines.size(),
                                      Eigen::MatrixXd::Zero(points, static_cast<Eigen::Index>(seeds.size())));

  for_each_repeat(cfg, seeds, [&](std::size_t rep) {
    const auto data = prepare_repeat(cfg, seeds[rep], loaded ? &*loaded : nullptr);
    const auto test = data.pool.rows(data.test_rows);
    const auto train = training_rows(data, cfg.training_sizes.front());
    const auto col = static_cast<Eigen::Index>(rep);
    for (std::size_t b = 0; b < cfg.baselines.size(); ++b) {
      switch (cfg.baselines[b]) {
        case Baseline::unit_prior:
          values[b].col(col).setConstant(fit_unit_prior(train, test, session_cfg).test_mse);
          break;
        case Baseline::without_feedback:
          values[b].col(col).setConstant(fit_without_feedback(train, test, session_cfg).test_mse);
          break;
        case Baseline::with_feedback: {
          auto session = start_session(train, session_cfg);
          values[b](0, col) = finalize_and_fit(session, test).test_mse;
          bool warned = false;
          for (int r = 1; r <= cfg.rounds; ++r) {
            const auto batch = generate_feedback(data.user, cfg.per_round_similar, cfg.per_round_dissimilar,
                                                 session.metric.feedback_log,
                                                 mix(seeds[rep].feedback, 5, static_cast<std::uint64_t>(r)));
            if (batch.exhausted && !warned) {
              warn("simulated feedback exhausted at round " + std::to_string(r));
              warned = true;
            }
            if (batch.pairs.empty()) {
              values[b](r, col) = values[b](r - 1, col);
              continue;
            }
            session = submit_feedback(session, batch.pairs);
            values[b](r, col) = finalize_and_fit(session, test).test_mse;
          }
          break;
        }
      }
    }
  });

  std::vector<double> x;
  for (int r = 0; r <= cfg.rounds; ++r) x.push_back(r);
  return make_curves(cfg, x, values);
}

double permutation_test(const std::vector<double>& group_a, const std::vector<double>& group_b,
                        int n_permutations, std::uint64_t seed) {
  if (group_a.empty() || group_b.empty()) throw ValidationError("permutation test needs two nonempty groups");
  if (n_permutations < 1) throw ValidationError("n_permutations must be positive");
  if (n_permutations < 100) warn("only " + std::to_string(n_permutations) + " permutations; the p-value is unstable");
  // Canonical group order makes the result independent of argument order.
  auto sa = group_a, sb = group_b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (std::make_pair(sb.size(), sb) < std::make_pair(sa.size(), sa)) std::swap(sa, sb);

  std::vector<double> pooled(sa);
  pooled.insert(pooled.end(), sb.begin(), sb.end());
  const std::size_t na = sa.size(), total = pooled.size();
  auto statistic = [&](const std::vector<double>& v) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < na; ++i) a += v[i];
    for (std::size_t i = na; i < total; ++i) b += v[i];
    return std::abs(a / static_cast<double>(na) - b / static_cast<double>(total - na));
  };
  const double observed = statistic(pooled);
  const double slack = 1e-12 * std::max(1.0, observed);

  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (int t = 0; t < n_permutations; ++t) {
    for (std::size_t i = total - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(pooled[i], pooled[pick(rng)]);
    }
    if (statistic(pooled) >= observed - slack) ++hits;
  }
  return static_cast<double>(hits) / n_permutations;
}

void emit_results(const std::vector<ResultCurve>& curves, const ExperimentConfig& config,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest_curves = nlohmann::json::array();
  for (const auto& c : curves) {
    c.validate();
    std::string name = c.label;
    for (char& ch : name)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) ch = '_';
    const auto path = dir / (name + ".csv");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "x,mean";
    for (Eigen::Index r = 0; r < c.per_repeat_mse.cols(); ++r) out << ",rep_" << r;
    out << "\n";
    char buf[64];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf;
    };
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      put(c.x[i]);
      out << ",";
      put(c.mean_mse[i]);
      for (Eigen::Index r = 0; r < c.per_repeat_mse.cols(); ++r) {
        out << ",";
        put(c.per_repeat_mse(static_cast<Eigen::Index>(i), r));
      }
      out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
    manifest_curves.push_back({{"label", c.label}, {"file", path.filename().string()}});
  }

  const auto path = dir / "manifest.jsonl";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json{{"kind", "config"}, {"config", to_json(config)}}.dump() << "\n";
  for (const auto& s : repeat_seeds(config))
    out << nlohmann::json{{"kind", "repeat"},
                          {"user_construction", s.user_construction},
                          {"data_selection", s.data_selection},
                          {"data_seed", s.data},
                          {"user_set_seed", s.user_set},
                          {"split_seed", s.split},
                          {"feedback_seed", s.feedback},
                          {"cv_seed", config.session.cv_seed}}
               .dump()
        << "\n";
  for (const auto& c : manifest_curves) out << nlohmann::json{{"kind", "curve"}, {"curve", c}}.dump() << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ResultCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  ResultCurve c;
  c.label = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty curve file " + path.string());
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3 || line.rfind("x,mean", 0) != 0) throw ParseError("unexpected curve header in " + path.string(), 1);
  std::vector<std::vector<double>> reps;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw ParseError("non-numeric cell '" + cell + "' in " + path.string(), line_no);
      fields.push_back(v);
    }
    if (fields.size() != columns) throw ParseError("wrong column count in " + path.string(), line_no);
    c.x.push_back(fields[0]);
    c.mean_mse.push_back(fields[1]);
    reps.emplace_back(fields.begin() + 2, fields.end());
  }
  c.per_repeat_mse.resize(static_cast<Eigen::Index>(reps.size()), static_cast<Eigen::Index>(columns - 2));
  for (std::size_t i = 0; i < reps.size(); ++i)
    for (std::size_t r = 0; r < reps[i].size(); ++r)
      c.per_repeat_mse(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = reps[i][r];
  return c;
}

}  // namespace priorloom
