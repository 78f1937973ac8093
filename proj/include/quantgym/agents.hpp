#pragma once

// Policies: classical baselines, mean-variance allocation, a Gaussian MLP policy
// trained by synchronous advantage actor-critic, and a cross-entropy method trainer.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "env.hpp"
#include "error.hpp"
#include "market_data.hpp"

namespace quantgym {

enum class EnvKind { trading, portfolio };

inline std::string to_string(EnvKind k) { return k == EnvKind::trading ? "trading" : "portfolio"; }

struct Action {
  ActionKind kind = ActionKind::normalized;
  std::vector<double> values;
};

// Observation layout shared by both environments: [scalar, prices(n), features(n*I), tail(n)]
// where scalar/tail are balance/holdings (trading) or value/weights (portfolio).
struct ObservationLayout {
  std::size_t num_tickers = 0;
  std::size_t num_features = 0;

  std::size_t size() const { return 1 + num_tickers * (num_features + 2); }
  double scalar(std::span<const double> o) const { return o[0]; }
  std::span<const double> prices(std::span<const double> o) const { return o.subspan(1, num_tickers); }
  std::span<const double> tail(std::span<const double> o) const {
    return o.subspan(1 + num_tickers * (num_features + 1), num_tickers);
  }
};

class Policy {
 public:
  virtual ~Policy() = default;
  // Called at the start of every episode.
  virtual void reset() {}
  virtual Action act(std::span<const double> observation) = 0;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual nlohmann::json to_json() const = 0;
  virtual std::optional<std::size_t> obs_dim() const { return std::nullopt; }
  virtual std::optional<std::size_t> action_dim() const { return std::nullopt; }
};

// Never trades (trading env); keeps the current weights (portfolio env).
class HoldPolicy final : public Policy {
 public:
  HoldPolicy(EnvKind env, ObservationLayout layout) : env_(env), layout_(layout) {}

  Action act(std::span<const double> obs) override {
    if (env_ == EnvKind::trading) return {ActionKind::shares, std::vector<double>(layout_.num_tickers, 0.0)};
    auto w = layout_.tail(obs);
    return {ActionKind::weights, {w.begin(), w.end()}};
  }
  std::string name() const override { return "hold"; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<HoldPolicy>(*this); }
  nlohmann::json to_json() const override {
    return {{"type", "hold"}, {"env", to_string(env_)}, {"num_tickers", layout_.num_tickers},
            {"num_features", layout_.num_features}};
  }
  std::optional<std::size_t> obs_dim() const override { return layout_.size(); }

 private:
  EnvKind env_;
  ObservationLayout layout_;
};

// Buy and hold: spends the account equally across tickers on the first step of an
// episode that starts without positions, then never trades again.
class PassivePolicy final : public Policy {
 public:
  PassivePolicy(EnvKind env, ObservationLayout layout, double cost_rate)
      : env_(env), layout_(layout), cost_rate_(cost_rate) {}

  void reset() override {
    first_ = true;
    last_prices_.clear();
  }

  Action act(std::span<const double> obs) override {
    const std::size_t n = layout_.num_tickers;
    auto p = layout_.prices(obs);
    auto tail = layout_.tail(obs);
    if (env_ == EnvKind::trading) {
      std::vector<double> d(n, 0.0);
      const bool flat = std::all_of(tail.begin(), tail.end(), [](double h) { return h == 0.0; });
      if (first_ && flat) {
        const double budget = layout_.scalar(obs) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = std::floor(budget / (p[i] * (1.0 + cost_rate_)));
      }
      first_ = false;
      return {ActionKind::shares, std::move(d)};
    }
    // portfolio: keep the drifted weights of the previous allocation
    std::vector<double> w(tail.begin(), tail.end());
    if (!last_prices_.empty()) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += (w[i] *= p[i] / last_prices_[i]);
      for (auto& x : w) x /= z;
    }
    last_prices_.assign(p.begin(), p.end());
    first_ = false;
    return {ActionKind::weights, std::move(w)};
  }

  std::string name() const override { return "passive"; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<PassivePolicy>(*this); }
  nlohmann::json to_json() const override {
    return {{"type", "passive"}, {"env", to_string(env_)}, {"num_tickers", layout_.num_tickers},
            {"num_features", layout_.num_features}, {"cost_rate", cost_rate_}};
  }
  std::optional<std::size_t> obs_dim() const override { return layout_.size(); }

 private:
  EnvKind env_;
  ObservationLayout layout_;
  double cost_rate_;
  bool first_ = true;
  std::vector<double> last_prices_;
};

// Rebalances toward fixed target weights every `rebalance_every` steps (0 = only on the
// first step). In the portfolio env the targets are emitted every step.
class TargetWeightsPolicy final : public Policy {
 public:
  TargetWeightsPolicy(std::string name, EnvKind env, ObservationLayout layout, std::vector<double> weights,
                      std::size_t rebalance_every)
      : name_(std::move(name)), env_(env), layout_(layout), weights_(std::move(weights)), every_(rebalance_every) {
    if (weights_.size() != layout_.num_tickers) throw ConfigError("target weights dimension mismatch");
  }

  void reset() override { step_ = 0; }

  Action act(std::span<const double>) override {
    const std::size_t k = step_++;
    if (env_ == EnvKind::portfolio) return {ActionKind::weights, weights_};
    const bool rebalance = k == 0 || (every_ > 0 && k % every_ == 0);
    if (rebalance) return {ActionKind::weights, weights_};
    return {ActionKind::shares, std::vector<double>(layout_.num_tickers, 0.0)};
  }

  const std::vector<double>& weights() const { return weights_; }
  std::string name() const override { return name_; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<TargetWeightsPolicy>(*this); }
  nlohmann::json to_json() const override {
    return {{"type", "target_weights"}, {"name", name_}, {"env", to_string(env_)},
            {"num_tickers", layout_.num_tickers}, {"num_features", layout_.num_features},
            {"weights", weights_}, {"rebalance_every", every_}};
  }
  std::optional<std::size_t> obs_dim() const override { return layout_.size(); }

 private:
  std::string name_;
  EnvKind env_;
  ObservationLayout layout_;
  std::vector<double> weights_;
  std::size_t every_;
  std::size_t step_ = 0;
};

inline std::unique_ptr<Policy> baseline_passive(EnvKind env, ObservationLayout layout, double cost_rate) {
  return std::make_unique<PassivePolicy>(env, layout, cost_rate);
}

inline std::unique_ptr<Policy> baseline_equal(EnvKind env, ObservationLayout layout, std::size_t rebalance_every) {
  std::vector<double> w(layout.num_tickers, 1.0 / static_cast<double>(layout.num_tickers));
  return std::make_unique<TargetWeightsPolicy>("equal", env, layout, std::move(w), rebalance_every);
}

// ---- mean-variance allocation ------------------------------------------------------

enum class AllocationMode { mean_variance, min_variance };

// Euclidean projection onto the probability simplex (sort-based).
inline std::vector<double> project_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - theta, 0.0);
  return w;
}

struct AllocationOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 1'000'000;
};

// max w'mu - lambda w'Sigma w (or min w'Sigma w) over the simplex, by accelerated
// projected gradient with restarts.
inline std::vector<double> mean_variance_weights(const std::vector<double>& mu, const Eigen::MatrixXd& sigma,
                                                 double risk_aversion, AllocationMode mode,
                                                 const AllocationOptions& opts = {}) {
  const auto n = static_cast<std::size_t>(sigma.rows());
  if (n == 0 || sigma.cols() != sigma.rows()) throw DataError("covariance must be square and non-empty");
  if (mode == AllocationMode::mean_variance && mu.size() != n) throw DataError("expected returns dimension mismatch");
  if (!(risk_aversion >= 0.0)) throw ConfigError("risk aversion must be >= 0");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw DataError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sigma + sigma.transpose()), Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, std::abs(lmax))) throw DataError("covariance is not PSD");

  const double quad = mode == AllocationMode::min_variance ? 1.0 : risk_aversion;
  const bool linear = mode == AllocationMode::mean_variance;
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  if (quad == 0.0 || lmax <= 0.0) {
    // pure return maximization: vertex of the best asset (lowest index on ties)
    std::fill(w.begin(), w.end(), 0.0);
    if (!linear) return std::vector<double>(n, 1.0 / static_cast<double>(n));
    w[static_cast<std::size_t>(std::max_element(mu.begin(), mu.end()) - mu.begin())] = 1.0;
    return w;
  }
  const double step = 1.0 / (2.0 * quad * lmax);
  Eigen::Map<const Eigen::VectorXd> mu_v(mu.data(), linear ? static_cast<Eigen::Index>(n) : 0);
  auto objective = [&](const std::vector<double>& x) {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
    double f = quad * xv.dot(sigma * xv);
    if (linear) f -= xv.dot(mu_v);
    return f;
  };
  auto gradient = [&](const std::vector<double>& x) {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd g = 2.0 * quad * (sigma * xv);
    if (linear) g -= mu_v;
    return g;
  };
  std::vector<double> y = w, prev = w, trial(n);
  double tk = 1.0;
  double f_prev = objective(w);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    Eigen::VectorXd g = gradient(y);
    for (std::size_t i = 0; i < n; ++i) trial[i] = y[i] - step * g(static_cast<Eigen::Index>(i));
    std::vector<double> next = project_simplex(trial);
    double f_next = objective(next);
    if (f_next > f_prev && tk > 1.0) {
      // restart momentum
      y = w;
      tk = 1.0;
      continue;
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(next[i] - w[i]));
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    for (std::size_t i = 0; i < n; ++i) y[i] = next[i] + ((tk - 1.0) / t_next) * (next[i] - w[i]);
    tk = t_next;
    prev = w;
    w = std::move(next);
    f_prev = f_next;
    if (diff < opts.tolerance * 1e-3) {
      // confirm with a plain projected-gradient step from w
      Eigen::VectorXd gw = gradient(w);
      for (std::size_t i = 0; i < n; ++i) trial[i] = w[i] - step * gw(static_cast<Eigen::Index>(i));
      auto check = project_simplex(trial);
      double res = 0.0;
      for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(check[i] - w[i]));
      if (res < opts.tolerance * 1e-2) {
        double sum = 0.0;
        for (auto& x : w) sum += (x = x < 1e-12 ? 0.0 : x);
        for (auto& x : w) x /= sum;
        return w;
      }
    }
  }
  throw RuntimeError("mean-variance optimizer did not converge");
}

struct Moments {
  std::vector<double> mean;
  Eigen::MatrixXd covariance;
};

// Sample mean/covariance of simple close-to-close returns over the last `window` returns
// (0 = all) of rows [0, end) of the table.
inline Moments estimate_moments(const BarTable& bars, std::size_t end, std::size_t window = 0) {
  end = std::min(end, bars.num_steps());
  if (end < 3) throw DataError("need at least three steps to estimate return moments");
  const std::size_t n = bars.num_tickers();
  std::size_t first = 1;
  if (window > 0 && end - 1 > window) first = end - window;
  const std::size_t m = end - first;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t t = first; t < end; ++t)
    for (std::size_t i = 0; i < n; ++i)
      y(static_cast<Eigen::Index>(t - first), static_cast<Eigen::Index>(i)) = bars.close(t, i) / bars.close(t - 1, i) - 1.0;
  Eigen::VectorXd mu = y.colwise().mean().transpose();
  Eigen::MatrixXd c = y.rowwise() - mu.transpose();
  Moments out;
  out.mean.assign(mu.data(), mu.data() + n);
  out.covariance = (c.transpose() * c) / static_cast<double>(std::max<std::size_t>(m - 1, 1));
  return out;
}

// ---- Gaussian MLP policy -------------------------------------------------------------

// obs -> tanh hidden layer -> per-dimension action mean, state-independent log-std and a
// value head sharing the hidden layer. Observations are standardized with frozen statistics.
class GaussianPolicy final : public Policy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(std::size_t obs_dim, std::size_t act_dim, std::size_t hidden)
      : obs_dim_(obs_dim), act_dim_(act_dim), hidden_(hidden),
        params_(param_count(obs_dim, act_dim, hidden), 0.0),
        obs_mean_(obs_dim, 0.0), obs_scale_(obs_dim, 1.0) {
    if (obs_dim == 0 || act_dim == 0 || hidden == 0) throw ConfigError("policy dimensions must be positive");
  }

  static std::size_t param_count(std::size_t d, std::size_t a, std::size_t h) {
    return h * d + h + a * h + a + a + h + 1;
  }

  // Offsets into the flat parameter vector.
  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return hidden_ * obs_dim_; }
  std::size_t off_wm() const { return off_b1() + hidden_; }
  std::size_t off_bm() const { return off_wm() + act_dim_ * hidden_; }
  std::size_t off_logstd() const { return off_bm() + act_dim_; }
  std::size_t off_wv() const { return off_logstd() + act_dim_; }
  std::size_t off_bv() const { return off_wv() + hidden_; }

  // Glorot-style uniform init for the weights, zero biases, log-std = init_log_std.
  void initialize(std::mt19937_64& rng, double init_log_std = 0.0) {
    auto fill = [&](std::size_t off, std::size_t count, double fan_in, double fan_out, double gain) {
      const double lim = gain * std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (std::size_t k = 0; k < count; ++k) params_[off + k] = u(rng);
    };
    std::fill(params_.begin(), params_.end(), 0.0);
    fill(off_w1(), hidden_ * obs_dim_, double(obs_dim_), double(hidden_), 1.0);
    fill(off_wm(), act_dim_ * hidden_, double(hidden_), double(act_dim_), 0.01);
    fill(off_wv(), hidden_, double(hidden_), 1.0, 1.0);
    for (std::size_t j = 0; j < act_dim_; ++j) params_[off_logstd() + j] = init_log_std;
  }

  void set_normalization(std::vector<double> mean, std::vector<double> scale) {
    if (mean.size() != obs_dim_ || scale.size() != obs_dim_) throw ConfigError("normalization dimension mismatch");
    obs_mean_ = std::move(mean);
    obs_scale_ = std::move(scale);
  }

  struct Forward {
    std::vector<double> input;   // standardized observation
    std::vector<double> hidden;  // tanh activations
    std::vector<double> mean;
    double value = 0.0;
  };

  Forward forward(std::span<const double> obs) const {
    if (obs.size() != obs_dim_) throw RuntimeError("observation dimension mismatch");
    Forward f;
    f.input.resize(obs_dim_);
    for (std::size_t k = 0; k < obs_dim_; ++k) f.input[k] = (obs[k] - obs_mean_[k]) / obs_scale_[k];
    f.hidden.resize(hidden_);
    for (std::size_t h = 0; h < hidden_; ++h) {
      double z = params_[off_b1() + h];
      const double* row = &params_[off_w1() + h * obs_dim_];
      for (std::size_t k = 0; k < obs_dim_; ++k) z += row[k] * f.input[k];
      f.hidden[h] = std::tanh(z);
    }
    f.mean.resize(act_dim_);
    for (std::size_t j = 0; j < act_dim_; ++j) {
      double m = params_[off_bm() + j];
      const double* row = &params_[off_wm() + j * hidden_];
      for (std::size_t h = 0; h < hidden_; ++h) m += row[h] * f.hidden[h];
      f.mean[j] = m;
    }
    f.value = params_[off_bv()];
    for (std::size_t h = 0; h < hidden_; ++h) f.value += params_[off_wv() + h] * f.hidden[h];
    return f;
  }

  double value(std::span<const double> obs) const { return forward(obs).value; }

  Action act(std::span<const double> obs) override { return {ActionKind::normalized, forward(obs).mean}; }

  std::vector<double> sample(std::span<const double> obs, std::mt19937_64& rng) const {
    auto f = forward(obs);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t j = 0; j < act_dim_; ++j) f.mean[j] += std::exp(params_[off_logstd() + j]) * nd(rng);
    return f.mean;
  }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t hidden() const { return hidden_; }
  std::optional<std::size_t> obs_dim() const override { return obs_dim_; }
  std::optional<std::size_t> action_dim() const override { return act_dim_; }

  void set_metadata(nlohmann::json meta) { meta_ = std::move(meta); }
  const nlohmann::json& metadata() const { return meta_; }

  std::string name() const override { return meta_.value("algorithm", std::string("gaussian_mlp")); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<GaussianPolicy>(*this); }

  nlohmann::json to_json() const override {
    return {{"type", "gaussian_mlp"}, {"obs_dim", obs_dim_}, {"act_dim", act_dim_}, {"hidden", hidden_},
            {"obs_mean", obs_mean_},   {"obs_scale", obs_scale_}, {"params", params_}, {"metadata", meta_}};
  }

  static GaussianPolicy from_json(const nlohmann::json& j) {
    GaussianPolicy p(j.at("obs_dim").get<std::size_t>(), j.at("act_dim").get<std::size_t>(),
                     j.at("hidden").get<std::size_t>());
    p.set_normalization(j.at("obs_mean").get<std::vector<double>>(), j.at("obs_scale").get<std::vector<double>>());
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != p.params_.size()) throw DataError("policy parameter count mismatch");
    p.params_ = std::move(params);
    if (j.contains("metadata")) p.meta_ = j.at("metadata");
    return p;
  }

 private:
  std::size_t obs_dim_ = 0, act_dim_ = 0, hidden_ = 0;
  std::vector<double> params_;
  std::vector<double> obs_mean_, obs_scale_;
  nlohmann::json meta_ = nlohmann::json::object();
};

// One sample of an actor-critic batch; advantage and return are treated as constants.
struct A2CSample {
  std::vector<double> obs;
  std::vector<double> action;
  double advantage = 0.0;
  double ret = 0.0;
};

struct A2CLossWeights {
  double value_coef = 0.5;
  double entropy_coef = 0.0;
};

// Mean over the batch of  -log pi(a|s) * A + value_coef * 0.5 (V(s) - G)^2  minus
// entropy_coef * entropy. Returns the loss and writes its gradient.
inline double a2c_loss(const GaussianPolicy& pol, std::span<const A2CSample> batch, const A2CLossWeights& w,
                       std::vector<double>* grad) {
  const auto& P = pol.params();
  const std::size_t d = *pol.obs_dim(), a = *pol.action_dim(), H = pol.hidden();
  if (grad) grad->assign(P.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  static const double kLog2Pi = std::log(2.0 * M_PI);
  double loss = 0.0;
  std::vector<double> dmean(a), dh(H);
  for (const auto& s : batch) {
    auto f = pol.forward(s.obs);
    double logp = 0.0;
    for (std::size_t j = 0; j < a; ++j) {
      const double ls = P[pol.off_logstd() + j];
      const double var = std::exp(2.0 * ls);
      const double diff = s.action[j] - f.mean[j];
      logp += -0.5 * diff * diff / var - ls - 0.5 * kLog2Pi;
      if (grad) {
        dmean[j] = -s.advantage * diff / var * inv_b;
        (*grad)[pol.off_logstd() + j] += -s.advantage * (diff * diff / var - 1.0) * inv_b;
      }
    }
    const double verr = f.value - s.ret;
    loss += (-logp * s.advantage + w.value_coef * 0.5 * verr * verr) * inv_b;
    if (!grad) continue;
    const double dv = w.value_coef * verr * inv_b;
    auto& g = *grad;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t j = 0; j < a; ++j) {
      g[pol.off_bm() + j] += dmean[j];
      for (std::size_t h = 0; h < H; ++h) {
        g[pol.off_wm() + j * H + h] += dmean[j] * f.hidden[h];
        dh[h] += P[pol.off_wm() + j * H + h] * dmean[j];
      }
    }
    g[pol.off_bv()] += dv;
    for (std::size_t h = 0; h < H; ++h) {
      g[pol.off_wv() + h] += dv * f.hidden[h];
      dh[h] += P[pol.off_wv() + h] * dv;
      const double dz = dh[h] * (1.0 - f.hidden[h] * f.hidden[h]);
      g[pol.off_b1() + h] += dz;
      for (std::size_t k = 0; k < d; ++k) g[pol.off_w1() + h * d + k] += dz * f.input[k];
    }
  }
  // entropy of a diagonal Gaussian: sum_j (log_std_j + 0.5 log(2 pi e))
  double entropy = 0.0;
  for (std::size_t j = 0; j < a; ++j) {
    entropy += P[pol.off_logstd() + j] + 0.5 * (kLog2Pi + 1.0);
    if (grad) (*grad)[pol.off_logstd() + j] -= w.entropy_coef;
  }
  loss -= w.entropy_coef * entropy;
  return loss;
}

struct TrainConfig {
  std::size_t total_steps = 20'000;
  double learning_rate = 7e-4;
  double gamma = 0.99;
  std::size_t n_steps = 5;
  std::size_t num_envs = 1;
  std::uint64_t seed = 0;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  std::size_t hidden = 64;
  double max_grad_norm = 0.5;
  double init_log_std = 0.0;
  bool normalize_advantage = true;
  // CEM
  std::size_t cem_iterations = 20;
  std::size_t cem_population = 16;
  double cem_elite_fraction = 0.25;
  double cem_init_std = 0.5;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (n_steps == 0 || num_envs == 0 || hidden == 0) throw ConfigError("n_steps, num_envs and hidden must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  }
};

class Adam {
 public:
  explicit Adam(std::size_t n, double lr) : m_(n, 0.0), v_(n, 0.0), lr_(lr) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double b1t = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grad[k];
      v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grad[k] * grad[k];
      params[k] -= lr_ * (m_[k] / b1t) / (std::sqrt(v_[k] / b2t) + 1e-8);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999;
  std::vector<double> m_, v_;
  double lr_;
  std::size_t t_ = 0;
};

namespace detail {

// Observation statistics from `steps` transitions of the freshly initialized stochastic policy.
template <MarketEnvironment Env>
void fit_normalization(GaussianPolicy& pol, Env env, std::size_t steps, std::mt19937_64& rng) {
  const std::size_t d = *pol.obs_dim();
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  env.reset();
  std::size_t count = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    auto o = env.observation();
    for (std::size_t i = 0; i < d; ++i) {
      sum[i] += o[i];
      sq[i] += o[i] * o[i];
    }
    ++count;
    if (env.done()) {
      env.reset();
      continue;
    }
    env.step(pol.sample(o, rng));
  }
  std::vector<double> mean(d), scale(d);
  for (std::size_t i = 0; i < d; ++i) {
    mean[i] = sum[i] / static_cast<double>(count);
    const double var = std::max(0.0, sq[i] / static_cast<double>(count) - mean[i] * mean[i]);
    const double sd = std::sqrt(var);
    scale[i] = sd > 1e-8 * (1.0 + std::abs(mean[i])) ? sd : std::max(1.0, std::abs(mean[i]));
  }
  pol.set_normalization(std::move(mean), std::move(scale));
}

inline double clip_grad_norm(std::vector<double>& g, double max_norm) {
  double norm = 0.0;
  for (double x : g) norm += x * x;
  norm = std::sqrt(norm);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& x : g) x *= s;
  }
  return norm;
}

}  // namespace detail

// Synchronous advantage actor-critic over `num_envs` copies of `env`.
template <MarketEnvironment Env>
GaussianPolicy train_a2c(const Env& env, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  GaussianPolicy pol(env.obs_dim(), env.action_dim(), cfg.hidden);
  pol.initialize(rng, cfg.init_log_std);
  detail::fit_normalization(pol, env, 256, rng);
  pol.set_metadata({{"algorithm", "a2c"},
                    {"seed", cfg.seed},
                    {"learning_rate", cfg.learning_rate},
                    {"gamma", cfg.gamma},
                    {"n_steps", cfg.n_steps},
                    {"total_steps", cfg.total_steps},
                    {"hidden", cfg.hidden},
                    {"entropy_coef", cfg.entropy_coef}});

  std::vector<Env> envs(cfg.num_envs, env);
  for (auto& e : envs) e.reset();
  Adam opt(pol.params().size(), cfg.learning_rate);
  const A2CLossWeights lw{cfg.value_coef, cfg.entropy_coef};
  const std::size_t m = cfg.num_envs, k = cfg.n_steps;
  std::vector<A2CSample> batch(m * k);
  std::vector<double> rewards(m * k), dones(m * k), grad;
  std::vector<std::vector<double>> actions(m);
  std::size_t steps = 0;
  while (steps < cfg.total_steps) {
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t e = 0; e < m; ++e) {
        if (envs[e].done()) envs[e].reset();
        auto& smp = batch[s * m + e];
        smp.obs = envs[e].observation();
        smp.action = pol.sample(smp.obs, rng);
        actions[e] = smp.action;
      }
      auto trs = batch_step(std::span<Env>(envs), std::span<const std::vector<double>>(actions), 1);
      for (std::size_t e = 0; e < m; ++e) {
        rewards[s * m + e] = trs[e].reward;
        dones[s * m + e] = trs[e].done ? 1.0 : 0.0;
      }
    }
    steps += m * k;
    // n-step returns bootstrapped from the critic at the rollout end
    for (std::size_t e = 0; e < m; ++e) {
      double g = envs[e].done() ? 0.0 : pol.value(envs[e].observation());
      for (std::size_t s = k; s-- > 0;) {
        const std::size_t idx = s * m + e;
        g = rewards[idx] + cfg.gamma * g * (1.0 - dones[idx]);
        batch[idx].ret = g;
      }
    }
    double amean = 0.0;
    for (auto& smp : batch) amean += (smp.advantage = smp.ret - pol.value(smp.obs));
    amean /= static_cast<double>(batch.size());
    if (cfg.normalize_advantage && batch.size() > 1) {
      double var = 0.0;
      for (auto& smp : batch) var += (smp.advantage - amean) * (smp.advantage - amean);
      const double sd = std::sqrt(var / static_cast<double>(batch.size()));
      for (auto& smp : batch) smp.advantage = (smp.advantage - amean) / (sd + 1e-8);
    }
    double loss = a2c_loss(pol, batch, lw, &grad);
    if (!std::isfinite(loss)) throw RuntimeError("a2c: non-finite loss after " + std::to_string(steps) + " steps");
    detail::clip_grad_norm(grad, cfg.max_grad_norm);
    opt.step(pol.params(), grad);
  }
  return pol;
}

struct CemConfig {
  std::size_t iterations = 50;
  std::size_t population = 32;
  double elite_fraction = 0.2;
  double init_std = 1.0;
  double min_std = 0.0;
  std::uint64_t seed = 0;
};

struct CemResult {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::vector<double>> mean_history;  // mean after each iteration
  double best_score = -std::numeric_limits<double>::infinity();
};

// Maximizes `objective` with the cross-entropy method: sample a Gaussian population,
// keep the top elite fraction (ties -> lower sample index), refit mean and std.
inline CemResult cem_optimize(const std::function<double(std::span<const double>)>& objective,
                              std::vector<double> initial_mean, const CemConfig& cfg) {
  if (cfg.population < 2) throw ConfigError("cem population must be at least 2");
  if (!(cfg.elite_fraction > 0.0 && cfg.elite_fraction <= 1.0)) throw ConfigError("elite fraction must lie in (0, 1]");
  const std::size_t dim = initial_mean.size();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  CemResult r;
  r.mean = std::move(initial_mean);
  r.std.assign(dim, cfg.init_std);
  const auto n_elite = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.elite_fraction * static_cast<double>(cfg.population))));
  std::vector<std::vector<double>> pop(cfg.population, std::vector<double>(dim));
  std::vector<double> scores(cfg.population);
  std::vector<std::size_t> order(cfg.population);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t p = 0; p < cfg.population; ++p) {
      for (std::size_t k = 0; k < dim; ++k) pop[p][k] = r.mean[k] + r.std[k] * nd(rng);
      scores[p] = objective(pop[p]);
      if (!std::isfinite(scores[p])) scores[p] = -std::numeric_limits<double>::infinity();
      r.best_score = std::max(r.best_score, scores[p]);
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_elite));
    for (std::size_t k = 0; k < dim; ++k) {
      double mu = 0.0;
      for (std::size_t e = 0; e < n_elite; ++e) mu += pop[order[e]][k];
      mu /= static_cast<double>(n_elite);
      double var = 0.0;
      for (std::size_t e = 0; e < n_elite; ++e) var += (pop[order[e]][k] - mu) * (pop[order[e]][k] - mu);
      r.mean[k] = mu;
      r.std[k] = std::max(std::sqrt(var / static_cast<double>(n_elite)), cfg.min_std);
    }
    r.mean_history.push_back(r.mean);
  }
  return r;
}

// Deterministic episode return of the policy from a fresh reset.
template <MarketEnvironment Env>
double episode_return(GaussianPolicy& pol, Env env) {
  env.reset();
  double total = 0.0;
  while (!env.done()) total += env.step(pol.act(env.observation()).values).reward;
  return total;
}

// Cross-entropy search over the parameters of a small Gaussian MLP policy.
template <MarketEnvironment Env>
GaussianPolicy train_cem(const Env& env, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.cem_population < 2) throw ConfigError("cem population must be at least 2");
  std::mt19937_64 rng(cfg.seed);
  GaussianPolicy pol(env.obs_dim(), env.action_dim(), cfg.hidden);
  pol.initialize(rng, cfg.init_log_std);
  detail::fit_normalization(pol, env, 256, rng);
  CemConfig cc{cfg.cem_iterations, cfg.cem_population, cfg.cem_elite_fraction, cfg.cem_init_std, 0.0,
               util::mix_seed(cfg.seed, 0xCE)};
  GaussianPolicy probe = pol;
  auto objective = [&](std::span<const double> theta) {
    std::copy(theta.begin(), theta.end(), probe.params().begin());
    return episode_return(probe, env);
  };
  auto res = cem_optimize(objective, pol.params(), cc);
  pol.params() = res.mean;
  pol.set_metadata({{"algorithm", "cem"},
                    {"seed", cfg.seed},
                    {"iterations", cfg.cem_iterations},
                    {"population", cfg.cem_population},
                    {"elite_fraction", cfg.cem_elite_fraction},
                    {"hidden", cfg.hidden}});
  return pol;
}

// ---- serialization ---------------------------------------------------------------------

inline constexpr int kPolicyFormatVersion = 1;

inline nlohmann::json policy_to_json(const Policy& p) {
  return {{"format", "quantgym.policy"}, {"version", kPolicyFormatVersion}, {"policy", p.to_json()}};
}

inline std::unique_ptr<Policy> policy_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != "quantgym.policy") throw DataError("not a policy file");
  if (doc.value("version", 0) != kPolicyFormatVersion) throw DataError("unsupported policy file version");
  const auto& j = doc.at("policy");
  const auto type = j.at("type").get<std::string>();
  if (type == "gaussian_mlp") return std::make_unique<GaussianPolicy>(GaussianPolicy::from_json(j));
  auto env = j.at("env").get<std::string>() == "trading" ? EnvKind::trading : EnvKind::portfolio;
  ObservationLayout layout{j.at("num_tickers").get<std::size_t>(), j.at("num_features").get<std::size_t>()};
  if (type == "hold") return std::make_unique<HoldPolicy>(env, layout);
  if (type == "passive") return std::make_unique<PassivePolicy>(env, layout, j.at("cost_rate").get<double>());
  if (type == "target_weights")
    return std::make_unique<TargetWeightsPolicy>(j.at("name").get<std::string>(), env, layout,
                                                 j.at("weights").get<std::vector<double>>(),
                                                 j.at("rebalance_every").get<std::size_t>());
  throw DataError("unknown policy type: " + type);
}

}  // namespace quantgym
