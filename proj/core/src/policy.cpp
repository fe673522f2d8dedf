#include "arl/policy.hpp"

#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "arl/reward_gp.hpp"

namespace arl {

using nlohmann::json;

namespace {

// Residual below which a point counts as already represented even when nu = 0.
constexpr double kDuplicateResidual = 1e-10;
// Episodes between full refactorisations of the posterior Cholesky factor.
constexpr std::size_t kRefactorPeriod = 100;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_eigen(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

void GpSarsaConfig::validate() const {
  if (!(kernel_scale > 0.0) || !(length_scale > 0.0) || !(noise_sigma > 0.0))
    throw ValidationError("GP-SARSA kernel scale, length scale and noise must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
  if (!(nu >= 0.0 && nu < 1.0)) throw ValidationError("nu must lie in [0, 1)");
  if (max_dictionary == 0) throw ValidationError("dictionary cap must be positive");
  for (double e : {epsilon_start, epsilon_end})
    if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
}

void to_json(json& j, const GpSarsaConfig& c) {
  j = json{{"kernel_scale", c.kernel_scale},
           {"length_scale", c.length_scale},
           {"noise_sigma", c.noise_sigma},
           {"gamma", c.gamma},
           {"nu", c.nu},
           {"max_dictionary", c.max_dictionary},
           {"epsilon_start", c.epsilon_start},
           {"epsilon_end", c.epsilon_end},
           {"epsilon_dialogues", c.epsilon_dialogues},
           {"mode", c.mode == SelectionMode::mean ? "mean" : "thompson"}};
}

void from_json(const json& j, GpSarsaConfig& c) {
  const GpSarsaConfig d;
  c.kernel_scale = j.value("kernel_scale", d.kernel_scale);
  c.length_scale = j.value("length_scale", d.length_scale);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.gamma = j.value("gamma", d.gamma);
  c.nu = j.value("nu", d.nu);
  c.max_dictionary = j.value("max_dictionary", d.max_dictionary);
  c.epsilon_start = j.value("epsilon_start", d.epsilon_start);
  c.epsilon_end = j.value("epsilon_end", d.epsilon_end);
  c.epsilon_dialogues = j.value("epsilon_dialogues", d.epsilon_dialogues);
  const std::string mode = j.value("mode", std::string("mean"));
  if (mode == "mean")
    c.mode = SelectionMode::mean;
  else if (mode == "thompson")
    c.mode = SelectionMode::thompson;
  else
    throw ValidationError("unknown selection mode '" + mode + "'");
  c.validate();
}

double epsilon_schedule(std::size_t episodes_completed, const GpSarsaConfig& cfg) {
  if (cfg.epsilon_dialogues == 0 || episodes_completed >= cfg.epsilon_dialogues) return cfg.epsilon_end;
  const double frac = static_cast<double>(episodes_completed) / static_cast<double>(cfg.epsilon_dialogues);
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

GpSarsa::GpSarsa(std::size_t state_dim, std::size_t num_actions, GpSarsaConfig cfg)
    : state_dim_(state_dim), num_actions_(num_actions), cfg_(cfg) {
  if (state_dim == 0 || num_actions == 0) throw ValidationError("GP-SARSA needs a state and at least one action");
  cfg_.validate();
}

void GpSarsa::check_input(const Vector& b, int a) const {
  if (static_cast<std::size_t>(b.size()) != state_dim_)
    throw ValidationError("policy state has dimension " + std::to_string(b.size()) + ", expected " +
                          std::to_string(state_dim_));
  if (a < 0 || static_cast<std::size_t>(a) >= num_actions_)
    throw ValidationError("action index " + std::to_string(a) + " out of range");
}

double GpSarsa::kernel(const Vector& b1, int a1, const Vector& b2, int a2) const {
  if (a1 != a2) return 0.0;
  const double l = cfg_.length_scale;
  return cfg_.kernel_scale * cfg_.kernel_scale * std::exp(-(b1 - b2).squaredNorm() / (2.0 * l * l));
}

Vector GpSarsa::kernel_vector(const Vector& b, int a) const {
  Vector k(static_cast<Eigen::Index>(dict_states_.size()));
  for (std::size_t i = 0; i < dict_states_.size(); ++i)
    k(static_cast<Eigen::Index>(i)) = kernel(b, a, dict_states_[i], dict_actions_[i]);
  return k;
}

QEstimate GpSarsa::q_posterior(const Vector& b, int a) const {
  check_input(b, a);
  const double prior = cfg_.kernel_scale * cfg_.kernel_scale;
  if (dict_states_.empty()) return {0.0, prior};
  const Vector k = kernel_vector(b, a);
  QEstimate q;
  q.mean = k.dot(alpha_);
  const Vector v = L_.triangularView<Eigen::Lower>().solve(k);
  const double s2 = cfg_.noise_sigma * cfg_.noise_sigma;
  q.variance = std::max(prior - k.dot(Kinv_ * k) + s2 * v.squaredNorm(), 0.0);
  return q;
}

Matrix GpSarsa::covariance_statistics() const {
  const auto m = static_cast<Eigen::Index>(dict_states_.size());
  if (m == 0) return {};
  const double s2 = cfg_.noise_sigma * cfg_.noise_sigma;
  const auto Lv = L_.triangularView<Eigen::Lower>();
  Matrix Minv = Lv.solve(Matrix::Identity(m, m));
  Minv = L_.transpose().triangularView<Eigen::Upper>().solve(Minv);
  Matrix C = Kinv_ - s2 * Minv;
  return (0.5 * (C + C.transpose())).eval();
}

int GpSarsa::select_action(const Vector& b, double epsilon, Rng& rng) const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
  if (bernoulli(rng, epsilon)) return static_cast<int>(uniform_index(rng, num_actions_));
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < num_actions_; ++a) {
    const QEstimate q = q_posterior(b, static_cast<int>(a));
    const double v =
        cfg_.mode == SelectionMode::mean ? q.mean : q.mean + std::sqrt(q.variance) * standard_normal(rng);
    if (v > best_value) {
      best_value = v;
      best = static_cast<int>(a);
    }
  }
  return best;
}

void GpSarsa::grow(Eigen::Index m) {
  auto pad_matrix = [m](Matrix& M) {
    Matrix out = Matrix::Zero(m, m);
    out.topLeftCorner(M.rows(), M.cols()) = M;
    M = std::move(out);
  };
  auto pad_vector = [m](Vector& v) {
    Vector out = Vector::Zero(m);
    out.head(v.size()) = v;
    v = std::move(out);
  };
  // Data never projected onto the new point gives it zero statistics, which leaves alpha
  // unchanged (its new entry is zero).
  pad_matrix(P_);
  pad_vector(y_);
  pad_vector(alpha_);
  pad_vector(y_ep_);
  pad_vector(trace_);
  for (auto& a : episode_coords_) pad_vector(a);
}

Vector GpSarsa::project(const Vector& b, int a) {
  const Eigen::Index m = static_cast<Eigen::Index>(dict_states_.size());
  const double kxx = kernel(b, a, b, a);
  const Vector k = kernel_vector(b, a);
  const Vector coords = m > 0 ? Vector(Kinv_ * k) : Vector();
  const double delta = kxx - (m > 0 ? k.dot(coords) : 0.0);
  const bool novel = delta / kxx > std::max(cfg_.nu, kDuplicateResidual);
  if (!novel || dict_states_.size() >= cfg_.max_dictionary) return coords;

  if (!std::isfinite(delta))
    throw PolicyNumericalError("non-finite projection residual", dict_states_, dict_actions_);
  // block inverse of [[K, k], [k^T, kxx]]
  Matrix Kinv(m + 1, m + 1);
  Kinv.topLeftCorner(m, m) = Kinv_ + coords * coords.transpose() / delta;
  Kinv.topRightCorner(m, 1) = -coords / delta;
  Kinv.bottomLeftCorner(1, m) = -coords.transpose() / delta;
  Kinv(m, m) = 1.0 / delta;
  Kinv_ = std::move(Kinv);
  Matrix K(m + 1, m + 1);
  K.topLeftCorner(m, m) = K_;
  K.topRightCorner(m, 1) = k;
  K.bottomLeftCorner(1, m) = k.transpose();
  K(m, m) = kxx;
  K_ = std::move(K);
  dict_states_.push_back(b);
  dict_actions_.push_back(a);

  // New row of M = K P K + s2 K; P has no mass on the new point yet.
  const double s2 = cfg_.noise_sigma * cfg_.noise_sigma;
  const Vector Pk = m > 0 ? Vector(P_ * k) : Vector();
  const Vector col = m > 0 ? Vector(K_.topLeftCorner(m, m) * Pk + s2 * k) : Vector();
  const double corner = (m > 0 ? k.dot(Pk) : 0.0) + s2 * kxx;
  Matrix L = Matrix::Zero(m + 1, m + 1);
  L.topLeftCorner(m, m) = L_;
  if (m > 0) L.bottomLeftCorner(1, m) = L_.triangularView<Eigen::Lower>().solve(col).transpose();
  const double d2 = corner - L.bottomLeftCorner(1, m).squaredNorm();
  L(m, m) = std::sqrt(std::max(d2, 0.0));
  L_ = std::move(L);
  grow(m + 1);
  if (!(d2 > 0.0)) refresh_posterior();
  Vector unit = Vector::Zero(m + 1);
  unit(m) = 1.0;
  return unit;
}

void GpSarsa::update(const Transition& t) {
  check_input(t.state, t.action);
  if (!std::isfinite(t.reward)) throw ValidationError("reward must be finite");
  if (t.terminal && (t.next_state || t.next_action))
    throw ValidationError("terminal transitions carry no successor");
  if (!t.terminal && !(t.next_state && t.next_action))
    throw ValidationError("non-terminal transitions need the successor state and action");
  if (in_episode_ && (t.action != expected_action_ || t.state != expected_state_))
    throw ValidationError("transition does not continue the current episode");

  if (!in_episode_) {
    const Eigen::Index m = static_cast<Eigen::Index>(dict_states_.size());
    episode_coords_.clear();
    y_ep_ = Vector::Zero(m);
    trace_ = Vector::Zero(m);
    in_episode_ = true;
  }

  const Vector a = project(t.state, t.action);
  episode_coords_.push_back(a);
  // z_k = gamma z_{k-1} + a_k, then sum_t a_t G_t = sum_k r_k z_k
  trace_ = cfg_.gamma * trace_ + a;
  y_ep_ += t.reward * trace_;

  if (!t.terminal) {
    check_input(*t.next_state, *t.next_action);
    expected_state_ = *t.next_state;
    expected_action_ = *t.next_action;
    return;
  }
  y_ += y_ep_;
  for (const Vector& c : episode_coords_) {
    P_.noalias() += c * c.transpose();
    cholesky_update(K_ * c);
  }
  episode_coords_.clear();
  in_episode_ = false;
  ++episodes_;
  if (++updates_since_refactor_ >= kRefactorPeriod)
    refresh_posterior();
  else
    solve_alpha();
}

void GpSarsa::cholesky_update(Vector x) {
  const Eigen::Index n = L_.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lkk = L_(k, k);
    const double r = std::hypot(lkk, x(k));
    if (!(lkk > 0.0) || !std::isfinite(r)) {
      refresh_posterior();
      return;
    }
    const double c = r / lkk, s = x(k) / lkk;
    L_(k, k) = r;
    const Eigen::Index rest = n - k - 1;
    if (rest > 0) {
      L_.col(k).tail(rest) = (L_.col(k).tail(rest) + s * x.tail(rest)) / c;
      x.tail(rest) = c * x.tail(rest) - s * L_.col(k).tail(rest);
    }
  }
}

void GpSarsa::solve_alpha() {
  if (dict_states_.empty()) return;
  const auto Lv = L_.triangularView<Eigen::Lower>();
  alpha_ = L_.transpose().triangularView<Eigen::Upper>().solve(Lv.solve(K_ * y_));
  if (!alpha_.allFinite()) throw PolicyNumericalError("GP-SARSA posterior is not finite", dict_states_, dict_actions_);
}

void GpSarsa::abandon_episode() {
  in_episode_ = false;
  episode_coords_.clear();
}

void GpSarsa::refresh_posterior() {
  updates_since_refactor_ = 0;
  const Eigen::Index m = static_cast<Eigen::Index>(dict_states_.size());
  if (m == 0) return;
  const double s2 = cfg_.noise_sigma * cfg_.noise_sigma;
  Matrix M = K_ * P_ * K_ + s2 * K_;
  M = (0.5 * (M + M.transpose())).eval();
  try {
    L_ = robust_cholesky(M).matrixL();
  } catch (const NumericalError& e) {
    throw PolicyNumericalError(std::string("GP-SARSA posterior: ") + e.what(), dict_states_, dict_actions_);
  }
  solve_alpha();
}

json GpSarsa::to_json() const {
  json states = json::array();
  for (const auto& s : dict_states_) states.push_back(to_std(s));
  json P = json::array();
  for (Eigen::Index i = 0; i < P_.rows(); ++i) P.push_back(to_std(P_.row(i).transpose()));
  return json{{"format", "arl-gp-sarsa"},
              {"version", 1},
              {"state_dim", state_dim_},
              {"num_actions", num_actions_},
              {"config", cfg_},
              {"episodes_completed", episodes_},
              {"dictionary_states", states},
              {"dictionary_actions", dict_actions_},
              {"P", P},
              {"y", to_std(y_)}};
}

GpSarsa GpSarsa::from_json(const json& j) {
  if (j.value("format", std::string()) != "arl-gp-sarsa") throw ParseError("not a GP-SARSA checkpoint");
  if (j.value("version", 0) != 1) throw ParseError("unsupported GP-SARSA checkpoint version");
  GpSarsa policy(j.at("state_dim").get<std::size_t>(), j.at("num_actions").get<std::size_t>(),
                 j.at("config").get<GpSarsaConfig>());
  policy.episodes_ = j.at("episodes_completed").get<std::size_t>();
  const auto states = j.at("dictionary_states").get<std::vector<std::vector<double>>>();
  const auto actions = j.at("dictionary_actions").get<std::vector<int>>();
  const auto P = j.at("P").get<std::vector<std::vector<double>>>();
  const auto y = j.at("y").get<std::vector<double>>();
  const std::size_t m = states.size();
  if (actions.size() != m || P.size() != m || y.size() != m) throw ParseError("GP-SARSA checkpoint sizes disagree");

  const auto n = static_cast<Eigen::Index>(m);
  policy.K_ = Matrix(n, n);
  for (std::size_t i = 0; i < m; ++i) {
    policy.dict_states_.push_back(to_eigen(states[i]));
    policy.dict_actions_.push_back(actions[i]);
    policy.check_input(policy.dict_states_.back(), actions[i]);
  }
  policy.P_ = Matrix(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (P[static_cast<std::size_t>(i)].size() != m) throw ParseError("GP-SARSA checkpoint P is not square");
    for (Eigen::Index k = 0; k < n; ++k) {
      policy.K_(i, k) = policy.kernel(policy.dict_states_[static_cast<std::size_t>(i)], actions[static_cast<std::size_t>(i)],
                                      policy.dict_states_[static_cast<std::size_t>(k)], actions[static_cast<std::size_t>(k)]);
      policy.P_(i, k) = P[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
  }
  policy.y_ = to_eigen(y);
  policy.Kinv_ = m > 0 ? Matrix(robust_cholesky(policy.K_).solve(Matrix::Identity(n, n))) : Matrix();
  policy.alpha_ = Vector::Zero(n);
  policy.refresh_posterior();
  return policy;
}

void GpSarsa::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

GpSarsa GpSarsa::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace arl
