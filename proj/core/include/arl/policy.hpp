#pragma once

// Episodic GP-SARSA over (belief features, summary action) with a sparse support dictionary.
//
// Q is a zero-mean GP with k((b,a),(b',a')) = p^2 exp(-|b - b'|^2 / (2 l^2)) [a == a'].
// With the Monte-Carlo noise model, conditioning on the TD observations of a finished episode
// is the same as regressing Q(b_t, a_t) on the discounted returns G_t with noise sigma^2, so the
// learner keeps the projected sufficient statistics P = sum a_t a_t^T and y = sum a_t G_t, where
// a_t are dictionary coordinates. y is accumulated one transition at a time through an
// eligibility trace; statistics become visible to q_posterior when the episode terminates.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "arl/common.hpp"

namespace arl {

enum class SelectionMode { mean, thompson };

struct GpSarsaConfig {
  double kernel_scale = 10.0;  // p
  double length_scale = 1.0;   // l
  double noise_sigma = 5.0;
  double gamma = 1.0;
  /// Novelty threshold on the normalised projection residual delta / k(x, x).
  double nu = 0.1;
  std::size_t max_dictionary = 1000;
  double epsilon_start = 0.3;
  double epsilon_end = 0.05;
  std::size_t epsilon_dialogues = 400;
  SelectionMode mode = SelectionMode::mean;

  void validate() const;
};

void to_json(nlohmann::json& j, const GpSarsaConfig& cfg);
void from_json(const nlohmann::json& j, GpSarsaConfig& cfg);

/// Linear decay from epsilon_start to epsilon_end over the first epsilon_dialogues episodes.
double epsilon_schedule(std::size_t episodes_completed, const GpSarsaConfig& cfg);

struct Transition {
  Vector state;
  int action = 0;
  double reward = 0.0;
  std::optional<Vector> next_state;
  std::optional<int> next_action;
  bool terminal = false;
};

struct QEstimate {
  double mean = 0.0;
  double variance = 0.0;
};

/// Thrown on numerical breakdown; carries the dictionary at the time of failure.
class PolicyNumericalError : public NumericalError {
 public:
  PolicyNumericalError(const std::string& what, std::vector<Vector> states, std::vector<int> actions)
      : NumericalError(what), states(std::move(states)), actions(std::move(actions)) {}
  std::vector<Vector> states;
  std::vector<int> actions;
};

class GpSarsa {
 public:
  GpSarsa(std::size_t state_dim, std::size_t num_actions, GpSarsaConfig cfg = {});

  double kernel(const Vector& b1, int a1, const Vector& b2, int a2) const;

  QEstimate q_posterior(const Vector& b, int a) const;

  /// Epsilon-greedy over posterior means (or one posterior sample per action in thompson mode);
  /// ties go to the smallest action index.
  int select_action(const Vector& b, double epsilon, Rng& rng) const;
  int select_action(const Vector& b, Rng& rng) const { return select_action(b, epsilon(), rng); }

  /// Current exploration rate from the schedule.
  double epsilon() const { return epsilon_schedule(episodes_, cfg_); }

  /// Consumes one transition. Non-terminal transitions must name (b', a') and the next call must
  /// start from them. A terminal transition closes the episode and refreshes the posterior.
  void update(const Transition& t);

  /// Drops the statistics of an unfinished episode (dictionary growth is kept).
  void abandon_episode();
  bool in_episode() const { return in_episode_; }

  std::size_t dictionary_size() const { return dict_states_.size(); }
  const std::vector<Vector>& dictionary_states() const { return dict_states_; }
  const std::vector<int>& dictionary_actions() const { return dict_actions_; }
  std::size_t episodes_completed() const { return episodes_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t num_actions() const { return num_actions_; }
  const GpSarsaConfig& config() const { return cfg_; }

  /// Posterior statistics: Q mean = k~^T alpha, variance = k(x,x) - k~^T C k~.
  const Vector& alpha() const { return alpha_; }
  /// C = K~^-1 - sigma^2 M^-1, formed on demand (cubic in the dictionary size).
  Matrix covariance_statistics() const;

  nlohmann::json to_json() const;
  static GpSarsa from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static GpSarsa load(const std::filesystem::path& path);

 private:
  Vector kernel_vector(const Vector& b, int a) const;
  /// Dictionary coordinates of (b, a), admitting it if novel enough.
  Vector project(const Vector& b, int a);
  void grow(Eigen::Index m);
  /// Full refactorisation of M = K P K + sigma^2 K.
  void refresh_posterior();
  /// Rank-1 update L L^T += x x^T.
  void cholesky_update(Vector x);
  void solve_alpha();
  void check_input(const Vector& b, int a) const;

  std::size_t state_dim_;
  std::size_t num_actions_;
  GpSarsaConfig cfg_;

  std::vector<Vector> dict_states_;
  std::vector<int> dict_actions_;
  Matrix K_;     // dictionary Gram
  Matrix Kinv_;  // maintained incrementally for projections

  Matrix P_;  // sum a a^T over finished episodes
  Vector y_;  // sum a G over finished episodes
  Matrix L_;  // chol(K P K + sigma^2 K), lower
  Vector alpha_;
  std::size_t updates_since_refactor_ = 0;

  // current episode
  bool in_episode_ = false;
  std::vector<Vector> episode_coords_;
  Vector y_ep_;
  Vector trace_;
  Vector expected_state_;
  int expected_action_ = -1;

  std::size_t episodes_ = 0;
};

}  // namespace arl
