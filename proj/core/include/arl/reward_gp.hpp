#pragma once

// Probit GP classifier over dialogue embeddings (EP inference, marginal-likelihood
// hyperparameter search) and the active-learning reward model built on top of it.

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "arl/common.hpp"

namespace arl {

/// k(d, d') = p^2 exp(-|d - d'|^2 / (2 l^2)) + sigma_n^2 [same index]. Stored in log space.
struct KernelHyperparams {
  double log_p = 0.0;
  double log_l = 0.0;
  double log_sigma_n = std::log(0.3);

  double p() const { return std::exp(log_p); }
  double l() const { return std::exp(log_l); }
  double sigma_n() const { return std::exp(log_sigma_n); }

  static KernelHyperparams from_values(double p, double l, double sigma_n);
  /// p = 1, l = sqrt(dim), sigma_n = 0.3.
  static KernelHyperparams defaults_for_dim(Eigen::Index dim);

  Eigen::Vector3d as_vector() const { return {log_p, log_l, log_sigma_n}; }
  static KernelHyperparams from_vector(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

void to_json(nlohmann::json& j, const KernelHyperparams& h);
void from_json(const nlohmann::json& j, KernelHyperparams& h);

double kernel_eval(const Vector& a, const Vector& b, const KernelHyperparams& hyper, bool same_index);

/// Training Gram matrix, white noise on the diagonal.
Matrix gram_matrix(const std::vector<Vector>& points, const KernelHyperparams& hyper);

/// Median pairwise distance, an alternative starting length scale.
double median_distance(const std::vector<Vector>& points);

/// Cholesky with diagonal jitter escalation 0 -> 1e-9 -> 1e-6 -> 1e-3; throws NumericalError after.
Eigen::LLT<Matrix> robust_cholesky(const Matrix& A, double* jitter_used = nullptr);

struct EpConfig {
  double damping = 0.8;
  double tolerance = 1e-6;
  int max_sweeps = 100;
};

struct EpReport {
  int sweeps = 0;
  double last_delta = 0.0;
  int skipped_updates = 0;
};

struct Prediction {
  double mu_star = 0.0;
  double var_star = 0.0;
  double p_success = 0.5;
};

Prediction make_prediction(double mu, double var);

struct OptimizerConfig {
  int max_iterations = 40;
  double gradient_tolerance = 1e-5;
  /// Stop once an iteration lowers the NLML by less than this fraction of (1 + |NLML|).
  double relative_tolerance = 1e-5;
  /// Box on (log p, log l, log sigma_n); keeps separable pools from driving p to infinity.
  Eigen::Vector3d lower{std::log(0.05), std::log(1e-2), std::log(1e-3)};
  Eigen::Vector3d upper{std::log(50.0), std::log(1e3), std::log(10.0)};
  /// Largest change of any log-hyperparameter in one line-search step.
  double max_step = 2.0;
};

struct OptimizeResult {
  KernelHyperparams hyper;
  double nlml_start = 0.0;
  double nlml_end = 0.0;
  int iterations = 0;
  bool line_search_failed = false;
};

/// Exact GP over a labelled pool with the probit likelihood, approximated by EP.
class GpClassifier {
 public:
  explicit GpClassifier(KernelHyperparams hyper = {}, EpConfig ep = {});

  void add_point(Vector d, int label);
  void set_hyperparams(const KernelHyperparams& hyper);
  void set_ep_config(const EpConfig& ep) { ep_ = ep; }

  const KernelHyperparams& hyperparams() const { return hyper_; }
  const EpConfig& ep_config() const { return ep_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vector>& embeddings() const { return points_; }
  const std::vector<int>& labels() const { return labels_; }
  const Vector& site_precision() const { return tau_; }
  const Vector& site_natural_mean() const { return nu_; }
  bool fitted() const { return fitted_; }

  /// Runs EP from the current site parameters to convergence and refreshes the caches.
  EpReport fit();

  /// Requires a fitted (or empty) pool.
  Prediction predict(const Vector& d) const;

  /// Posterior marginals at the training points.
  const Vector& posterior_mean() const;
  Vector posterior_variance() const;

  /// EP negative log marginal likelihood and its gradient w.r.t. (log p, log l, log sigma_n).
  double nlml() const;
  Eigen::Vector3d nlml_gradient() const;

  /// Conjugate-gradient search in log space from the current hyperparameters; leaves the
  /// model fitted at the best iterate.
  OptimizeResult optimize_hyperparams(const OptimizerConfig& cfg = {});

  nlohmann::json to_json() const;
  static GpClassifier from_json(const nlohmann::json& j);

 private:
  void require_fitted() const;
  void refresh(const Matrix& K);

  KernelHyperparams hyper_;
  EpConfig ep_;
  std::vector<Vector> points_;
  std::vector<int> labels_;
  Vector tau_;  // site precisions
  Vector nu_;   // site natural means

  bool fitted_ = true;
  Matrix K_;
  Matrix L_;      // chol(I + S^1/2 K S^1/2), lower
  Vector sW_;     // S^1/2
  Vector alpha_;  // nu - S^1/2 B^-1 S^1/2 K nu
  Vector mu_;
  Matrix Sigma_;
  double nlml_ = 0.0;
};

/// Fits `model` at `hyper` (warm-started) and returns NLML and gradient.
std::pair<double, Eigen::Vector3d> nlml_and_grad(GpClassifier& model, const KernelHyperparams& hyper);

// ---------------------------------------------------------------------------
// Active learning

struct ActiveLearningConfig {
  double lambda_start = 1.0;
  double lambda_end = 0.85;
  int anneal_dialogues = 50;
  int reopt_warmup = 40;
  int reopt_batch = 20;
  double success_reward = 20.0;
  double per_turn_penalty = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ActiveLearningConfig& cfg);
void from_json(const nlohmann::json& j, ActiveLearningConfig& cfg);

double current_lambda(std::size_t n_labeled, const ActiveLearningConfig& cfg = {});

/// Query iff 1 - lambda <= p_success <= lambda.
bool decide_query(const Prediction& pred, double lambda);

/// success_reward * 1[success] - per_turn_penalty * N.
double reward_signal(bool success, std::size_t turns, const ActiveLearningConfig& cfg = {});

/// Hyperparameters stay at their start values until the pool reaches `reopt_warmup` labels, then are
/// re-optimised there and after every further `reopt_batch` labels.
bool reoptimization_due(std::size_t n_labeled, const ActiveLearningConfig& cfg);

struct EpisodeDecision {
  std::string dialogue_id;
  Prediction prediction;
  double lambda = 1.0;
  bool queried = false;
  /// The user's label when queried, otherwise the model's thresholded prediction (+1 / -1).
  int label_or_prediction = 1;
  double reward = 0.0;
  bool reoptimized = false;

  bool success() const { return label_or_prediction > 0; }
};

nlohmann::json decision_log_line(const EpisodeDecision& d);

using FeedbackProvider = std::function<int()>;

class ActiveRewardModel {
 public:
  ActiveRewardModel(Eigen::Index embedding_dim, ActiveLearningConfig cfg = {}, EpConfig ep = {},
                    OptimizerConfig opt = {});
  ActiveRewardModel(GpClassifier gp, ActiveLearningConfig cfg, OptimizerConfig opt = {});

  Prediction predict(const Vector& d) const { return gp_.predict(d); }
  double lambda() const { return current_lambda(gp_.size(), cfg_); }
  bool should_query(const Prediction& pred) const { return decide_query(pred, lambda()); }

  /// predict -> decide -> (ask user, add label, refit, maybe re-optimise) -> reward.
  EpisodeDecision process_episode(const Vector& d, std::size_t turns, const FeedbackProvider& feedback,
                                  std::string dialogue_id = {});

  /// Adds a user label for `d` (refit and cadence-driven re-optimisation); returns whether it re-optimised.
  bool add_label(const Vector& d, int label);

  const GpClassifier& classifier() const { return gp_; }
  const ActiveLearningConfig& config() const { return cfg_; }
  std::size_t labels() const { return gp_.size(); }

  void save(const std::filesystem::path& path) const;
  static ActiveRewardModel load(const std::filesystem::path& path);

 private:
  GpClassifier gp_;
  ActiveLearningConfig cfg_;
  OptimizerConfig opt_;
};

}  // namespace arl
