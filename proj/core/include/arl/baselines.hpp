#pragma once

// Comparison reward schemes: the Obj=Subj gate, raw user ratings, and an off-line RNN success
// estimator trained on simulated dialogues with objective labels.

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "arl/lstm.hpp"
#include "arl/reward_gp.hpp"

namespace arl {

/// reward_signal(obj, N) when the user's rating agrees with the objective outcome, nothing otherwise.
std::optional<double> gated_reward(bool objective, int subjective, std::size_t turns,
                                   const ActiveLearningConfig& cfg = {});

/// The user's rating taken at face value.
double subjective_reward(int subjective, std::size_t turns, const ActiveLearningConfig& cfg = {});

struct OfflineRnnConfig {
  Eigen::Index hidden = 32;
  double learning_rate = 0.05;
  int max_epochs = 30;
  int patience = 3;
  double clip_norm = 5.0;
  double init_scale = 0.08;
  double forget_bias = 1.0;
  double valid_fraction = 0.2;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const OfflineRnnConfig& cfg);
void from_json(const nlohmann::json& j, OfflineRnnConfig& cfg);

/// Forward LSTM over turn features; sigmoid on an affine read-out of the final hidden state.
struct RnnEstimatorParams {
  LstmParams lstm;
  Vector w;  // H
  double b = 0.0;

  RnnEstimatorParams() = default;
  RnnEstimatorParams(Eigen::Index feature_dim, Eigen::Index hidden);
  static RnnEstimatorParams initialized(Eigen::Index feature_dim, const OfflineRnnConfig& cfg);

  Eigen::Index feature_dim() const { return lstm.input_size(); }
  Eigen::Index hidden() const { return lstm.hidden_size(); }
  void for_each(const TensorVisitor& fn);
};

double predict_offline_rnn(const RnnEstimatorParams& params, const std::vector<Vector>& features);

/// Binary cross-entropy of one dialogue; accumulates its gradient into `grad`.
double offline_rnn_gradients(const RnnEstimatorParams& params, const std::vector<Vector>& features, bool success,
                             RnnEstimatorParams& grad);

double offline_rnn_loss(const RnnEstimatorParams& params, const std::vector<std::vector<Vector>>& sequences,
                        const std::vector<bool>& labels);

struct OfflineRnnReport {
  std::size_t train_size = 0;
  std::size_t valid_size = 0;
  double initial_valid_loss = 0.0;
  std::vector<double> valid_loss;
  std::vector<double> valid_accuracy;
  double majority_rate = 0.0;
  int best_epoch = 0;
};

/// Splits off a validation set (seeded shuffle), runs per-dialogue SGD and keeps the epoch with
/// the lowest validation loss.
RnnEstimatorParams train_offline_rnn(const std::vector<std::vector<Vector>>& sequences, const std::vector<bool>& labels,
                                     const OfflineRnnConfig& cfg, OfflineRnnReport* report = nullptr);

void save_offline_rnn(const std::filesystem::path& path, RnnEstimatorParams& params);
RnnEstimatorParams load_offline_rnn(const std::filesystem::path& path);

/// Area under the ROC curve (ties count one half).
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

}  // namespace arl
