#pragma once

// End-to-end experiments: simulate -> track -> act -> embed -> reward -> policy update, for each
// reward system and seed; metrics, learning curves, embedding export and significance tests.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arl/baselines.hpp"
#include "arl/dialogue.hpp"
#include "arl/embedding.hpp"
#include "arl/policy.hpp"
#include "arl/reward_gp.hpp"

namespace arl {

/// online_gp: active GP reward model; subj: user rating as reward; obj_eq_subj: rating gated by the
/// objective outcome; offline_rnn: pre-trained success estimator; objective: simulator ground truth
/// (a reference system, not one of the four compared schemes).
enum class RewardSystem { online_gp, subj, obj_eq_subj, offline_rnn, objective };

std::string to_string(RewardSystem s);
RewardSystem reward_system_from_string(const std::string& name);

struct ExperimentConfig {
  RewardSystem system = RewardSystem::online_gp;
  std::size_t dialogues = 500;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SimulationConfig simulation;
  ActiveLearningConfig active_learning;
  EpConfig ep;
  OptimizerConfig optimizer;
  GpSarsaConfig policy;
  std::filesystem::path embedding_checkpoint;
  std::filesystem::path offline_rnn_checkpoint;
  std::filesystem::path output_dir;
  std::size_t moving_average_window = 150;
  std::size_t final_window = 150;
  /// Continue from checkpoints left by an interrupted run in output_dir.
  bool resume = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

struct DialogueRecord {
  std::size_t index = 0;
  std::string dialogue_id;
  std::uint64_t seed = 0;
  RewardSystem system = RewardSystem::online_gp;
  std::size_t turns = 0;
  bool objective = false;
  int subjective = 1;
  /// The reward model's success bit when it (not the user) supplied the label.
  std::optional<bool> predicted;
  std::optional<double> p_success;
  bool queried = false;
  /// Absent when the dialogue was discarded for training.
  std::optional<double> reward;
  double epsilon = 0.0;
  std::size_t dictionary_size = 0;
  std::size_t pool_size = 0;
};

nlohmann::json to_json(const DialogueRecord& r);
DialogueRecord record_from_json(const nlohmann::json& j);

void write_records(const std::filesystem::path& path, const std::vector<DialogueRecord>& records);
std::vector<DialogueRecord> read_records(const std::filesystem::path& path);

/// Per-turn rewards for the policy's decisions: -per_turn_penalty each, the final one also carries
/// the success bonus and the penalty of any closing turn without a decision, so they sum to the
/// dialogue reward.
std::vector<double> distribute_reward(double dialogue_reward, std::size_t decisions, std::size_t turns,
                                      const ActiveLearningConfig& cfg);

/// Feeds one finished dialogue to the policy.
void update_policy(GpSarsa& policy, const DialogueLog& log, double dialogue_reward, const ActiveLearningConfig& cfg);

struct CellResult {
  std::vector<DialogueRecord> records;
  GpSarsa policy;
  std::optional<ActiveRewardModel> reward_model;
  std::vector<nlohmann::json> decision_log;
};

struct CellInputs {
  const Ontology* ontology = nullptr;
  const EncoderDecoderParams* embedding = nullptr;
  const RnnEstimatorParams* offline_rnn = nullptr;
};

/// One (system, seed) cell, strictly sequential. `resume` continues an interrupted cell from its records.
CellResult run_cell(const ExperimentConfig& cfg, std::uint64_t seed, const CellInputs& inputs,
                    std::optional<CellResult> resume = std::nullopt);

struct ExperimentResult {
  std::vector<std::vector<DialogueRecord>> per_seed;
  nlohmann::json summary;
};

/// Runs every seed, writes records, checkpoints, summary and manifest under cfg.output_dir
/// (when set). On failure the partially completed cell is checkpointed before rethrowing.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Ontology& ontology);

// ---------------------------------------------------------------------------
// Metrics

/// Trailing mean over min(window, i + 1) entries.
std::vector<double> moving_average(const std::vector<double>& series, std::size_t window);

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  std::optional<double> precision, recall, f_measure;  // nullopt = undefined
  std::size_t support = 0;                              // tp + fn
};

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn);

struct PredictionMetrics {
  ClassMetrics success;
  ClassMetrics failure;
  /// Support-weighted averages over the defined classes.
  std::optional<double> precision, recall, f_measure;
  std::size_t count = 0;
};

enum class LabelSource { subjective, objective };

/// Precision/recall/F of the model's predictions on non-queried dialogues.
PredictionMetrics compute_metrics(const std::vector<DialogueRecord>& records, LabelSource truth);

struct CellSummary {
  std::size_t dialogues = 0;
  std::size_t queries = 0;
  std::size_t model_predicted = 0;
  std::size_t trained_on = 0;
  double final_objective_success = 0.0;
  double final_subjective_success = 0.0;
  double mean_turns = 0.0;
};

/// Pure fold over the records.
CellSummary summarize_cell(const std::vector<DialogueRecord>& records, std::size_t final_window);

nlohmann::json metrics_json(const std::vector<std::vector<DialogueRecord>>& per_seed, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Statistics

struct PairedTTest {
  double mean_difference = 0.0;
  double t = 0.0;
  double dof = 0.0;
  double p_one_sided = 1.0;  // H1: mean(a - b) > 0
  double p_two_sided = 1.0;
};

PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Embedding analysis

struct ProjectedEmbedding {
  std::string dialogue_id;
  double x = 0.0, y = 0.0;
  bool success = false;
  std::size_t turns = 0;
};

/// Top-two principal components (sign fixed so the largest-magnitude loading is positive).
std::vector<ProjectedEmbedding> project_embeddings(const std::vector<DialogueLog>& corpus,
                                                   const EncoderDecoderParams& embedding);
void write_projection_csv(const std::filesystem::path& path, const std::vector<ProjectedEmbedding>& rows);

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double majority_rate = 0.0;
};

/// L2-regularised logistic regression on standardised features, fitted by Newton's method.
ProbeResult logistic_probe(const std::vector<Vector>& train_x, const std::vector<bool>& train_y,
                           const std::vector<Vector>& test_x, const std::vector<bool>& test_y, double l2 = 1e-2);

/// Simulates a corpus and trains an embedding on it (90/10 split).
EncoderDecoderParams pretrain_embedding(const Ontology& ontology, const SimulationConfig& sim, std::size_t count,
                                        std::uint64_t seed, const EmbeddingConfig& cfg,
                                        EmbeddingTrainingReport* report = nullptr);

/// Simulates a corpus and trains the off-line RNN on its objective labels.
RnnEstimatorParams pretrain_offline_rnn(const Ontology& ontology, const SimulationConfig& sim, std::size_t count,
                                        std::uint64_t seed, const OfflineRnnConfig& cfg,
                                        OfflineRnnReport* report = nullptr);

}  // namespace arl
