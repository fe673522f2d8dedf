#pragma once

// Unsupervised dialogue embedding: a bidirectional LSTM encoder whose hidden states are
// mean-pooled into a fixed-length vector d, and a forward LSTM decoder that is fed d at
// every step and reconstructs the turn features. Trained on squared reconstruction error.

#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "arl/lstm.hpp"

namespace arl {

using FeatureSequence = std::vector<Vector>;

struct EmbeddingConfig {
  Eigen::Index hidden = 32;
  /// 0 means 2 * hidden, matching the width of d.
  Eigen::Index decoder_hidden = 0;
  double learning_rate = 0.02;
  int max_epochs = 40;
  int patience = 3;
  double clip_norm = 5.0;
  double init_scale = 0.08;
  double forget_bias = 1.0;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const EmbeddingConfig& cfg);
void from_json(const nlohmann::json& j, EmbeddingConfig& cfg);

struct EncoderDecoderParams {
  LstmParams forward;
  LstmParams backward;
  LstmParams decoder;
  Matrix out_W;  // F x H_dec
  Vector out_b;  // F

  EncoderDecoderParams() = default;
  EncoderDecoderParams(Eigen::Index feature_dim, Eigen::Index hidden, Eigen::Index decoder_hidden);

  static EncoderDecoderParams initialized(Eigen::Index feature_dim, const EmbeddingConfig& cfg);

  Eigen::Index feature_dim() const { return out_b.size(); }
  Eigen::Index hidden() const { return forward.hidden_size(); }
  Eigen::Index embedding_dim() const { return 2 * hidden(); }

  void for_each(const TensorVisitor& fn);
  Eigen::Index parameter_count();
  Vector flatten();
  void assign(const Vector& flat);
  void set_zero();
};

/// d = mean_t [fwd h_t ; bwd h_t].
Vector encode_dialogue(const EncoderDecoderParams& params, const FeatureSequence& features);

std::vector<Vector> decode_dialogue(const EncoderDecoderParams& params, const Vector& embedding, std::size_t turns);

/// sum_t ||f_t - f'_t||^2 for one dialogue.
double dialogue_reconstruction_error(const EncoderDecoderParams& params, const FeatureSequence& features);

/// Mean over dialogues of the summed per-turn squared error.
double reconstruction_loss(const EncoderDecoderParams& params, const std::vector<FeatureSequence>& batch);

/// Accumulates d(per-dialogue error)/d(params) into `grad` (same shapes) by BPTT; returns the error.
double embedding_gradients(const EncoderDecoderParams& params, const FeatureSequence& features,
                           EncoderDecoderParams& grad);

struct EmbeddingTrainingReport {
  double initial_valid_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  int best_epoch = 0;  // 0 = initialization
};

/// Per-dialogue SGD with global-norm clipping; returns the parameters with the best validation loss.
EncoderDecoderParams train_embedding(const std::vector<FeatureSequence>& train,
                                     const std::vector<FeatureSequence>& valid, const EmbeddingConfig& cfg,
                                     EmbeddingTrainingReport* report = nullptr);

void save_embedding(const std::filesystem::path& path, EncoderDecoderParams& params);
EncoderDecoderParams load_embedding(const std::filesystem::path& path);

}  // namespace arl
