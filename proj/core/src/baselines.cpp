#include "arl/baselines.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace arl {

using nlohmann::json;

std::optional<double> gated_reward(bool objective, int subjective, std::size_t turns, const ActiveLearningConfig& cfg) {
  if (subjective != 1 && subjective != -1) throw ValidationError("subjective rating must be +1 or -1");
  if (objective != (subjective > 0)) return std::nullopt;
  return reward_signal(objective, turns, cfg);
}

double subjective_reward(int subjective, std::size_t turns, const ActiveLearningConfig& cfg) {
  if (subjective != 1 && subjective != -1) throw ValidationError("subjective rating must be +1 or -1");
  return reward_signal(subjective > 0, turns, cfg);
}

void to_json(json& j, const OfflineRnnConfig& c) {
  j = json{{"hidden", c.hidden},         {"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
           {"patience", c.patience},     {"clip_norm", c.clip_norm},         {"init_scale", c.init_scale},
           {"forget_bias", c.forget_bias}, {"valid_fraction", c.valid_fraction}, {"seed", c.seed}};
}

void from_json(const json& j, OfflineRnnConfig& c) {
  const OfflineRnnConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.patience = j.value("patience", d.patience);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.init_scale = j.value("init_scale", d.init_scale);
  c.forget_bias = j.value("forget_bias", d.forget_bias);
  c.valid_fraction = j.value("valid_fraction", d.valid_fraction);
  c.seed = j.value("seed", d.seed);
  if (c.hidden < 1 || !(c.learning_rate > 0.0) || c.max_epochs < 0 || c.patience < 0 ||
      !(c.valid_fraction > 0.0 && c.valid_fraction < 1.0))
    throw ValidationError("invalid off-line RNN configuration");
}

RnnEstimatorParams::RnnEstimatorParams(Eigen::Index feature_dim, Eigen::Index hidden)
    : lstm(feature_dim, hidden), w(Vector::Zero(hidden)) {}

RnnEstimatorParams RnnEstimatorParams::initialized(Eigen::Index feature_dim, const OfflineRnnConfig& cfg) {
  RnnEstimatorParams p(feature_dim, cfg.hidden);
  Rng rng(mix_seed(cfg.seed, 0xa11));
  p.lstm.init_uniform(rng, cfg.init_scale, cfg.forget_bias);
  for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w(i) = cfg.init_scale * (2.0 * uniform01(rng) - 1.0);
  p.b = 0.0;
  return p;
}

void RnnEstimatorParams::for_each(const TensorVisitor& fn) {
  visit(lstm, "lstm", fn);
  fn("readout.w", w.data(), w.size());
  fn("readout.b", &b, 1);
}

namespace {

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// log(1 + exp(-y z)) for y in {+1, -1}, stable for large |z|
double bce_from_logit(double z, bool success) {
  const double m = success ? -z : z;
  return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

void check_sequence(const RnnEstimatorParams& params, const std::vector<Vector>& features) {
  if (features.empty()) throw ValidationError("a dialogue has at least one turn");
  for (const auto& f : features)
    if (f.size() != params.feature_dim())
      throw ValidationError("turn features have dimension " + std::to_string(f.size()) + ", expected " +
                            std::to_string(params.feature_dim()));
}

double logit(const RnnEstimatorParams& params, const std::vector<Vector>& features) {
  check_sequence(params, features);
  const auto steps = lstm_forward(params.lstm, features);
  return params.w.dot(steps.back().h) + params.b;
}

Vector flatten(RnnEstimatorParams& p) {
  std::vector<double> out;
  p.for_each([&](const std::string&, double* d, Eigen::Index n) { out.insert(out.end(), d, d + n); });
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

void assign(RnnEstimatorParams& p, const Vector& flat) {
  Eigen::Index pos = 0;
  p.for_each([&](const std::string&, double* d, Eigen::Index n) {
    std::copy(flat.data() + pos, flat.data() + pos + n, d);
    pos += n;
  });
}

void set_zero(RnnEstimatorParams& p) {
  p.lstm.set_zero();
  p.w.setZero();
  p.b = 0.0;
}

}  // namespace

double predict_offline_rnn(const RnnEstimatorParams& params, const std::vector<Vector>& features) {
  // clamp keeps the open interval even when the logit saturates
  return std::clamp(sigmoid(logit(params, features)), 1e-12, 1.0 - 1e-12);
}

double offline_rnn_gradients(const RnnEstimatorParams& params, const std::vector<Vector>& features, bool success,
                             RnnEstimatorParams& grad) {
  check_sequence(params, features);
  const auto steps = lstm_forward(params.lstm, features);
  const Vector& hT = steps.back().h;
  const double z = params.w.dot(hT) + params.b;
  const double dz = sigmoid(z) - (success ? 1.0 : 0.0);
  grad.w += dz * hT;
  grad.b += dz;
  std::vector<Vector> dh(steps.size(), Vector::Zero(params.hidden()));
  dh.back() = dz * params.w;
  lstm_backward(params.lstm, steps, dh, grad.lstm);
  return bce_from_logit(z, success);
}

double offline_rnn_loss(const RnnEstimatorParams& params, const std::vector<std::vector<Vector>>& sequences,
                        const std::vector<bool>& labels) {
  if (sequences.size() != labels.size() || sequences.empty()) throw ValidationError("need one label per dialogue");
  double total = 0.0;
  for (std::size_t i = 0; i < sequences.size(); ++i) total += bce_from_logit(logit(params, sequences[i]), labels[i]);
  return total / static_cast<double>(sequences.size());
}

RnnEstimatorParams train_offline_rnn(const std::vector<std::vector<Vector>>& sequences, const std::vector<bool>& labels,
                                     const OfflineRnnConfig& cfg, OfflineRnnReport* report) {
  if (sequences.size() != labels.size()) throw ValidationError("need one label per dialogue");
  if (sequences.size() < 2) throw ValidationError("off-line RNN training needs at least two dialogues");
  Rng rng(mix_seed(cfg.seed, 0x5b1));
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const std::size_t n_valid =
      std::clamp<std::size_t>(static_cast<std::size_t>(cfg.valid_fraction * static_cast<double>(order.size())), 1,
                              order.size() - 1);
  std::vector<std::vector<Vector>> valid_x, train_x;
  std::vector<bool> valid_y, train_y;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& xs = k < n_valid ? valid_x : train_x;
    auto& ys = k < n_valid ? valid_y : train_y;
    xs.push_back(sequences[order[k]]);
    ys.push_back(labels[order[k]]);
  }

  const Eigen::Index F = sequences.front().front().size();
  RnnEstimatorParams params = RnnEstimatorParams::initialized(F, cfg);
  RnnEstimatorParams best = params;
  RnnEstimatorParams grad = params;

  OfflineRnnReport local;
  OfflineRnnReport& rep = report ? *report : local;
  rep = {};
  rep.train_size = train_x.size();
  rep.valid_size = valid_x.size();
  const auto positives = static_cast<double>(std::count(valid_y.begin(), valid_y.end(), true));
  rep.majority_rate = std::max(positives, static_cast<double>(valid_y.size()) - positives) / static_cast<double>(valid_y.size());
  double best_valid = offline_rnn_loss(params, valid_x, valid_y);
  rep.initial_valid_loss = best_valid;

  auto accuracy = [&](const RnnEstimatorParams& p) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < valid_x.size(); ++i) hits += (predict_offline_rnn(p, valid_x[i]) >= 0.5) == valid_y[i];
    return static_cast<double>(hits) / static_cast<double>(valid_x.size());
  };

  std::vector<std::size_t> train_order(train_x.size());
  std::iota(train_order.begin(), train_order.end(), std::size_t{0});
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = train_order.size(); i > 1; --i) std::swap(train_order[i - 1], train_order[uniform_index(rng, i)]);
    for (std::size_t idx : train_order) {
      set_zero(grad);
      offline_rnn_gradients(params, train_x[idx], train_y[idx], grad);
      Vector g = flatten(grad);
      const double norm = g.norm();
      if (!std::isfinite(norm)) throw NumericalError("off-line RNN training diverged in epoch " + std::to_string(epoch));
      if (norm > cfg.clip_norm) g *= cfg.clip_norm / norm;
      assign(params, flatten(params) - cfg.learning_rate * g);
    }
    const double valid_loss = offline_rnn_loss(params, valid_x, valid_y);
    if (!std::isfinite(valid_loss)) throw NumericalError("off-line RNN training diverged in epoch " + std::to_string(epoch));
    rep.valid_loss.push_back(valid_loss);
    rep.valid_accuracy.push_back(accuracy(params));
    spdlog::info("offline rnn epoch {}: valid loss {:.4f} accuracy {:.3f}", epoch, valid_loss, rep.valid_accuracy.back());
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = params;
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (since_best++ >= cfg.patience) {
      break;
    }
  }
  return best;
}

void save_offline_rnn(const std::filesystem::path& path, RnnEstimatorParams& params) {
  json tensors = json::object();
  params.for_each([&](const std::string& name, double* data, Eigen::Index size) {
    tensors[name] = std::vector<double>(data, data + size);
  });
  json doc{{"format", "arl-offline-rnn"},
           {"version", 1},
           {"feature_dim", params.feature_dim()},
           {"hidden", params.hidden()},
           {"tensors", tensors}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write off-line RNN checkpoint " + path.string());
  out << doc.dump() << '\n';
}

RnnEstimatorParams load_offline_rnn(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open off-line RNN checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("off-line RNN checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", std::string()) != "arl-offline-rnn" || doc.value("version", 0) != 1)
    throw ParseError("off-line RNN checkpoint " + path.string() + ": unsupported format or version");
  RnnEstimatorParams params(doc.at("feature_dim").get<Eigen::Index>(), doc.at("hidden").get<Eigen::Index>());
  const json& tensors = doc.at("tensors");
  params.for_each([&](const std::string& name, double* data, Eigen::Index size) {
    if (!tensors.contains(name)) throw ParseError("off-line RNN checkpoint missing tensor " + name);
    const auto values = tensors.at(name).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != size) throw ParseError("off-line RNN tensor " + name + " has wrong size");
    std::copy(values.begin(), values.end(), data);
  });
  return params;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("need one label per score");
  double pos = 0, neg = 0, wins = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    pos += 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  for (bool l : labels) neg += l ? 0 : 1;
  if (pos == 0 || neg == 0) throw ValidationError("AUC needs both classes");
  return wins / (pos * neg);
}

}  // namespace arl
