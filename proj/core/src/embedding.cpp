#include "arl/embedding.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace arl {

using nlohmann::json;

void to_json(json& j, const EmbeddingConfig& cfg) {
  j = json{{"hidden", cfg.hidden},         {"decoder_hidden", cfg.decoder_hidden},
           {"learning_rate", cfg.learning_rate}, {"max_epochs", cfg.max_epochs},
           {"patience", cfg.patience},     {"clip_norm", cfg.clip_norm},
           {"init_scale", cfg.init_scale}, {"forget_bias", cfg.forget_bias},
           {"seed", cfg.seed}};
}

void from_json(const json& j, EmbeddingConfig& cfg) {
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.decoder_hidden = j.value("decoder_hidden", cfg.decoder_hidden);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.init_scale = j.value("init_scale", cfg.init_scale);
  cfg.forget_bias = j.value("forget_bias", cfg.forget_bias);
  cfg.seed = j.value("seed", cfg.seed);
  if (cfg.hidden < 1) throw ValidationError("embedding hidden size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("embedding learning rate must be positive");
}

EncoderDecoderParams::EncoderDecoderParams(Eigen::Index feature_dim, Eigen::Index hidden,
                                           Eigen::Index decoder_hidden)
    : forward(feature_dim, hidden),
      backward(feature_dim, hidden),
      decoder(2 * hidden, decoder_hidden),
      out_W(Matrix::Zero(feature_dim, decoder_hidden)),
      out_b(Vector::Zero(feature_dim)) {}

EncoderDecoderParams EncoderDecoderParams::initialized(Eigen::Index feature_dim, const EmbeddingConfig& cfg) {
  if (cfg.hidden < 1) throw ValidationError("embedding hidden size must be >= 1");
  const Eigen::Index dec = cfg.decoder_hidden > 0 ? cfg.decoder_hidden : 2 * cfg.hidden;
  EncoderDecoderParams p(feature_dim, cfg.hidden, dec);
  Rng rng(cfg.seed);
  p.forward.init_uniform(rng, cfg.init_scale, cfg.forget_bias);
  p.backward.init_uniform(rng, cfg.init_scale, cfg.forget_bias);
  p.decoder.init_uniform(rng, cfg.init_scale, cfg.forget_bias);
  for (Eigen::Index k = 0; k < p.out_W.size(); ++k) p.out_W.data()[k] = cfg.init_scale * (2.0 * uniform01(rng) - 1.0);
  p.out_b.setZero();
  return p;
}

void EncoderDecoderParams::for_each(const TensorVisitor& fn) {
  visit(forward, "encoder_forward", fn);
  visit(backward, "encoder_backward", fn);
  visit(decoder, "decoder", fn);
  fn("output.W", out_W.data(), out_W.size());
  fn("output.b", out_b.data(), out_b.size());
}

Eigen::Index EncoderDecoderParams::parameter_count() {
  Eigen::Index n = 0;
  for_each([&](const std::string&, double*, Eigen::Index size) { n += size; });
  return n;
}

Vector EncoderDecoderParams::flatten() {
  Vector flat(parameter_count());
  Eigen::Index pos = 0;
  for_each([&](const std::string&, double* data, Eigen::Index size) {
    flat.segment(pos, size) = Eigen::Map<const Vector>(data, size);
    pos += size;
  });
  return flat;
}

void EncoderDecoderParams::assign(const Vector& flat) {
  if (flat.size() != parameter_count()) throw ValidationError("parameter vector size mismatch");
  Eigen::Index pos = 0;
  for_each([&](const std::string&, double* data, Eigen::Index size) {
    Eigen::Map<Vector>(data, size) = flat.segment(pos, size);
    pos += size;
  });
}

void EncoderDecoderParams::set_zero() {
  for_each([](const std::string&, double* data, Eigen::Index size) { Eigen::Map<Vector>(data, size).setZero(); });
}

namespace {

struct EncoderPass {
  std::vector<LstmStep> fwd;
  std::vector<LstmStep> bwd;  // in reversed time order
  Vector embedding;
};

EncoderPass run_encoder(const EncoderDecoderParams& p, const FeatureSequence& features) {
  if (features.empty()) throw ValidationError("cannot encode an empty dialogue");
  for (const auto& f : features)
    if (f.size() != p.feature_dim())
      throw ValidationError("turn feature has dimension " + std::to_string(f.size()) + ", expected " +
                            std::to_string(p.feature_dim()));
  EncoderPass pass;
  pass.fwd = lstm_forward(p.forward, features);
  const FeatureSequence reversed(features.rbegin(), features.rend());
  pass.bwd = lstm_forward(p.backward, reversed);
  const Eigen::Index H = p.hidden();
  pass.embedding = Vector::Zero(2 * H);
  for (std::size_t t = 0; t < features.size(); ++t) {
    pass.embedding.head(H) += pass.fwd[t].h;
    pass.embedding.tail(H) += pass.bwd[t].h;
  }
  pass.embedding /= static_cast<double>(features.size());
  return pass;
}

}  // namespace

Vector encode_dialogue(const EncoderDecoderParams& params, const FeatureSequence& features) {
  return run_encoder(params, features).embedding;
}

std::vector<Vector> decode_dialogue(const EncoderDecoderParams& params, const Vector& embedding, std::size_t turns) {
  if (turns == 0) throw ValidationError("decode requires at least one turn");
  if (embedding.size() != params.embedding_dim()) throw ValidationError("embedding dimension mismatch");
  const auto steps = lstm_forward(params.decoder, std::vector<Vector>(turns, embedding));
  std::vector<Vector> out;
  out.reserve(turns);
  for (const auto& s : steps) out.push_back(params.out_W * s.h + params.out_b);
  return out;
}

double dialogue_reconstruction_error(const EncoderDecoderParams& params, const FeatureSequence& features) {
  const Vector d = encode_dialogue(params, features);
  const auto rec = decode_dialogue(params, d, features.size());
  double err = 0.0;
  for (std::size_t t = 0; t < features.size(); ++t) err += (features[t] - rec[t]).squaredNorm();
  return err;
}

double reconstruction_loss(const EncoderDecoderParams& params, const std::vector<FeatureSequence>& batch) {
  if (batch.empty()) throw ValidationError("reconstruction loss of an empty batch");
  double total = 0.0;
  for (const auto& seq : batch) total += dialogue_reconstruction_error(params, seq);
  return total / static_cast<double>(batch.size());
}

double embedding_gradients(const EncoderDecoderParams& params, const FeatureSequence& features,
                           EncoderDecoderParams& grad) {
  const std::size_t T = features.size();
  const Eigen::Index H = params.hidden();
  EncoderPass enc = run_encoder(params, features);
  const auto dec = lstm_forward(params.decoder, std::vector<Vector>(T, enc.embedding));

  double loss = 0.0;
  std::vector<Vector> dh_dec(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Vector y = params.out_W * dec[t].h + params.out_b;
    const Vector diff = y - features[t];
    loss += diff.squaredNorm();
    const Vector dy = 2.0 * diff;
    grad.out_W.noalias() += dy * dec[t].h.transpose();
    grad.out_b += dy;
    dh_dec[t] = params.out_W.transpose() * dy;
  }
  const auto dx_dec = lstm_backward(params.decoder, dec, dh_dec, grad.decoder);
  Vector dd = Vector::Zero(2 * H);
  for (const auto& dx : dx_dec) dd += dx;
  dd /= static_cast<double>(T);
  lstm_backward(params.forward, enc.fwd, std::vector<Vector>(T, dd.head(H)), grad.forward);
  lstm_backward(params.backward, enc.bwd, std::vector<Vector>(T, dd.tail(H)), grad.backward);
  return loss;
}

EncoderDecoderParams train_embedding(const std::vector<FeatureSequence>& train,
                                     const std::vector<FeatureSequence>& valid, const EmbeddingConfig& cfg,
                                     EmbeddingTrainingReport* report) {
  if (train.empty() || valid.empty()) throw ValidationError("embedding training needs nonempty train and validation sets");
  const Eigen::Index F = train.front().front().size();
  EncoderDecoderParams params = EncoderDecoderParams::initialized(F, cfg);
  EncoderDecoderParams best = params;
  EncoderDecoderParams grad = params;
  Rng rng(mix_seed(cfg.seed, 0x5eed));

  EmbeddingTrainingReport local;
  EmbeddingTrainingReport& rep = report ? *report : local;
  rep = {};
  double best_valid = reconstruction_loss(params, valid);
  rep.initial_valid_loss = best_valid;
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double train_total = 0.0;
    for (std::size_t idx : order) {
      grad.set_zero();
      train_total += embedding_gradients(params, train[idx], grad);
      Vector g = grad.flatten();
      const double norm = g.norm();
      if (!std::isfinite(norm)) throw NumericalError("embedding training diverged in epoch " + std::to_string(epoch));
      if (norm > cfg.clip_norm) g *= cfg.clip_norm / norm;
      params.assign(params.flatten() - cfg.learning_rate * g);
    }
    const double train_loss = train_total / static_cast<double>(train.size());
    const double valid_loss = reconstruction_loss(params, valid);
    if (!std::isfinite(train_loss) || !std::isfinite(valid_loss))
      throw NumericalError("embedding training diverged in epoch " + std::to_string(epoch));
    rep.train_loss.push_back(train_loss);
    rep.valid_loss.push_back(valid_loss);
    spdlog::info("embedding epoch {}: train {:.4f} valid {:.4f}", epoch, train_loss, valid_loss);
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

void save_embedding(const std::filesystem::path& path, EncoderDecoderParams& params) {
  json tensors = json::object();
  auto shape_of = [&](const std::string& name) -> std::vector<Eigen::Index> {
    if (name == "encoder_forward.W") return {params.forward.W.rows(), params.forward.W.cols()};
    if (name == "encoder_backward.W") return {params.backward.W.rows(), params.backward.W.cols()};
    if (name == "decoder.W") return {params.decoder.W.rows(), params.decoder.W.cols()};
    if (name == "output.W") return {params.out_W.rows(), params.out_W.cols()};
    return {};
  };
  params.for_each([&](const std::string& name, double* data, Eigen::Index size) {
    auto shape = shape_of(name);
    if (shape.empty()) shape = {size};
    tensors[name] = json{{"shape", shape}, {"data", std::vector<double>(data, data + size)}};
  });
  json doc{{"format", "arl-embedding"},
           {"version", 1},
           {"feature_dim", params.feature_dim()},
           {"hidden", params.hidden()},
           {"decoder_hidden", params.decoder.hidden_size()},
           {"tensors", tensors}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write embedding checkpoint " + path.string());
  out << doc.dump() << '\n';
}

EncoderDecoderParams load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("embedding checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", std::string()) != "arl-embedding" || doc.value("version", 0) != 1)
    throw ParseError("embedding checkpoint " + path.string() + ": unsupported format or version");
  EncoderDecoderParams params(doc.at("feature_dim").get<Eigen::Index>(), doc.at("hidden").get<Eigen::Index>(),
                              doc.at("decoder_hidden").get<Eigen::Index>());
  const json& tensors = doc.at("tensors");
  params.for_each([&](const std::string& name, double* data, Eigen::Index size) {
    if (!tensors.contains(name)) throw ParseError("embedding checkpoint missing tensor " + name);
    const auto values = tensors.at(name).at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != size) throw ParseError("embedding tensor " + name + " has wrong size");
    std::copy(values.begin(), values.end(), data);
  });
  return params;
}

}  // namespace arl
