#include "arl/reward_gp.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace arl {

using nlohmann::json;

KernelHyperparams KernelHyperparams::from_values(double p, double l, double sigma_n) {
  if (!(p > 0.0) || !(l > 0.0) || !(sigma_n > 0.0)) throw ValidationError("kernel hyperparameters must be positive");
  return {std::log(p), std::log(l), std::log(sigma_n)};
}

KernelHyperparams KernelHyperparams::defaults_for_dim(Eigen::Index dim) {
  return from_values(1.0, std::sqrt(static_cast<double>(std::max<Eigen::Index>(dim, 1))), 0.3);
}

void to_json(json& j, const KernelHyperparams& h) {
  j = json{{"log_p", h.log_p}, {"log_l", h.log_l}, {"log_sigma_n", h.log_sigma_n}};
}

void from_json(const json& j, KernelHyperparams& h) {
  h.log_p = j.at("log_p").get<double>();
  h.log_l = j.at("log_l").get<double>();
  h.log_sigma_n = j.at("log_sigma_n").get<double>();
  if (!std::isfinite(h.log_p) || !std::isfinite(h.log_l) || !std::isfinite(h.log_sigma_n))
    throw ValidationError("kernel hyperparameters must be finite");
}

double kernel_eval(const Vector& a, const Vector& b, const KernelHyperparams& hyper, bool same_index) {
  if (a.size() != b.size())
    throw ValidationError("kernel inputs have dimensions " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  const double l = hyper.l();
  double k = std::exp(2.0 * hyper.log_p) * std::exp(-(a - b).squaredNorm() / (2.0 * l * l));
  if (same_index) k += std::exp(2.0 * hyper.log_sigma_n);
  return k;
}

Matrix gram_matrix(const std::vector<Vector>& points, const KernelHyperparams& hyper) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = kernel_eval(points[i], points[i], hyper, true);
    for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i) = kernel_eval(points[i], points[j], hyper, false);
  }
  return K;
}

double median_distance(const std::vector<Vector>& points) {
  std::vector<double> d;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) d.push_back((points[i] - points[j]).norm());
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return std::max(d[d.size() / 2], 1e-6);
}

Eigen::LLT<Matrix> robust_cholesky(const Matrix& A, double* jitter_used) {
  for (double jitter : {0.0, 1e-9, 1e-6, 1e-3}) {
    Matrix M = A;
    M.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      if (jitter > 0.0) spdlog::debug("cholesky needed jitter {}", jitter);
      return llt;
    }
  }
  throw NumericalError("Cholesky factorisation failed even with 1e-3 jitter");
}

Prediction make_prediction(double mu, double var) {
  Prediction p;
  p.mu_star = mu;
  p.var_star = std::max(var, 0.0);
  p.p_success = norm_cdf(p.mu_star / std::sqrt(1.0 + p.var_star));
  return p;
}

// ---------------------------------------------------------------------------

GpClassifier::GpClassifier(KernelHyperparams hyper, EpConfig ep) : hyper_(hyper), ep_(ep) {}

void GpClassifier::add_point(Vector d, int label) {
  if (label != 1 && label != -1) throw ValidationError("labels must be +1 or -1");
  if (!points_.empty() && d.size() != points_.front().size()) throw ValidationError("embedding dimension mismatch");
  if (!d.allFinite()) throw ValidationError("embedding has non-finite entries");
  points_.push_back(std::move(d));
  labels_.push_back(label);
  const auto n = static_cast<Eigen::Index>(points_.size());
  tau_.conservativeResize(n);
  nu_.conservativeResize(n);
  tau_(n - 1) = 0.0;
  nu_(n - 1) = 0.0;
  fitted_ = false;
}

void GpClassifier::set_hyperparams(const KernelHyperparams& hyper) {
  hyper_ = hyper;
  fitted_ = points_.empty();
}

void GpClassifier::require_fitted() const {
  if (!fitted_) throw Error("reward model cache is stale; call fit() first");
}

void GpClassifier::refresh(const Matrix& K) {
  const Eigen::Index n = K.rows();
  K_ = K;
  sW_ = tau_.cwiseMax(0.0).cwiseSqrt();
  Matrix B = (sW_ * sW_.transpose()).cwiseProduct(K);
  B.diagonal().array() += 1.0;
  const auto llt = robust_cholesky(B);
  L_ = llt.matrixL();
  const Matrix V = llt.matrixL().solve(sW_.asDiagonal() * K);
  Sigma_ = K - V.transpose() * V;
  alpha_ = nu_ - sW_.cwiseProduct(llt.solve(sW_.cwiseProduct(K * nu_)));
  mu_ = K * alpha_;

  const Vector v = Sigma_.diagonal();
  const Vector tau_n = v.cwiseInverse() - tau_;
  const Vector nu_n = mu_.cwiseQuotient(v) - nu_;
  double sum_lz = 0.0, log_ratio = 0.0, q_term = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = nu_n(i) / tau_n(i), s2 = 1.0 / tau_n(i);
    sum_lz += log_norm_cdf(labels_[static_cast<std::size_t>(i)] * m / std::sqrt(1.0 + s2));
    log_ratio += std::log1p(tau_(i) / tau_n(i));
    q_term += nu_n(i) * ((tau_(i) / tau_n(i)) * nu_n(i) - 2.0 * nu_(i)) * v(i);
  }
  nlml_ = L_.diagonal().array().log().sum() - sum_lz - 0.5 * nu_.dot(Sigma_ * nu_) +
          0.5 * v.dot(nu_.cwiseAbs2()) - 0.5 * q_term - 0.5 * log_ratio;
}

EpReport GpClassifier::fit() {
  EpReport report;
  const Eigen::Index n = static_cast<Eigen::Index>(points_.size());
  if (n == 0) {
    fitted_ = true;
    return report;
  }
  const Matrix K = gram_matrix(points_, hyper_);
  refresh(K);
  std::vector<int> consecutive_skips(static_cast<std::size_t>(n), 0);
  const double damp = ep_.damping;
  for (int sweep = 1; sweep <= ep_.max_sweeps; ++sweep) {
    double delta = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = labels_[static_cast<std::size_t>(i)];
      const double tau_cav = 1.0 / Sigma_(i, i) - tau_(i);
      const double nu_cav = mu_(i) / Sigma_(i, i) - nu_(i);
      if (!(tau_cav > 0.0)) {
        ++report.skipped_updates;
        if (++consecutive_skips[static_cast<std::size_t>(i)] >= 3)
          throw NumericalError("EP: cavity variance stays negative at site " + std::to_string(i));
        continue;
      }
      consecutive_skips[static_cast<std::size_t>(i)] = 0;
      const double var_cav = 1.0 / tau_cav, m_cav = nu_cav * var_cav;
      const double denom = std::sqrt(1.0 + var_cav);
      const double z = y * m_cav / denom;
      const double r = norm_pdf_over_cdf(z);
      const double mu_hat = m_cav + y * var_cav * r / denom;
      const double var_hat = var_cav - var_cav * var_cav * r * (z + r) / (1.0 + var_cav);
      if (!(var_hat > 0.0)) {
        ++report.skipped_updates;
        continue;
      }
      const double tau_new = std::max(0.0, (1.0 - damp) * tau_(i) + damp * (1.0 / var_hat - tau_cav));
      const double nu_new = (1.0 - damp) * nu_(i) + damp * (mu_hat / var_hat - nu_cav);
      delta = std::max({delta, std::abs(tau_new - tau_(i)), std::abs(nu_new - nu_(i))});
      const double dtau = tau_new - tau_(i), dnu = nu_new - nu_(i);
      tau_(i) = tau_new;
      nu_(i) = nu_new;
      // Sherman-Morrison on Sigma and the matching O(n) update of mu = Sigma nu
      const Vector si = Sigma_.col(i);
      const double c = dtau / (1.0 + dtau * si(i));
      Sigma_.noalias() -= c * si * si.transpose();
      mu_ += (dnu * (1.0 - c * si(i)) - c * mu_(i)) * si;
    }
    report.sweeps = sweep;
    report.last_delta = delta;
    // Rank-one updates drift; rebuild from the factorisation periodically and before returning.
    const bool converged = delta < ep_.tolerance;
    if (converged || sweep % 5 == 0) refresh(K);
    if (converged) {
      fitted_ = true;
      return report;
    }
  }
  throw NumericalError("EP did not converge in " + std::to_string(ep_.max_sweeps) + " sweeps (last delta " +
                       std::to_string(report.last_delta) + ")");
}

Prediction GpClassifier::predict(const Vector& d) const {
  const double prior = std::exp(2.0 * hyper_.log_p) + std::exp(2.0 * hyper_.log_sigma_n);
  if (points_.empty()) return make_prediction(0.0, prior);
  require_fitted();
  if (d.size() != points_.front().size()) throw ValidationError("embedding dimension mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(points_.size());
  Vector ks(n);
  for (Eigen::Index i = 0; i < n; ++i) ks(i) = kernel_eval(points_[static_cast<std::size_t>(i)], d, hyper_, false);
  const Vector v = L_.triangularView<Eigen::Lower>().solve(sW_.cwiseProduct(ks));
  return make_prediction(ks.dot(alpha_), prior - v.squaredNorm());
}

const Vector& GpClassifier::posterior_mean() const {
  require_fitted();
  return mu_;
}

Vector GpClassifier::posterior_variance() const {
  require_fitted();
  return Sigma_.diagonal();
}

double GpClassifier::nlml() const {
  require_fitted();
  return points_.empty() ? 0.0 : nlml_;
}

Eigen::Vector3d GpClassifier::nlml_gradient() const {
  require_fitted();
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  const Eigen::Index n = static_cast<Eigen::Index>(points_.size());
  if (n == 0) return g;
  // F = b b^T - S^1/2 B^-1 S^1/2 ; dNLML/dtheta = -1/2 tr(F dK)
  Matrix Binv_sW = L_.triangularView<Eigen::Lower>().solve(Matrix(sW_.asDiagonal()));
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(Binv_sW);
  const Matrix F = alpha_ * alpha_.transpose() - sW_.asDiagonal() * Binv_sW;
  const double sn2 = std::exp(2.0 * hyper_.log_sigma_n);
  const double l2 = std::exp(2.0 * hyper_.log_l);
  double dp = 0.0, dl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double kse = i == j ? K_(i, i) - sn2 : K_(i, j);
      dp += F(i, j) * 2.0 * kse;
      if (i != j) dl += F(i, j) * kse * (points_[static_cast<std::size_t>(i)] - points_[static_cast<std::size_t>(j)]).squaredNorm() / l2;
    }
  g(0) = -0.5 * dp;
  g(1) = -0.5 * dl;
  g(2) = -0.5 * F.trace() * 2.0 * sn2;
  return g;
}

std::pair<double, Eigen::Vector3d> nlml_and_grad(GpClassifier& model, const KernelHyperparams& hyper) {
  model.set_hyperparams(hyper);
  model.fit();
  return {model.nlml(), model.nlml_gradient()};
}

OptimizeResult GpClassifier::optimize_hyperparams(const OptimizerConfig& cfg) {
  if (points_.empty()) throw ValidationError("cannot optimise hyperparameters on an empty pool");
  using V3 = Eigen::Vector3d;
  auto clamp = [&](V3 x) { return x.cwiseMax(cfg.lower).cwiseMin(cfg.upper); };

  auto evaluate = [&](const V3& x, double& f, V3& g) {
    const Vector tau0 = tau_, nu0 = nu_;
    try {
      set_hyperparams(KernelHyperparams::from_vector(x));
      fit();
      f = nlml();
      g = nlml_gradient();
      if (std::isfinite(f) && g.allFinite()) return true;
    } catch (const NumericalError& e) {
      spdlog::debug("hyperparameter probe failed: {}", e.what());
    }
    tau_ = tau0;
    nu_ = nu0;
    return false;
  };
  // zero the components that would leave the box
  auto project = [&](const V3& x, V3 d) {
    for (int k = 0; k < 3; ++k)
      if ((x(k) <= cfg.lower(k) && d(k) < 0) || (x(k) >= cfg.upper(k) && d(k) > 0)) d(k) = 0.0;
    return d;
  };

  OptimizeResult result;
  V3 x = clamp(hyper_.as_vector());
  double f;
  V3 g;
  if (!evaluate(x, f, g)) throw NumericalError("EP failed at the starting hyperparameters");
  result.nlml_start = f;
  V3 d = project(x, -g);
  double step_hint = -1.0;
  bool model_at_x = true;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (project(x, -g).norm() < cfg.gradient_tolerance || d.norm() == 0.0) break;
    double slope = g.dot(d);
    if (slope >= 0.0) {
      d = project(x, -g);
      slope = g.dot(d);
    }
    double alpha_max = cfg.max_step / d.cwiseAbs().maxCoeff();
    for (int k = 0; k < 3; ++k) {
      if (d(k) > 0) alpha_max = std::min(alpha_max, (cfg.upper(k) - x(k)) / d(k));
      if (d(k) < 0) alpha_max = std::min(alpha_max, (cfg.lower(k) - x(k)) / d(k));
    }
    double alpha = step_hint > 0 ? std::min(alpha_max, 2.0 * step_hint) : alpha_max;
    bool accepted = false;
    V3 x_new, g_new;
    double f_new = 0.0;
    for (int bt = 0; bt < 40 && alpha > 1e-12; ++bt, alpha *= 0.5) {
      x_new = clamp(x + alpha * d);
      model_at_x = false;
      if (evaluate(x_new, f_new, g_new) && f_new <= f + 1e-4 * alpha * slope) {
        accepted = true;
        model_at_x = true;
        break;
      }
    }
    if (!accepted) {
      result.line_search_failed = true;
      spdlog::warn("hyperparameter line search failed after {} iterations; keeping best iterate", it);
      break;
    }
    step_hint = alpha;
    // Polak-Ribiere with restarts every 3 iterations (problem dimension)
    double beta = (it + 1) % 3 == 0 ? 0.0 : std::max(0.0, g_new.dot(g_new - g) / g.dot(g));
    d = project(x_new, -g_new + beta * d);
    const double decrease = f - f_new;
    x = x_new;
    f = f_new;
    g = g_new;
    result.iterations = it + 1;
    if (decrease < cfg.relative_tolerance * (1.0 + std::abs(f))) break;
  }
  // x is the best iterate: every accepted step decreased f
  if (!model_at_x) {
    set_hyperparams(KernelHyperparams::from_vector(x));
    fit();
  }
  result.hyper = hyper_;
  result.nlml_end = nlml();
  return result;
}

json GpClassifier::to_json() const {
  json points = json::array();
  for (const auto& p : points_) points.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  return json{{"hyperparams", hyper_},
              {"ep", {{"damping", ep_.damping}, {"tolerance", ep_.tolerance}, {"max_sweeps", ep_.max_sweeps}}},
              {"embeddings", points},
              {"labels", labels_},
              {"site_precision", std::vector<double>(tau_.data(), tau_.data() + tau_.size())},
              {"site_natural_mean", std::vector<double>(nu_.data(), nu_.data() + nu_.size())}};
}

GpClassifier GpClassifier::from_json(const json& j) {
  EpConfig ep;
  if (j.contains("ep")) {
    ep.damping = j["ep"].value("damping", ep.damping);
    ep.tolerance = j["ep"].value("tolerance", ep.tolerance);
    ep.max_sweeps = j["ep"].value("max_sweeps", ep.max_sweeps);
  }
  GpClassifier gp(j.at("hyperparams").get<KernelHyperparams>(), ep);
  const auto points = j.at("embeddings").get<std::vector<std::vector<double>>>();
  const auto labels = j.at("labels").get<std::vector<int>>();
  if (points.size() != labels.size()) throw ParseError("reward pool: embeddings and labels differ in count");
  for (std::size_t i = 0; i < points.size(); ++i)
    gp.add_point(Eigen::Map<const Vector>(points[i].data(), static_cast<Eigen::Index>(points[i].size())), labels[i]);
  const auto tau = j.value("site_precision", std::vector<double>{});
  const auto nu = j.value("site_natural_mean", std::vector<double>{});
  if (tau.size() == points.size() && nu.size() == points.size()) {
    for (std::size_t i = 0; i < tau.size(); ++i) {
      if (tau[i] < 0.0) throw ParseError("reward pool: negative site precision");
      gp.tau_(static_cast<Eigen::Index>(i)) = tau[i];
      gp.nu_(static_cast<Eigen::Index>(i)) = nu[i];
    }
  }
  gp.fit();
  return gp;
}

// ---------------------------------------------------------------------------

void ActiveLearningConfig::validate() const {
  if (!(lambda_end > 0.5 && lambda_end <= lambda_start && lambda_start <= 1.0))
    throw ValidationError("active learning thresholds must satisfy 0.5 < lambda_end <= lambda_start <= 1");
  if (anneal_dialogues < 0 || reopt_warmup < 0 || reopt_batch < 1)
    throw ValidationError("active learning counts must be nonnegative (batch >= 1)");
}

void to_json(json& j, const ActiveLearningConfig& c) {
  j = json{{"lambda_start", c.lambda_start},       {"lambda_end", c.lambda_end},
           {"anneal_dialogues", c.anneal_dialogues}, {"reopt_warmup", c.reopt_warmup},
           {"reopt_batch", c.reopt_batch},         {"success_reward", c.success_reward},
           {"per_turn_penalty", c.per_turn_penalty}};
}

void from_json(const json& j, ActiveLearningConfig& c) {
  c.lambda_start = j.value("lambda_start", c.lambda_start);
  c.lambda_end = j.value("lambda_end", c.lambda_end);
  c.anneal_dialogues = j.value("anneal_dialogues", c.anneal_dialogues);
  c.reopt_warmup = j.value("reopt_warmup", c.reopt_warmup);
  c.reopt_batch = j.value("reopt_batch", c.reopt_batch);
  c.success_reward = j.value("success_reward", c.success_reward);
  c.per_turn_penalty = j.value("per_turn_penalty", c.per_turn_penalty);
  c.validate();
}

double current_lambda(std::size_t n_labeled, const ActiveLearningConfig& cfg) {
  if (cfg.anneal_dialogues <= 0 || n_labeled >= static_cast<std::size_t>(cfg.anneal_dialogues)) return cfg.lambda_end;
  const double frac = static_cast<double>(n_labeled) / cfg.anneal_dialogues;
  return cfg.lambda_start + frac * (cfg.lambda_end - cfg.lambda_start);
}

bool decide_query(const Prediction& pred, double lambda) {
  // 1 - 0.85 is not exactly 0.15 in binary; keep the boundary inclusive
  constexpr double kEdge = 1e-12;
  return pred.p_success >= 1.0 - lambda - kEdge && pred.p_success <= lambda + kEdge;
}

double reward_signal(bool success, std::size_t turns, const ActiveLearningConfig& cfg) {
  if (turns < 1) throw ValidationError("a dialogue has at least one turn");
  return (success ? cfg.success_reward : 0.0) - cfg.per_turn_penalty * static_cast<double>(turns);
}

bool reoptimization_due(std::size_t n, const ActiveLearningConfig& cfg) {
  const auto warmup = static_cast<std::size_t>(cfg.reopt_warmup);
  if (n < warmup || n == 0) return false;
  return (n - warmup) % static_cast<std::size_t>(cfg.reopt_batch) == 0;
}

json decision_log_line(const EpisodeDecision& d) {
  return json{{"dialogue_id", d.dialogue_id},
              {"p_success", d.prediction.p_success},
              {"mu", d.prediction.mu_star},
              {"var", d.prediction.var_star},
              {"lambda", d.lambda},
              {"queried", d.queried},
              {"label_or_prediction", d.label_or_prediction},
              {"reward", d.reward}};
}

ActiveRewardModel::ActiveRewardModel(Eigen::Index embedding_dim, ActiveLearningConfig cfg, EpConfig ep,
                                     OptimizerConfig opt)
    : gp_(KernelHyperparams::defaults_for_dim(embedding_dim), ep), cfg_(cfg), opt_(opt) {
  cfg_.validate();
}

ActiveRewardModel::ActiveRewardModel(GpClassifier gp, ActiveLearningConfig cfg, OptimizerConfig opt)
    : gp_(std::move(gp)), cfg_(cfg), opt_(opt) {
  cfg_.validate();
}

bool ActiveRewardModel::add_label(const Vector& d, int label) {
  gp_.add_point(d, label);
  gp_.fit();
  if (!reoptimization_due(gp_.size(), cfg_)) return false;
  const auto res = gp_.optimize_hyperparams(opt_);
  spdlog::debug("reward model re-optimised on {} labels: nlml {:.4f} -> {:.4f} (p={:.3g}, l={:.3g}, sigma_n={:.3g})",
                gp_.size(), res.nlml_start, res.nlml_end, res.hyper.p(), res.hyper.l(), res.hyper.sigma_n());
  return true;
}

EpisodeDecision ActiveRewardModel::process_episode(const Vector& d, std::size_t turns,
                                                   const FeedbackProvider& feedback, std::string dialogue_id) {
  EpisodeDecision out;
  out.dialogue_id = std::move(dialogue_id);
  out.prediction = gp_.predict(d);
  out.lambda = lambda();
  out.queried = decide_query(out.prediction, out.lambda);
  if (out.queried) {
    const int label = feedback();
    if (label != 1 && label != -1) throw ValidationError("feedback must be +1 or -1");
    out.label_or_prediction = label;
    out.reoptimized = add_label(d, label);
  } else {
    out.label_or_prediction = out.prediction.p_success >= 0.5 ? 1 : -1;
  }
  out.reward = reward_signal(out.success(), turns, cfg_);
  return out;
}

void ActiveRewardModel::save(const std::filesystem::path& path) const {
  json doc{{"format", "arl-reward-pool"}, {"version", 1}, {"active_learning", cfg_}, {"pool", gp_.to_json()}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write reward pool " + path.string());
  out << doc.dump() << '\n';
}

ActiveRewardModel ActiveRewardModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open reward pool " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("reward pool " + path.string() + ": " + e.what());
  }
  if (doc.value("format", std::string()) != "arl-reward-pool" || doc.value("version", 0) != 1)
    throw ParseError("reward pool " + path.string() + ": unsupported format or version");
  return ActiveRewardModel(GpClassifier::from_json(doc.at("pool")),
                           doc.at("active_learning").get<ActiveLearningConfig>());
}

}  // namespace arl
