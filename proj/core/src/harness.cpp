#include "arl/harness.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace arl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPolicyStreamTag = 0x9011c7;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string cell_name(const ExperimentConfig& cfg, std::uint64_t seed) {
  return to_string(cfg.system) + "-seed" + std::to_string(seed);
}

void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump() << '\n';
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string to_string(RewardSystem s) {
  switch (s) {
    case RewardSystem::online_gp: return "online_gp";
    case RewardSystem::subj: return "subj";
    case RewardSystem::obj_eq_subj: return "obj_eq_subj";
    case RewardSystem::offline_rnn: return "offline_rnn";
    case RewardSystem::objective: return "objective";
  }
  return "?";
}

RewardSystem reward_system_from_string(const std::string& name) {
  for (auto s : {RewardSystem::online_gp, RewardSystem::subj, RewardSystem::obj_eq_subj, RewardSystem::offline_rnn,
                 RewardSystem::objective})
    if (to_string(s) == name) return s;
  throw ValidationError("unknown reward system '" + name + "'");
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (dialogues < 1) throw ValidationError("dialogue budget must be at least 1");
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  if (moving_average_window < 1 || final_window < 1) throw ValidationError("windows must be at least 1");
  if (simulation.max_turns < 1) throw ValidationError("max_turns must be at least 1");
  simulation.noise.validate();
  active_learning.validate();
  policy.validate();
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"system", to_string(c.system)},
           {"dialogues", c.dialogues},
           {"seeds", c.seeds},
           {"active_learning", c.active_learning},
           {"ep", {{"damping", c.ep.damping}, {"tolerance", c.ep.tolerance}, {"max_sweeps", c.ep.max_sweeps}}},
           {"optimizer",
            {{"max_iterations", c.optimizer.max_iterations},
             {"gradient_tolerance", c.optimizer.gradient_tolerance},
             {"relative_tolerance", c.optimizer.relative_tolerance},
             {"max_step", c.optimizer.max_step}}},
           {"policy", c.policy},
           {"embedding_checkpoint", c.embedding_checkpoint.string()},
           {"offline_rnn_checkpoint", c.offline_rnn_checkpoint.string()},
           {"output_dir", c.output_dir.string()},
           {"moving_average_window", c.moving_average_window},
           {"final_window", c.final_window},
           {"resume", c.resume}};
  j.update(json(c.simulation));
}

void from_json(const json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  c = d;
  if (j.contains("system")) c.system = reward_system_from_string(j.at("system").get<std::string>());
  c.dialogues = j.value("dialogues", d.dialogues);
  c.seeds = j.value("seeds", d.seeds);
  c.simulation = j.get<SimulationConfig>();
  if (j.contains("active_learning")) c.active_learning = j.at("active_learning").get<ActiveLearningConfig>();
  if (j.contains("ep")) {
    const json& e = j.at("ep");
    c.ep.damping = e.value("damping", c.ep.damping);
    c.ep.tolerance = e.value("tolerance", c.ep.tolerance);
    c.ep.max_sweeps = e.value("max_sweeps", c.ep.max_sweeps);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    c.optimizer.max_iterations = o.value("max_iterations", c.optimizer.max_iterations);
    c.optimizer.gradient_tolerance = o.value("gradient_tolerance", c.optimizer.gradient_tolerance);
    c.optimizer.relative_tolerance = o.value("relative_tolerance", c.optimizer.relative_tolerance);
    c.optimizer.max_step = o.value("max_step", c.optimizer.max_step);
  }
  if (j.contains("policy")) c.policy = j.at("policy").get<GpSarsaConfig>();
  c.embedding_checkpoint = j.value("embedding_checkpoint", std::string());
  c.offline_rnn_checkpoint = j.value("offline_rnn_checkpoint", std::string());
  c.output_dir = j.value("output_dir", std::string());
  c.moving_average_window = j.value("moving_average_window", d.moving_average_window);
  c.final_window = j.value("final_window", d.final_window);
  c.resume = j.value("resume", d.resume);
  c.validate();
}

// ---------------------------------------------------------------------------
// Records

json to_json(const DialogueRecord& r) {
  return json{{"index", r.index},
              {"dialogue_id", r.dialogue_id},
              {"seed", r.seed},
              {"system", to_string(r.system)},
              {"turns", r.turns},
              {"objective", r.objective},
              {"subjective", r.subjective},
              {"predicted", r.predicted ? json(*r.predicted) : json(nullptr)},
              {"p_success", optional_json(r.p_success)},
              {"queried", r.queried},
              {"reward", optional_json(r.reward)},
              {"epsilon", r.epsilon},
              {"dictionary_size", r.dictionary_size},
              {"pool_size", r.pool_size}};
}

DialogueRecord record_from_json(const json& j) {
  DialogueRecord r;
  r.index = j.at("index").get<std::size_t>();
  r.dialogue_id = j.at("dialogue_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.system = reward_system_from_string(j.at("system").get<std::string>());
  r.turns = j.at("turns").get<std::size_t>();
  r.objective = j.at("objective").get<bool>();
  r.subjective = j.at("subjective").get<int>();
  if (!j.at("predicted").is_null()) r.predicted = j.at("predicted").get<bool>();
  r.p_success = optional_double(j, "p_success");
  r.queried = j.at("queried").get<bool>();
  r.reward = optional_double(j, "reward");
  r.epsilon = j.value("epsilon", 0.0);
  r.dictionary_size = j.value("dictionary_size", std::size_t{0});
  r.pool_size = j.value("pool_size", std::size_t{0});
  return r;
}

void write_records(const fs::path& path, const std::vector<DialogueRecord>& records) {
  std::vector<json> lines;
  for (const auto& r : records) lines.push_back(to_json(r));
  write_jsonl(path, lines);
}

std::vector<DialogueRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open records " + path.string());
  std::vector<DialogueRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

std::vector<double> distribute_reward(double dialogue_reward, std::size_t decisions, std::size_t turns,
                                      const ActiveLearningConfig& cfg) {
  if (decisions == 0) return {};
  if (decisions > turns) throw ValidationError("more policy decisions than turns");
  std::vector<double> r(decisions, -cfg.per_turn_penalty);
  r.back() = dialogue_reward + cfg.per_turn_penalty * static_cast<double>(decisions - 1);
  return r;
}

void update_policy(GpSarsa& policy, const DialogueLog& log, double dialogue_reward, const ActiveLearningConfig& cfg) {
  std::vector<const DialogueTurn*> decisions;
  for (const auto& t : log.turns)
    if (t.policy_state.size() > 0) decisions.push_back(&t);
  const auto rewards = distribute_reward(dialogue_reward, decisions.size(), log.turn_count(), cfg);
  for (std::size_t k = 0; k < decisions.size(); ++k) {
    Transition tr{decisions[k]->policy_state, index_of(decisions[k]->summary_action), rewards[k], std::nullopt,
                  std::nullopt, k + 1 == decisions.size()};
    if (!tr.terminal) {
      tr.next_state = decisions[k + 1]->policy_state;
      tr.next_action = index_of(decisions[k + 1]->summary_action);
    }
    policy.update(tr);
  }
}

namespace {

void save_cell_checkpoint(const fs::path& dir, const CellResult& cell) {
  fs::create_directories(dir);
  write_records(dir / "records.jsonl", cell.records);
  cell.policy.save(dir / "policy.json");
  if (cell.reward_model) cell.reward_model->save(dir / "reward_pool.json");
  write_jsonl(dir / "decisions.jsonl", cell.decision_log);
}

std::optional<CellResult> load_cell_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "records.jsonl") || !fs::exists(dir / "policy.json")) return std::nullopt;
  CellResult cell{read_records(dir / "records.jsonl"), GpSarsa::load(dir / "policy.json"), std::nullopt, {}};
  if (fs::exists(dir / "reward_pool.json")) cell.reward_model = ActiveRewardModel::load(dir / "reward_pool.json");
  if (fs::exists(dir / "decisions.jsonl")) {
    std::ifstream in(dir / "decisions.jsonl");
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) cell.decision_log.push_back(json::parse(line));
  }
  return cell;
}

}  // namespace

CellResult run_cell(const ExperimentConfig& cfg, std::uint64_t seed, const CellInputs& inputs,
                    std::optional<CellResult> resume) {
  if (!inputs.ontology) throw ValidationError("run_cell needs an ontology");
  if (cfg.system == RewardSystem::online_gp && !inputs.embedding)
    throw ValidationError("the online_gp system needs an embedding");
  if (cfg.system == RewardSystem::offline_rnn && !inputs.offline_rnn)
    throw ValidationError("the offline_rnn system needs a trained estimator");
  const Ontology& ontology = *inputs.ontology;

  CellResult cell = resume ? std::move(*resume)
                           : CellResult{{}, GpSarsa(policy_feature_dimension(), kNumSummaryActions, cfg.policy),
                                        std::nullopt, {}};
  if (cfg.system == RewardSystem::online_gp && !cell.reward_model)
    cell.reward_model.emplace(inputs.embedding->embedding_dim(), cfg.active_learning, cfg.ep, cfg.optimizer);

  const std::uint64_t policy_stream = mix_seed(seed, kPolicyStreamTag);
  const fs::path checkpoint_dir = cfg.output_dir.empty() ? fs::path() : cfg.output_dir / "checkpoints" / cell_name(cfg, seed);

  for (std::size_t i = cell.records.size(); i < cfg.dialogues; ++i) {
    try {
      Rng sim_rng(mix_seed(seed, i));
      Rng policy_rng(mix_seed(policy_stream, i));
      const double epsilon = cell.policy.epsilon();
      const GpSarsa& frozen = cell.policy;
      auto choose = [&](const Vector& state, const BeliefState&) {
        return summary_action_at(static_cast<std::size_t>(frozen.select_action(state, epsilon, policy_rng)));
      };
      const std::string id = to_string(cfg.system) + "-s" + std::to_string(seed) + "-" + std::to_string(i);
      const DialogueLog log = simulate_dialogue(ontology, cfg.simulation, choose, sim_rng, id);

      DialogueRecord rec;
      rec.index = i;
      rec.dialogue_id = id;
      rec.seed = seed;
      rec.system = cfg.system;
      rec.turns = log.turn_count();
      rec.objective = *log.objective;
      rec.subjective = *log.subjective;
      rec.epsilon = epsilon;

      switch (cfg.system) {
        case RewardSystem::online_gp: {
          const Vector d = encode_dialogue(*inputs.embedding, log.feature_sequence());
          const int rating = rec.subjective;
          const EpisodeDecision dec = cell.reward_model->process_episode(d, rec.turns, [rating] { return rating; }, id);
          rec.queried = dec.queried;
          rec.p_success = dec.prediction.p_success;
          if (!dec.queried) rec.predicted = dec.success();
          rec.reward = dec.reward;
          cell.decision_log.push_back(decision_log_line(dec));
          rec.pool_size = cell.reward_model->labels();
          break;
        }
        case RewardSystem::subj:
          rec.queried = true;
          rec.reward = subjective_reward(rec.subjective, rec.turns, cfg.active_learning);
          break;
        case RewardSystem::obj_eq_subj:
          rec.queried = true;
          rec.reward = gated_reward(rec.objective, rec.subjective, rec.turns, cfg.active_learning);
          break;
        case RewardSystem::offline_rnn: {
          const double p = predict_offline_rnn(*inputs.offline_rnn, log.feature_sequence());
          rec.p_success = p;
          rec.predicted = p >= 0.5;
          rec.reward = reward_signal(*rec.predicted, rec.turns, cfg.active_learning);
          break;
        }
        case RewardSystem::objective:
          rec.reward = reward_signal(rec.objective, rec.turns, cfg.active_learning);
          break;
      }
      if (rec.reward) update_policy(cell.policy, log, *rec.reward, cfg.active_learning);
      rec.dictionary_size = cell.policy.dictionary_size();
      cell.records.push_back(rec);
      if ((i + 1) % 50 == 0)
        spdlog::info("{} seed {}: {} dialogues, dictionary {}, pool {}", to_string(cfg.system), seed, i + 1,
                     rec.dictionary_size, rec.pool_size);
    } catch (const std::exception& e) {
      if (!checkpoint_dir.empty()) {
        cell.policy.abandon_episode();
        save_cell_checkpoint(checkpoint_dir, cell);
        spdlog::error("{} seed {} failed at dialogue {}: {}; checkpoint written to {}", to_string(cfg.system), seed, i,
                      e.what(), checkpoint_dir.string());
      }
      throw;
    }
  }
  return cell;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Ontology& ontology) {
  cfg.validate();
  std::optional<EncoderDecoderParams> embedding;
  std::optional<RnnEstimatorParams> rnn;
  if (cfg.system == RewardSystem::online_gp) {
    if (cfg.embedding_checkpoint.empty()) throw ValidationError("online_gp needs embedding_checkpoint");
    embedding = load_embedding(cfg.embedding_checkpoint);
    if (embedding->feature_dim() != static_cast<Eigen::Index>(feature_dimension(ontology)))
      throw ValidationError("embedding feature dimension does not match the ontology");
  }
  if (cfg.system == RewardSystem::offline_rnn) {
    if (cfg.offline_rnn_checkpoint.empty()) throw ValidationError("offline_rnn needs offline_rnn_checkpoint");
    rnn = load_offline_rnn(cfg.offline_rnn_checkpoint);
  }
  const CellInputs inputs{&ontology, embedding ? &*embedding : nullptr, rnn ? &*rnn : nullptr};

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir / "records");
    fs::create_directories(cfg.output_dir / "checkpoints");
  }

  ExperimentResult result;
  std::vector<std::string> files;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string name = cell_name(cfg, seed);
    std::optional<CellResult> resume;
    if (cfg.resume && !cfg.output_dir.empty()) {
      resume = load_cell_checkpoint(cfg.output_dir / "checkpoints" / name);
      if (resume) spdlog::info("resuming {} from dialogue {}", name, resume->records.size());
    }
    CellResult cell = run_cell(cfg, seed, inputs, std::move(resume));
    if (!cfg.output_dir.empty()) {
      save_cell_checkpoint(cfg.output_dir / "checkpoints" / name, cell);
      write_records(cfg.output_dir / "records" / (name + ".jsonl"), cell.records);
      files.push_back("records/" + name + ".jsonl");
      files.push_back("checkpoints/" + name + "/policy.json");
      if (cell.reward_model) files.push_back("checkpoints/" + name + "/reward_pool.json");
    }
    result.per_seed.push_back(std::move(cell.records));
  }
  result.summary = metrics_json(result.per_seed, cfg);
  if (!cfg.output_dir.empty()) {
    std::ofstream(cfg.output_dir / "metrics.json") << result.summary.dump(2) << '\n';
    files.push_back("metrics.json");
    json manifest{{"format", "arl-run"}, {"version", 1}, {"config", cfg}, {"files", files}};
    std::ofstream(cfg.output_dir / "manifest.json") << manifest.dump(2) << '\n';
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<double> moving_average(const std::vector<double>& series, std::size_t window) {
  if (window < 1) throw ValidationError("moving-average window must be at least 1");
  std::vector<double> out;
  out.reserve(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= window) sum -= series[i - window];
    out.push_back(sum / static_cast<double>(std::min(window, i + 1)));
  }
  return out;
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.support = tp + fn;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.f_measure = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  else if (m.precision && m.recall)
    m.f_measure = 0.0;
  return m;
}

PredictionMetrics compute_metrics(const std::vector<DialogueRecord>& records, LabelSource truth) {
  std::size_t s_tp = 0, s_fp = 0, s_fn = 0;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.queried || !r.predicted) continue;
    ++count;
    const bool actual = truth == LabelSource::objective ? r.objective : r.subjective > 0;
    const bool pred = *r.predicted;
    if (pred && actual) ++s_tp;
    if (pred && !actual) ++s_fp;
    if (!pred && actual) ++s_fn;
  }
  const std::size_t f_tp = count - s_tp - s_fp - s_fn;
  PredictionMetrics m;
  m.count = count;
  m.success = class_metrics(s_tp, s_fp, s_fn);
  m.failure = class_metrics(f_tp, s_fn, s_fp);
  auto weighted = [&](auto field) -> std::optional<double> {
    double num = 0.0, den = 0.0;
    for (const ClassMetrics* c : {&m.success, &m.failure}) {
      const std::optional<double> v = c->*field;
      if (!v || c->support == 0) continue;
      num += *v * static_cast<double>(c->support);
      den += static_cast<double>(c->support);
    }
    return den > 0.0 ? std::optional<double>(num / den) : std::nullopt;
  };
  m.precision = weighted(&ClassMetrics::precision);
  m.recall = weighted(&ClassMetrics::recall);
  m.f_measure = weighted(&ClassMetrics::f_measure);
  return m;
}

CellSummary summarize_cell(const std::vector<DialogueRecord>& records, std::size_t final_window) {
  CellSummary s;
  s.dialogues = records.size();
  double turns = 0.0;
  for (const auto& r : records) {
    s.queries += r.queried ? 1 : 0;
    s.model_predicted += r.predicted && !r.queried ? 1 : 0;
    s.trained_on += r.reward ? 1 : 0;
    turns += static_cast<double>(r.turns);
  }
  s.mean_turns = records.empty() ? 0.0 : turns / static_cast<double>(records.size());
  const std::size_t start = records.size() > final_window ? records.size() - final_window : 0;
  double obj = 0.0, subj = 0.0;
  for (std::size_t i = start; i < records.size(); ++i) {
    obj += records[i].objective ? 1.0 : 0.0;
    subj += records[i].subjective > 0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(records.size() - start);
  if (n > 0) {
    s.final_objective_success = obj / n;
    s.final_subjective_success = subj / n;
  }
  return s;
}

namespace {

json class_json(const ClassMetrics& c) {
  return json{{"tp", c.tp},
              {"fp", c.fp},
              {"fn", c.fn},
              {"precision", optional_json(c.precision)},
              {"recall", optional_json(c.recall)},
              {"f_measure", optional_json(c.f_measure)},
              {"support", c.support}};
}

json prediction_json(const PredictionMetrics& m) {
  return json{{"success", class_json(m.success)},
              {"failure", class_json(m.failure)},
              {"precision", optional_json(m.precision)},
              {"recall", optional_json(m.recall)},
              {"f_measure", optional_json(m.f_measure)},
              {"count", m.count}};
}

}  // namespace

json metrics_json(const std::vector<std::vector<DialogueRecord>>& per_seed, const ExperimentConfig& cfg) {
  json cells = json::array();
  std::vector<double> final_obj, final_subj, queries;
  std::vector<DialogueRecord> pooled;
  for (const auto& records : per_seed) {
    const CellSummary s = summarize_cell(records, cfg.final_window);
    std::vector<double> obj, subj, cum_queries;
    double q = 0.0;
    for (const auto& r : records) {
      obj.push_back(r.objective ? 1.0 : 0.0);
      subj.push_back(r.subjective > 0 ? 1.0 : 0.0);
      q += r.queried ? 1.0 : 0.0;
      cum_queries.push_back(q);
    }
    cells.push_back(json{{"seed", records.empty() ? 0 : records.front().seed},
                         {"dialogues", s.dialogues},
                         {"queries", s.queries},
                         {"model_predicted", s.model_predicted},
                         {"trained_on", s.trained_on},
                         {"mean_turns", s.mean_turns},
                         {"final_objective_success", s.final_objective_success},
                         {"final_subjective_success", s.final_subjective_success},
                         {"curve_objective", moving_average(obj, cfg.moving_average_window)},
                         {"curve_subjective", moving_average(subj, cfg.moving_average_window)},
                         {"cumulative_queries", cum_queries}});
    final_obj.push_back(s.final_objective_success);
    final_subj.push_back(s.final_subjective_success);
    queries.push_back(static_cast<double>(s.queries));
    pooled.insert(pooled.end(), records.begin(), records.end());
  }
  return json{{"system", to_string(cfg.system)},
              {"seeds", cells},
              {"final_objective_success", {{"mean", mean_of(final_obj)}, {"sd", sd_of(final_obj)}}},
              {"final_subjective_success", {{"mean", mean_of(final_subj)}, {"sd", sd_of(final_subj)}}},
              {"queries", {{"mean", mean_of(queries)}, {"sd", sd_of(queries)}}},
              {"prediction_vs_subjective", prediction_json(compute_metrics(pooled, LabelSource::subjective))},
              {"prediction_vs_objective", prediction_json(compute_metrics(pooled, LabelSource::objective))}};
}

// ---------------------------------------------------------------------------
// Statistics

PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired samples must have equal length");
  if (a.size() < 2) throw ValidationError("paired t-test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTTest r;
  r.mean_difference = mean_of(d);
  r.dof = static_cast<double>(d.size() - 1);
  const double se = sd_of(d) / std::sqrt(static_cast<double>(d.size()));
  if (se == 0.0) {
    r.t = r.mean_difference > 0 ? INFINITY : r.mean_difference < 0 ? -INFINITY : 0.0;
    r.p_one_sided = r.mean_difference > 0 ? 0.0 : r.mean_difference < 0 ? 1.0 : 0.5;
    r.p_two_sided = r.mean_difference == 0 ? 1.0 : 0.0;
    return r;
  }
  r.t = r.mean_difference / se;
  const boost::math::students_t dist(r.dof);
  r.p_one_sided = boost::math::cdf(boost::math::complement(dist, r.t));
  r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

// ---------------------------------------------------------------------------
// Embedding analysis

std::vector<ProjectedEmbedding> project_embeddings(const std::vector<DialogueLog>& corpus,
                                                   const EncoderDecoderParams& embedding) {
  if (corpus.empty()) return {};
  const auto n = static_cast<Eigen::Index>(corpus.size());
  Matrix X(n, embedding.embedding_dim());
  for (Eigen::Index i = 0; i < n; ++i)
    X.row(i) = encode_dialogue(embedding, corpus[static_cast<std::size_t>(i)].feature_sequence()).transpose();
  const Vector mean = X.colwise().mean().transpose();
  X.rowwise() -= mean.transpose();
  const Matrix cov = X.transpose() * X / std::max<double>(1.0, static_cast<double>(n - 1));
  const Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Eigen::Index D = cov.rows();
  Matrix W(D, 2);
  for (int k = 0; k < 2; ++k) {
    Vector v = D > k ? Vector(es.eigenvectors().col(D - 1 - k)) : Vector::Zero(D);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    W.col(k) = v;
  }
  const Matrix Y = X * W;
  std::vector<ProjectedEmbedding> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& log = corpus[static_cast<std::size_t>(i)];
    rows.push_back({log.id, Y(i, 0), Y(i, 1), log.objective.value_or(false), log.turn_count()});
  }
  return rows;
}

void write_projection_csv(const fs::path& path, const std::vector<ProjectedEmbedding>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "dialogue_id,pc1,pc2,success,turns\n";
  out.precision(10);
  for (const auto& r : rows) out << r.dialogue_id << ',' << r.x << ',' << r.y << ',' << (r.success ? 1 : 0) << ',' << r.turns << '\n';
}

ProbeResult logistic_probe(const std::vector<Vector>& train_x, const std::vector<bool>& train_y,
                           const std::vector<Vector>& test_x, const std::vector<bool>& test_y, double l2) {
  if (train_x.empty() || train_x.size() != train_y.size() || test_x.size() != test_y.size())
    throw ValidationError("probe needs labelled, nonempty training data");
  const Eigen::Index D = train_x.front().size();
  const auto n = static_cast<Eigen::Index>(train_x.size());
  Vector mu = Vector::Zero(D), sd = Vector::Zero(D);
  for (const auto& x : train_x) mu += x;
  mu /= static_cast<double>(n);
  for (const auto& x : train_x) sd += (x - mu).cwiseAbs2();
  sd = (sd / static_cast<double>(n)).cwiseSqrt().cwiseMax(1e-8);
  auto design = [&](const Vector& x) {
    Vector z(D + 1);
    z.head(D) = (x - mu).cwiseQuotient(sd);
    z(D) = 1.0;
    return z;
  };
  Matrix Z(n, D + 1);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Z.row(i) = design(train_x[static_cast<std::size_t>(i)]).transpose();
    y(i) = train_y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  Vector w = Vector::Zero(D + 1);
  Vector reg = Vector::Constant(D + 1, l2 * static_cast<double>(n));
  reg(D) = 0.0;  // intercept unpenalised
  for (int it = 0; it < 50; ++it) {
    Vector prob(n);
    for (Eigen::Index i = 0; i < n; ++i) prob(i) = 1.0 / (1.0 + std::exp(-Z.row(i).dot(w)));
    const Vector grad = Z.transpose() * (prob - y) + reg.cwiseProduct(w);
    const Vector s = prob.cwiseProduct(Vector::Ones(n) - prob).cwiseMax(1e-10);
    Matrix H = Z.transpose() * s.asDiagonal() * Z;
    H.diagonal() += reg + Vector::Constant(D + 1, 1e-9);
    const Vector step = H.ldlt().solve(grad);
    w -= step;
    if (step.cwiseAbs().maxCoeff() < 1e-10) break;
  }
  auto accuracy = [&](const std::vector<Vector>& xs, const std::vector<bool>& ys) {
    if (xs.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) hits += (design(xs[i]).dot(w) >= 0.0) == ys[i];
    return static_cast<double>(hits) / static_cast<double>(xs.size());
  };
  ProbeResult r;
  r.train_accuracy = accuracy(train_x, train_y);
  r.test_accuracy = accuracy(test_x, test_y);
  const auto pos = static_cast<double>(std::count(test_y.begin(), test_y.end(), true));
  r.majority_rate = test_y.empty() ? 0.0 : std::max(pos, static_cast<double>(test_y.size()) - pos) / static_cast<double>(test_y.size());
  return r;
}

EncoderDecoderParams pretrain_embedding(const Ontology& ontology, const SimulationConfig& sim, std::size_t count,
                                        std::uint64_t seed, const EmbeddingConfig& cfg,
                                        EmbeddingTrainingReport* report) {
  if (count < 10) throw ValidationError("embedding pre-training needs at least 10 dialogues");
  const auto logs = simulate_corpus(ontology, sim, count, seed, 0.6, "embed");
  std::vector<FeatureSequence> train, valid;
  for (std::size_t i = 0; i < logs.size(); ++i) (i % 10 == 9 ? valid : train).push_back(logs[i].feature_sequence());
  return train_embedding(train, valid, cfg, report);
}

RnnEstimatorParams pretrain_offline_rnn(const Ontology& ontology, const SimulationConfig& sim, std::size_t count,
                                        std::uint64_t seed, const OfflineRnnConfig& cfg, OfflineRnnReport* report) {
  const auto logs = simulate_corpus(ontology, sim, count, seed, 0.6, "rnn");
  std::vector<std::vector<Vector>> x;
  std::vector<bool> y;
  for (const auto& log : logs) {
    x.push_back(log.feature_sequence());
    y.push_back(*log.objective);
  }
  return train_offline_rnn(x, y, cfg, report);
}

}  // namespace arl
