// arl: command-line front end for training, experiments, analysis and the live service.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "arl/harness.hpp"
#include "arl/http.hpp"
#include "arl/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arl;

namespace {

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string ontology_path = ARL_DEFAULT_ONTOLOGY;
  std::string out;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// "a.b.c=value": value is parsed as JSON when it parses, else taken as a string.
void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key.path=value: " + assignment);
  std::string pointer = "/" + assignment.substr(0, eq);
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  doc[json::json_pointer(pointer)] = value;
}

// Config file, then --set overrides, then explicit flags (applied by the caller).
json load_config(const Common& c) {
  json doc = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  if (!doc.is_object()) throw ValidationError("config file must hold a JSON object");
  for (const auto& o : c.overrides) apply_override(doc, o);
  return doc;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& files) {
  write_json_file(dir / "manifest.json",
                  json{{"format", "arl-" + command}, {"version", 1}, {"config", config}, {"files", files}});
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw ValidationError("--out is required");
  fs::create_directories(out);
  return out;
}

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("-c,--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key, e.g. --set noise.semantic_error_rate=0.3");
  cmd->add_option("--ontology", c.ontology_path, "domain ontology JSON")->check(CLI::ExistingFile);
  if (needs_out) cmd->add_option("-o,--out", c.out, "output directory")->required();
}

// ---------------------------------------------------------------------------

struct PretrainArgs {
  std::optional<std::size_t> dialogues;
  std::optional<std::uint64_t> seed;
  std::optional<int> hidden, epochs;
};

int cmd_pretrain_embedding(const Common& c, const PretrainArgs& a) {
  json doc = load_config(c);
  if (a.dialogues) doc["dialogues"] = *a.dialogues;
  if (a.seed) doc["seed"] = *a.seed;
  if (a.hidden) doc["embedding"]["hidden"] = *a.hidden;
  if (a.epochs) doc["embedding"]["max_epochs"] = *a.epochs;
  const auto sim = doc.get<SimulationConfig>();
  const auto cfg = doc.value("embedding", json::object()).get<EmbeddingConfig>();
  const std::size_t n = doc.value("dialogues", std::size_t{1000});
  const std::uint64_t seed = doc.value("seed", std::uint64_t{1});

  const Ontology ontology = load_ontology(c.ontology_path);
  const fs::path out = prepare_out(c.out);
  EmbeddingTrainingReport report;
  EncoderDecoderParams params = pretrain_embedding(ontology, sim, n, seed, cfg, &report);
  save_embedding(out / "embedding.json", params);
  write_json_file(out / "training.json", json{{"initial_valid_loss", report.initial_valid_loss},
                                              {"train_loss", report.train_loss},
                                              {"valid_loss", report.valid_loss},
                                              {"best_epoch", report.best_epoch}});
  json resolved = sim;
  resolved["embedding"] = cfg;
  resolved["dialogues"] = n;
  resolved["seed"] = seed;
  write_manifest(out, "pretrain-embedding", resolved, {"embedding.json", "training.json"});
  spdlog::info("embedding (dim {}) written to {}; best epoch {}", params.embedding_dim(), out.string(), report.best_epoch);
  return 0;
}

int cmd_train_offline_rnn(const Common& c, const PretrainArgs& a) {
  json doc = load_config(c);
  if (a.dialogues) doc["dialogues"] = *a.dialogues;
  if (a.seed) doc["seed"] = *a.seed;
  if (a.hidden) doc["offline_rnn"]["hidden"] = *a.hidden;
  if (a.epochs) doc["offline_rnn"]["max_epochs"] = *a.epochs;
  const auto sim = doc.get<SimulationConfig>();
  const auto cfg = doc.value("offline_rnn", json::object()).get<OfflineRnnConfig>();
  const std::size_t n = doc.value("dialogues", std::size_t{1000});
  const std::uint64_t seed = doc.value("seed", std::uint64_t{1});

  const Ontology ontology = load_ontology(c.ontology_path);
  const fs::path out = prepare_out(c.out);
  OfflineRnnReport report;
  RnnEstimatorParams params = pretrain_offline_rnn(ontology, sim, n, seed, cfg, &report);
  save_offline_rnn(out / "offline_rnn.json", params);
  write_json_file(out / "training.json", json{{"train_size", report.train_size},
                                              {"valid_size", report.valid_size},
                                              {"initial_valid_loss", report.initial_valid_loss},
                                              {"valid_loss", report.valid_loss},
                                              {"valid_accuracy", report.valid_accuracy},
                                              {"majority_rate", report.majority_rate},
                                              {"best_epoch", report.best_epoch}});
  json resolved = sim;
  resolved["offline_rnn"] = cfg;
  resolved["dialogues"] = n;
  resolved["seed"] = seed;
  write_manifest(out, "train-offline-rnn", resolved, {"offline_rnn.json", "training.json"});
  const double acc = report.valid_accuracy.empty() ? 0.0 : report.valid_accuracy.at(static_cast<std::size_t>(std::max(report.best_epoch - 1, 0)));
  spdlog::info("off-line estimator written to {}; validation accuracy {:.3f} (majority {:.3f})", out.string(), acc,
               report.majority_rate);
  return 0;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string system, embedding, offline_rnn;
  std::optional<std::size_t> dialogues, window, final_window;
  std::vector<std::uint64_t> seeds;
  bool resume = false;
};

int cmd_run(const Common& c, const RunArgs& a) {
  json doc = load_config(c);
  if (!a.system.empty()) doc["system"] = a.system;
  if (a.dialogues) doc["dialogues"] = *a.dialogues;
  if (!a.seeds.empty()) doc["seeds"] = a.seeds;
  if (!a.embedding.empty()) doc["embedding_checkpoint"] = a.embedding;
  if (!a.offline_rnn.empty()) doc["offline_rnn_checkpoint"] = a.offline_rnn;
  if (a.window) doc["moving_average_window"] = *a.window;
  if (a.final_window) doc["final_window"] = *a.final_window;
  if (a.resume) doc["resume"] = true;
  doc["output_dir"] = c.out;
  const auto cfg = doc.get<ExperimentConfig>();

  const Ontology ontology = load_ontology(c.ontology_path);
  const auto start = std::chrono::steady_clock::now();
  const ExperimentResult result = run_experiment(cfg, ontology);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json& s = result.summary;
  spdlog::info("{}: {} seed(s) x {} dialogues in {:.1f} s", to_string(cfg.system), cfg.seeds.size(), cfg.dialogues, seconds);
  std::cout << s.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<DialogueRecord>> load_run(const fs::path& dir, ExperimentConfig& cfg) {
  const json manifest = read_json_file(dir / "manifest.json");
  cfg = manifest.at("config").get<ExperimentConfig>();
  std::vector<std::vector<DialogueRecord>> per_seed;
  for (const auto& f : manifest.at("files")) {
    const std::string name = f.get<std::string>();
    if (name.rfind("records/", 0) == 0) per_seed.push_back(read_records(dir / name));
  }
  if (per_seed.empty()) throw ValidationError(dir.string() + " holds no records");
  return per_seed;
}

std::vector<double> final_success(const std::vector<std::vector<DialogueRecord>>& per_seed, std::size_t window,
                                  bool subjective) {
  std::vector<double> out;
  for (const auto& records : per_seed) {
    const CellSummary s = summarize_cell(records, window);
    out.push_back(subjective ? s.final_subjective_success : s.final_objective_success);
  }
  return out;
}

int cmd_metrics(const std::string& run_dir, const std::string& against, const std::string& out_file) {
  ExperimentConfig cfg;
  const auto per_seed = load_run(run_dir, cfg);
  json result = metrics_json(per_seed, cfg);  // recomputed from the records alone
  if (!against.empty()) {
    ExperimentConfig other_cfg;
    const auto other = load_run(against, other_cfg);
    if (other.size() != per_seed.size()) throw ValidationError("runs have different seed counts");
    for (const bool subjective : {true, false}) {
      const auto a = final_success(per_seed, cfg.final_window, subjective);
      const auto b = final_success(other, cfg.final_window, subjective);
      json entry{{"a", a}, {"b", b}};
      if (a.size() >= 2) {
        const PairedTTest t = paired_t_test(a, b);
        entry.update({{"mean_difference", t.mean_difference},
                      {"t", t.t},
                      {"dof", t.dof},
                      {"p_one_sided", t.p_one_sided},
                      {"p_two_sided", t.p_two_sided}});
      }
      result["comparison"][subjective ? "subjective" : "objective"] = entry;
    }
    result["comparison"]["against"] = to_string(other_cfg.system);
  }
  if (out_file.empty()) std::cout << result.dump(2) << '\n';
  else write_json_file(out_file, result);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_export_embeddings(const Common& c, const std::string& embedding_path, std::size_t dialogues, std::uint64_t seed) {
  const json doc = load_config(c);
  const auto sim = doc.get<SimulationConfig>();
  const Ontology ontology = load_ontology(c.ontology_path);
  const EncoderDecoderParams embedding = load_embedding(embedding_path);
  const auto corpus = simulate_corpus(ontology, sim, dialogues, seed, 0.6, "test");
  const fs::path out = prepare_out(c.out);
  write_projection_csv(out / "embeddings.csv", project_embeddings(corpus, embedding));

  // linear probe on the full embeddings, fitted on a second corpus
  const auto train = simulate_corpus(ontology, sim, dialogues, mix_seed(seed, 0x70726f6265), 0.6, "probe");
  auto split = [&](const std::vector<DialogueLog>& logs, std::vector<Vector>& x, std::vector<bool>& y) {
    for (const auto& log : logs) {
      x.push_back(encode_dialogue(embedding, log.feature_sequence()));
      y.push_back(log.objective.value_or(false));
    }
  };
  std::vector<Vector> tx, vx;
  std::vector<bool> ty, vy;
  split(train, tx, ty);
  split(corpus, vx, vy);
  const ProbeResult probe = logistic_probe(tx, ty, vx, vy);
  const json probe_json{{"train_accuracy", probe.train_accuracy},
                        {"test_accuracy", probe.test_accuracy},
                        {"majority_rate", probe.majority_rate}};
  write_json_file(out / "probe.json", probe_json);
  json resolved = sim;
  resolved.update({{"embedding_checkpoint", embedding_path}, {"dialogues", dialogues}, {"seed", seed}});
  write_manifest(out, "export-embeddings", resolved, {"embeddings.csv", "probe.json"});
  spdlog::info("{} rows written; probe accuracy {:.3f} (majority {:.3f})", corpus.size(), probe.test_accuracy,
               probe.majority_rate);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c, std::size_t dialogues, std::uint64_t seed, double random_rate) {
  const json doc = load_config(c);
  const auto sim = doc.get<SimulationConfig>();
  const Ontology ontology = load_ontology(c.ontology_path);
  const auto corpus = simulate_corpus(ontology, sim, dialogues, seed, random_rate);
  const fs::path out = prepare_out(c.out);
  write_corpus(out / "corpus.jsonl", corpus, ontology);
  std::size_t successes = 0, turns = 0;
  for (const auto& log : corpus) {
    successes += log.objective.value_or(false) ? 1 : 0;
    turns += log.turn_count();
  }
  json resolved = sim;
  resolved.update({{"dialogues", dialogues}, {"seed", seed}, {"max_random_rate", random_rate}});
  write_manifest(out, "simulate", resolved, {"corpus.jsonl"});
  const double n = static_cast<double>(std::max<std::size_t>(corpus.size(), 1));
  std::cout << json{{"dialogues", corpus.size()},
                    {"objective_success", static_cast<double>(successes) / n},
                    {"mean_turns", static_cast<double>(turns) / n}}
                   .dump(2)
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

std::atomic<bool> g_interrupted{false};

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string embedding, policy, reward_pool, static_dir, save_dir;
  std::optional<std::size_t> max_sessions;
  std::optional<double> idle_timeout;
};

int cmd_serve(const Common& c, const ServeArgs& a) {
  json doc = load_config(c);
  json service_doc = doc.value("service", json::object());
  if (a.max_sessions) service_doc["max_sessions"] = *a.max_sessions;
  if (a.idle_timeout) service_doc["idle_timeout_seconds"] = *a.idle_timeout;
  const auto cfg = service_doc.get<ServiceConfig>();
  const auto al = doc.value("active_learning", json::object()).get<ActiveLearningConfig>();

  const Ontology ontology = load_ontology(c.ontology_path);
  EncoderDecoderParams embedding = load_embedding(a.embedding);
  GpSarsa policy = a.policy.empty()
                       ? GpSarsa(policy_feature_dimension(), kNumSummaryActions, doc.value("policy", json::object()).get<GpSarsaConfig>())
                       : GpSarsa::load(a.policy);
  ActiveRewardModel reward = a.reward_pool.empty() ? ActiveRewardModel(embedding.embedding_dim(), al)
                                                   : ActiveRewardModel::load(a.reward_pool);

  Service service(ontology, std::move(embedding), std::move(policy), std::move(reward), cfg);
  HttpFrontend http(service, a.static_dir);
  const int port = http.bind(a.host, a.port);
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  http.start();
  spdlog::info("serving on http://{}:{} (POST /api/message, GET /api/events)", a.host, port);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  http.stop();

  if (!a.save_dir.empty()) {
    fs::create_directories(a.save_dir);
    service.policy_snapshot().save(fs::path(a.save_dir) / "policy.json");
    service.reward_model_snapshot().save(fs::path(a.save_dir) / "reward_pool.json");
    write_json_file(fs::path(a.save_dir) / "metrics.json", service.metrics());
    spdlog::info("learners saved to {}", a.save_dir);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active reward learning for dialogue policy optimisation"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  Common common;
  PretrainArgs pre;
  auto* pe = app.add_subcommand("pretrain-embedding", "train the dialogue embedding on a simulated corpus");
  add_common(pe, common);
  pe->add_option("--dialogues", pre.dialogues, "corpus size");
  pe->add_option("--seed", pre.seed);
  pe->add_option("--hidden", pre.hidden, "encoder width per direction");
  pe->add_option("--epochs", pre.epochs, "maximum epochs");

  auto* rnn = app.add_subcommand("train-offline-rnn", "train the off-line success estimator on simulated labels");
  add_common(rnn, common);
  rnn->add_option("--dialogues", pre.dialogues, "corpus size");
  rnn->add_option("--seed", pre.seed);
  rnn->add_option("--hidden", pre.hidden);
  rnn->add_option("--epochs", pre.epochs);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "train policies on-line with one reward system");
  add_common(run, common);
  run->add_option("--system", run_args.system, "online_gp, subj, obj_eq_subj, offline_rnn or objective")
      ->check(CLI::IsMember({"online_gp", "subj", "obj_eq_subj", "offline_rnn", "objective"}));
  run->add_option("--dialogues", run_args.dialogues, "training dialogues per seed");
  run->add_option("--seeds", run_args.seeds, "policy seeds");
  run->add_option("--embedding", run_args.embedding, "embedding checkpoint (online_gp)");
  run->add_option("--offline-rnn", run_args.offline_rnn, "estimator checkpoint (offline_rnn)");
  run->add_option("--window", run_args.window, "moving-average window");
  run->add_option("--final-window", run_args.final_window, "dialogues in the final success window");
  run->add_flag("--resume", run_args.resume, "continue an interrupted run in --out");

  std::string run_dir, against, metrics_out;
  auto* metrics = app.add_subcommand("metrics", "recompute metrics from a run's records");
  metrics->add_option("run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--against", against, "second run: paired t-test on final success")->check(CLI::ExistingDirectory);
  metrics->add_option("-o,--out", metrics_out, "write JSON here instead of stdout");

  std::string embedding_path;
  std::size_t export_n = 650;
  std::uint64_t export_seed = 7;
  auto* export_cmd = app.add_subcommand("export-embeddings", "2-D projection of a simulated test corpus, plus a linear probe");
  add_common(export_cmd, common);
  export_cmd->add_option("--embedding", embedding_path)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--dialogues", export_n);
  export_cmd->add_option("--seed", export_seed);

  std::size_t sim_n = 100;
  std::uint64_t sim_seed = 1;
  double random_rate = 0.6;
  auto* sim = app.add_subcommand("simulate", "write a simulated corpus as JSONL");
  add_common(sim, common);
  sim->add_option("--dialogues", sim_n);
  sim->add_option("--seed", sim_seed);
  sim->add_option("--max-random-rate", random_rate, "upper bound of the per-dialogue random-action rate")
      ->check(CLI::Range(0.0, 1.0));

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "live training service over HTTP");
  add_common(serve, common, false);
  serve->add_option("--embedding", serve_args.embedding)->required()->check(CLI::ExistingFile);
  serve->add_option("--policy", serve_args.policy, "start from a saved policy")->check(CLI::ExistingFile);
  serve->add_option("--reward-pool", serve_args.reward_pool, "start from a saved reward pool")->check(CLI::ExistingFile);
  serve->add_option("--host", serve_args.host);
  serve->add_option("--port", serve_args.port, "0 picks a free port");
  serve->add_option("--max-sessions", serve_args.max_sessions);
  serve->add_option("--idle-timeout", serve_args.idle_timeout, "seconds");
  serve->add_option("--static", serve_args.static_dir, "directory served at /")->check(CLI::ExistingDirectory);
  serve->add_option("--save", serve_args.save_dir, "save policy and reward pool here on shutdown");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(level));

  try {
    if (*pe) return cmd_pretrain_embedding(common, pre);
    if (*rnn) return cmd_train_offline_rnn(common, pre);
    if (*run) return cmd_run(common, run_args);
    if (*metrics) return cmd_metrics(run_dir, against, metrics_out);
    if (*export_cmd) return cmd_export_embeddings(common, embedding_path, export_n, export_seed);
    if (*sim) return cmd_simulate(common, sim_n, sim_seed, random_rate);
    if (*serve) return cmd_serve(common, serve_args);
  } catch (const ValidationError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
