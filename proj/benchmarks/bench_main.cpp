// Hot paths of the learning loop: EP refits and hyperparameter gradients as the label pool grows,
// LSTM encoding and BPTT per dialogue, GP-SARSA episodes as the dictionary fills, and one live
// service turn.

#include <benchmark/benchmark.h>

#include "arl/harness.hpp"
#include "arl/service.hpp"

using namespace arl;

namespace {

const Ontology& ontology() {
  static const Ontology o = load_ontology(std::string(ARL_DATA_DIR) + "/cambridge_restaurants.json");
  return o;
}

// Two overlapping Gaussian clouds in 64 dimensions, like a noisy labelled embedding pool.
GpClassifier labelled_pool(std::size_t n) {
  Rng rng(3);
  GpClassifier gp;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 3 == 0 ? -1 : 1;
    Vector d(64);
    for (Eigen::Index k = 0; k < d.size(); ++k) d(k) = 0.15 * standard_normal(rng) + (k < 8 ? 0.1 * y : 0.0);
    gp.add_point(d, y);
  }
  return gp;
}

const std::vector<DialogueLog>& corpus() {
  static const auto c = simulate_corpus(ontology(), SimulationConfig{}, 64, 5);
  return c;
}

void BM_EpFitFromScratch(benchmark::State& state) {
  const GpClassifier pool = labelled_pool(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    GpClassifier gp = pool;
    benchmark::DoNotOptimize(gp.fit());
  }
}
BENCHMARK(BM_EpFitFromScratch)->Arg(50)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_EpAddLabelRefit(benchmark::State& state) {
  GpClassifier base = labelled_pool(static_cast<std::size_t>(state.range(0)));
  base.fit();
  Vector extra = Vector::Constant(64, 0.05);
  for (auto _ : state) {
    GpClassifier gp = base;
    gp.add_point(extra, 1);
    benchmark::DoNotOptimize(gp.fit());
  }
}
BENCHMARK(BM_EpAddLabelRefit)->Arg(50)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_NlmlGradient(benchmark::State& state) {
  GpClassifier gp = labelled_pool(static_cast<std::size_t>(state.range(0)));
  gp.fit();
  for (auto _ : state) benchmark::DoNotOptimize(gp.nlml_gradient());
}
BENCHMARK(BM_NlmlGradient)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  GpClassifier gp = labelled_pool(static_cast<std::size_t>(state.range(0)));
  gp.fit();
  const Vector q = Vector::Constant(64, 0.02);
  for (auto _ : state) benchmark::DoNotOptimize(gp.predict(q));
}
BENCHMARK(BM_Predict)->Arg(200)->Arg(400);

void BM_EncodeDialogue(benchmark::State& state) {
  EmbeddingConfig cfg;
  cfg.hidden = state.range(0);
  const auto params = EncoderDecoderParams::initialized(static_cast<Eigen::Index>(feature_dimension(ontology())), cfg);
  const auto features = corpus().front().feature_sequence();
  for (auto _ : state) benchmark::DoNotOptimize(encode_dialogue(params, features));
}
BENCHMARK(BM_EncodeDialogue)->Arg(32);

void BM_EmbeddingBptt(benchmark::State& state) {
  EmbeddingConfig cfg;
  cfg.hidden = state.range(0);
  const auto params = EncoderDecoderParams::initialized(static_cast<Eigen::Index>(feature_dimension(ontology())), cfg);
  auto grad = params;
  const auto features = corpus().front().feature_sequence();
  for (auto _ : state) {
    grad.set_zero();
    benchmark::DoNotOptimize(embedding_gradients(params, features, grad));
  }
}
BENCHMARK(BM_EmbeddingBptt)->Arg(32)->Unit(benchmark::kMicrosecond);

// One simulated dialogue fed to a policy whose dictionary was pre-filled by `range(0)` episodes.
void BM_GpSarsaEpisode(benchmark::State& state) {
  const ActiveLearningConfig al;
  GpSarsa warm(policy_feature_dimension(), kNumSummaryActions);
  Rng rng(9);
  SimulationConfig sim;
  auto chooser = [&](GpSarsa& p) {
    return [&p, &rng](const Vector& b, const BeliefState&) {
      return summary_action_at(static_cast<std::size_t>(p.select_action(b, rng)));
    };
  };
  for (int e = 0; e < state.range(0); ++e) {
    const DialogueLog log = simulate_dialogue(ontology(), sim, chooser(warm), rng);
    update_policy(warm, log, log.objective.value_or(false) ? 20.0 - static_cast<double>(log.turn_count()) : -static_cast<double>(log.turn_count()), al);
  }
  const DialogueLog probe = simulate_dialogue(ontology(), sim, chooser(warm), rng);
  state.counters["dictionary"] = static_cast<double>(warm.dictionary_size());
  for (auto _ : state) {
    state.PauseTiming();
    GpSarsa policy = warm;
    state.ResumeTiming();
    update_policy(policy, probe, 10.0, al);
    benchmark::DoNotOptimize(policy.alpha());
  }
}
BENCHMARK(BM_GpSarsaEpisode)->Arg(20)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_ServiceTurn(benchmark::State& state) {
  EmbeddingConfig cfg;
  cfg.hidden = 32;
  auto params = EncoderDecoderParams::initialized(static_cast<Eigen::Index>(feature_dimension(ontology())), cfg);
  Service service(ontology(), params, GpSarsa(policy_feature_dimension(), kNumSummaryActions),
                  ActiveRewardModel(params.embedding_dim()));
  std::string sid;
  for (auto _ : state) {
    if (sid.empty()) sid = service.handle({{"type", "session_start"}})["session_id"];
    const auto reply =
        service.handle({{"type", "user_turn"}, {"session_id", sid}, {"payload", {{"text", "cheap italian in the north"}}}});
    if (reply["type"] != "system_turn") {
      state.PauseTiming();
      if (reply["payload"].value("queried", false))
        service.handle({{"type", "feedback_response"}, {"session_id", sid}, {"payload", {{"label", "success"}}}});
      sid.clear();
      state.ResumeTiming();
    }
  }
}
BENCHMARK(BM_ServiceTurn)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
