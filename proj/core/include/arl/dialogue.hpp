#pragma once

// Discrete belief tracking, the summary action space, database lookup and turn features.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "arl/domain.hpp"

namespace arl {

inline constexpr std::size_t kMaxTurns = 30;

enum class SummaryAction : int {
  request_slot0,
  request_slot1,
  request_slot2,
  confirm_slot0,
  confirm_slot1,
  confirm_slot2,
  select_slot0,
  select_slot1,
  select_slot2,
  inform_offer,
  inform_alternative,
  inform_requested_info0,
  inform_requested_info1,
  inform_requested_info2,
  repeat,
  restart,
  bye,
  hello,
  deny,
  confirm_offer,
};
inline constexpr std::size_t kNumSummaryActions = 20;

std::string summary_action_name(SummaryAction action, const Ontology& ontology);
inline int index_of(SummaryAction a) { return static_cast<int>(a); }
SummaryAction summary_action_at(std::size_t index);

struct TrackerConfig {
  /// Weight of a unit-confidence observation relative to the (unit-mass) prior.
  double evidence_weight = 10.0;
  /// Requests / reqalts only register from hypotheses at least this confident.
  double flag_threshold = 0.5;
  double salience = 0.5;
};

struct BeliefState {
  /// One distribution per constraint slot over (values..., none); `none` is the last entry.
  std::vector<Vector> slots;
  /// Info slots the user asked for and the system has not yet answered.
  std::vector<bool> requested;
  std::optional<std::string> last_offered_venue;
  std::size_t turn_index = 0;
  /// Set by a system confirm so that affirm/negate can be attributed.
  std::optional<SlotValue> pending_confirm;
  bool alternatives_requested = false;
  UserActType last_intent = UserActType::null;
  std::size_t offers_made = 0;
};

BeliefState initial_belief(const Ontology& ontology);

/// Evidence-weighted update: slot posterior is proportional to prior + weight * confidence on the
/// informed value, renormalized. Unknown slots/values are ignored with a warning.
BeliefState update_belief(const BeliefState& belief, const std::vector<SemanticHypothesis>& hypotheses,
                          const Ontology& ontology, const TrackerConfig& config = {});

/// Salient constraints: argmax of each slot whose top probability exceeds the threshold
/// (an argmax on `none` leaves the slot unconstrained).
Constraints salient_constraints(const BeliefState& belief, const Ontology& ontology, double salience = 0.5);

std::vector<const Venue*> query_db(const Ontology& ontology, const BeliefState& belief, double salience = 0.5);

/// Dimensionality of the turn feature vector for an ontology.
std::size_t feature_dimension(const Ontology& ontology);

/// intent one-hot (8) | slot beliefs | requested flags | action one-hot (20) | turn / max_turns.
Vector extract_turn_features(const BeliefState& belief, UserActType top_intent, SummaryAction system_action,
                             std::size_t turn_index, std::size_t max_turns, const Ontology& ontology);

/// Maps a summary action onto a concrete act; records offers/answers in `belief`.
SystemAct execute_summary_action(SummaryAction action, BeliefState& belief, const Ontology& ontology,
                                 double salience = 0.5);

/// Compact belief summary used as the policy's state input.
Vector policy_features(const BeliefState& belief, const Ontology& ontology, double salience = 0.5);
std::size_t policy_feature_dimension();

/// Hand-written cooperative policy (corpus generation, liveness checks).
SummaryAction rule_based_action(const BeliefState& belief, const Ontology& ontology, double salience = 0.5);

struct DialogueTurn {
  std::optional<UserAct> true_user_act;  // simulation only
  std::vector<SemanticHypothesis> hypotheses;
  BeliefState belief;
  SummaryAction summary_action = SummaryAction::hello;
  SystemAct system_act;
  Vector features;
  /// Policy input at the decision point (empty on the closing turn).
  Vector policy_state;
};

struct DialogueLog {
  std::string id;
  std::vector<DialogueTurn> turns;
  bool terminal = false;
  std::optional<UserGoal> goal;
  std::optional<bool> objective;
  std::optional<int> subjective;

  std::size_t turn_count() const { return turns.size(); }
  std::vector<Vector> feature_sequence() const;
  std::vector<SystemAct> system_acts() const;
};

bool objective_success(const DialogueLog& log, const UserGoal& goal, const Ontology& ontology);

/// One JSON object per dialogue (corpus JSONL line).
nlohmann::json dialogue_to_json(const DialogueLog& log, const Ontology& ontology);
DialogueLog dialogue_from_json(const nlohmann::json& j, const Ontology& ontology);

void write_corpus(const std::filesystem::path& path, const std::vector<DialogueLog>& logs, const Ontology& ontology);
std::vector<DialogueLog> read_corpus(const std::filesystem::path& path, const Ontology& ontology);

/// Chooses a summary action from the policy state; the second argument is the full belief.
using ActionChooser = std::function<SummaryAction(const Vector&, const BeliefState&)>;

struct SimulationConfig {
  NoiseConfig noise;
  GoalConfig goals;
  TrackerConfig tracker;
  std::size_t max_turns = kMaxTurns;
};

void to_json(nlohmann::json& j, const TrackerConfig& cfg);
void from_json(const nlohmann::json& j, TrackerConfig& cfg);
/// Flat object: {noise, goals, tracker, max_turns}; missing keys keep their defaults.
void to_json(nlohmann::json& j, const SimulationConfig& cfg);
void from_json(const nlohmann::json& j, SimulationConfig& cfg);

/// Runs one complete simulated dialogue. Terminates on user bye, system bye or the turn cap.
DialogueLog simulate_dialogue(const Ontology& ontology, const SimulationConfig& config,
                              const ActionChooser& choose, Rng& rng, std::string id = {});

/// Corpus of simulated dialogues under the rule-based policy with random actions mixed in;
/// each dialogue draws its own random-action rate from U[0, max_random_rate] so that both
/// successes and failures are well represented. Dialogue i uses seed mix_seed(seed, i).
std::vector<DialogueLog> simulate_corpus(const Ontology& ontology, const SimulationConfig& config, std::size_t count,
                                         std::uint64_t seed, double max_random_rate = 0.6,
                                         const std::string& id_prefix = "sim");

}  // namespace arl
