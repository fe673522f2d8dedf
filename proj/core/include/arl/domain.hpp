#pragma once

// Restaurant ontology, agenda-based simulated user, semantic-error channel and
// the objective/subjective success signals.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "arl/common.hpp"

namespace arl {

inline constexpr std::string_view kDontCare = "dontcare";

struct Venue {
  std::string name;
  std::map<std::string, std::string> slot_values;

  const std::string& value(const std::string& slot) const;
};

using Constraints = std::map<std::string, std::string>;

class Ontology {
 public:
  /// Validates every invariant; throws ValidationError naming the first offending record.
  Ontology(std::string name, std::vector<std::string> constraint_slots,
           std::vector<std::string> info_slots,
           std::map<std::string, std::vector<std::string>> slot_values, std::vector<Venue> venues);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& constraint_slots() const { return constraint_slots_; }
  const std::vector<std::string>& info_slots() const { return info_slots_; }
  const std::vector<std::string>& values(const std::string& slot) const;
  const std::vector<Venue>& venues() const { return venues_; }

  bool is_constraint_slot(const std::string& slot) const;
  bool is_info_slot(const std::string& slot) const;
  std::optional<std::size_t> constraint_slot_index(const std::string& slot) const;
  std::optional<std::size_t> info_slot_index(const std::string& slot) const;
  std::optional<std::size_t> value_index(const std::string& slot, const std::string& value) const;

  const Venue* find_venue(const std::string& name) const;
  /// Venues satisfying every constraint, in file order.
  std::vector<const Venue*> matching(const Constraints& constraints) const;
  static bool satisfies(const Venue& venue, const Constraints& constraints);

 private:
  std::string name_;
  std::vector<std::string> constraint_slots_;
  std::vector<std::string> info_slots_;
  std::map<std::string, std::vector<std::string>> slot_values_;
  std::vector<Venue> venues_;
};

Ontology load_ontology(const std::filesystem::path& path);
Ontology ontology_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Dialogue acts

enum class UserActType { inform, request, confirm, affirm, negate, reqalts, bye, null };
inline constexpr std::size_t kNumUserActTypes = 8;

std::string_view to_string(UserActType type);
UserActType user_act_type_from_string(std::string_view name);

struct SlotValue {
  std::string slot;
  std::string value;  // empty for request items

  friend bool operator==(const SlotValue&, const SlotValue&) = default;
};

struct UserAct {
  UserActType type = UserActType::null;
  std::vector<SlotValue> items;

  friend bool operator==(const UserAct&, const UserAct&) = default;
};

/// e.g. "inform(food=european,area=south)", "request(phone,addr)", "null()".
std::string format_act(const UserAct& act);

struct SemanticHypothesis {
  UserAct act;
  double confidence = 1.0;
};

enum class SystemActType {
  hello,
  request,
  confirm,
  select,
  offer,
  inform_info,
  no_venue,
  repeat,
  restart,
  bye,
  confirm_offer
};

std::string_view to_string(SystemActType type);
SystemActType system_act_type_from_string(std::string_view name);

struct SystemAct {
  SystemActType type = SystemActType::hello;
  std::string slot;                 // request / confirm / select
  std::vector<std::string> values;  // confirm: 1 value, select: 2 values
  std::string venue;                // offer / inform_info / confirm_offer
  std::vector<SlotValue> items;     // offer: venue constraints; inform_info: answers; no_venue: stated constraints
  bool alternative = false;         // offer or no_venue produced by an alternatives request

  friend bool operator==(const SystemAct&, const SystemAct&) = default;
};

std::string format_act(const SystemAct& act);

void to_json(nlohmann::json& j, const SlotValue& sv);
void from_json(const nlohmann::json& j, SlotValue& sv);
void to_json(nlohmann::json& j, const UserAct& act);
void from_json(const nlohmann::json& j, UserAct& act);
void to_json(nlohmann::json& j, const SemanticHypothesis& h);
void from_json(const nlohmann::json& j, SemanticHypothesis& h);
void to_json(nlohmann::json& j, const SystemAct& act);
void from_json(const nlohmann::json& j, SystemAct& act);

// ---------------------------------------------------------------------------
// Goals and the simulated user

struct UserGoal {
  Constraints constraints;
  std::vector<std::string> requests;
  bool allow_alternatives = false;
  bool satisfiable = true;
};

void to_json(nlohmann::json& j, const UserGoal& goal);
void from_json(const nlohmann::json& j, UserGoal& goal);

struct GoalConfig {
  double satisfiable_probability = 0.9;
  double allow_alternatives_probability = 0.2;
  std::size_t max_constraints = 3;
  std::size_t max_requests = 3;
};

UserGoal sample_goal(const Ontology& ontology, Rng& rng, const GoalConfig& config = {});

/// Pending-act stack plus the bookkeeping the user needs to judge system offers.
struct AgendaState {
  std::vector<SlotValue> pending_informs;  // top of stack is back()
  std::vector<std::string> pending_requests;
  std::optional<std::string> accepted_venue;
  /// First matching venue the user passed over while asking for alternatives.
  std::optional<std::string> fallback_venue;
  bool asked_alternatives = false;
  bool finished = false;
  UserAct last_act;
};

AgendaState init_agenda(const UserGoal& goal, Rng& rng);

/// Next user act in response to `system_act`; mutates the agenda.
UserAct simulate_user_turn(const UserGoal& goal, AgendaState& agenda, const SystemAct& system_act,
                           const Ontology& ontology, Rng& rng);

// ---------------------------------------------------------------------------
// Noise

struct NoiseConfig {
  double semantic_error_rate = 0.15;
  std::size_t n_best = 3;
  std::uint64_t confusion_seed = 0;
  double feedback_flip_rate = 0.15;

  void validate() const;
};

void to_json(nlohmann::json& j, const NoiseConfig& cfg);
void from_json(const nlohmann::json& j, NoiseConfig& cfg);

/// A plausible misrecognition of `act`; never equal to it.
UserAct confuse_act(const UserAct& act, const Ontology& ontology, Rng& rng);

/// N-best list, confidences descending and summing to at most 1.
std::vector<SemanticHypothesis> corrupt_act(const UserAct& act, const NoiseConfig& cfg,
                                            const Ontology& ontology, Rng& rng);

// ---------------------------------------------------------------------------
// Success signals

/// True iff a venue consistent with the goal was offered and every requested slot was
/// given for it, or (unsatisfiable goal) the system truthfully stated nothing matches.
bool objective_success(const std::vector<SystemAct>& system_acts, const UserGoal& goal,
                       const Ontology& ontology);

/// +1 / -1, flipped with probability feedback_flip_rate.
int subjective_feedback(bool objective, const NoiseConfig& cfg, Rng& rng);

}  // namespace arl
