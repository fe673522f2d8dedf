#include "arl/dialogue.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace arl {

using nlohmann::json;

namespace {

constexpr std::size_t kPolicyFeatureDim = 18;

int slot_offset(SummaryAction a, SummaryAction base) { return index_of(a) - index_of(base); }

}  // namespace

SummaryAction summary_action_at(std::size_t index) {
  if (index >= kNumSummaryActions) throw ValidationError("summary action index out of range");
  return static_cast<SummaryAction>(index);
}

std::string summary_action_name(SummaryAction a, const Ontology& ontology) {
  const auto& cs = ontology.constraint_slots();
  const auto& is = ontology.info_slots();
  const int i = index_of(a);
  if (i <= 2) return "request_" + cs[i];
  if (i <= 5) return "confirm_" + cs[i - 3];
  if (i <= 8) return "select_" + cs[i - 6];
  switch (a) {
    case SummaryAction::inform_offer: return "inform_offer";
    case SummaryAction::inform_alternative: return "inform_alternative";
    case SummaryAction::inform_requested_info0:
    case SummaryAction::inform_requested_info1:
    case SummaryAction::inform_requested_info2:
      return "inform_requested_" + is[slot_offset(a, SummaryAction::inform_requested_info0)];
    case SummaryAction::repeat: return "repeat";
    case SummaryAction::restart: return "restart";
    case SummaryAction::bye: return "bye";
    case SummaryAction::hello: return "hello";
    case SummaryAction::deny: return "deny";
    case SummaryAction::confirm_offer: return "confirm_offer";
    default: break;
  }
  return "unknown";
}

BeliefState initial_belief(const Ontology& ontology) {
  BeliefState b;
  for (const auto& slot : ontology.constraint_slots()) {
    Vector dist = Vector::Zero(static_cast<Eigen::Index>(ontology.values(slot).size() + 1));
    dist(dist.size() - 1) = 1.0;
    b.slots.push_back(std::move(dist));
  }
  b.requested.assign(ontology.info_slots().size(), false);
  return b;
}

BeliefState update_belief(const BeliefState& belief, const std::vector<SemanticHypothesis>& hypotheses,
                          const Ontology& ontology, const TrackerConfig& config) {
  BeliefState next = belief;
  next.alternatives_requested = false;
  next.last_intent = hypotheses.empty() ? UserActType::null : hypotheses.front().act.type;
  std::vector<Vector> evidence;
  for (const auto& d : belief.slots) evidence.push_back(Vector::Zero(d.size()));

  auto add_evidence = [&](const std::string& slot, const std::string& value, double mass) {
    auto si = ontology.constraint_slot_index(slot);
    if (!si) {
      spdlog::warn("tracker: ignoring unknown slot '{}'", slot);
      return;
    }
    Vector& e = evidence[*si];
    if (value == kDontCare) {
      e(e.size() - 1) += mass;
      return;
    }
    auto vi = ontology.value_index(slot, value);
    if (!vi) {
      spdlog::warn("tracker: ignoring unknown value '{}' for slot '{}'", value, slot);
      return;
    }
    e(static_cast<Eigen::Index>(*vi)) += mass;
  };

  std::vector<double> negated_confirm(belief.slots.size(), 0.0);
  for (const auto& h : hypotheses) {
    const double mass = config.evidence_weight * h.confidence;
    switch (h.act.type) {
      case UserActType::inform:
      case UserActType::confirm:
        for (const auto& it : h.act.items) add_evidence(it.slot, it.value, mass);
        break;
      case UserActType::negate:
        if (!h.act.items.empty()) {
          for (const auto& it : h.act.items) add_evidence(it.slot, it.value, mass);
        } else if (belief.pending_confirm) {
          if (auto si = ontology.constraint_slot_index(belief.pending_confirm->slot))
            negated_confirm[*si] = std::max(negated_confirm[*si], h.confidence);
        }
        break;
      case UserActType::affirm:
        if (belief.pending_confirm) add_evidence(belief.pending_confirm->slot, belief.pending_confirm->value, mass);
        break;
      case UserActType::request:
        if (h.confidence >= config.flag_threshold) {
          for (const auto& it : h.act.items) {
            auto ii = ontology.info_slot_index(it.slot);
            if (!ii) {
              spdlog::warn("tracker: ignoring request for unknown slot '{}'", it.slot);
              continue;
            }
            next.requested[*ii] = true;
          }
        }
        break;
      case UserActType::reqalts:
        if (h.confidence >= config.flag_threshold) next.alternatives_requested = true;
        break;
      case UserActType::bye:
      case UserActType::null:
        break;
    }
  }

  for (std::size_t s = 0; s < next.slots.size(); ++s) {
    Vector& d = next.slots[s];
    if (negated_confirm[s] > 0.0 && belief.pending_confirm) {
      const std::string& value = belief.pending_confirm->value;
      const std::string& slot = belief.pending_confirm->slot;
      const auto vi = value == kDontCare ? std::optional<std::size_t>(d.size() - 1) : ontology.value_index(slot, value);
      if (vi) d(static_cast<Eigen::Index>(*vi)) *= (1.0 - negated_confirm[s]);
    }
    d += evidence[s];
    const double total = d.sum();
    if (total > 0.0) {
      d /= total;
    } else {
      d.setZero();
      d(d.size() - 1) = 1.0;
    }
  }
  next.pending_confirm.reset();
  return next;
}

Constraints salient_constraints(const BeliefState& belief, const Ontology& ontology, double salience) {
  Constraints out;
  for (std::size_t s = 0; s < belief.slots.size(); ++s) {
    const Vector& d = belief.slots[s];
    Eigen::Index arg = 0;
    const double top = d.maxCoeff(&arg);
    if (top <= salience || arg == d.size() - 1) continue;
    const auto& slot = ontology.constraint_slots()[s];
    out[slot] = ontology.values(slot)[static_cast<std::size_t>(arg)];
  }
  return out;
}

std::vector<const Venue*> query_db(const Ontology& ontology, const BeliefState& belief, double salience) {
  return ontology.matching(salient_constraints(belief, ontology, salience));
}

std::size_t feature_dimension(const Ontology& ontology) {
  std::size_t dim = kNumUserActTypes + ontology.info_slots().size() + kNumSummaryActions + 1;
  for (const auto& slot : ontology.constraint_slots()) dim += ontology.values(slot).size() + 1;
  return dim;
}

Vector extract_turn_features(const BeliefState& belief, UserActType top_intent, SummaryAction system_action,
                             std::size_t turn_index, std::size_t max_turns, const Ontology& ontology) {
  if (max_turns == 0 || turn_index >= max_turns)
    throw ValidationError("turn index " + std::to_string(turn_index) + " exceeds the turn cap " +
                          std::to_string(max_turns));
  Vector f = Vector::Zero(static_cast<Eigen::Index>(feature_dimension(ontology)));
  Eigen::Index pos = 0;
  f(pos + static_cast<int>(top_intent)) = 1.0;
  pos += kNumUserActTypes;
  for (const auto& d : belief.slots) {
    f.segment(pos, d.size()) = d;
    pos += d.size();
  }
  for (bool r : belief.requested) f(pos++) = r ? 1.0 : 0.0;
  f(pos + index_of(system_action)) = 1.0;
  pos += kNumSummaryActions;
  f(pos) = static_cast<double>(turn_index) / static_cast<double>(max_turns);
  return f;
}

namespace {

std::vector<SlotValue> salient_items(const BeliefState& belief, const Ontology& ontology, double salience) {
  std::vector<SlotValue> items;
  const auto c = salient_constraints(belief, ontology, salience);
  for (const auto& slot : ontology.constraint_slots()) {
    auto it = c.find(slot);
    if (it != c.end()) items.push_back({slot, it->second});
  }
  return items;
}

SystemAct offer(const Venue& venue, BeliefState& belief, const Ontology& ontology, bool alternative) {
  SystemAct act{SystemActType::offer, {}, {}, venue.name, {}, alternative};
  for (const auto& slot : ontology.constraint_slots()) act.items.push_back({slot, venue.value(slot)});
  belief.last_offered_venue = venue.name;
  belief.offers_made++;
  return act;
}

SystemAct no_venue(const BeliefState& belief, const Ontology& ontology, double salience, bool alternative) {
  SystemAct act{SystemActType::no_venue, {}, {}, {}, salient_items(belief, ontology, salience), alternative};
  return act;
}

SystemAct inform_offer(BeliefState& belief, const Ontology& ontology, double salience) {
  const auto matches = query_db(ontology, belief, salience);
  if (matches.empty()) return no_venue(belief, ontology, salience, false);
  return offer(*matches.front(), belief, ontology, false);
}

}  // namespace

SystemAct execute_summary_action(SummaryAction action, BeliefState& belief, const Ontology& ontology,
                                 double salience) {
  belief.pending_confirm.reset();
  const int i = index_of(action);
  const auto& cs = ontology.constraint_slots();
  if (i <= 2) return SystemAct{SystemActType::request, cs[i], {}, {}, {}, false};
  if (i <= 5) {
    const std::string& slot = cs[i - 3];
    const Vector& d = belief.slots[i - 3];
    Eigen::Index arg = 0;
    d.maxCoeff(&arg);
    const std::string value =
        arg == d.size() - 1 ? std::string(kDontCare) : ontology.values(slot)[static_cast<std::size_t>(arg)];
    belief.pending_confirm = SlotValue{slot, value};
    return SystemAct{SystemActType::confirm, slot, {value}, {}, {}, false};
  }
  if (i <= 8) {
    const std::string& slot = cs[i - 6];
    const Vector values = belief.slots[i - 6].head(belief.slots[i - 6].size() - 1);
    std::vector<std::size_t> order(static_cast<std::size_t>(values.size()));
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return values(static_cast<Eigen::Index>(a)) > values(static_cast<Eigen::Index>(b));
    });
    const auto& names = ontology.values(slot);
    std::vector<std::string> pick{names[order[0]]};
    if (order.size() > 1) pick.push_back(names[order[1]]);
    return SystemAct{SystemActType::select, slot, pick, {}, {}, false};
  }

  switch (action) {
    case SummaryAction::inform_offer:
      return inform_offer(belief, ontology, salience);

    case SummaryAction::inform_alternative: {
      belief.alternatives_requested = false;
      const auto matches = query_db(ontology, belief, salience);
      if (matches.empty()) return no_venue(belief, ontology, salience, true);
      if (!belief.last_offered_venue) return offer(*matches.front(), belief, ontology, true);
      auto cur = std::find_if(matches.begin(), matches.end(),
                              [&](const Venue* v) { return v->name == *belief.last_offered_venue; });
      if (cur == matches.end()) return offer(*matches.front(), belief, ontology, true);
      if (++cur == matches.end()) return no_venue(belief, ontology, salience, true);
      return offer(**cur, belief, ontology, true);
    }

    case SummaryAction::inform_requested_info0:
    case SummaryAction::inform_requested_info1:
    case SummaryAction::inform_requested_info2: {
      const Venue* venue = belief.last_offered_venue ? ontology.find_venue(*belief.last_offered_venue) : nullptr;
      if (!venue) {
        spdlog::debug("inform_requested without an offered venue; falling back to inform_offer");
        return inform_offer(belief, ontology, salience);
      }
      const auto target = static_cast<std::size_t>(slot_offset(action, SummaryAction::inform_requested_info0));
      SystemAct act{SystemActType::inform_info, {}, {}, venue->name, {}, false};
      for (std::size_t k = 0; k < ontology.info_slots().size(); ++k) {
        if (k != target && !belief.requested[k]) continue;
        const auto& slot = ontology.info_slots()[k];
        act.items.push_back({slot, venue->value(slot)});
        belief.requested[k] = false;
      }
      return act;
    }

    case SummaryAction::repeat:
      return SystemAct{SystemActType::repeat, {}, {}, {}, {}, false};

    case SummaryAction::restart: {
      const std::size_t turn = belief.turn_index;
      belief = initial_belief(ontology);
      belief.turn_index = turn;
      return SystemAct{SystemActType::restart, {}, {}, {}, {}, false};
    }

    case SummaryAction::bye:
      return SystemAct{SystemActType::bye, {}, {}, {}, {}, false};

    case SummaryAction::hello:
      return SystemAct{SystemActType::hello, {}, {}, {}, {}, false};

    case SummaryAction::deny:
      return no_venue(belief, ontology, salience, false);

    case SummaryAction::confirm_offer: {
      const Venue* venue = belief.last_offered_venue ? ontology.find_venue(*belief.last_offered_venue) : nullptr;
      if (!venue) {
        spdlog::debug("confirm_offer without an offered venue; falling back to inform_offer");
        return inform_offer(belief, ontology, salience);
      }
      SystemAct act{SystemActType::confirm_offer, {}, {}, venue->name, {}, false};
      for (const auto& slot : ontology.constraint_slots()) act.items.push_back({slot, venue->value(slot)});
      return act;
    }

    default:
      break;
  }
  throw ValidationError("unhandled summary action");
}

std::size_t policy_feature_dimension() { return kPolicyFeatureDim; }

Vector policy_features(const BeliefState& belief, const Ontology& ontology, double salience) {
  Vector x = Vector::Zero(kPolicyFeatureDim);
  Eigen::Index pos = 0;
  for (const auto& d : belief.slots) x(pos++) = d.head(d.size() - 1).maxCoeff();
  for (const auto& d : belief.slots) x(pos++) = d(d.size() - 1);
  for (bool r : belief.requested) x(pos++) = r ? 1.0 : 0.0;

  const Constraints salient = salient_constraints(belief, ontology, salience);
  const Venue* offered = belief.last_offered_venue ? ontology.find_venue(*belief.last_offered_venue) : nullptr;
  x(pos++) = offered ? 1.0 : 0.0;
  x(pos++) = (offered && Ontology::satisfies(*offered, salient)) ? 1.0 : 0.0;

  const std::size_t matches = ontology.matching(salient).size();
  const int bucket = matches == 0 ? 0 : matches == 1 ? 1 : matches <= 4 ? 2 : 3;
  x(pos + bucket) = 1.0;
  pos += 4;
  x(pos++) = belief.alternatives_requested ? 1.0 : 0.0;
  x(pos++) = belief.last_intent == UserActType::null ? 1.0 : 0.0;
  x(pos++) = static_cast<double>(belief.turn_index) / static_cast<double>(kMaxTurns);
  return x;
}

SummaryAction rule_based_action(const BeliefState& belief, const Ontology& ontology, double salience) {
  const Constraints salient = salient_constraints(belief, ontology, salience);
  const Venue* offered = belief.last_offered_venue ? ontology.find_venue(*belief.last_offered_venue) : nullptr;
  const bool consistent = offered && Ontology::satisfies(*offered, salient);
  if (belief.alternatives_requested && offered) return SummaryAction::inform_alternative;
  if (consistent) {
    for (std::size_t k = 0; k < belief.requested.size(); ++k)
      if (belief.requested[k])
        return summary_action_at(static_cast<std::size_t>(index_of(SummaryAction::inform_requested_info0)) + k);
  }
  if (salient.empty()) return SummaryAction::hello;
  for (std::size_t s = 0; s < belief.slots.size(); ++s) {
    const Vector& d = belief.slots[s];
    Eigen::Index arg = 0;
    const double top = d.maxCoeff(&arg);
    if (arg != d.size() - 1 && top > salience && top < 0.8)
      return summary_action_at(static_cast<std::size_t>(index_of(SummaryAction::confirm_slot0)) + s);
  }
  return SummaryAction::inform_offer;
}

std::vector<Vector> DialogueLog::feature_sequence() const {
  std::vector<Vector> out;
  out.reserve(turns.size());
  for (const auto& t : turns) out.push_back(t.features);
  return out;
}

std::vector<SystemAct> DialogueLog::system_acts() const {
  std::vector<SystemAct> out;
  out.reserve(turns.size());
  for (const auto& t : turns) out.push_back(t.system_act);
  return out;
}

bool objective_success(const DialogueLog& log, const UserGoal& goal, const Ontology& ontology) {
  return objective_success(log.system_acts(), goal, ontology);
}

namespace {

json belief_to_json(const BeliefState& b, const Ontology& ontology) {
  json slots = json::object();
  for (std::size_t s = 0; s < b.slots.size(); ++s)
    slots[ontology.constraint_slots()[s]] = std::vector<double>(b.slots[s].data(), b.slots[s].data() + b.slots[s].size());
  json j{{"slots", slots}, {"requested", b.requested}, {"turn", b.turn_index}};
  j["offered"] = b.last_offered_venue ? json(*b.last_offered_venue) : json(nullptr);
  return j;
}

BeliefState belief_from_json(const json& j, const Ontology& ontology) {
  BeliefState b = initial_belief(ontology);
  for (std::size_t s = 0; s < b.slots.size(); ++s) {
    const auto v = j.at("slots").at(ontology.constraint_slots()[s]).get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(b.slots[s].size())) throw ParseError("belief slot size mismatch");
    b.slots[s] = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  b.requested = j.at("requested").get<std::vector<bool>>();
  b.turn_index = j.value("turn", std::size_t{0});
  if (j.contains("offered") && !j.at("offered").is_null()) b.last_offered_venue = j.at("offered").get<std::string>();
  return b;
}

}  // namespace

json dialogue_to_json(const DialogueLog& log, const Ontology& ontology) {
  json turns = json::array();
  for (const auto& t : log.turns) {
    json jt{{"hyps", t.hypotheses},
            {"belief", belief_to_json(t.belief, ontology)},
            {"action", summary_action_name(t.summary_action, ontology)},
            {"action_index", index_of(t.summary_action)},
            {"system", t.system_act},
            {"features", std::vector<double>(t.features.data(), t.features.data() + t.features.size())}};
    if (t.true_user_act) jt["user"] = *t.true_user_act;
    turns.push_back(std::move(jt));
  }
  json j{{"id", log.id}, {"turns", turns}, {"terminal", log.terminal}, {"n_turns", log.turn_count()}};
  if (log.goal) j["goal"] = *log.goal;
  if (log.objective) j["obj"] = *log.objective;
  if (log.subjective) j["subj"] = *log.subjective;
  return j;
}

DialogueLog dialogue_from_json(const json& j, const Ontology& ontology) {
  DialogueLog log;
  try {
    log.id = j.value("id", std::string());
    const std::size_t dim = feature_dimension(ontology);
    for (const auto& jt : j.at("turns")) {
      DialogueTurn t;
      if (jt.contains("user")) t.true_user_act = jt.at("user").get<UserAct>();
      t.hypotheses = jt.value("hyps", std::vector<SemanticHypothesis>{});
      if (jt.contains("belief")) t.belief = belief_from_json(jt.at("belief"), ontology);
      t.summary_action = summary_action_at(jt.at("action_index").get<std::size_t>());
      t.system_act = jt.at("system").get<SystemAct>();
      const auto f = jt.at("features").get<std::vector<double>>();
      if (f.size() != dim)
        throw ParseError("feature vector has " + std::to_string(f.size()) + " entries, expected " + std::to_string(dim));
      t.features = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
      log.turns.push_back(std::move(t));
    }
    log.terminal = j.value("terminal", true);
    if (j.contains("goal")) log.goal = j.at("goal").get<UserGoal>();
    if (j.contains("obj")) log.objective = j.at("obj").get<bool>();
    if (j.contains("subj")) log.subjective = j.at("subj").get<int>();
  } catch (const json::exception& e) {
    throw ParseError("dialogue '" + log.id + "': " + e.what());
  }
  if (log.turns.empty()) throw ParseError("dialogue '" + log.id + "' has no turns");
  return log;
}

void write_corpus(const std::filesystem::path& path, const std::vector<DialogueLog>& logs, const Ontology& ontology) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus " + path.string());
  for (const auto& log : logs) out << dialogue_to_json(log, ontology).dump() << '\n';
}

std::vector<DialogueLog> read_corpus(const std::filesystem::path& path, const Ontology& ontology) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus " + path.string());
  std::vector<DialogueLog> logs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    logs.push_back(dialogue_from_json(j, ontology));
  }
  return logs;
}

DialogueLog simulate_dialogue(const Ontology& ontology, const SimulationConfig& config, const ActionChooser& choose,
                              Rng& rng, std::string id) {
  Rng goal_rng(rng());
  Rng user_rng(rng());
  Rng channel_rng(rng());
  Rng feedback_rng(rng());

  DialogueLog log;
  log.id = std::move(id);
  const UserGoal goal = sample_goal(ontology, goal_rng, config.goals);
  AgendaState agenda = init_agenda(goal, user_rng);
  BeliefState belief = initial_belief(ontology);
  SystemAct sys{SystemActType::hello, {}, {}, {}, {}, false};

  for (std::size_t t = 0; t < config.max_turns; ++t) {
    const UserAct user = simulate_user_turn(goal, agenda, sys, ontology, user_rng);
    auto hyps = corrupt_act(user, config.noise, ontology, channel_rng);
    belief.turn_index = t;
    belief = update_belief(belief, hyps, ontology, config.tracker);

    DialogueTurn turn;
    turn.true_user_act = user;
    const bool user_left = user.type == UserActType::bye;
    if (user_left) {
      turn.summary_action = SummaryAction::bye;
    } else {
      turn.policy_state = policy_features(belief, ontology, config.tracker.salience);
      turn.summary_action = choose(turn.policy_state, belief);
    }
    turn.features = extract_turn_features(belief, hyps.front().act.type, turn.summary_action, t, config.max_turns,
                                          ontology);
    turn.belief = belief;
    turn.hypotheses = std::move(hyps);
    sys = execute_summary_action(turn.summary_action, belief, ontology, config.tracker.salience);
    turn.system_act = sys;
    log.turns.push_back(std::move(turn));
    if (user_left || sys.type == SystemActType::bye) break;
  }
  log.terminal = true;
  log.goal = goal;
  log.objective = objective_success(log, goal, ontology);
  log.subjective = subjective_feedback(*log.objective, config.noise, feedback_rng);
  return log;
}

std::vector<DialogueLog> simulate_corpus(const Ontology& ontology, const SimulationConfig& config, std::size_t count,
                                         std::uint64_t seed, double max_random_rate, const std::string& id_prefix) {
  std::vector<DialogueLog> logs;
  logs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, i));
    Rng policy_rng(rng());
    const double random_rate = max_random_rate * uniform01(policy_rng);
    auto choose = [&](const Vector&, const BeliefState& b) {
      if (bernoulli(policy_rng, random_rate)) return summary_action_at(uniform_index(policy_rng, kNumSummaryActions));
      return rule_based_action(b, ontology, config.tracker.salience);
    };
    logs.push_back(simulate_dialogue(ontology, config, choose, rng, id_prefix + "-" + std::to_string(i)));
  }
  return logs;
}

// ---------------------------------------------------------------------------
// Configuration

void to_json(json& j, const TrackerConfig& c) {
  j = json{{"evidence_weight", c.evidence_weight}, {"flag_threshold", c.flag_threshold}, {"salience", c.salience}};
}

void from_json(const json& j, TrackerConfig& c) {
  const TrackerConfig d;
  c.evidence_weight = j.value("evidence_weight", d.evidence_weight);
  c.flag_threshold = j.value("flag_threshold", d.flag_threshold);
  c.salience = j.value("salience", d.salience);
}

void to_json(json& j, const SimulationConfig& c) {
  j = json{{"noise", c.noise},
           {"goals",
            {{"satisfiable_probability", c.goals.satisfiable_probability},
             {"allow_alternatives_probability", c.goals.allow_alternatives_probability},
             {"max_constraints", c.goals.max_constraints},
             {"max_requests", c.goals.max_requests}}},
           {"tracker", c.tracker},
           {"max_turns", c.max_turns}};
}

void from_json(const json& j, SimulationConfig& c) {
  c = SimulationConfig{};
  if (j.contains("noise")) c.noise = j.at("noise").get<NoiseConfig>();
  if (j.contains("goals")) {
    const json& g = j.at("goals");
    auto& goals = c.goals;
    goals.satisfiable_probability = g.value("satisfiable_probability", goals.satisfiable_probability);
    goals.allow_alternatives_probability = g.value("allow_alternatives_probability", goals.allow_alternatives_probability);
    goals.max_constraints = g.value("max_constraints", goals.max_constraints);
    goals.max_requests = g.value("max_requests", goals.max_requests);
  }
  if (j.contains("tracker")) c.tracker = j.at("tracker").get<TrackerConfig>();
  c.max_turns = j.value("max_turns", c.max_turns);
  if (c.max_turns < 1 || c.max_turns > kMaxTurns)
    throw ValidationError("max_turns must lie in [1, " + std::to_string(kMaxTurns) + "]");
}

}  // namespace arl
