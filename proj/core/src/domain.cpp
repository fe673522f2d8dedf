#include "arl/domain.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace arl {

using nlohmann::json;

const std::string& Venue::value(const std::string& slot) const {
  auto it = slot_values.find(slot);
  if (it == slot_values.end()) throw ValidationError("venue '" + name + "' has no slot '" + slot + "'");
  return it->second;
}

Ontology::Ontology(std::string name, std::vector<std::string> constraint_slots,
                   std::vector<std::string> info_slots,
                   std::map<std::string, std::vector<std::string>> slot_values, std::vector<Venue> venues)
    : name_(std::move(name)),
      constraint_slots_(std::move(constraint_slots)),
      info_slots_(std::move(info_slots)),
      slot_values_(std::move(slot_values)),
      venues_(std::move(venues)) {
  if (constraint_slots_.size() != 3) throw ValidationError("ontology must have exactly 3 constraint slots");
  if (info_slots_.size() != 3) throw ValidationError("ontology must have exactly 3 info slots");
  if (venues_.empty()) throw ValidationError("ontology has no venues");
  std::set<std::string> all_slots;
  for (const auto& s : constraint_slots_) all_slots.insert(s);
  for (const auto& s : info_slots_) all_slots.insert(s);
  if (all_slots.size() != 6) throw ValidationError("slot names must be distinct");
  for (const auto& s : constraint_slots_) {
    auto it = slot_values_.find(s);
    if (it == slot_values_.end() || it->second.empty())
      throw ValidationError("constraint slot '" + s + "' has no value list");
    std::set<std::string> unique(it->second.begin(), it->second.end());
    if (unique.size() != it->second.size()) throw ValidationError("duplicate values in slot '" + s + "'");
    if (unique.count(std::string(kDontCare))) throw ValidationError("'dontcare' is reserved");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < venues_.size(); ++i) {
    const Venue& v = venues_[i];
    const std::string where = "venue #" + std::to_string(i) + " ('" + v.name + "')";
    if (v.name.empty()) throw ValidationError(where + ": empty name");
    if (!names.insert(v.name).second) throw ValidationError(where + ": duplicate name");
    for (const auto& s : all_slots) {
      auto it = v.slot_values.find(s);
      if (it == v.slot_values.end() || it->second.empty())
        throw ValidationError(where + ": missing slot '" + s + "'");
    }
    for (const auto& s : constraint_slots_) {
      if (!value_index(s, v.slot_values.at(s)))
        throw ValidationError(where + ": value '" + v.slot_values.at(s) + "' not in slot '" + s + "'");
    }
  }
}

const std::vector<std::string>& Ontology::values(const std::string& slot) const {
  auto it = slot_values_.find(slot);
  if (it == slot_values_.end()) throw ValidationError("unknown constraint slot '" + slot + "'");
  return it->second;
}

bool Ontology::is_constraint_slot(const std::string& slot) const {
  return constraint_slot_index(slot).has_value();
}

bool Ontology::is_info_slot(const std::string& slot) const { return info_slot_index(slot).has_value(); }

std::optional<std::size_t> Ontology::constraint_slot_index(const std::string& slot) const {
  auto it = std::find(constraint_slots_.begin(), constraint_slots_.end(), slot);
  if (it == constraint_slots_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - constraint_slots_.begin());
}

std::optional<std::size_t> Ontology::info_slot_index(const std::string& slot) const {
  auto it = std::find(info_slots_.begin(), info_slots_.end(), slot);
  if (it == info_slots_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - info_slots_.begin());
}

std::optional<std::size_t> Ontology::value_index(const std::string& slot, const std::string& value) const {
  auto it = slot_values_.find(slot);
  if (it == slot_values_.end()) return std::nullopt;
  auto jt = std::find(it->second.begin(), it->second.end(), value);
  if (jt == it->second.end()) return std::nullopt;
  return static_cast<std::size_t>(jt - it->second.begin());
}

const Venue* Ontology::find_venue(const std::string& name) const {
  for (const auto& v : venues_)
    if (v.name == name) return &v;
  return nullptr;
}

bool Ontology::satisfies(const Venue& venue, const Constraints& constraints) {
  for (const auto& [slot, value] : constraints) {
    if (value == kDontCare) continue;
    auto it = venue.slot_values.find(slot);
    if (it == venue.slot_values.end() || it->second != value) return false;
  }
  return true;
}

std::vector<const Venue*> Ontology::matching(const Constraints& constraints) const {
  std::vector<const Venue*> out;
  for (const auto& v : venues_)
    if (satisfies(v, constraints)) out.push_back(&v);
  return out;
}

Ontology ontology_from_json(const json& doc) {
  auto fail = [](const std::string& what) { throw ParseError("domain file: " + what); };
  if (!doc.is_object()) fail("top level must be an object");
  for (const char* key : {"constraint_slots", "info_slots", "slot_values", "venues"})
    if (!doc.contains(key)) fail(std::string("missing key '") + key + "'");
  std::vector<std::string> constraint_slots, info_slots;
  std::map<std::string, std::vector<std::string>> slot_values;
  try {
    constraint_slots = doc.at("constraint_slots").get<std::vector<std::string>>();
    info_slots = doc.at("info_slots").get<std::vector<std::string>>();
    slot_values = doc.at("slot_values").get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    fail(std::string("slot schema: ") + e.what());
  }
  if (!doc.at("venues").is_array()) fail("'venues' must be an array");
  std::vector<Venue> venues;
  std::size_t i = 0;
  for (const auto& rec : doc.at("venues")) {
    if (!rec.is_object() || !rec.contains("name") || !rec.at("name").is_string())
      fail("venue #" + std::to_string(i) + ": expected an object with a string 'name'");
    Venue v;
    v.name = rec.at("name").get<std::string>();
    for (const auto& [key, value] : rec.items()) {
      if (key == "name") continue;
      if (!value.is_string()) fail("venue #" + std::to_string(i) + " ('" + v.name + "'): slot '" + key + "' is not a string");
      v.slot_values[key] = value.get<std::string>();
    }
    venues.push_back(std::move(v));
    ++i;
  }
  return Ontology(doc.value("name", std::string("domain")), std::move(constraint_slots), std::move(info_slots),
                  std::move(slot_values), std::move(venues));
}

Ontology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open domain file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("domain file " + path.string() + ": " + e.what());
  }
  return ontology_from_json(doc);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kUserActNames[] = {"inform", "request", "confirm", "affirm",
                                              "negate", "reqalts", "bye",     "null"};
constexpr std::string_view kSystemActNames[] = {"hello",    "request", "confirm", "select",
                                                "offer",    "inform",  "novenue", "repeat",
                                                "restart",  "bye",     "confirmoffer"};

}  // namespace

std::string_view to_string(UserActType type) { return kUserActNames[static_cast<int>(type)]; }

UserActType user_act_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNumUserActTypes; ++i)
    if (kUserActNames[i] == name) return static_cast<UserActType>(i);
  throw ParseError("unknown user act type '" + std::string(name) + "'");
}

std::string_view to_string(SystemActType type) { return kSystemActNames[static_cast<int>(type)]; }

SystemActType system_act_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kSystemActNames); ++i)
    if (kSystemActNames[i] == name) return static_cast<SystemActType>(i);
  throw ParseError("unknown system act type '" + std::string(name) + "'");
}

std::string format_act(const UserAct& act) {
  std::ostringstream os;
  os << to_string(act.type) << '(';
  for (std::size_t i = 0; i < act.items.size(); ++i) {
    if (i) os << ',';
    os << act.items[i].slot;
    if (!act.items[i].value.empty()) os << '=' << act.items[i].value;
  }
  os << ')';
  return os.str();
}

std::string format_act(const SystemAct& act) {
  std::ostringstream os;
  os << to_string(act.type) << '(';
  bool first = true;
  auto sep = [&] {
    if (!first) os << ',';
    first = false;
  };
  if (!act.venue.empty()) {
    sep();
    os << "name=" << act.venue;
  }
  if (!act.slot.empty()) {
    sep();
    os << act.slot;
    if (!act.values.empty()) {
      os << '=';
      for (std::size_t i = 0; i < act.values.size(); ++i) os << (i ? "|" : "") << act.values[i];
    }
  }
  for (const auto& it : act.items) {
    sep();
    os << it.slot << '=' << it.value;
  }
  os << ')';
  return os.str();
}

void to_json(json& j, const SlotValue& sv) { j = json::array({sv.slot, sv.value}); }

void from_json(const json& j, SlotValue& sv) {
  if (j.is_array() && j.size() == 2) {
    sv.slot = j[0].get<std::string>();
    sv.value = j[1].get<std::string>();
  } else if (j.is_object()) {
    sv.slot = j.at("slot").get<std::string>();
    sv.value = j.value("value", std::string());
  } else {
    throw ParseError("slot-value must be [slot, value] or {slot, value}");
  }
}

void to_json(json& j, const UserAct& act) {
  j = json{{"act", to_string(act.type)}, {"items", act.items}};
}

void from_json(const json& j, UserAct& act) {
  act.type = user_act_type_from_string(j.at("act").get<std::string>());
  act.items = j.value("items", std::vector<SlotValue>{});
}

void to_json(json& j, const SemanticHypothesis& h) {
  j = json(h.act);
  j["conf"] = h.confidence;
}

void from_json(const json& j, SemanticHypothesis& h) {
  h.act = j.get<UserAct>();
  h.confidence = j.value("conf", 1.0);
}

void to_json(json& j, const SystemAct& act) {
  j = json{{"act", to_string(act.type)}};
  if (!act.slot.empty()) j["slot"] = act.slot;
  if (!act.values.empty()) j["values"] = act.values;
  if (!act.venue.empty()) j["venue"] = act.venue;
  if (!act.items.empty()) j["items"] = act.items;
  if (act.alternative) j["alternative"] = true;
}

void from_json(const json& j, SystemAct& act) {
  act.type = system_act_type_from_string(j.at("act").get<std::string>());
  act.slot = j.value("slot", std::string());
  act.values = j.value("values", std::vector<std::string>{});
  act.venue = j.value("venue", std::string());
  act.items = j.value("items", std::vector<SlotValue>{});
  act.alternative = j.value("alternative", false);
}

void to_json(json& j, const UserGoal& goal) {
  j = json{{"constraints", goal.constraints},
           {"requests", goal.requests},
           {"allow_alternatives", goal.allow_alternatives},
           {"satisfiable", goal.satisfiable}};
}

void from_json(const json& j, UserGoal& goal) {
  goal.constraints = j.at("constraints").get<Constraints>();
  goal.requests = j.at("requests").get<std::vector<std::string>>();
  goal.allow_alternatives = j.value("allow_alternatives", false);
  goal.satisfiable = j.value("satisfiable", true);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<std::string> random_subset(std::vector<std::string> pool, std::size_t n, Rng& rng) {
  shuffle_in_place(pool, rng);
  pool.resize(std::min(n, pool.size()));
  return pool;
}

}  // namespace

UserGoal sample_goal(const Ontology& ontology, Rng& rng, const GoalConfig& config) {
  UserGoal goal;
  const std::size_t n_requests = 1 + uniform_index(rng, config.max_requests);
  const bool want_satisfiable = bernoulli(rng, config.satisfiable_probability);
  goal.allow_alternatives = bernoulli(rng, config.allow_alternatives_probability);

  if (want_satisfiable) {
    const std::size_t n_constraints = 1 + uniform_index(rng, config.max_constraints);
    const Venue& target = ontology.venues()[uniform_index(rng, ontology.venues().size())];
    for (const auto& slot : random_subset(ontology.constraint_slots(), n_constraints, rng))
      goal.constraints[slot] = target.value(slot);
    goal.satisfiable = true;
  } else {
    // single-slot goals are always satisfiable in any ontology where every value is used
    constexpr int kMaxTries = 1000;
    const std::size_t lo = std::min<std::size_t>(2, config.max_constraints);
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
      const std::size_t n_constraints = lo + uniform_index(rng, config.max_constraints - lo + 1);
      Constraints c;
      for (const auto& slot : random_subset(ontology.constraint_slots(), n_constraints, rng)) {
        const auto& vals = ontology.values(slot);
        c[slot] = vals[uniform_index(rng, vals.size())];
      }
      if (ontology.matching(c).empty()) {
        goal.constraints = std::move(c);
        goal.satisfiable = false;
        break;
      }
    }
    if (goal.constraints.empty()) throw ValidationError("ontology admits no unsatisfiable goal");
  }

  std::vector<std::string> requests;
  for (const auto& slot : random_subset(ontology.info_slots(), n_requests, rng)) requests.push_back(slot);
  // keep ontology order so goals print stably
  for (const auto& s : ontology.info_slots())
    if (std::find(requests.begin(), requests.end(), s) != requests.end()) goal.requests.push_back(s);
  return goal;
}

AgendaState init_agenda(const UserGoal& goal, Rng& rng) {
  AgendaState agenda;
  for (const auto& [slot, value] : goal.constraints) agenda.pending_informs.push_back({slot, value});
  shuffle_in_place(agenda.pending_informs, rng);
  agenda.pending_requests = goal.requests;
  return agenda;
}

namespace {

std::optional<std::string> goal_value(const UserGoal& goal, const std::string& slot) {
  auto it = goal.constraints.find(slot);
  if (it == goal.constraints.end()) return std::nullopt;
  return it->second;
}

void drop_pending_inform(AgendaState& agenda, const std::string& slot) {
  auto& p = agenda.pending_informs;
  p.erase(std::remove_if(p.begin(), p.end(), [&](const SlotValue& sv) { return sv.slot == slot; }), p.end());
}

/// First constraint (ontology order) violated by the venue, if any.
std::optional<std::string> violated_slot(const UserGoal& goal, const Venue& venue, const Ontology& ontology) {
  for (const auto& slot : ontology.constraint_slots()) {
    auto g = goal_value(goal, slot);
    if (g && venue.value(slot) != *g) return slot;
  }
  return std::nullopt;
}

UserAct inform_all_constraints(const UserGoal& goal) {
  UserAct act{UserActType::inform, {}};
  for (const auto& [slot, value] : goal.constraints) act.items.push_back({slot, value});
  return act;
}

UserAct request_remaining(const AgendaState& agenda) {
  UserAct act{UserActType::request, {}};
  for (const auto& s : agenda.pending_requests) act.items.push_back({s, ""});
  return act;
}

UserAct pop_informs(const UserGoal& goal, AgendaState& agenda, Rng& rng) {
  if (agenda.pending_informs.empty()) {
    if (agenda.accepted_venue && !agenda.pending_requests.empty()) return request_remaining(agenda);
    return inform_all_constraints(goal);
  }
  const std::size_t n = 1 + uniform_index(rng, std::min<std::size_t>(2, agenda.pending_informs.size()));
  UserAct act{UserActType::inform, {}};
  for (std::size_t i = 0; i < n; ++i) {
    act.items.push_back(agenda.pending_informs.back());
    agenda.pending_informs.pop_back();
  }
  return act;
}

UserAct reject_venue(const UserGoal& goal, AgendaState& agenda, const std::string& slot, Rng& rng) {
  const auto& p = agenda.pending_informs;
  const bool never_stated =
      std::any_of(p.begin(), p.end(), [&](const SlotValue& sv) { return sv.slot == slot; });
  drop_pending_inform(agenda, slot);
  if (never_stated) return UserAct{UserActType::inform, {{slot, *goal_value(goal, slot)}}};
  if (bernoulli(rng, 0.5)) return UserAct{UserActType::reqalts, {}};
  return UserAct{UserActType::negate, {{slot, *goal_value(goal, slot)}}};
}

UserAct respond(const UserGoal& goal, AgendaState& agenda, const SystemAct& sys, const Ontology& ontology,
                Rng& rng) {
  switch (sys.type) {
    case SystemActType::bye:
      agenda.finished = true;
      return UserAct{UserActType::bye, {}};

    case SystemActType::hello:
      return pop_informs(goal, agenda, rng);

    case SystemActType::request: {
      drop_pending_inform(agenda, sys.slot);
      auto g = goal_value(goal, sys.slot);
      return UserAct{UserActType::inform, {{sys.slot, g ? *g : std::string(kDontCare)}}};
    }

    case SystemActType::confirm: {
      auto g = goal_value(goal, sys.slot);
      const std::string asked = sys.values.empty() ? std::string() : sys.values.front();
      if (!g) return UserAct{UserActType::affirm, {}};
      drop_pending_inform(agenda, sys.slot);
      if (asked == *g) return UserAct{UserActType::affirm, {}};
      return UserAct{UserActType::negate, {{sys.slot, *g}}};
    }

    case SystemActType::select: {
      drop_pending_inform(agenda, sys.slot);
      auto g = goal_value(goal, sys.slot);
      return UserAct{UserActType::inform, {{sys.slot, g ? *g : std::string(kDontCare)}}};
    }

    case SystemActType::offer:
    case SystemActType::confirm_offer:
    case SystemActType::inform_info: {
      const Venue* venue = ontology.find_venue(sys.venue);
      if (!venue) return UserAct{UserActType::reqalts, {}};
      if (auto bad = violated_slot(goal, *venue, ontology)) return reject_venue(goal, agenda, *bad, rng);
      const bool fresh = agenda.accepted_venue != venue->name;
      if (fresh && goal.allow_alternatives && !agenda.asked_alternatives) {
        agenda.asked_alternatives = true;
        agenda.fallback_venue = venue->name;
        return UserAct{UserActType::reqalts, {}};
      }
      if (fresh) {
        agenda.accepted_venue = venue->name;
        agenda.pending_requests = goal.requests;
      }
      agenda.pending_informs.clear();
      if (sys.type == SystemActType::inform_info) {
        auto& pr = agenda.pending_requests;
        for (const auto& it : sys.items) pr.erase(std::remove(pr.begin(), pr.end(), it.slot), pr.end());
      }
      if (sys.type == SystemActType::confirm_offer && fresh) return UserAct{UserActType::affirm, {}};
      if (agenda.pending_requests.empty()) {
        agenda.finished = true;
        return UserAct{UserActType::bye, {}};
      }
      return request_remaining(agenda);
    }

    case SystemActType::no_venue: {
      for (const auto& it : sys.items) {
        auto g = goal_value(goal, it.slot);
        if (g && *g != it.value) {
          drop_pending_inform(agenda, it.slot);
          return UserAct{UserActType::negate, {{it.slot, *g}}};
        }
      }
      Constraints stated;
      for (const auto& it : sys.items) stated[it.slot] = it.value;
      if (!goal.satisfiable && !stated.empty() && ontology.matching(stated).empty()) {
        agenda.finished = true;
        return UserAct{UserActType::bye, {}};
      }
      UserAct act{UserActType::inform, {}};
      for (const auto& [slot, value] : goal.constraints)
        if (!stated.count(slot)) act.items.push_back({slot, value});
      if (act.items.empty()) {
        if (agenda.fallback_venue && !agenda.accepted_venue) {
          // nothing else on offer: settle for the venue heard first
          agenda.accepted_venue = agenda.fallback_venue;
          agenda.pending_requests = goal.requests;
          return request_remaining(agenda);
        }
        return UserAct{UserActType::reqalts, {}};
      }
      for (const auto& it : act.items) drop_pending_inform(agenda, it.slot);
      return act;
    }

    case SystemActType::repeat:
      return agenda.last_act;

    case SystemActType::restart: {
      Rng local(rng());
      AgendaState fresh = init_agenda(goal, local);
      fresh.asked_alternatives = agenda.asked_alternatives;
      agenda = std::move(fresh);
      return pop_informs(goal, agenda, rng);
    }
  }
  return UserAct{};
}

}  // namespace

UserAct simulate_user_turn(const UserGoal& goal, AgendaState& agenda, const SystemAct& system_act,
                           const Ontology& ontology, Rng& rng) {
  if (agenda.finished) return UserAct{UserActType::bye, {}};
  UserAct act = respond(goal, agenda, system_act, ontology, rng);
  if (system_act.type != SystemActType::repeat) agenda.last_act = act;
  return act;
}

// ---------------------------------------------------------------------------

void NoiseConfig::validate() const {
  if (!(semantic_error_rate >= 0.0 && semantic_error_rate <= 1.0))
    throw ValidationError("semantic_error_rate must lie in [0,1]");
  if (!(feedback_flip_rate >= 0.0 && feedback_flip_rate <= 1.0))
    throw ValidationError("feedback_flip_rate must lie in [0,1]");
  if (n_best < 1) throw ValidationError("n_best must be positive");
}

void to_json(json& j, const NoiseConfig& cfg) {
  j = json{{"semantic_error_rate", cfg.semantic_error_rate},
           {"n_best", cfg.n_best},
           {"seed", cfg.confusion_seed},
           {"feedback_flip_rate", cfg.feedback_flip_rate}};
}

void from_json(const json& j, NoiseConfig& cfg) {
  cfg.semantic_error_rate = j.value("semantic_error_rate", cfg.semantic_error_rate);
  cfg.n_best = j.value("n_best", cfg.n_best);
  cfg.confusion_seed = j.value("seed", cfg.confusion_seed);
  cfg.feedback_flip_rate = j.value("feedback_flip_rate", cfg.feedback_flip_rate);
  cfg.validate();
}

UserAct confuse_act(const UserAct& act, const Ontology& ontology, Rng& rng) {
  const bool substitute = bernoulli(rng, 0.5);
  switch (act.type) {
    case UserActType::inform:
    case UserActType::negate:
    case UserActType::confirm: {
      if (substitute && !act.items.empty()) {
        UserAct out = act;
        SlotValue& sv = out.items[uniform_index(rng, out.items.size())];
        if (ontology.is_constraint_slot(sv.slot)) {
          const auto& vals = ontology.values(sv.slot);
          std::vector<const std::string*> others;
          for (const auto& v : vals)
            if (v != sv.value) others.push_back(&v);
          if (!others.empty()) {
            sv.value = *others[uniform_index(rng, others.size())];
            return out;
          }
        }
      }
      return UserAct{};
    }
    case UserActType::request: {
      if (substitute && !act.items.empty()) {
        UserAct out = act;
        SlotValue& sv = out.items[uniform_index(rng, out.items.size())];
        std::vector<const std::string*> others;
        for (const auto& s : ontology.info_slots()) {
          const bool present = std::any_of(out.items.begin(), out.items.end(),
                                           [&](const SlotValue& x) { return x.slot == s; });
          if (!present) others.push_back(&s);
        }
        if (!others.empty()) {
          sv.slot = *others[uniform_index(rng, others.size())];
          return out;
        }
      }
      return UserAct{};
    }
    case UserActType::null:
      return UserAct{UserActType::affirm, {}};
    case UserActType::affirm:
    case UserActType::reqalts:
    case UserActType::bye:
      return UserAct{};
  }
  return UserAct{};
}

std::vector<SemanticHypothesis> corrupt_act(const UserAct& act, const NoiseConfig& cfg, const Ontology& ontology,
                                            Rng& rng) {
  if (cfg.n_best < 1) throw ValidationError("n_best must be positive");
  const bool error = bernoulli(rng, cfg.semantic_error_rate);
  std::vector<SemanticHypothesis> out;
  if (!error) {
    if (cfg.semantic_error_rate <= 0.0) return {{act, 1.0}};
    const double top = 0.55 + 0.45 * uniform01(rng);
    out.push_back({act, top});
  } else {
    const double top = 0.5 + 0.35 * uniform01(rng);
    out.push_back({confuse_act(act, ontology, rng), top});
    if (cfg.n_best >= 2) out.push_back({act, (1.0 - top) * (0.5 + 0.5 * uniform01(rng))});
  }
  double used = 0.0;
  for (const auto& h : out) used += h.confidence;
  while (out.size() < cfg.n_best) {
    const double residual = (1.0 - used) * (0.3 + 0.4 * uniform01(rng));
    if (residual < 1e-3 || residual > out.back().confidence) break;
    out.push_back({confuse_act(act, ontology, rng), residual});
    used += residual;
  }
  return out;
}

bool objective_success(const std::vector<SystemAct>& system_acts, const UserGoal& goal, const Ontology& ontology) {
  if (!goal.satisfiable) {
    for (const auto& act : system_acts) {
      if (act.type != SystemActType::no_venue) continue;
      Constraints stated;
      bool consistent = true;
      for (const auto& it : act.items) {
        auto g = goal.constraints.find(it.slot);
        if (g == goal.constraints.end() || g->second != it.value) consistent = false;
        stated[it.slot] = it.value;
      }
      if (consistent && !stated.empty() && ontology.matching(stated).empty()) return true;
    }
    return false;
  }
  std::map<std::string, std::set<std::string>> answered;  // venue -> info slots given
  std::set<std::string> offered;
  for (const auto& act : system_acts) {
    if (act.venue.empty()) continue;
    if (act.type == SystemActType::offer || act.type == SystemActType::inform_info ||
        act.type == SystemActType::confirm_offer)
      offered.insert(act.venue);
    if (act.type == SystemActType::inform_info)
      for (const auto& it : act.items) answered[act.venue].insert(it.slot);
  }
  for (const auto& name : offered) {
    const Venue* v = ontology.find_venue(name);
    if (!v || !Ontology::satisfies(*v, goal.constraints)) continue;
    const auto& given = answered[name];
    if (std::all_of(goal.requests.begin(), goal.requests.end(),
                    [&](const std::string& r) { return given.count(r) > 0; }))
      return true;
  }
  return false;
}

int subjective_feedback(bool objective, const NoiseConfig& cfg, Rng& rng) {
  const int label = objective ? 1 : -1;
  return bernoulli(rng, cfg.feedback_flip_rate) ? -label : label;
}

}  // namespace arl
