#include "arl/service.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "arl/harness.hpp"

namespace arl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Keyword understanding

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Whole-phrase search on a space-padded, punctuation-free copy of the text.
std::string normalise(const std::string& text) {
  std::string out = " ";
  for (char c : lower(text)) out += std::isalnum(static_cast<unsigned char>(c)) || c == '\'' ? c : ' ';
  out += ' ';
  std::string squeezed;
  for (char c : out)
    if (!(c == ' ' && !squeezed.empty() && squeezed.back() == ' ')) squeezed += c;
  return squeezed;
}

bool has_phrase(const std::string& norm, const std::string& phrase) { return norm.find(" " + phrase + " ") != std::string::npos; }

bool has_any(const std::string& norm, std::initializer_list<const char*> phrases) {
  return std::any_of(phrases.begin(), phrases.end(), [&](const char* p) { return has_phrase(norm, p); });
}

const std::map<std::string, std::vector<std::string>>& slot_words() {
  static const std::map<std::string, std::vector<std::string>> words{
      {"food", {"food", "cuisine", "type of food", "kind of food"}},
      {"area", {"area", "part of town", "location"}},
      {"pricerange", {"price", "price range", "pricerange", "cost"}},
      {"phone", {"phone", "phone number", "number", "telephone"}},
      {"addr", {"address", "addr", "where is it"}},
      {"postcode", {"postcode", "post code", "zip code"}},
  };
  return words;
}

const std::map<std::string, std::string>& value_synonyms() {
  static const std::map<std::string, std::string> syn{
      {"center", "centre"},     {"central", "centre"},    {"cheaply", "cheap"},       {"inexpensive", "cheap"},
      {"moderately", "moderate"}, {"mid priced", "moderate"}, {"pricey", "expensive"}, {"northern", "north"},
      {"southern", "south"},    {"eastern", "east"},      {"western", "west"},
  };
  return syn;
}

}  // namespace

std::vector<SemanticHypothesis> parse_user_text(const std::string& text, const Ontology& ontology,
                                                const std::optional<SystemAct>& context) {
  std::string norm = normalise(text);
  for (const auto& [from, to] : value_synonyms()) {
    const std::string pat = " " + from + " ";
    for (auto pos = norm.find(pat); pos != std::string::npos; pos = norm.find(pat, pos + 1))
      norm.replace(pos, pat.size(), " " + to + " ");
  }
  auto single = [](UserAct act) { return std::vector<SemanticHypothesis>{{std::move(act), 1.0}}; };

  if (has_any(norm, {"bye", "goodbye", "good bye"})) return single({UserActType::bye, {}});

  // constraint values, longest phrase first across all slots; a match is consumed so "north american"
  // does not also inform area=north
  std::vector<SlotValue> candidates;
  for (const auto& slot : ontology.constraint_slots())
    for (const auto& v : ontology.values(slot)) candidates.push_back({slot, v});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.value.size() > b.value.size(); });
  std::vector<SlotValue> informs;
  auto filled = [&](const std::string& slot) {
    return std::any_of(informs.begin(), informs.end(), [&](const SlotValue& sv) { return sv.slot == slot; });
  };
  for (const auto& c : candidates) {
    const std::string pat = " " + lower(c.value) + " ";
    const auto pos = norm.find(pat);
    if (pos == std::string::npos || filled(c.slot)) continue;
    informs.push_back(c);
    norm.replace(pos, pat.size(), " # ");
  }
  for (const auto& slot : ontology.constraint_slots()) {
    const auto words = slot_words().find(slot);
    if (filled(slot) || words == slot_words().end()) continue;
    for (const auto& w : words->second)
      if (has_phrase(norm, "any " + w) || has_phrase(norm, w + " doesn't matter") || has_phrase(norm, w + " does not matter")) {
        informs.push_back({slot, std::string(kDontCare)});
        break;
      }
  }
  // keep ontology slot order
  std::stable_sort(informs.begin(), informs.end(), [&](const SlotValue& a, const SlotValue& b) {
    const auto& cs = ontology.constraint_slots();
    return std::find(cs.begin(), cs.end(), a.slot) < std::find(cs.begin(), cs.end(), b.slot);
  });
  if (informs.empty() && has_any(norm, {"don't care", "dont care", "do not care", "doesn't matter", "does not matter"})) {
    // a bare "don't care" only makes sense as an answer to a slot question
    if (context && (context->type == SystemActType::request || context->type == SystemActType::select) &&
        ontology.is_constraint_slot(context->slot))
      return single({UserActType::inform, {{context->slot, std::string(kDontCare)}}});
    return single({UserActType::null, {}});
  }
  if (!informs.empty()) return single({UserActType::inform, std::move(informs)});

  std::vector<SlotValue> requests;
  for (const auto& slot : ontology.info_slots()) {
    const auto words = slot_words().find(slot);
    const std::vector<std::string> fallback{slot};
    for (const auto& w : words == slot_words().end() ? fallback : words->second)
      if (has_phrase(norm, w)) {
        requests.push_back({slot, ""});
        break;
      }
  }
  if (!requests.empty()) return single({UserActType::request, std::move(requests)});

  if (has_any(norm, {"anything else", "something else", "another one", "another", "alternative", "other options"}))
    return single({UserActType::reqalts, {}});
  if (has_any(norm, {"yes", "yeah", "yep", "right", "correct", "sure"})) return single({UserActType::affirm, {}});
  if (has_any(norm, {"no", "nope", "wrong", "not"})) return single({UserActType::negate, {}});
  return single({UserActType::null, {}});
}

// ---------------------------------------------------------------------------
// Templates

namespace {

std::string slot_phrase(const std::string& slot) {
  if (slot == "food") return "food";
  if (slot == "area") return "part of town";
  if (slot == "pricerange") return "price range";
  if (slot == "addr") return "address";
  if (slot == "phone") return "phone number";
  return slot;
}

std::string describe_constraint(const SlotValue& sv) {
  const bool any = sv.value == kDontCare;
  if (sv.slot == "food") return any ? "serving any kind of food" : "serving " + sv.value + " food";
  if (sv.slot == "area") return any ? "in any part of town" : "in the " + sv.value + " of town";
  if (sv.slot == "pricerange") return any ? "in any price range" : "in the " + sv.value + " price range";
  return sv.slot + " " + sv.value;
}

std::string join_phrases(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string render_system_act(const SystemAct& act, const Ontology&) {
  std::vector<std::string> parts;
  switch (act.type) {
    case SystemActType::hello:
      return "Hello, you can ask me for restaurants by food, area or price range. How can I help?";
    case SystemActType::request:
      if (act.slot == "food") return "What kind of food would you like?";
      if (act.slot == "area") return "Which part of town do you have in mind?";
      if (act.slot == "pricerange") return "Would you like something cheap, moderate or expensive?";
      return "What " + slot_phrase(act.slot) + " would you like?";
    case SystemActType::confirm: {
      const std::string v = act.values.empty() ? "" : act.values.front();
      if (v == kDontCare) return "You don't mind about the " + slot_phrase(act.slot) + ", is that right?";
      if (act.slot == "food") return "You are looking for " + v + " food, is that right?";
      if (act.slot == "area") return "You want somewhere in the " + v + ", is that right?";
      return "You want something " + v + ", is that right?";
    }
    case SystemActType::select: {
      std::string options;
      for (std::size_t i = 0; i < act.values.size(); ++i)
        options += (i == 0 ? "" : i + 1 == act.values.size() ? " or " : ", ") + act.values[i];
      return "Would you prefer " + options + "?";
    }
    case SystemActType::offer:
      for (const auto& it : act.items) parts.push_back(describe_constraint(it));
      return act.venue + (act.alternative ? " is another option" : " is a good match") +
             (parts.empty() ? "" : ", " + join_phrases(parts)) + ".";
    case SystemActType::inform_info:
      for (const auto& it : act.items) parts.push_back("the " + slot_phrase(it.slot) + " is " + it.value);
      return "For " + act.venue + ", " + (parts.empty() ? "I have no further details" : join_phrases(parts)) + ".";
    case SystemActType::no_venue:
      for (const auto& it : act.items) parts.push_back(describe_constraint(it));
      return std::string("Sorry, I can't find ") + (act.alternative ? "another " : "a ") + "restaurant" +
             (parts.empty() ? "" : " " + join_phrases(parts)) + ".";
    case SystemActType::repeat:
      return "Sorry, could you say that again?";
    case SystemActType::restart:
      return "Let's start over. What are you looking for?";
    case SystemActType::bye:
      return "Thanks for using the system. Goodbye.";
    case SystemActType::confirm_offer:
      return "Shall I go with " + act.venue + "?";
  }
  return format_act(act);
}

// ---------------------------------------------------------------------------
// Config

void ServiceConfig::validate() const {
  if (max_sessions < 1) throw ValidationError("service needs room for at least one session");
  if (!(idle_timeout_seconds > 0.0)) throw ValidationError("idle timeout must be positive");
  if (max_turns < 1) throw ValidationError("max_turns must be at least 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
  if (moving_average_window < 1) throw ValidationError("moving-average window must be at least 1");
}

void to_json(json& j, const ServiceConfig& c) {
  j = json{{"max_sessions", c.max_sessions},
           {"idle_timeout_seconds", c.idle_timeout_seconds},
           {"max_turns", c.max_turns},
           {"epsilon", c.epsilon},
           {"tracker", c.tracker},
           {"moving_average_window", c.moving_average_window},
           {"seed", c.seed},
           {"replay_cache", c.replay_cache}};
}

void from_json(const json& j, ServiceConfig& c) {
  c.max_sessions = j.value("max_sessions", c.max_sessions);
  c.idle_timeout_seconds = j.value("idle_timeout_seconds", c.idle_timeout_seconds);
  c.max_turns = j.value("max_turns", c.max_turns);
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("tracker")) c.tracker = j.at("tracker").get<TrackerConfig>();
  c.moving_average_window = j.value("moving_average_window", c.moving_average_window);
  c.seed = j.value("seed", c.seed);
  c.replay_cache = j.value("replay_cache", c.replay_cache);
  c.validate();
}

// ---------------------------------------------------------------------------
// Sessions

struct Service::Session {
  std::string id;
  DialogueLog log;
  BeliefState belief;
  Rng rng;
  double last_seen = 0.0;
  bool over = false;
  bool pending_feedback = false;
  Vector embedding;
  Prediction prediction;
  std::map<std::string, json> replies;  // message_id -> response
  std::deque<std::string> reply_order;
  std::optional<SystemAct> last_system_act;
};

json error_envelope(const std::string& code, const std::string& message, const std::string& session_id,
                    const json& message_id) {
  json e{{"type", "error"}, {"payload", {{"code", code}, {"message", message}}}};
  if (!session_id.empty()) e["session_id"] = session_id;
  if (!message_id.is_null()) e["message_id"] = message_id;
  return e;
}

namespace {

json envelope(const std::string& type, const std::string& session_id, json payload, const json& message_id = nullptr) {
  json e{{"type", type}, {"session_id", session_id}, {"payload", std::move(payload)}};
  if (!message_id.is_null()) e["message_id"] = message_id;
  return e;
}

json system_turn_payload(const SystemAct& act, const Ontology& ontology, std::size_t turn) {
  return json{{"text", render_system_act(act, ontology)}, {"act", act}, {"turn", turn}};
}

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string message_key(const json& id) { return id.is_string() ? "s:" + id.get<std::string>() : "j:" + id.dump(); }

}  // namespace

Service::Service(const Ontology& ontology, EncoderDecoderParams embedding, GpSarsa policy, ActiveRewardModel reward_model,
                 ServiceConfig cfg, Clock clock)
    : ontology_(ontology),
      embedding_(std::move(embedding)),
      policy_(std::move(policy)),
      reward_model_(std::move(reward_model)),
      cfg_(std::move(cfg)),
      clock_(clock ? std::move(clock) : Clock(steady_seconds)) {
  cfg_.validate();
  if (embedding_.feature_dim() != static_cast<Eigen::Index>(feature_dimension(ontology_)))
    throw ValidationError("embedding feature dimension does not match the ontology");
  if (reward_model_.classifier().size() > 0 &&
      reward_model_.classifier().embeddings().front().size() != embedding_.embedding_dim())
    throw ValidationError("reward pool embeddings do not match the embedding dimension");
  if (policy_.state_dim() != policy_feature_dimension() || policy_.num_actions() != kNumSummaryActions)
    throw ValidationError("policy shape does not match the dialogue manager");
}

Service::~Service() = default;

json Service::handle_text(const std::string& body) {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_envelope(wire_error::malformed, std::string("not valid JSON: ") + e.what());
  }
  return handle(request);
}

json Service::handle(const json& request) {
  std::lock_guard lock(mutex_);
  try {
    return dispatch(request);
  } catch (const ValidationError& e) {
    return error_envelope(wire_error::invalid_payload, e.what(), request.value("session_id", std::string()),
                          request.is_object() && request.contains("message_id") ? request["message_id"] : json());
  } catch (const std::exception& e) {
    spdlog::error("service: {}", e.what());
    return error_envelope(wire_error::internal, e.what());
  }
}

json Service::dispatch(const json& request) {
  expire_sessions();
  if (!request.is_object() || !request.contains("type") || !request["type"].is_string())
    return error_envelope(wire_error::malformed, "message must be an object with a string `type`");
  const json message_id = request.value("message_id", json());
  if (!message_id.is_null() && !message_id.is_string() && !message_id.is_number_integer())
    return error_envelope(wire_error::malformed, "message_id must be a string or integer");
  if (request.contains("payload") && !request["payload"].is_object())
    return error_envelope(wire_error::malformed, "payload must be an object", {}, message_id);
  const std::string type = request["type"].get<std::string>();

  if (type == "session_start") return start_session(request);
  if (type == "metrics_update") return envelope("metrics_update", request.value("session_id", std::string()), metrics_locked(), message_id);
  if (type != "user_turn" && type != "feedback_response")
    return error_envelope(wire_error::unknown_type, "unknown message type `" + type + "`", {}, message_id);

  if (!request.contains("session_id") || !request["session_id"].is_string())
    return error_envelope(wire_error::malformed, "`" + type + "` needs a session_id", {}, message_id);
  const std::string sid = request["session_id"].get<std::string>();
  const auto it = sessions_.find(sid);
  if (it == sessions_.end()) return error_envelope(wire_error::unknown_session, "no such session (expired?)", sid, message_id);
  Session& s = *it->second;
  s.last_seen = clock_();

  if (!message_id.is_null()) {
    const auto cached = s.replies.find(message_key(message_id));
    if (cached != s.replies.end()) return cached->second;
  }
  json response = type == "user_turn" ? user_turn(s, request) : feedback(s, request);
  if (!message_id.is_null()) {
    response["message_id"] = message_id;
    s.replies[message_key(message_id)] = response;
    s.reply_order.push_back(message_key(message_id));
    while (s.reply_order.size() > cfg_.replay_cache) {
      s.replies.erase(s.reply_order.front());
      s.reply_order.pop_front();
    }
  }
  return response;
}

json Service::start_session(const json& request) {
  const json message_id = request.value("message_id", json());
  if (!message_id.is_null()) {
    const auto cached = start_replies_.find(message_key(message_id));
    if (cached != start_replies_.end()) return cached->second;
  }
  if (active_sessions() >= cfg_.max_sessions)
    return error_envelope(wire_error::capacity, "session capacity exceeded", {}, message_id);

  auto s = std::make_unique<Session>();
  s->id = "s" + std::to_string(++session_counter_);
  s->rng = Rng(mix_seed(cfg_.seed, session_counter_));
  s->belief = initial_belief(ontology_);
  s->log.id = s->id;
  s->last_seen = clock_();
  const SystemAct greeting{SystemActType::hello, {}, {}, {}, {}, false};
  json payload{{"system_turn", system_turn_payload(greeting, ontology_, 0)},
               {"max_turns", cfg_.max_turns},
               {"question", kFeedbackQuestion}};
  s->last_system_act = greeting;
  json response = envelope("session_start", s->id, std::move(payload), message_id);
  sessions_[s->id] = std::move(s);
  if (!message_id.is_null()) {
    start_replies_[message_key(message_id)] = response;
    start_reply_order_.push_back(message_key(message_id));
    while (start_reply_order_.size() > cfg_.replay_cache * cfg_.max_sessions) {
      start_replies_.erase(start_reply_order_.front());
      start_reply_order_.pop_front();
    }
  }
  return response;
}

json Service::user_turn(Session& s, const json& request) {
  if (s.pending_feedback)
    return error_envelope(wire_error::feedback_pending, "answer the pending feedback request first", s.id);
  if (s.over) return error_envelope(wire_error::dialogue_over, "this dialogue has ended; start a new session", s.id);

  const json payload = request.value("payload", json::object());
  std::vector<SemanticHypothesis> hyps;
  if (payload.contains("hypotheses")) {
    hyps = payload["hypotheses"].get<std::vector<SemanticHypothesis>>();
  } else if (payload.contains("act")) {
    hyps = {{payload["act"].get<UserAct>(), 1.0}};
  } else if (payload.contains("text") && payload["text"].is_string()) {
    hyps = parse_user_text(payload["text"].get<std::string>(), ontology_, s.last_system_act);
  } else {
    return error_envelope(wire_error::invalid_payload, "user_turn needs `text`, `act` or `hypotheses`", s.id);
  }
  if (hyps.empty()) return error_envelope(wire_error::invalid_payload, "no hypotheses given", s.id);
  for (const auto& h : hyps) {
    if (!(h.confidence >= 0.0 && h.confidence <= 1.0))
      return error_envelope(wire_error::invalid_payload, "confidences must lie in [0, 1]", s.id);
    for (const auto& it : h.act.items) {
      const bool known = h.act.type == UserActType::request
                             ? ontology_.is_info_slot(it.slot)
                             : ontology_.is_constraint_slot(it.slot) &&
                                   (it.value == kDontCare || ontology_.value_index(it.slot, it.value).has_value());
      if (!known) return error_envelope(wire_error::invalid_payload, "unknown slot or value `" + it.slot + "`", s.id);
    }
  }
  std::stable_sort(hyps.begin(), hyps.end(), [](const auto& a, const auto& b) { return a.confidence > b.confidence; });

  const std::size_t t = s.log.turns.size();
  s.belief.turn_index = t;
  s.belief = update_belief(s.belief, hyps, ontology_, cfg_.tracker);
  DialogueTurn turn;
  const bool user_left = hyps.front().act.type == UserActType::bye;
  if (user_left) {
    turn.summary_action = SummaryAction::bye;
  } else {
    turn.policy_state = policy_features(s.belief, ontology_, cfg_.tracker.salience);
    turn.summary_action = summary_action_at(static_cast<std::size_t>(policy_.select_action(turn.policy_state, cfg_.epsilon, s.rng)));
  }
  turn.features = extract_turn_features(s.belief, hyps.front().act.type, turn.summary_action, t, cfg_.max_turns, ontology_);
  turn.belief = s.belief;
  turn.hypotheses = hyps;
  turn.system_act = execute_summary_action(turn.summary_action, s.belief, ontology_, cfg_.tracker.salience);
  const SystemAct sys = turn.system_act;
  s.last_system_act = sys;
  s.log.turns.push_back(std::move(turn));

  json hyp_json = json::array();
  for (const auto& h : hyps) hyp_json.push_back(h);
  json st = system_turn_payload(sys, ontology_, t + 1);
  st["hypotheses"] = hyp_json;
  st["summary_action"] = summary_action_name(s.log.turns.back().summary_action, ontology_);

  std::string reason;
  if (user_left) reason = "user_bye";
  else if (sys.type == SystemActType::bye) reason = "system_bye";
  else if (s.log.turns.size() >= cfg_.max_turns) reason = "turn_limit";
  if (reason.empty()) return envelope("system_turn", s.id, std::move(st));

  json end = finish_dialogue(s, reason);
  end["system_turn"] = std::move(st);
  emit("dialogue_end", s.id, end);
  if (end.contains("feedback_request")) emit("feedback_request", s.id, end["feedback_request"]);
  return envelope("dialogue_end", s.id, std::move(end));
}

json Service::finish_dialogue(Session& s, const std::string& reason) {
  s.over = true;
  s.log.terminal = true;
  s.embedding = encode_dialogue(embedding_, s.log.feature_sequence());
  s.prediction = reward_model_.predict(s.embedding);
  json out{{"reason", reason},
           {"turns", s.log.turn_count()},
           {"p_success", s.prediction.p_success},
           {"mu", s.prediction.mu_star},
           {"var", s.prediction.var_star},
           {"lambda", reward_model_.lambda()}};
  if (reward_model_.should_query(s.prediction)) {
    s.pending_feedback = true;
    out["queried"] = true;
    out["feedback_request"] = json{{"question", kFeedbackQuestion}, {"p_success", s.prediction.p_success}, {"options", {"success", "failure"}}};
  } else {
    const bool success = s.prediction.p_success >= 0.5;
    learn(s, success, false);
    out["queried"] = false;
    out["predicted_success"] = success;
    out["reward"] = reward_signal(success, s.log.turn_count(), reward_model_.config());
  }
  return out;
}

json Service::feedback(Session& s, const json& request) {
  if (!s.pending_feedback) return error_envelope(wire_error::no_pending_feedback, "no feedback request is pending", s.id);
  const json payload = request.value("payload", json::object());
  const std::string label = payload.value("label", std::string());
  if (label != "success" && label != "failure")
    return error_envelope(wire_error::invalid_payload, "label must be `success` or `failure`", s.id);
  const bool success = label == "success";
  reward_model_.add_label(s.embedding, success ? 1 : -1);
  s.pending_feedback = false;
  learn(s, success, true);
  json m = metrics_locked();
  m["reward"] = reward_signal(success, s.log.turn_count(), reward_model_.config());
  return envelope("metrics_update", s.id, std::move(m));
}

void Service::learn(Session& s, bool success, bool queried) {
  const double reward = reward_signal(success, s.log.turn_count(), reward_model_.config());
  update_policy(policy_, s.log, reward, reward_model_.config());
  ++agg_.policy_updates;
  ++agg_.dialogues;
  agg_.queries += queried ? 1 : 0;
  agg_.success_bits.push_back(success ? 1.0 : 0.0);
  agg_.cumulative_queries.push_back(static_cast<double>(agg_.queries));
  emit("metrics_update", {}, metrics_locked());
}

json Service::metrics_locked() const {
  const auto avg = moving_average(agg_.success_bits, cfg_.moving_average_window);
  return json{{"dialogues", agg_.dialogues},
              {"queries", agg_.queries},
              {"query_rate", agg_.dialogues ? static_cast<double>(agg_.queries) / static_cast<double>(agg_.dialogues) : 0.0},
              {"labels", reward_model_.labels()},
              {"lambda", reward_model_.lambda()},
              {"policy_updates", agg_.policy_updates},
              {"dictionary_size", policy_.dictionary_size()},
              {"success_moving_average", avg.empty() ? json(nullptr) : json(avg.back())},
              {"success_curve", avg},
              {"cumulative_queries", agg_.cumulative_queries},
              {"active_sessions", active_sessions()}};
}

json Service::metrics() const {
  std::lock_guard lock(mutex_);
  return metrics_locked();
}

std::size_t Service::active_sessions() const {
  return static_cast<std::size_t>(std::count_if(sessions_.begin(), sessions_.end(), [](const auto& kv) {
    return !kv.second->over || kv.second->pending_feedback;
  }));
}

void Service::expire_sessions() {
  const double now = clock_();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_seen > cfg_.idle_timeout_seconds) {
      spdlog::info("session {} expired after {:.0f} s idle", it->first, now - it->second->last_seen);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

void Service::emit(const std::string& type, const std::string& session_id, json payload) {
  json e = envelope(type, session_id, std::move(payload));
  e["seq"] = ++event_seq_;
  events_.push_back(std::move(e));
  while (events_.size() > 1024) events_.pop_front();
}

std::vector<json> Service::events_after(std::uint64_t after, const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  std::vector<json> out;
  for (const auto& e : events_) {
    if (e["seq"].get<std::uint64_t>() <= after) continue;
    const std::string sid = e["session_id"].get<std::string>();
    if (!sid.empty() && !session_id.empty() && sid != session_id) continue;
    out.push_back(e);
  }
  return out;
}

std::uint64_t Service::last_event() const {
  std::lock_guard lock(mutex_);
  return event_seq_;
}

GpSarsa Service::policy_snapshot() const {
  std::lock_guard lock(mutex_);
  return policy_;
}

ActiveRewardModel Service::reward_model_snapshot() const {
  std::lock_guard lock(mutex_);
  return reward_model_;
}

}  // namespace arl
