#pragma once

// Live learning loop behind a JSON message protocol: humans talk to the current policy, answer
// feedback prompts when the reward model is unsure, and watch training aggregates.
//
// Envelope: {"type", "session_id", "message_id", "payload"}. Client types and their responses:
//   session_start      -> session_start   (new session id + greeting in payload.system_turn)
//   user_turn          -> system_turn, or dialogue_end when the dialogue finishes
//   feedback_response  -> metrics_update
//   metrics_update     -> metrics_update  (read-only poll)
// Anything else, or a malformed message, yields an `error` envelope. Retrying a message with the
// same message_id returns the stored response without applying it twice.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arl/dialogue.hpp"
#include "arl/embedding.hpp"
#include "arl/policy.hpp"
#include "arl/reward_gp.hpp"

namespace arl {

inline constexpr std::string_view kFeedbackQuestion = "Did you find all the information you were looking for?";

/// Deterministic keyword matcher from free text to a single confident hypothesis. `context` is the
/// previous system act, used to resolve a bare "don't care".
std::vector<SemanticHypothesis> parse_user_text(const std::string& text, const Ontology& ontology,
                                                const std::optional<SystemAct>& context = std::nullopt);

/// Template realisation of a system act.
std::string render_system_act(const SystemAct& act, const Ontology& ontology);

struct ServiceConfig {
  std::size_t max_sessions = 64;
  double idle_timeout_seconds = 900.0;
  std::size_t max_turns = kMaxTurns;
  /// Exploration rate of the live policy.
  double epsilon = 0.0;
  TrackerConfig tracker;
  std::size_t moving_average_window = 150;
  std::uint64_t seed = 1;
  /// Responses remembered per session for retried message ids.
  std::size_t replay_cache = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const ServiceConfig& cfg);
void from_json(const nlohmann::json& j, ServiceConfig& cfg);

/// Error codes carried in error envelopes.
namespace wire_error {
inline constexpr const char* malformed = "malformed";
inline constexpr const char* unknown_type = "unknown_type";
inline constexpr const char* unknown_session = "unknown_session";
inline constexpr const char* capacity = "capacity_exceeded";
inline constexpr const char* feedback_pending = "feedback_pending";
inline constexpr const char* no_pending_feedback = "no_pending_feedback";
inline constexpr const char* dialogue_over = "dialogue_over";
inline constexpr const char* invalid_payload = "invalid_payload";
inline constexpr const char* internal = "internal";
}  // namespace wire_error

/// Reward shaping and the query threshold schedule come from the reward model's own config.
class Service {
 public:
  using Clock = std::function<double()>;  // seconds

  Service(const Ontology& ontology, EncoderDecoderParams embedding, GpSarsa policy, ActiveRewardModel reward_model,
          ServiceConfig cfg = {}, Clock clock = {});
  ~Service();

  /// Exactly one response envelope per request.
  nlohmann::json handle(const nlohmann::json& request);
  /// Parses raw text first; malformed JSON becomes an error envelope.
  nlohmann::json handle_text(const std::string& body);

  /// Server-initiated events (feedback_request, dialogue_end, metrics_update) with sequence numbers
  /// greater than `after`. A session id filters session-scoped events; metrics are always included.
  std::vector<nlohmann::json> events_after(std::uint64_t after, const std::string& session_id = {}) const;
  std::uint64_t last_event() const;

  nlohmann::json metrics() const;
  std::size_t active_sessions() const;

  /// Snapshot of the shared learners (for checkpointing).
  GpSarsa policy_snapshot() const;
  ActiveRewardModel reward_model_snapshot() const;

 private:
  struct Session;
  struct Aggregates {
    std::size_t dialogues = 0;
    std::size_t queries = 0;
    std::size_t policy_updates = 0;
    std::vector<double> success_bits;
    std::vector<double> cumulative_queries;
  };

  nlohmann::json dispatch(const nlohmann::json& request);
  nlohmann::json start_session(const nlohmann::json& request);
  nlohmann::json user_turn(Session& s, const nlohmann::json& request);
  nlohmann::json feedback(Session& s, const nlohmann::json& request);
  nlohmann::json finish_dialogue(Session& s, const std::string& reason);
  void learn(Session& s, bool success, bool queried);
  void expire_sessions();
  void emit(const std::string& type, const std::string& session_id, nlohmann::json payload);
  nlohmann::json metrics_locked() const;

  const Ontology& ontology_;
  EncoderDecoderParams embedding_;
  GpSarsa policy_;
  ActiveRewardModel reward_model_;
  ServiceConfig cfg_;
  Clock clock_;

  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::map<std::string, nlohmann::json> start_replies_;  // message_id -> session_start response
  std::deque<std::string> start_reply_order_;
  std::deque<nlohmann::json> events_;
  std::uint64_t event_seq_ = 0;
  std::uint64_t session_counter_ = 0;
  Aggregates agg_;
};

/// Error envelope helper.
nlohmann::json error_envelope(const std::string& code, const std::string& message, const std::string& session_id = {},
                              const nlohmann::json& message_id = nullptr);

}  // namespace arl
