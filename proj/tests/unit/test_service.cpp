#include <gtest/gtest.h>

#include <fstream>
#include <memory>
#include <thread>

#include "arl/harness.hpp"
#include "arl/http.hpp"
#include "arl/service.hpp"
#include "test_support.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals
#include <httplib.h>

using namespace arl;
using arl::testing::bundled_ontology;
using nlohmann::json;

namespace {

const EncoderDecoderParams& tiny_embedding() {
  static const EncoderDecoderParams params = [] {
    EmbeddingConfig cfg;
    cfg.hidden = 6;
    cfg.max_epochs = 2;
    return pretrain_embedding(bundled_ontology(), SimulationConfig{}, 80, 5, cfg);
  }();
  return params;
}

struct Fixture {
  std::shared_ptr<double> now = std::make_shared<double>(0.0);
  std::unique_ptr<Service> service;

  explicit Fixture(ServiceConfig cfg = {}, ActiveLearningConfig al = {}) {
    GpSarsa policy(policy_feature_dimension(), kNumSummaryActions);
    ActiveRewardModel model(tiny_embedding().embedding_dim(), al);
    auto clock = now;
    service = std::make_unique<Service>(bundled_ontology(), tiny_embedding(), std::move(policy), std::move(model), cfg,
                                        [clock] { return *clock; });
  }

  std::string start() {
    const json r = service->handle({{"type", "session_start"}});
    EXPECT_EQ(r["type"], "session_start") << r.dump();
    return r["session_id"].get<std::string>();
  }

  json say(const std::string& sid, const std::string& text, json message_id = nullptr) {
    json req{{"type", "user_turn"}, {"session_id", sid}, {"payload", {{"text", text}}}};
    if (!message_id.is_null()) req["message_id"] = message_id;
    return service->handle(req);
  }

  json answer(const std::string& sid, const std::string& label, json message_id = nullptr) {
    json req{{"type", "feedback_response"}, {"session_id", sid}, {"payload", {{"label", label}}}};
    if (!message_id.is_null()) req["message_id"] = message_id;
    return service->handle(req);
  }
};

UserAct parse(const std::string& text, const std::optional<SystemAct>& context = std::nullopt) {
  const auto hyps = parse_user_text(text, bundled_ontology(), context);
  EXPECT_EQ(hyps.size(), 1u);
  EXPECT_DOUBLE_EQ(hyps.front().confidence, 1.0);
  return hyps.front().act;
}

std::string error_code(const json& r) {
  EXPECT_EQ(r["type"], "error") << r.dump();
  return r["payload"].value("code", std::string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Understanding and templates

TEST(ParseUserText, SingleFoodInform) {
  const UserAct act = parse("European food please");
  EXPECT_EQ(act.type, UserActType::inform);
  ASSERT_EQ(act.items.size(), 1u);
  EXPECT_EQ(act.items[0].slot, "food");
  EXPECT_EQ(act.items[0].value, "european");
}

TEST(ParseUserText, LongestValueWinsAndIsConsumed) {
  EXPECT_EQ(parse("modern european, please").items.at(0).value, "modern european");
  const UserAct act = parse("north american food in the south");
  ASSERT_EQ(act.items.size(), 2u);
  EXPECT_EQ(act.items[0].slot, "food");
  EXPECT_EQ(act.items[0].value, "north american");
  EXPECT_EQ(act.items[1].slot, "area");
  EXPECT_EQ(act.items[1].value, "south");
}

TEST(ParseUserText, SynonymsAndDontCare) {
  const UserAct act = parse("something cheap in the center, any food");
  ASSERT_EQ(act.items.size(), 3u);
  EXPECT_EQ(act.items[0].slot, "food");
  EXPECT_EQ(act.items[0].value, kDontCare);
  EXPECT_EQ(act.items[1].value, "centre");
  EXPECT_EQ(act.items[2].value, "cheap");
}

TEST(ParseUserText, BareDontCareNeedsAQuestion) {
  const SystemAct asked_area{SystemActType::request, "area", {}, {}, {}, false};
  const UserAct act = parse("I don't care", asked_area);
  ASSERT_EQ(act.items.size(), 1u);
  EXPECT_EQ(act.items[0].slot, "area");
  EXPECT_EQ(act.items[0].value, kDontCare);
  EXPECT_EQ(parse("I don't care").type, UserActType::null);
}

TEST(ParseUserText, RequestsAndDialogueActs) {
  const UserAct req = parse("what is the phone number and the address?");
  EXPECT_EQ(req.type, UserActType::request);
  ASSERT_EQ(req.items.size(), 2u);
  EXPECT_EQ(req.items[0].slot, "phone");
  EXPECT_EQ(req.items[1].slot, "addr");
  EXPECT_EQ(parse("thanks, goodbye").type, UserActType::bye);
  EXPECT_EQ(parse("is there anything else").type, UserActType::reqalts);
  EXPECT_EQ(parse("yes").type, UserActType::affirm);
  EXPECT_EQ(parse("no").type, UserActType::negate);
  EXPECT_EQ(parse("hello there").type, UserActType::null);
}

TEST(RenderSystemAct, EveryActRealises) {
  const auto& o = bundled_ontology();
  const std::vector<SystemAct> acts{
      {SystemActType::hello, {}, {}, {}, {}, false},
      {SystemActType::request, "food", {}, {}, {}, false},
      {SystemActType::confirm, "area", {"north"}, {}, {}, false},
      {SystemActType::confirm, "pricerange", {std::string(kDontCare)}, {}, {}, false},
      {SystemActType::select, "pricerange", {"cheap", "expensive"}, {}, {}, false},
      {SystemActType::select, "area", {"north"}, {}, {}, false},
      {SystemActType::offer, {}, {}, "the golden wok", {{"food", "chinese"}}, false},
      {SystemActType::inform_info, {}, {}, "the golden wok", {{"phone", "01223 000000"}}, false},
      {SystemActType::no_venue, {}, {}, {}, {{"food", "swiss"}, {"area", "east"}}, true},
      {SystemActType::repeat, {}, {}, {}, {}, false},
      {SystemActType::restart, {}, {}, {}, {}, false},
      {SystemActType::bye, {}, {}, {}, {}, false},
      {SystemActType::confirm_offer, {}, {}, "the golden wok", {}, false},
  };
  for (const auto& a : acts) {
    const std::string text = render_system_act(a, o);
    EXPECT_FALSE(text.empty());
    EXPECT_EQ(text.find('{'), std::string::npos) << text;
  }
  EXPECT_EQ(render_system_act(acts[4], o), "Would you prefer cheap or expensive?");
  EXPECT_NE(render_system_act(acts[6], o).find("the golden wok"), std::string::npos);
}

TEST(ServiceConfig, JsonRoundTripAndValidation) {
  ServiceConfig c;
  c.max_sessions = 3;
  c.idle_timeout_seconds = 12.5;
  c.epsilon = 0.1;
  const ServiceConfig back = json(c).get<ServiceConfig>();
  EXPECT_EQ(json(back), json(c));
  EXPECT_THROW(json({{"max_sessions", 0}}).get<ServiceConfig>(), ValidationError);
  EXPECT_THROW(json({{"epsilon", 2.0}}).get<ServiceConfig>(), ValidationError);
}

// ---------------------------------------------------------------------------
// Protocol

TEST(Service, HandshakeGreets) {
  Fixture f;
  const json r = f.service->handle({{"type", "session_start"}, {"message_id", "m1"}});
  EXPECT_EQ(r["type"], "session_start");
  EXPECT_EQ(r["message_id"], "m1");
  EXPECT_FALSE(r["session_id"].get<std::string>().empty());
  EXPECT_EQ(r["payload"]["system_turn"]["act"]["act"], "hello");
  EXPECT_EQ(r["payload"]["question"], std::string(kFeedbackQuestion));
  EXPECT_EQ(f.service->active_sessions(), 1u);
}

TEST(Service, UserTurnTracksTheParsedInform) {
  Fixture f;
  const std::string sid = f.start();
  const json r = f.say(sid, "european food please");
  ASSERT_EQ(r["type"], "system_turn") << r.dump();
  EXPECT_EQ(r["session_id"], sid);
  const json& hyp = r["payload"]["hypotheses"].at(0);
  EXPECT_EQ(hyp["act"], "inform");
  EXPECT_EQ(hyp["items"].at(0).at(1), "european");
  EXPECT_EQ(r["payload"]["turn"], 1);
  EXPECT_FALSE(r["payload"]["text"].get<std::string>().empty());
}

TEST(Service, StructuredInputIsAccepted) {
  Fixture f;
  const std::string sid = f.start();
  const json act = UserAct{UserActType::inform, {{"area", "north"}}};
  const json r = f.service->handle({{"type", "user_turn"}, {"session_id", sid}, {"payload", {{"act", act}}}});
  EXPECT_EQ(r["type"], "system_turn") << r.dump();
  const json bad = UserAct{UserActType::inform, {{"area", "atlantis"}}};
  EXPECT_EQ(error_code(f.service->handle({{"type", "user_turn"}, {"session_id", sid}, {"payload", {{"act", bad}}}})),
            wire_error::invalid_payload);
}

TEST(Service, SessionsAreIsolated) {
  Fixture f;
  const std::string a = f.start();
  const std::string b = f.start();
  EXPECT_NE(a, b);
  for (int i = 0; i < 3; ++i) f.say(a, "cheap food in the north");
  const json rb = f.say(b, "hello");
  EXPECT_EQ(rb["payload"]["turn"], 1);

  // b's reply matches the reply of a session that never saw a's turns
  Fixture fresh;
  const std::string c = fresh.start();
  EXPECT_EQ(fresh.say(c, "hello")["payload"]["act"], rb["payload"]["act"]);
}

TEST(Service, MalformedAndUnknownMessages) {
  Fixture f;
  EXPECT_EQ(error_code(f.service->handle_text("{not json")), wire_error::malformed);
  EXPECT_EQ(error_code(f.service->handle(json::array())), wire_error::malformed);
  EXPECT_EQ(error_code(f.service->handle({{"session_id", "s1"}})), wire_error::malformed);
  EXPECT_EQ(error_code(f.service->handle({{"type", "teleport"}})), wire_error::unknown_type);
  EXPECT_EQ(error_code(f.service->handle({{"type", "user_turn"}})), wire_error::malformed);
  EXPECT_EQ(error_code(f.service->handle({{"type", "user_turn"}, {"session_id", "nope"}})), wire_error::unknown_session);
  const std::string sid = f.start();
  EXPECT_EQ(error_code(f.service->handle({{"type", "user_turn"}, {"session_id", sid}, {"payload", json::object()}})),
            wire_error::invalid_payload);
  EXPECT_EQ(error_code(f.service->handle({{"type", "user_turn"}, {"session_id", sid}, {"payload", 3}})),
            wire_error::malformed);
  // errors leave the session usable
  EXPECT_EQ(f.say(sid, "hello")["type"], "system_turn");
}

TEST(Service, ByeEndsTheDialogueWithAFeedbackRequest) {
  Fixture f;  // lambda starts at 1, so the first dialogues are always queried
  const std::string sid = f.start();
  f.say(sid, "hello");
  const json r = f.say(sid, "bye");
  ASSERT_EQ(r["type"], "dialogue_end") << r.dump();
  EXPECT_EQ(r["payload"]["reason"], "user_bye");
  EXPECT_EQ(r["payload"]["turns"], 2);
  EXPECT_TRUE(r["payload"]["queried"].get<bool>());
  EXPECT_EQ(r["payload"]["feedback_request"]["question"], std::string(kFeedbackQuestion));
  EXPECT_DOUBLE_EQ(r["payload"]["p_success"].get<double>(), 0.5);
  EXPECT_EQ(r["payload"]["system_turn"]["act"]["act"], "bye");

  const auto events = f.service->events_after(0, sid);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0]["type"], "dialogue_end");
  EXPECT_EQ(events[1]["type"], "feedback_request");
}

TEST(Service, TurnLimitForcesTheEnd) {
  ServiceConfig cfg;
  cfg.max_turns = 30;
  Fixture f(cfg);
  const std::string sid = f.start();
  json r;
  for (int t = 1; t <= 30; ++t) {
    r = f.say(sid, "hello");
    if (t < 30) ASSERT_EQ(r["type"], "system_turn") << "turn " << t << ": " << r.dump();
  }
  ASSERT_EQ(r["type"], "dialogue_end");
  EXPECT_EQ(r["payload"]["reason"], "turn_limit");
  EXPECT_EQ(r["payload"]["turns"], 30);
}

TEST(Service, SuccessFeedbackRewardsTheFourTurnDialogue) {
  Fixture f;
  const std::string sid = f.start();
  f.say(sid, "european food");
  f.say(sid, "in the centre");
  f.say(sid, "cheap please");
  const json end = f.say(sid, "goodbye");
  ASSERT_EQ(end["type"], "dialogue_end");
  ASSERT_EQ(end["payload"]["turns"], 4);
  const json r = f.answer(sid, "success");
  ASSERT_EQ(r["type"], "metrics_update") << r.dump();
  EXPECT_DOUBLE_EQ(r["payload"]["reward"].get<double>(), 16.0);
  EXPECT_EQ(r["payload"]["labels"], 1);
  EXPECT_EQ(r["payload"]["policy_updates"], 1);
  EXPECT_EQ(r["payload"]["queries"], 1);
  EXPECT_GT(f.service->policy_snapshot().dictionary_size(), 0u);
  EXPECT_EQ(f.service->reward_model_snapshot().labels(), 1u);
}

TEST(Service, FailureLabelsLowerThePrediction) {
  Fixture f;
  std::vector<double> p;
  for (int i = 0; i < 3; ++i) {
    const std::string sid = f.start();
    const json end = f.say(sid, "bye");  // one-turn dialogue, identical every time
    ASSERT_TRUE(end["payload"]["queried"].get<bool>());
    p.push_back(end["payload"]["p_success"].get<double>());
    EXPECT_DOUBLE_EQ(f.answer(sid, "failure")["payload"]["reward"].get<double>(), -1.0);
  }
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_LT(p[1], p[0]);
  EXPECT_LT(p[2], p[1]);
}

TEST(Service, ConfidentPredictionSkipsTheQuestion) {
  ActiveLearningConfig al;
  al.lambda_start = al.lambda_end = 0.55;
  Fixture f({}, al);
  const std::string first = f.start();
  ASSERT_TRUE(f.say(first, "bye")["payload"]["queried"].get<bool>());  // empty pool: p = 0.5
  f.answer(first, "success");
  const std::string second = f.start();
  const json end = f.say(second, "bye");
  ASSERT_FALSE(end["payload"]["queried"].get<bool>()) << end.dump();
  EXPECT_TRUE(end["payload"]["predicted_success"].get<bool>());
  EXPECT_DOUBLE_EQ(end["payload"]["reward"].get<double>(), 19.0);
  EXPECT_EQ(f.service->metrics()["policy_updates"], 2);
  EXPECT_EQ(f.service->metrics()["queries"], 1);
  EXPECT_EQ(error_code(f.say(second, "hello")), wire_error::dialogue_over);
}

TEST(Service, DuplicateFeedbackIsRejected) {
  Fixture f;
  const std::string sid = f.start();
  f.say(sid, "bye");
  f.answer(sid, "success");
  EXPECT_EQ(error_code(f.answer(sid, "failure")), wire_error::no_pending_feedback);
  EXPECT_EQ(f.service->reward_model_snapshot().labels(), 1u);
  EXPECT_EQ(f.service->metrics()["policy_updates"], 1);
}

TEST(Service, PendingFeedbackBlocksTheDialogue) {
  Fixture f;
  const std::string sid = f.start();
  EXPECT_EQ(error_code(f.answer(sid, "success")), wire_error::no_pending_feedback);
  f.say(sid, "bye");
  EXPECT_EQ(error_code(f.say(sid, "hello")), wire_error::feedback_pending);
  EXPECT_EQ(error_code(f.answer(sid, "maybe")), wire_error::invalid_payload);
  EXPECT_EQ(f.answer(sid, "success")["type"], "metrics_update");
}

TEST(Service, CapacityCountsOnlyLiveSessions) {
  ServiceConfig cfg;
  cfg.max_sessions = 2;
  Fixture f(cfg);
  const std::string a = f.start();
  f.start();
  EXPECT_EQ(error_code(f.service->handle({{"type", "session_start"}})), wire_error::capacity);
  f.say(a, "bye");  // still live while the feedback is pending
  EXPECT_EQ(error_code(f.service->handle({{"type", "session_start"}})), wire_error::capacity);
  f.answer(a, "success");
  EXPECT_EQ(f.service->active_sessions(), 1u);
  EXPECT_EQ(f.service->handle({{"type", "session_start"}})["type"], "session_start");
}

TEST(Service, IdleSessionsExpire) {
  ServiceConfig cfg;
  cfg.idle_timeout_seconds = 60;
  Fixture f(cfg);
  const std::string a = f.start();
  const std::string b = f.start();
  *f.now = 45;
  f.say(b, "hello");  // b stays fresh
  *f.now = 100;
  EXPECT_EQ(error_code(f.say(a, "hello")), wire_error::unknown_session);
  EXPECT_EQ(f.say(b, "hello")["type"], "system_turn");
  EXPECT_EQ(f.service->active_sessions(), 1u);
}

TEST(Service, RetriedMessagesApplyOnce) {
  Fixture f;
  const json s1 = f.service->handle({{"type", "session_start"}, {"message_id", "start-1"}});
  const json s2 = f.service->handle({{"type", "session_start"}, {"message_id", "start-1"}});
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(f.service->active_sessions(), 1u);

  const std::string sid = s1["session_id"];
  const json t1 = f.say(sid, "european food", 7);
  const json t2 = f.say(sid, "european food", 7);
  EXPECT_EQ(t1, t2);
  EXPECT_EQ(f.say(sid, "hello", 8)["payload"]["turn"], 2);

  f.say(sid, "bye", 9);
  const json a1 = f.answer(sid, "success", "fb");
  const json a2 = f.answer(sid, "success", "fb");
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(f.service->reward_model_snapshot().labels(), 1u);
  EXPECT_EQ(f.service->metrics()["policy_updates"], 1);
}

TEST(Service, MetricsPollAndEventsAreSequenced) {
  Fixture f;
  const std::string sid = f.start();
  f.say(sid, "bye");
  f.answer(sid, "success");
  const json m = f.service->handle({{"type", "metrics_update"}});
  ASSERT_EQ(m["type"], "metrics_update");
  EXPECT_EQ(m["payload"]["dialogues"], 1);
  EXPECT_DOUBLE_EQ(m["payload"]["success_moving_average"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["payload"]["query_rate"].get<double>(), 1.0);

  const auto events = f.service->events_after(0);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events.back()["type"], "metrics_update");
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i]["seq"], i + 1);
  EXPECT_EQ(f.service->last_event(), 3u);
  EXPECT_TRUE(f.service->events_after(3).empty());
  EXPECT_EQ(f.service->events_after(0, "other").size(), 1u);  // only the global metrics event
}

TEST(Service, RejectsMismatchedComponents) {
  GpSarsa policy(policy_feature_dimension(), kNumSummaryActions);
  ActiveRewardModel wrong_dim(tiny_embedding().embedding_dim() + 1);
  wrong_dim.add_label(Vector::Zero(tiny_embedding().embedding_dim() + 1), 1);
  EXPECT_THROW(Service(bundled_ontology(), tiny_embedding(), policy, wrong_dim), ValidationError);
  ActiveRewardModel model(tiny_embedding().embedding_dim());
  EXPECT_THROW(Service(bundled_ontology(), tiny_embedding(), GpSarsa(3, 2), model), ValidationError);
}

// ---------------------------------------------------------------------------
// Transport

TEST(HttpFrontend, MessageRoundTripAndEventStream) {
  Fixture f;
  HttpFrontend http(*f.service);
  const int port = http.bind("127.0.0.1", 0);
  http.start();

  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/api/message", json{{"type", "session_start"}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const std::string sid = json::parse(res->body)["session_id"];

  res = client.Post("/api/message", json{{"type", "user_turn"}, {"session_id", sid}, {"payload", {{"text", "bye"}}}}.dump(),
                    "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["type"], "dialogue_end");

  res = client.Post("/api/message", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["payload"]["code"], wire_error::malformed);

  res = client.Get("/api/events?once=1&session_id=" + sid);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Content-Type"), "text/event-stream");
  EXPECT_NE(res->body.find("id: 1\nevent: dialogue_end\ndata: "), std::string::npos) << res->body;
  EXPECT_NE(res->body.find("event: feedback_request"), std::string::npos);

  // the live stream delivers an event published after the client connected
  std::string streamed;
  std::thread reader([&] {
    httplib::Client c2("127.0.0.1", port);
    c2.set_read_timeout(5, 0);
    c2.Get("/api/events?after=2", [&](const char* data, std::size_t n) {
      streamed.append(data, n);
      return streamed.find("\n\n") == std::string::npos;
    });
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  client.Post("/api/message",
              json{{"type", "feedback_response"}, {"session_id", sid}, {"payload", {{"label", "success"}}}}.dump(),
              "application/json");
  reader.join();
  EXPECT_NE(streamed.find("event: metrics_update"), std::string::npos) << streamed;

  res = client.Get("/api/metrics");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["labels"], 1);
  http.stop();
}

TEST(WireSchema, EnumsMatchTheImplementation) {
  std::ifstream in(std::string(ARL_DOCS_DIR) + "/wire_protocol.schema.json");
  ASSERT_TRUE(in);
  const json schema = json::parse(in);
  const auto types = schema["properties"]["type"]["enum"].get<std::vector<std::string>>();
  std::vector<std::string> codes;
  for (const auto& rule : schema["allOf"])
    if (rule["if"]["properties"]["type"]["const"] == "error")
      codes = rule["then"]["properties"]["payload"]["properties"]["code"]["enum"].get<std::vector<std::string>>();
  for (const char* code : {wire_error::malformed, wire_error::unknown_type, wire_error::unknown_session, wire_error::capacity,
                           wire_error::feedback_pending, wire_error::no_pending_feedback, wire_error::dialogue_over,
                           wire_error::invalid_payload, wire_error::internal})
    EXPECT_NE(std::find(codes.begin(), codes.end(), code), codes.end()) << code;

  // every envelope a short conversation produces uses a declared type
  Fixture f;
  const std::string sid = f.start();
  std::vector<json> seen{f.say(sid, "cheap"), f.say(sid, "bye"), f.answer(sid, "success"), f.answer(sid, "success")};
  for (const auto& e : f.service->events_after(0)) seen.push_back(e);
  for (const auto& e : seen)
    EXPECT_NE(std::find(types.begin(), types.end(), e["type"].get<std::string>()), types.end()) << e.dump();
}
