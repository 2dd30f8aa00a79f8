#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "coeval/error.hpp"
#include "coeval/service.hpp"
#include "test_support.hpp"

using namespace coeval;
using nlohmann::json;
namespace ts = testing_support;

namespace {

std::shared_ptr<FunctionProvider> service_provider() {
  return std::make_shared<FunctionProvider>([](const CompletionRequest& r) {
    switch (r.prompt.kind) {
      case PromptKind::criteria_generation:
        return ts::reply("1. Coherence: The ending follows from the story.\n2. Fluency: The text reads smoothly.");
      case PromptKind::criterion_eval:
        if (r.prompt.text.find("Coherence") != std::string::npos) return ts::reply("1. Follows on.\n2. Score: 4");
        return ts::reply("1. Smooth.\n2. Score: 5");
      default: return ts::reply("1. Solid.\n2. Overall score: 4");
    }
  });
}

struct Reply {
  int status = 0;
  json body;
  httplib::Headers headers;
};

/// Test client. Every JSON reply is checked to parse and, when
/// COEVAL_RESPONSE_DUMP is set, written there tagged with its schema name.
class Api {
 public:
  explicit Api(int port) : client_("127.0.0.1", port) { client_.set_read_timeout(30, 0); }

  Reply get(const std::string& path, const std::string& token, const std::string& schema) {
    return wrap(client_.Get(path, auth(token)), schema);
  }
  Reply post(const std::string& path, const json& body, const std::string& token, const std::string& schema,
             httplib::Headers extra = {}) {
    auto h = auth(token);
    h.insert(extra.begin(), extra.end());
    return wrap(client_.Post(path, h, body.dump(), "application/json"), schema);
  }
  Reply post_raw(const std::string& path, const std::string& body, const std::string& content_type,
                 const std::string& token, const std::string& schema) {
    return wrap(client_.Post(path, auth(token), body, content_type), schema);
  }
  Reply patch(const std::string& path, const json& body, const std::string& token, const std::string& schema) {
    return wrap(client_.Patch(path, auth(token), body.dump(), "application/json"), schema);
  }
  httplib::Client& raw() { return client_; }

 private:
  static httplib::Headers auth(const std::string& token) {
    if (token.empty()) return {};
    return {{"Authorization", "Bearer " + token}};
  }

  Reply wrap(const httplib::Result& res, const std::string& schema) {
    EXPECT_TRUE(res) << "request failed for schema " << schema;
    if (!res) return {};
    Reply r{res->status, json::parse(res->body, nullptr, false), res->headers};
    EXPECT_FALSE(r.body.is_discarded()) << res->body;
    if (const char* dir = std::getenv("COEVAL_RESPONSE_DUMP")) {
      static std::atomic<int> counter{0};
      std::filesystem::create_directories(dir);
      const auto name = schema + "-" + std::to_string(counter++) + ".json";
      ts::write_file(std::filesystem::path(dir) / name,
                     json{{"schema", schema}, {"status", r.status}, {"body", r.body}}.dump(2));
    }
    return r;
  }

  httplib::Client client_;
};

ServiceConfig config() {
  ServiceConfig c;
  c.port = 0;
  c.tokens = {{"tok-expert", {Role::expert, "expert-1"}},
              {"tok-ann", {Role::annotator, "ann-1"}},
              {"tok-view", {Role::viewer, "viewer-1"}}};
  return c;
}

json task_body(int n) {
  json samples = json::array();
  for (int i = 1; i <= n; ++i)
    samples.push_back({{"input", "Story " + std::to_string(i)}, {"output", "Ending " + std::to_string(i)},
                       {"source", i % 2 ? "gpt-4" : "human_reference"}});
  return {{"description", "Write an ending for the story"},
          {"demo_input", "Tom lost his keys."},
          {"demo_output", "He found them in the fridge."},
          {"samples", samples}};
}

/// Workspace + service on an ephemeral port.
struct Fixture {
  ts::TempDir dir;
  Workspace ws;
  Service service;
  int port;
  Api api;

  Fixture()
      : ws([this] {
          WorkspaceOptions o;
          o.log_path = dir / "log.jsonl";
          o.clock = ts::fixed_clock();
          return o;
        }(),
           ts::gateway(service_provider()), ts::prompts()),
        service(ws, config()),
        port(service.start()),
        api(port) {}
};

Reply poll_until_done(Api& api, const std::string& path, const std::string& schema) {
  for (int i = 0; i < 400; ++i) {
    auto r = api.get(path, "tok-view", schema);
    if (r.status != 202) return r;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ADD_FAILURE() << path << " never finished";
  return {};
}

/// Drafts criteria for t1, approves everything and finalizes d1-det.
std::string prepared_set(Fixture& f) {
  EXPECT_EQ(f.api.post("/tasks", task_body(3), "tok-expert", "task_created").status, 201);
  EXPECT_EQ(f.api.post("/tasks/t1/criteria/draft", {{"n_samples", 2}}, "tok-expert", "draft_accepted").status, 202);
  EXPECT_EQ(poll_until_done(f.api, "/drafts/d1", "draft_batch").status, 200);
  const auto set = f.api.get("/criteria-sets/d1-det", "tok-view", "criteria_set").body;
  for (const auto& c : set.at("criteria"))
    f.api.post("/criteria-sets/d1-det/actions",
               {{"kind", "approve"}, {"target", {{"type", "criterion"}, {"criterion_id", c.at("id")}}}}, "tok-expert",
               "criteria_set");
  EXPECT_EQ(f.api.post("/criteria-sets/d1-det/finalize", json::object(), "tok-expert", "criteria_set").status, 200);
  return "d1-det";
}

}  // namespace

TEST(ServiceApi, HealthAuthAndUnknownRoutes) {
  Fixture f;
  EXPECT_EQ(f.api.get("/health", "", "health").status, 200);

  const auto anon = f.api.get("/tasks/t1", "", "error");
  EXPECT_EQ(anon.status, 401);
  EXPECT_EQ(anon.body.at("code"), "Unauthorized");
  EXPECT_EQ(f.api.get("/tasks/t1", "wrong", "error").status, 401);

  const auto viewer_write = f.api.post("/tasks", task_body(1), "tok-view", "error");
  EXPECT_EQ(viewer_write.status, 403);
  EXPECT_EQ(viewer_write.body.at("code"), "Forbidden");

  const auto missing = f.api.get("/tasks/t9", "tok-view", "error");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body.at("code"), "NotFound");
  EXPECT_TRUE(missing.body.contains("message"));
  EXPECT_TRUE(missing.body.contains("details"));

  EXPECT_EQ(f.api.get("/no/such/route", "tok-view", "error").status, 404);
  EXPECT_EQ(f.api.post_raw("/tasks", "{not json", "application/json", "tok-expert", "error").status, 400);
}

TEST(ServiceApi, RoleMatrixForFinalizing) {
  Fixture f;
  ASSERT_EQ(f.api.post("/tasks", task_body(2), "tok-expert", "task_created").status, 201);
  ASSERT_EQ(f.api.post("/tasks/t1/criteria/draft", {{"n_samples", 2}}, "tok-expert", "draft_accepted").status, 202);
  ASSERT_EQ(poll_until_done(f.api, "/drafts/d1", "draft_batch").status, 200);

  const auto annotator = f.api.post("/criteria-sets/d1-det/finalize", json::object(), "tok-ann", "error");
  EXPECT_EQ(annotator.status, 403);

  const auto drafts_left = f.api.post("/criteria-sets/d1-det/finalize", json::object(), "tok-expert", "error");
  EXPECT_EQ(drafts_left.status, 422);
  EXPECT_EQ(drafts_left.body.at("code"), "DraftCriteriaRemain");
  EXPECT_EQ(drafts_left.body.at("details").at("criterion_ids").size(), 2u);
}

TEST(ServiceApi, EndToEndAgainstTheMockProvider) {
  Fixture f;
  const auto set_id = prepared_set(f);

  const auto again = f.api.post("/criteria-sets/d1-det/actions",
                                {{"kind", "approve"}, {"target", {{"type", "criterion"}, {"criterion_id", "d1-det-c1"}}}},
                                "tok-expert", "error");
  EXPECT_EQ(again.status, 409);

  const auto drafts = f.api.get("/tasks/t1/criteria/draft", "tok-view", "task_drafts");
  ASSERT_EQ(drafts.status, 200);
  EXPECT_EQ(drafts.body.at("batches").size(), 1u);
  EXPECT_DOUBLE_EQ(drafts.body.at("batches")[0].at("batch").at("consistency").at("cc").get<double>(), 1.0);

  const auto rates = f.api.get("/criteria-sets/d1-det/alignment", "tok-view", "alignment");
  EXPECT_EQ(rates.status, 200);
  EXPECT_DOUBLE_EQ(rates.body.at("rates").at("approval").get<double>(), 1.0);

  const auto created =
      f.api.post("/runs", {{"task", "t1"}, {"criteria_set", set_id}, {"mode", "step_by_step_human"}}, "tok-expert",
                 "run_accepted");
  ASSERT_EQ(created.status, 202);
  const auto run_id = created.body.at("run").at("id").get<std::string>();
  f.service.wait_idle();

  const auto run = f.api.get("/runs/" + run_id, "tok-view", "run_status");
  EXPECT_EQ(run.body.at("counts").at("llm_drafted"), 3);
  EXPECT_EQ(run.body.at("running"), false);

  const auto list = f.api.get("/runs/" + run_id + "/evaluations", "tok-view", "evaluation_list");
  ASSERT_EQ(list.body.at("evaluations").size(), 3u);
  const auto eval_id = run_id + "-s1";
  const auto links = f.api.get("/evaluations/" + eval_id, "tok-view", "evaluation_links");
  EXPECT_EQ(links.body.at("draft"), "/evaluations/" + eval_id + "/draft");
  EXPECT_TRUE(links.body.at("final").is_null());
  EXPECT_EQ(f.api.get("/evaluations/" + eval_id + "/final", "tok-view", "error").status, 404);

  const auto draft = f.api.get("/evaluations/" + eval_id + "/draft", "tok-view", "sample_evaluation");
  EXPECT_EQ(draft.body.at("overall_score"), 4);

  const json bad_edit{{"edits",
                       {{{"kind", "edit_score"},
                         {"target", {{"type", "cell"}, {"sample_id", "s1"}, {"criterion_id", "d1-det-c1"}}},
                         {"new_score", 9}}}}};
  const auto off_scale = f.api.patch("/evaluations/" + eval_id, bad_edit, "tok-ann", "error");
  EXPECT_EQ(off_scale.status, 422);
  EXPECT_EQ(off_scale.body.at("code"), "ScoreOutOfScale");

  EXPECT_EQ(f.api.patch("/evaluations/" + eval_id, json::object(), "tok-expert", "error").status, 403);

  json edit = bad_edit;
  edit["edits"][0]["new_score"] = 3;
  const auto finalized = f.api.patch("/evaluations/" + eval_id, edit, "tok-ann", "sample_evaluation");
  ASSERT_EQ(finalized.status, 200);
  EXPECT_EQ(finalized.body.at("version").at("kind"), "human_final");
  EXPECT_EQ(finalized.body.at("criterion_evals")[0].at("score"), 3);
  EXPECT_EQ(f.api.patch("/evaluations/" + eval_id, json::object(), "tok-ann", "error").status, 409);

  const auto final_version = f.api.get("/evaluations/" + eval_id + "/final", "tok-view", "sample_evaluation");
  EXPECT_EQ(final_version.status, 200);
  EXPECT_EQ(f.api.get("/evaluations/" + eval_id + "/draft", "tok-view", "sample_evaluation").body, draft.body);

  std::string csv = "item,rater,score\n";
  for (const auto* s : {"s1", "s2", "s3"})
    for (const auto* r : {"h1", "h2", "h3"}) csv += std::string(s) + "/overall," + r + "," + (std::string(s) == "s2" ? "2" : "4") + "\n";
  csv += "s1/Coherence,h1,3\n";
  const auto imported = f.api.post_raw("/runs/" + run_id + "/human-scores", csv, "text/csv", "tok-ann", "scores_imported");
  EXPECT_EQ(imported.status, 200);
  EXPECT_EQ(imported.body.at("imported"), 10);

  for (const auto* kind : {"correlations", "agreement", "distribution", "behavior"}) {
    const auto report = f.api.get("/reports/" + run_id + "/" + kind, "tok-view", std::string("report_") + kind);
    EXPECT_EQ(report.status, 200) << kind;
    EXPECT_FALSE(report.body.empty()) << kind;
  }
  const auto behavior = f.api.get("/reports/" + run_id + "/behavior", "tok-view", "report_behavior");
  EXPECT_EQ(behavior.body.at("records").size(), 2u);
  const auto nominal = f.api.get("/reports/" + run_id + "/agreement?metric=nominal", "tok-view", "report_agreement");
  EXPECT_EQ(nominal.body.at("metric"), "nominal");
}

TEST(ServiceApi, IdempotencyKeyReplaysTheFirstResponse) {
  Fixture f;
  const httplib::Headers key{{"Idempotency-Key", "abc-123"}};
  const auto first = f.api.post("/tasks", task_body(1), "tok-expert", "task_created", key);
  const auto second = f.api.post("/tasks", task_body(1), "tok-expert", "task_created", key);
  EXPECT_EQ(first.status, 201);
  EXPECT_EQ(second.status, 201);
  EXPECT_EQ(first.body, second.body);
  EXPECT_EQ(second.headers.count("Idempotent-Replayed"), 1u);
  EXPECT_EQ(f.ws.snapshot().tasks.size(), 1u);

  const auto other = f.api.post("/tasks", task_body(1), "tok-expert", "task_created", {{"Idempotency-Key", "abc-124"}});
  EXPECT_EQ(other.body.at("id"), "t2");
}

TEST(ServiceApi, EventStreamReportsProgressAndCompletion) {
  Fixture f;
  const auto set_id = prepared_set(f);
  const auto created =
      f.api.post("/runs", {{"task", "t1"}, {"criteria_set", set_id}, {"mode", "step_by_step"}}, "tok-expert", "run_accepted");
  ASSERT_EQ(created.status, 202);
  const auto run_id = created.body.at("run").at("id").get<std::string>();

  std::string stream;
  const auto res = f.api.raw().Get("/runs/" + run_id + "/events", {{"Authorization", "Bearer tok-view"}},
                                   [&](const char* data, std::size_t n) {
                                     stream.append(data, n);
                                     return true;
                                   });
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "text/event-stream");
  std::size_t progress = 0;
  for (auto pos = stream.find("event: progress"); pos != std::string::npos; pos = stream.find("event: progress", pos + 1))
    ++progress;
  EXPECT_EQ(progress, 3u);
  const auto done = stream.find("event: done\ndata: ");
  ASSERT_NE(done, std::string::npos);
  const auto line_end = stream.find('\n', done + 12);
  const auto payload = json::parse(stream.substr(done + 18, line_end - done - 18));
  EXPECT_EQ(payload.at("counts").at("llm_drafted"), 3);
  f.service.wait_idle();

  // A finished run streams a single snapshot event to late subscribers.
  const auto late = f.api.raw().Get("/runs/" + run_id + "/events", {{"Authorization", "Bearer tok-view"}});
  ASSERT_TRUE(late);
  EXPECT_NE(late->body.find("event: done"), std::string::npos);
  EXPECT_EQ(f.api.raw().Get("/runs/" + run_id + "/events")->status, 401);
}

TEST(ServiceApi, ErrorStatusMapping) {
  EXPECT_EQ(http_status_for(Errc::score_out_of_scale), 422);
  EXPECT_EQ(http_status_for(Errc::set_already_finalized), 409);
  EXPECT_EQ(http_status_for(Errc::draft_criteria_remain), 422);
  EXPECT_EQ(http_status_for(Errc::unauthorized), 401);
  EXPECT_EQ(http_status_for(Errc::forbidden), 403);
  EXPECT_EQ(http_status_for(Errc::storage_full), 507);
  EXPECT_EQ(http_status_for(Errc::rate_limited), 502);
  const auto env = error_envelope(Error(Errc::unknown_cell, "no such cell", {{"cell", "s1/x"}}));
  EXPECT_EQ(env, (json{{"code", "UnknownCell"}, {"message", "no such cell"}, {"details", {{"cell", "s1/x"}}}}));

  const auto cfg = parse_service_config(
      json{{"host", "0.0.0.0"}, {"port", 9000}, {"tokens", {{"abc", {{"role", "annotator"}, {"actor", "a1"}}}}}});
  EXPECT_EQ(cfg.host, "0.0.0.0");
  EXPECT_EQ(cfg.port, 9000);
  EXPECT_EQ(cfg.tokens.at("abc").role, Role::annotator);
  EXPECT_THROW(parse_role("admin"), Error);
}
