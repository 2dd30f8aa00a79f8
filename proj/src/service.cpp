#include "coeval/service.hpp"

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "coeval/serialize.hpp"

namespace coeval {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::expert: return "expert";
    case Role::annotator: return "annotator";
    case Role::viewer: return "viewer";
  }
  return "?";
}

Role parse_role(std::string_view s) {
  if (s == "expert") return Role::expert;
  if (s == "annotator") return Role::annotator;
  if (s == "viewer") return Role::viewer;
  throw Error(Errc::invalid_argument, "unknown role: " + std::string(s));
}

ServiceConfig parse_service_config(const json& j) {
  ServiceConfig c;
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  if (j.contains("tokens"))
    for (const auto& [token, s] : j.at("tokens").items())
      c.tokens[token] = ApiSession{parse_role(s.at("role").get<std::string>()), s.value("actor", token)};
  return c;
}

int http_status_for(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::schema_violation:
      return 400;
    case Errc::unauthorized: return 401;
    case Errc::forbidden: return 403;
    case Errc::not_found: return 404;
    case Errc::conflict:
    case Errc::set_already_finalized:
    case Errc::already_run:
    case Errc::log_locked:
      return 409;
    case Errc::transport:
    case Errc::rate_limited:
    case Errc::provider_rejected:
    case Errc::truncated:
    case Errc::dimension_mismatch:
      return 502;
    case Errc::storage_full: return 507;
    case Errc::io_error:
    case Errc::corrupt_record:
      return 500;
    default: return 422;
  }
}

json error_envelope(const Error& e) {
  return json{{"code", to_string(e.code())}, {"message", e.what()}, {"details", e.details()}};
}

namespace {

struct RunChannel {
  std::mutex mutex;
  std::condition_variable cv;
  std::vector<std::pair<std::string, json>> events;  // (event name, data)
  bool done = false;
};

struct DraftJob {
  std::string task_id;
  std::string status = "running";
  std::optional<json> error;
  int http_status = 200;
};

struct CachedResponse {
  int status;
  std::string body;
  std::string content_type;
};

const std::set<Role> kAnyRole{Role::expert, Role::annotator, Role::viewer};

json status_counts(const EvaluationRun& run) {
  json counts = json::object();
  for (auto s : {SampleState::pending, SampleState::llm_drafted, SampleState::human_finalized, SampleState::failed})
    counts[std::string(to_string(s))] = 0;
  for (const auto& st : run.statuses) counts[std::string(to_string(st.state))] = counts[std::string(to_string(st.state))].get<int>() + 1;
  return counts;
}

}  // namespace

struct Service::Impl {
  Workspace& ws;
  ServiceConfig config;
  httplib::Server server;
  std::thread listener;

  std::mutex jobs_mutex;
  std::vector<std::thread> jobs;
  std::map<std::string, DraftJob> drafts;
  std::map<std::string, std::shared_ptr<RunChannel>> channels;
  std::set<std::string> active_runs;

  std::mutex idem_mutex;
  std::map<std::string, CachedResponse> idempotent;

  using Handler = std::function<void(const httplib::Request&, httplib::Response&, const ApiSession&)>;

  Impl(Workspace& w, ServiceConfig c) : ws(w), config(std::move(c)) { routes(); }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) { send_json(res, http_status_for(e.code()), error_envelope(e)); }

  static json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_argument, std::string("request body is not valid JSON: ") + e.what());
    }
  }

  std::optional<ApiSession> authenticate(const httplib::Request& req) const {
    const auto header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.rfind(prefix, 0) != 0) return std::nullopt;
    const auto it = config.tokens.find(header.substr(prefix.size()));
    if (it == config.tokens.end()) return std::nullopt;
    return it->second;
  }

  httplib::Server::Handler wrap(std::set<Role> allowed, Handler handler) {
    return [this, allowed = std::move(allowed), handler = std::move(handler)](const httplib::Request& req,
                                                                               httplib::Response& res) {
      const auto session = authenticate(req);
      if (!session) {
        send_error(res, Error(Errc::unauthorized, "missing or unknown bearer token"));
        return;
      }
      if (!allowed.count(session->role)) {
        send_error(res, Error(Errc::forbidden, "role " + std::string(to_string(session->role)) + " may not call " +
                                                   req.method + " " + req.path));
        return;
      }

      std::string idem_key;
      if (req.method != "GET" && req.has_header("Idempotency-Key")) {
        idem_key = req.get_header_value("Authorization") + "\n" + req.method + "\n" + req.path + "\n" +
                   req.get_header_value("Idempotency-Key");
        std::lock_guard lock(idem_mutex);
        if (auto it = idempotent.find(idem_key); it != idempotent.end()) {
          res.status = it->second.status;
          res.set_content(it->second.body, it->second.content_type);
          res.set_header("Idempotent-Replayed", "true");
          return;
        }
      }

      try {
        handler(req, res, *session);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const json::exception& e) {
        send_error(res, Error(Errc::invalid_argument, std::string("malformed request: ") + e.what()));
      } catch (const std::exception& e) {
        spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
        send_json(res, 500, json{{"code", "Internal"}, {"message", e.what()}, {"details", json::object()}});
      }

      if (!idem_key.empty() && res.status < 500) {
        std::lock_guard lock(idem_mutex);
        idempotent.emplace(idem_key, CachedResponse{res.status, res.body, res.get_header_value("Content-Type")});
      }
    };
  }

  void spawn(std::function<void()> job) {
    std::lock_guard lock(jobs_mutex);
    jobs.emplace_back(std::move(job));
  }

  void publish(const std::shared_ptr<RunChannel>& ch, std::string name, json data, bool done = false) {
    {
      std::lock_guard lock(ch->mutex);
      ch->events.emplace_back(std::move(name), std::move(data));
      ch->done = ch->done || done;
    }
    ch->cv.notify_all();
  }

  json batch_payload(const State& s, const DraftBatch& b) {
    json sets = json::array({s.set(b.deterministic_set_id)});
    for (const auto& id : b.sampled_set_ids) sets.push_back(s.set(id));
    return json{{"status", "done"}, {"batch", b}, {"sets", sets}};
  }

  json evaluation_links(const State& s, const std::string& id) {
    return json{{"id", id},
                {"sample_id", s.draft(id).sample_id},
                {"draft", "/evaluations/" + id + "/draft"},
                {"final", s.finals.count(id) ? json("/evaluations/" + id + "/final") : json(nullptr)}};
  }

  void routes() {
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::info(json{{"method", req.method}, {"path", req.path}, {"status", res.status}}.dump());
    });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"status", "ok"}});
    });

    server.Post("/tasks", wrap({Role::expert}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      auto body = body_json(req);
      if (!body.contains("id")) body["id"] = "";
      if (body.contains("samples"))
        for (std::size_t i = 0; i < body["samples"].size(); ++i)
          if (!body["samples"][i].contains("id")) body["samples"][i]["id"] = "s" + std::to_string(i + 1);
      const auto id = ws.import_task(body.get<Task>());
      send_json(res, 201, json{{"id", id}, {"task", ws.read([&](const State& s) { return s.task(id); })}});
    }));

    server.Get(R"(/tasks/([^/]+))", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      send_json(res, 200, json(ws.read([&](const State& s) { return s.task(req.matches[1]); })));
    }));

    server.Post(R"(/tasks/([^/]+)/criteria/draft)", wrap({Role::expert}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string task_id = req.matches[1];
      const auto body = body_json(req);
      const int n = body.value("n_samples", 10);
      const double temperature = body.value("temperature", 0.7);
      ws.read([&](const State& s) { return s.task(task_id).id; });  // 404 early
      const auto batch_id = ws.reserve_batch_id();
      {
        std::lock_guard lock(jobs_mutex);
        drafts[batch_id] = DraftJob{task_id, "running", std::nullopt, 200};
      }
      spawn([this, task_id, n, temperature, batch_id] {
        DraftJob result{task_id, "done", std::nullopt, 200};
        try {
          ws.draft_criteria(task_id, n, temperature, batch_id);
        } catch (const Error& e) {
          result.status = "failed";
          result.error = error_envelope(e);
          result.http_status = http_status_for(e.code());
        } catch (const std::exception& e) {
          result.status = "failed";
          result.error = json{{"code", "Internal"}, {"message", e.what()}, {"details", json::object()}};
          result.http_status = 500;
        }
        std::lock_guard lock(jobs_mutex);
        drafts[batch_id] = std::move(result);
      });
      send_json(res, 202, json{{"batch_id", batch_id}, {"status", "running"}, {"href", "/drafts/" + batch_id}});
    }));

    server.Get(R"(/tasks/([^/]+)/criteria/draft)", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string task_id = req.matches[1];
      const auto body = ws.read([&](const State& s) {
        s.task(task_id);
        json batches = json::array();
        for (const auto& [id, b] : s.batches)
          if (b.task_id == task_id) batches.push_back(batch_payload(s, b));
        return json{{"task_id", task_id}, {"batches", batches}};
      });
      send_json(res, 200, body);
    }));

    server.Get(R"(/drafts/([^/]+))", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string id = req.matches[1];
      std::optional<DraftJob> job;
      {
        std::lock_guard lock(jobs_mutex);
        if (auto it = drafts.find(id); it != drafts.end()) job = it->second;
      }
      if (job && job->status == "running") {
        send_json(res, 202, json{{"batch_id", id}, {"status", "running"}});
        return;
      }
      if (job && job->status == "failed") {
        send_json(res, job->http_status, *job->error);
        return;
      }
      send_json(res, 200, ws.read([&](const State& s) {
        const auto it = s.batches.find(id);
        if (it == s.batches.end()) throw Error(Errc::not_found, "unknown draft batch " + id);
        return batch_payload(s, it->second);
      }));
    }));

    server.Get(R"(/criteria-sets/([^/]+))", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      send_json(res, 200, json(ws.read([&](const State& s) { return s.set(req.matches[1]); })));
    }));

    server.Get(R"(/criteria-sets/([^/]+)/alignment)", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string id = req.matches[1];
      send_json(res, 200, json{{"set_id", id}, {"rates", ws.alignment(id)}});
    }));

    server.Post(R"(/criteria-sets/([^/]+)/actions)",
                wrap({Role::expert}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession& session) {
                  auto body = body_json(req);
                  if (!body.contains("actor")) body["actor"] = session.actor;
                  send_json(res, 200, json(ws.apply_action(req.matches[1], body.get<HumanAction>())));
                }));

    server.Post(R"(/criteria-sets/([^/]+)/finalize)", wrap({Role::expert}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      send_json(res, 200, json(ws.finalize_set(req.matches[1])));
    }));

    server.Post("/runs", wrap({Role::expert, Role::annotator}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const auto body = body_json(req);
      std::optional<std::string> set_id;
      if (body.contains("criteria_set") && !body.at("criteria_set").is_null())
        set_id = body.at("criteria_set").get<std::string>();
      const auto mode = parse_eval_mode(body.value("mode", set_id ? "step_by_step" : "direct"));
      const auto samples = body.value("samples", std::vector<std::string>{});
      const auto run = ws.create_run(body.at("task").get<std::string>(), set_id, mode, samples);
      auto channel = std::make_shared<RunChannel>();
      {
        std::lock_guard lock(jobs_mutex);
        channels[run.id] = channel;
        active_runs.insert(run.id);
      }
      spawn([this, id = run.id, channel] {
        try {
          const auto done = ws.execute_run(id, [&](const ProgressEvent& e) {
            publish(channel, "progress",
                    json{{"run_id", e.run_id},
                         {"sample_id", e.sample_id},
                         {"state", to_string(e.status.state)},
                         {"reason", e.status.reason},
                         {"completed", e.completed},
                         {"total", e.total}});
          });
          publish(channel, "done", json{{"run_id", id}, {"counts", status_counts(done)}}, true);
        } catch (const Error& e) {
          publish(channel, "error", error_envelope(e), true);
        } catch (const std::exception& e) {
          publish(channel, "error", json{{"code", "Internal"}, {"message", e.what()}}, true);
        }
        std::lock_guard lock(jobs_mutex);
        active_runs.erase(id);
      });
      send_json(res, 202,
                json{{"run", run}, {"status", "running"}, {"href", "/runs/" + run.id}, {"events", "/runs/" + run.id + "/events"}});
    }));

    server.Get(R"(/runs/([^/]+))", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string id = req.matches[1];
      const auto run = ws.read([&](const State& s) { return s.run(id); });
      bool running;
      {
        std::lock_guard lock(jobs_mutex);
        running = active_runs.count(id) > 0;
      }
      send_json(res, 200, json{{"run", run}, {"running", running}, {"counts", status_counts(run)}});
    }));

    server.Get(R"(/runs/([^/]+)/evaluations)", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string run_id = req.matches[1];
      send_json(res, 200, ws.read([&](const State& s) {
        const auto& run = s.run(run_id);
        json list = json::array();
        for (const auto& sample_id : run.sample_ids) {
          const auto id = evaluation_id(run_id, sample_id);
          if (s.drafts.count(id)) list.push_back(evaluation_links(s, id));
        }
        return json{{"run_id", run_id}, {"evaluations", list}};
      }));
    }));

    server.Get(R"(/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authenticate(req)) {
        send_error(res, Error(Errc::unauthorized, "missing or unknown bearer token"));
        return;
      }
      const std::string id = req.matches[1];
      std::shared_ptr<RunChannel> channel;
      {
        std::lock_guard lock(jobs_mutex);
        if (auto it = channels.find(id); it != channels.end()) channel = it->second;
      }
      std::optional<EvaluationRun> run;
      try {
        run = ws.read([&](const State& s) { return s.run(id); });
      } catch (const Error& e) {
        send_error(res, e);
        return;
      }
      if (!channel) {
        // Not started by this server: a single snapshot event.
        channel = std::make_shared<RunChannel>();
        publish(channel, "done", json{{"run_id", id}, {"counts", status_counts(*run)}}, true);
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [channel, next = std::size_t{0}](
                                                                std::size_t, httplib::DataSink& sink) mutable {
        std::unique_lock lock(channel->mutex);
        channel->cv.wait_for(lock, std::chrono::milliseconds(500),
                             [&] { return next < channel->events.size() || channel->done; });
        while (next < channel->events.size()) {
          const auto& [name, data] = channel->events[next++];
          const auto frame = "event: " + name + "\ndata: " + data.dump() + "\n\n";
          if (!sink.write(frame.data(), frame.size())) return false;
        }
        if (channel->done) sink.done();
        return sink.is_writable();
      });
    });

    server.Get(R"(/evaluations/([^/]+))", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      send_json(res, 200, ws.read([&](const State& s) { return evaluation_links(s, req.matches[1]); }));
    }));

    server.Get(R"(/evaluations/([^/]+)/draft)", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      send_json(res, 200, json(ws.read([&](const State& s) { return s.draft(req.matches[1]); })));
    }));

    server.Get(R"(/evaluations/([^/]+)/final)", wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
      const std::string id = req.matches[1];
      send_json(res, 200, json(ws.read([&](const State& s) {
        s.draft(id);
        const auto it = s.finals.find(id);
        if (it == s.finals.end()) throw Error(Errc::not_found, "evaluation " + id + " has no final version yet");
        return it->second;
      })));
    }));

    server.Patch(R"(/evaluations/([^/]+))",
                 wrap({Role::annotator}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession& session) {
                   auto body = body_json(req);
                   auto edits_json = body.is_array() ? body : body.value("edits", json::array());
                   std::vector<HumanAction> edits;
                   for (auto& e : edits_json) {
                     if (!e.contains("actor")) e["actor"] = session.actor;
                     edits.push_back(e.get<HumanAction>());
                   }
                   send_json(res, 200, json(ws.finalize_evaluation(req.matches[1], edits, session.actor)));
                 }));

    server.Post(R"(/runs/([^/]+)/human-scores)",
                wrap({Role::expert, Role::annotator}, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
                  std::vector<HumanScore> scores;
                  if (req.get_header_value("Content-Type").rfind("text/csv", 0) == 0)
                    scores = parse_human_scores_csv(req.body);
                  else
                    scores = body_json(req).at("scores").get<std::vector<HumanScore>>();
                  const auto n = ws.import_human_scores(req.matches[1], scores);
                  send_json(res, 200, json{{"run_id", std::string(req.matches[1])}, {"imported", n}});
                }));

    server.Get(R"(/reports/([^/]+)/(correlations|agreement|distribution|behavior))",
               wrap(kAnyRole, [this](const httplib::Request& req, httplib::Response& res, const ApiSession&) {
                 ReportOptions options;
                 if (req.has_param("metric")) options.metric = parse_alpha_metric(req.get_param_value("metric"));
                 const auto state = ws.snapshot();
                 send_json(res, 200, compute_report(state, req.matches[1], parse_report_kind(req.matches[2].str()), options));
               }));

    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404)
        send_json(res, 404, error_envelope(Error(Errc::not_found, "no route for " + req.method + " " + req.path)));
    });
  }

  void join_jobs() {
    for (;;) {
      std::vector<std::thread> pending;
      {
        std::lock_guard lock(jobs_mutex);
        pending.swap(jobs);
      }
      if (pending.empty()) return;
      for (auto& t : pending) t.join();
    }
  }
};

Service::Service(Workspace& workspace, ServiceConfig config)
    : impl_(std::make_unique<Impl>(workspace, std::move(config))) {}

Service::~Service() {
  stop();
  impl_->join_jobs();
}

int Service::start() {
  auto& c = impl_->config;
  int port = c.port;
  if (port == 0)
    port = impl_->server.bind_to_any_port(c.host);
  else if (!impl_->server.bind_to_port(c.host, port))
    port = -1;
  if (port < 0) throw Error(Errc::io_error, "cannot bind " + c.host + ":" + std::to_string(c.port));
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::listen() {
  const auto& c = impl_->config;
  spdlog::info("service listening on {}:{}", c.host, c.port);
  if (!impl_->server.listen(c.host, c.port))
    throw Error(Errc::io_error, "cannot listen on " + c.host + ":" + std::to_string(c.port));
}

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::wait_idle() { impl_->join_jobs(); }

}  // namespace coeval
