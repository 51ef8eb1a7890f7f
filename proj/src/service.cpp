#include "benchforge/service.hpp"

#include <httplib.h>

#include <condition_variable>
#include <mutex>
#include <thread>

#include "benchforge/documents.hpp"
#include "benchforge/plan.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  reply(res, status, extra);
}

RunStatus status_from_record(const RunRecord& record) {
  RunStatus s;
  s.run_id = record.run_id;
  s.phase = record.phase;
  s.started_ms = record.started_ms;
  s.message = record.message;
  for (const auto& t : record.tasks) {
    s.tasks.emplace_back(t.id, t.state);
    if (is_terminal(t.state)) ++s.completed;
  }
  s.total = record.tasks.size();
  return s;
}

}  // namespace

struct Service::Impl {
  struct StoredDefinition {
    std::string text;
    ExperimentDefinition def;
  };

  struct Run {
    std::mutex mu;
    std::condition_variable cv;
    RunStatus status;
    bool finished = false;
    std::optional<RunRecord> record;
    std::stop_source stop;
    std::shared_ptr<MonitorFleet> fleet;
    std::jthread thread;
  };

  explicit Impl(ServiceConfig c) : config(std::move(c)) { routes(); }

  ServiceConfig config;
  httplib::Server server;
  std::thread listener;
  std::mutex mu;
  std::map<std::string, StoredDefinition> definitions;
  std::map<std::string, std::shared_ptr<Run>> runs;

  std::shared_ptr<Run> find_run(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = runs.find(id);
    return it == runs.end() ? nullptr : it->second;
  }

  std::optional<StoredDefinition> find_definition(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = definitions.find(id);
    if (it == definitions.end()) return std::nullopt;
    return it->second;
  }

  std::optional<RunRecord> load_persisted(const std::string& id) {
    auto dir = config.runs_root / id;
    if (id.find('/') != std::string::npos || id == ".." || !fs::exists(dir / "run.json")) return std::nullopt;
    try {
      return load_run_record(dir);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  void routes() {
    server.set_payload_max_length(config.max_body_bytes);

    server.Post("/definitions/validate", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto def = parse_definition(req.body);
        reply(res, 200, validation_json(validate(def, config.registry)));
      } catch (const ParseError& e) {
        reply(res, 400, syntax_error_json(e));
      }
    });

    server.Post("/definitions", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto def = parse_definition(req.body);
        auto id = definition_hash(def);
        auto body = validation_json(validate(def, config.registry));
        body["id"] = id;
        body["name"] = def.name;
        {
          std::lock_guard lock(mu);
          definitions[id] = {req.body, std::move(def)};
        }
        reply(res, 201, body);
      } catch (const ParseError& e) {
        reply(res, 400, syntax_error_json(e));
      }
    });

    server.Get(R"(/definitions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto stored = find_definition(req.matches[1]);
      if (!stored) return fail(res, 404, "unknown definition");
      reply(res, 200, {{"id", req.matches[1]}, {"name", stored->def.name}, {"definition", serialize_definition(stored->def)}});
    });

    server.Get(R"(/definitions/([^/]+)/plan)", [this](const httplib::Request& req, httplib::Response& res) {
      auto stored = find_definition(req.matches[1]);
      if (!stored) return fail(res, 404, "unknown definition");
      auto report = validate(stored->def, config.registry);
      if (!report.runnable()) return fail(res, 409, "definition is invalid", validation_json(report));
      try {
        reply(res, 200, plan_json(make_plan(stored->def, config.registry)));
      } catch (const Error& e) {
        fail(res, 409, e.what());
      }
    });

    server.Get(R"(/definitions/([^/]+)/form)", [this](const httplib::Request& req, httplib::Response& res) {
      auto stored = find_definition(req.matches[1]);
      if (!stored) return fail(res, 404, "unknown definition");
      try {
        reply(res, 200, form_json(render_parameter_form(stored->def, config.registry)));
      } catch (const Error& e) {
        fail(res, 409, e.what());
      }
    });

    server.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) { launch(req, res); });

    server.Get(R"(/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto record = load_persisted(req.matches[1]);
      if (!record) return fail(res, 404, "no persisted record for run");
      reply(res, 200, to_json(*record));
    });

    server.Get(R"(/runs/([^/]+)/status)", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto run = find_run(req.matches[1])) {
        std::lock_guard lock(run->mu);
        return reply(res, 200, to_json(run->status));
      }
      if (auto record = load_persisted(req.matches[1])) return reply(res, 200, to_json(status_from_record(*record)));
      fail(res, 404, "unknown run");
    });

    server.Get(R"(/runs/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
      stream_metrics(req, res);
    });

    server.Post(R"(/runs/([^/]+)/abort)", [this](const httplib::Request& req, httplib::Response& res) {
      auto run = find_run(req.matches[1]);
      if (!run) {
        if (load_persisted(req.matches[1])) return fail(res, 409, "run already finished");
        return fail(res, 404, "unknown run");
      }
      std::unique_lock lock(run->mu);
      if (run->finished || is_terminal(run->status.phase)) return fail(res, 409, "run already finished");
      run->stop.request_stop();
      run->cv.wait_for(lock, std::chrono::seconds(60), [&] { return run->finished; });
      reply(res, 200, to_json(run->status));
    });
  }

  void launch(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return fail(res, 400, std::string("malformed JSON: ") + e.what());
    }
    if (!body.is_object() || !body.contains("definition") || !body["definition"].is_string())
      return fail(res, 400, "body needs a \"definition\" id");
    auto stored = find_definition(body["definition"].get<std::string>());
    if (!stored) return fail(res, 404, "unknown definition");

    AttributeTree overrides;
    try {
      if (body.contains("overrides")) overrides = attributes_from_json(body["overrides"]);
    } catch (const Error& e) {
      return fail(res, 422, e.what());
    }
    auto report = validate(stored->def, config.registry, overrides);
    if (!report.runnable()) {
      ValidationReport override_errors;
      for (const auto& f : report.findings)
        if (f.severity == Severity::error && starts_with(f.path, "overrides")) override_errors.findings.push_back(f);
      if (!override_errors.findings.empty()) {
        const auto& first = override_errors.findings.front();
        return fail(res, 422, first.path + ": " + first.message, validation_json(override_errors));
      }
      return fail(res, 409, "definition is invalid", validation_json(report));
    }

    std::string run_id = body.value("run_id", std::string());
    if (run_id.empty()) run_id = new_run_id(stored->def);
    if (run_id.find('/') != std::string::npos || run_id == "." || run_id == "..")
      return fail(res, 400, "invalid run id");

    auto run = std::make_shared<Run>();
    run->status.run_id = run_id;
    run->status.started_ms = wall_ms();
    run->fleet = std::make_shared<MonitorFleet>(config.metric_sources);
    {
      std::lock_guard lock(mu);
      auto it = runs.find(run_id);
      if (it != runs.end()) {
        std::lock_guard run_lock(it->second->mu);
        if (!it->second->finished) return fail(res, 409, "run " + run_id + " is already active");
      }
      if (fs::exists(config.runs_root / run_id / "run.json")) return fail(res, 409, "run " + run_id + " already exists");
      runs[run_id] = run;
    }

    RunOptions options;
    options.runs_root = config.runs_root;
    options.run_id = run_id;
    options.overrides = overrides;
    options.monitor_interval_ms = config.monitor_interval_ms;
    options.bf_exe = config.bf_exe;
    options.inventory = config.inventory;
    options.metric_sources = config.metric_sources;
    options.fleet = run->fleet;
    options.stop = run->stop.get_token();
    if (config.executor_factory) options.executor = config.executor_factory(config.runs_root / run_id);
    options.on_status = [run](const RunStatus& s) {
      std::lock_guard lock(run->mu);
      if (!is_terminal(run->status.phase)) run->status = s;
    };
    auto def = stored->def;
    run->thread = std::jthread([this, run, def = std::move(def), options = std::move(options)] {
      std::optional<RunRecord> record;
      std::string error;
      try {
        record = run_experiment(def, config.registry, options);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(run->mu);
      if (record) {
        run->status = status_from_record(*record);
        run->record = std::move(record);
      } else {
        run->status.phase = RunPhase::failed;
        run->status.message = error;
      }
      run->finished = true;
      run->cv.notify_all();
    });
    reply(res, 202, {{"run_id", run_id}, {"phase", run_phase_name(RunPhase::allocating)}});
  }

  void stream_metrics(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!req.has_param("machine")) return fail(res, 400, "missing machine parameter");
    const auto machine = req.get_param_value("machine");
    auto run = find_run(id);
    std::optional<RunRecord> persisted;
    if (run) {
      std::lock_guard lock(run->mu);
      if (run->finished && run->record) persisted = run->record;
    }
    if (persisted) {
      run = nullptr;
      if (!persisted->metrics.count(machine)) return fail(res, 404, "no metrics for machine " + machine);
    } else if (!run) {
      persisted = load_persisted(id);
      if (!persisted) return fail(res, 404, "unknown run");
      if (!persisted->metrics.count(machine)) return fail(res, 404, "no metrics for machine " + machine);
    }
    auto sent = std::make_shared<std::size_t>(0);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [run, persisted, machine, sent](std::size_t, httplib::DataSink& sink) {
          std::vector<MetricSample> samples;
          bool final = false;
          if (persisted) {
            samples = persisted->metrics.at(machine).samples;
            final = true;
          } else {
            if (auto snap = run->fleet->snapshot(machine)) samples = snap->samples;
            std::lock_guard lock(run->mu);
            if (run->finished) {
              final = true;
              if (run->record) {
                auto it = run->record->metrics.find(machine);
                samples = it == run->record->metrics.end() ? std::vector<MetricSample>{} : it->second.samples;
              }
            }
          }
          for (; *sent < samples.size(); ++*sent) {
            auto line = "data: " + sample_csv_line(samples[*sent]) + "\n\n";
            if (!sink.write(line.data(), line.size())) return false;
          }
          if (final) {
            sink.done();
            return true;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
          return sink.is_writable();
        });
  }

  void shutdown_runs() {
    std::vector<std::shared_ptr<Run>> all;
    {
      std::lock_guard lock(mu);
      for (auto& [_, r] : runs) all.push_back(r);
    }
    for (auto& r : all) r->stop.request_stop();
    for (auto& r : all)
      if (r->thread.joinable()) r->thread.join();
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() {
  stop();
  impl_->shutdown_runs();
}

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::serve(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::wait_idle() {
  std::vector<std::shared_ptr<Impl::Run>> all;
  {
    std::lock_guard lock(impl_->mu);
    for (auto& [_, r] : impl_->runs) all.push_back(r);
  }
  for (auto& r : all) {
    std::unique_lock lock(r->mu);
    r->cv.wait(lock, [&] { return r->finished; });
  }
}

}  // namespace benchforge
