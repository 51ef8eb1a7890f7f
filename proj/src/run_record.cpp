#include "benchforge/run_record.hpp"

#include <algorithm>

#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view run_phase_name(RunPhase p) noexcept {
  switch (p) {
    case RunPhase::allocating: return "allocating";
    case RunPhase::executing: return "executing";
    case RunPhase::reporting: return "reporting";
    case RunPhase::done: return "done";
    case RunPhase::failed: return "failed";
    case RunPhase::aborted: return "aborted";
  }
  return "?";
}

std::optional<RunPhase> run_phase_from_name(std::string_view s) noexcept {
  for (auto p : {RunPhase::allocating, RunPhase::executing, RunPhase::reporting, RunPhase::done,
                 RunPhase::failed, RunPhase::aborted})
    if (run_phase_name(p) == s) return p;
  return std::nullopt;
}

bool is_terminal(RunPhase p) noexcept {
  return p == RunPhase::done || p == RunPhase::failed || p == RunPhase::aborted;
}

std::vector<Measurement> extract_measurements(const std::string& task, std::string_view output) {
  std::vector<Measurement> out;
  for (const auto& line : split(output, '\n')) {
    if (!starts_with(line, kResultMarker)) continue;
    auto data = json::parse(line.substr(kResultMarker.size()), nullptr, false);
    if (data.is_discarded() || !data.is_object() || !data.contains("kind") || !data["kind"].is_string())
      continue;
    out.push_back({task, data["kind"].get<std::string>(), std::move(data)});
  }
  return out;
}

bool RunRecord::all_succeeded() const noexcept {
  return std::all_of(tasks.begin(), tasks.end(), [](const auto& t) { return t.state == TaskState::succeeded; });
}

const TaskRecord* RunRecord::find_task(std::string_view id) const {
  auto it = std::find_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.id == id; });
  return it == tasks.end() ? nullptr : &*it;
}

json attributes_json(const AttributeTree& attrs) {
  json j = json::object();
  for (const auto& [k, v] : attrs.leaves()) {
    std::visit([&](const auto& x) { j[k] = x; }, v);
  }
  return j;
}

AttributeTree attributes_from_json(const json& j) {
  AttributeTree t;
  if (!j.is_object()) throw ValidationError("attributes must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (v.is_boolean()) t.set(k, v.get<bool>());
    else if (v.is_number_integer()) t.set(k, v.get<std::int64_t>());
    else if (v.is_number_float()) t.set(k, v.get<double>());
    else if (v.is_string()) t.set(k, v.get<std::string>());
    else throw ValidationError("attribute '" + k + "' must be a scalar");
  }
  return t;
}

json to_json(const RunRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["definition"] = {{"name", r.definition_name}, {"hash", r.definition_hash}};
  j["phase"] = run_phase_name(r.phase);
  j["message"] = r.message;
  j["provenance"] = r.provenance;
  j["overrides"] = attributes_json(r.overrides);
  j["parameters"] = json::object();
  for (const auto& [g, attrs] : r.parameters) j["parameters"][g] = attributes_json(attrs);
  j["started_ms"] = r.started_ms;
  j["finished_ms"] = r.finished_ms;
  j["tasks"] = json::array();
  for (const auto& t : r.tasks) {
    j["tasks"].push_back({{"id", t.id},
                          {"machine", t.machine},
                          {"recipe", t.recipe},
                          {"state", state_name(t.state)},
                          {"started_us", t.started_us},
                          {"finished_us", t.finished_us},
                          {"started_ms", t.started_ms},
                          {"finished_ms", t.finished_ms},
                          {"exit_code", t.exit_code},
                          {"log", t.log_ref},
                          {"error", t.error}});
  }
  j["edges"] = json::array();
  for (const auto& [a, b] : r.edges) j["edges"].push_back({a, b});
  j["measurements"] = json::array();
  for (const auto& m : r.measurements) j["measurements"].push_back({{"task", m.task}, {"kind", m.kind}, {"data", m.data}});
  j["metrics"] = json::object();
  for (const auto& [machine, s] : r.metrics)
    j["metrics"][machine] = {{"file", "metrics/" + machine + ".csv"},
                             {"interval_ms", s.interval_ms},
                             {"samples", s.samples.size()},
                             {"sampler_cpu_us", s.sampler_cpu_us}};
  j["reports"] = r.reports;
  return j;
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.definition_name = j.at("definition").at("name").get<std::string>();
    r.definition_hash = j.at("definition").at("hash").get<std::string>();
    auto phase = run_phase_from_name(j.at("phase").get<std::string>());
    if (!phase) throw ParseError("unknown run phase");
    r.phase = *phase;
    r.message = j.value("message", "");
    r.provenance = j.value("provenance", json::object());
    if (j.contains("overrides")) r.overrides = attributes_from_json(j["overrides"]);
    if (j.contains("parameters"))
      for (const auto& [g, attrs] : j["parameters"].items()) r.parameters[g] = attributes_from_json(attrs);
    r.started_ms = j.value("started_ms", std::int64_t{0});
    r.finished_ms = j.value("finished_ms", std::int64_t{0});
    for (const auto& t : j.at("tasks")) {
      TaskRecord tr;
      tr.id = t.at("id").get<std::string>();
      tr.machine = t.at("machine").get<std::string>();
      tr.recipe = t.at("recipe").get<std::string>();
      auto st = state_from_name(t.at("state").get<std::string>());
      if (!st) throw ParseError("unknown task state in run.json");
      tr.state = *st;
      tr.started_us = t.value("started_us", std::int64_t{0});
      tr.finished_us = t.value("finished_us", std::int64_t{0});
      tr.started_ms = t.value("started_ms", std::int64_t{0});
      tr.finished_ms = t.value("finished_ms", std::int64_t{0});
      tr.exit_code = t.value("exit_code", 0);
      tr.log_ref = t.value("log", "");
      tr.error = t.value("error", "");
      r.tasks.push_back(std::move(tr));
    }
    for (const auto& e : j.value("edges", json::array()))
      r.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    for (const auto& m : j.value("measurements", json::array()))
      r.measurements.push_back({m.at("task").get<std::string>(), m.at("kind").get<std::string>(), m.at("data")});
    r.reports = j.value("reports", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

namespace {

std::string safe_name(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c == '/' || c == '\\') c = '_';
  return out;
}

}  // namespace

void save_run_record(const RunRecord& record, const fs::path& dir) {
  fs::create_directories(dir / "logs");
  fs::create_directories(dir / "metrics");
  auto copy = record;
  for (auto& t : copy.tasks) {
    if (t.log_ref.empty()) t.log_ref = "logs/" + safe_name(t.id) + ".log";
    write_file(dir / t.log_ref, t.log);
  }
  for (const auto& [machine, series] : record.metrics)
    write_file(dir / "metrics" / (safe_name(machine) + ".csv"), series_csv(series));
  auto tmp = dir / "run.json.tmp";
  write_file(tmp, to_json(copy).dump(2) + "\n");
  fs::rename(tmp, dir / "run.json");
}

RunRecord load_run_record(const fs::path& dir) {
  auto text = read_file(dir / "run.json");
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError((dir / "run.json").string() + ": invalid JSON");
  auto r = run_record_from_json(j);
  if (j.contains("metrics")) {
    for (const auto& [machine, info] : j["metrics"].items()) {
      auto path = dir / info.value("file", "metrics/" + machine + ".csv");
      if (!fs::exists(path)) continue;
      auto s = parse_series_csv(read_file(path), machine);
      s.interval_ms = info.value("interval_ms", s.interval_ms);
      s.sampler_cpu_us = info.value("sampler_cpu_us", std::int64_t{0});
      r.metrics[machine] = std::move(s);
    }
  }
  return r;
}

}  // namespace benchforge
