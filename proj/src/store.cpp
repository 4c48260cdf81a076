#include "bubbleview/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "bubbleview/error.hpp"

namespace bubbleview {

using nlohmann::json;

namespace {

constexpr std::string_view kKindNames[] = {
    "session_begin", "image_begin", "click", "move_sample", "description_update",
    "description_final", "image_end", "session_end"};

}  // namespace

std::string_view to_string(EventKind k) { return kKindNames[static_cast<int>(k)]; }

EventKind parse_event_kind(std::string_view s) {
  for (int i = 0; i < static_cast<int>(std::size(kKindNames)); ++i)
    if (kKindNames[i] == s) return static_cast<EventKind>(i);
  throw ValidationError({"unknown event kind '" + std::string(s) + "'"});
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::open: return "open";
    case SessionStatus::complete: return "complete";
    case SessionStatus::abandoned: return "abandoned";
  }
  return "?";
}

json to_json(const EventRecord& e) {
  json j;
  j["session_id"] = e.session_id;
  j["participant_id"] = e.participant_id;
  j["experiment_id"] = e.experiment_id;
  j["image_id"] = e.image_id;
  j["seq"] = e.seq;
  j["kind"] = std::string(to_string(e.kind));
  j["x"] = e.x ? json(*e.x) : json(nullptr);
  j["y"] = e.y ? json(*e.y) : json(nullptr);
  j["t_ms"] = e.t_ms;
  j["text"] = e.text ? json(*e.text) : json(nullptr);
  return j;
}

EventRecord event_from_json(const json& j) {
  static const std::set<std::string> known = {"session_id", "participant_id", "experiment_id",
                                              "image_id",   "seq",            "kind",
                                              "x",          "y",              "t_ms",
                                              "text"};
  if (!j.is_object()) throw ValidationError({"event must be an object"});
  std::vector<std::string> problems;
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) problems.push_back("unknown event field '" + key + "'");
  for (const char* key : {"session_id", "participant_id", "experiment_id", "image_id", "seq", "kind", "t_ms"})
    if (!j.contains(key)) problems.push_back(std::string("missing event field '") + key + "'");
  if (!problems.empty()) throw ValidationError(std::move(problems));

  EventRecord e;
  try {
    e.session_id = j.at("session_id").get<std::string>();
    e.participant_id = j.at("participant_id").get<std::string>();
    e.experiment_id = j.at("experiment_id").get<std::string>();
    e.image_id = j.at("image_id").get<std::string>();
    e.seq = j.at("seq").get<std::int64_t>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    if (j.contains("x") && !j["x"].is_null()) e.x = j["x"].get<double>();
    if (j.contains("y") && !j["y"].is_null()) e.y = j["y"].get<double>();
    e.t_ms = j.at("t_ms").get<double>();
    if (j.contains("text") && !j["text"].is_null()) e.text = j["text"].get<std::string>();
  } catch (const json::exception& ex) {
    throw ValidationError({std::string("malformed event: ") + ex.what()});
  }
  return e;
}

std::size_t char_count(std::string_view utf8) {
  return static_cast<std::size_t>(std::count_if(
      utf8.begin(), utf8.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

namespace {

std::string line_of(const EventRecord& e) { return to_json(e).dump() + '\n'; }

bool is_spatial(EventKind k) { return k == EventKind::click || k == EventKind::move_sample; }

[[noreturn]] void reject(const std::string& why) { throw ValidationError({why}); }

}  // namespace

EventLog::EventLog(std::filesystem::path path, Catalog catalog, Mode mode)
    : path_(std::move(path)), catalog_(std::move(catalog)) {
  if (mode == Mode::read_only && !std::filesystem::exists(path_))
    throw Error(ErrorCode::io, "event log " + path_.string() + " does not exist");
  if (mode == Mode::read_write && path_.has_parent_path())
    std::filesystem::create_directories(path_.parent_path());

  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t complete = content.rfind('\n');
    complete = complete == std::string::npos ? 0 : complete + 1;
    if (complete < content.size()) {
      // A torn final write was never acknowledged; drop it.
      if (mode == Mode::read_write) std::filesystem::resize_file(path_, complete);
      content.resize(complete);
    }
    std::istringstream lines(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const EventRecord e = event_from_json(json::parse(line));
        std::map<std::string, SessionData> scratch;
        if (auto it = sessions_.find(e.session_id); it != sessions_.end())
          scratch[e.session_id].state = it->second.state;
        apply(scratch, e);
        auto& slot = sessions_[e.session_id];
        slot.state = scratch[e.session_id].state;
        slot.events.push_back(e);
      } catch (const std::exception& ex) {
        throw Error(ErrorCode::io, path_.string() + ":" + std::to_string(lineno) + ": " + ex.what());
      }
    }
  }

  if (mode == Mode::read_only) return;
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::io, "cannot open log " + path_.string() + ": " + std::strerror(errno));
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::filesystem::path EventLog::quarantine_path() const {
  auto p = path_;
  p += ".quarantine";
  return p;
}

void EventLog::apply(std::map<std::string, SessionData>& sessions, const EventRecord& e) const {
  if (e.session_id.empty()) reject("session_id must be nonempty");
  if (!(e.t_ms >= 0.0) || !std::isfinite(e.t_ms)) reject("t_ms must be a nonnegative number");
  if (e.x.has_value() != is_spatial(e.kind) || e.y.has_value() != is_spatial(e.kind))
    reject("x/y are required for click and move_sample events and forbidden otherwise");
  const bool texty = e.kind == EventKind::description_update ||
                     e.kind == EventKind::description_final || e.kind == EventKind::session_begin;
  if (e.text.has_value() != texty) reject(std::string("text is not allowed on ") + std::string(to_string(e.kind)));

  if (e.kind == EventKind::session_begin) {
    if (sessions.count(e.session_id)) throw Error(ErrorCode::conflict, "session " + e.session_id + " already exists");
    if (e.seq != 1) throw Error(ErrorCode::conflict, "session_begin must have seq 1; expected 1");
    if (e.participant_id.empty()) reject("participant_id must be nonempty");
    if (!e.image_id.empty()) reject("session_begin carries no image_id");
    auto exp = catalog_.experiments.find(e.experiment_id);
    if (exp == catalog_.experiments.end())
      throw Error(ErrorCode::not_found, "unknown experiment '" + e.experiment_id + "'");
    std::vector<std::string> order;
    try {
      order = json::parse(*e.text).get<std::vector<std::string>>();
    } catch (const json::exception&) {
      reject("session_begin text must be a JSON array of image ids");
    }
    const auto& cfg = exp->second;
    if (static_cast<int>(order.size()) != cfg.images_per_session)
      reject("session image order must list images_per_session images");
    std::set<std::string> uniq(order.begin(), order.end());
    if (uniq.size() != order.size()) reject("session image order repeats an image");
    for (const auto& id : order)
      if (std::find(cfg.image_ids.begin(), cfg.image_ids.end(), id) == cfg.image_ids.end())
        reject("image '" + id + "' is not part of experiment " + e.experiment_id);

    SessionData d;
    d.state.session_id = e.session_id;
    d.state.participant_id = e.participant_id;
    d.state.experiment_id = e.experiment_id;
    d.state.images = std::move(order);
    d.state.created_at_ms = e.t_ms;
    d.state.last_seq = 1;
    sessions.emplace(e.session_id, std::move(d));
    return;
  }

  auto it = sessions.find(e.session_id);
  if (it == sessions.end()) throw Error(ErrorCode::not_found, "unknown session '" + e.session_id + "'");
  Session& s = it->second.state;
  if (s.status != SessionStatus::open) throw Error(ErrorCode::session_closed, "session " + s.session_id + " is closed");
  if (e.seq != s.last_seq + 1)
    throw Error(ErrorCode::conflict, "seq " + std::to_string(e.seq) + " out of order; expected " +
                                         std::to_string(s.last_seq + 1));
  if (e.participant_id != s.participant_id || e.experiment_id != s.experiment_id)
    reject("participant_id/experiment_id do not match the session");
  const ExperimentConfig& cfg = catalog_.experiments.at(s.experiment_id);

  auto require_open_image = [&] {
    if (!s.open_image || *s.open_image != e.image_id)
      reject(std::string(to_string(e.kind)) + " for image '" + e.image_id + "' which is not being shown");
    if (e.t_ms < s.last_t_ms) reject("t_ms went backwards");
  };

  switch (e.kind) {
    case EventKind::session_begin:
      break;
    case EventKind::image_begin: {
      if (s.open_image) reject("image_begin while image '" + *s.open_image + "' is still shown");
      if (s.images_done >= s.images.size()) reject("all session images are done");
      if (e.image_id != s.images[s.images_done])
        reject("expected image '" + s.images[s.images_done] + "' next, got '" + e.image_id + "'");
      if (e.t_ms != 0.0) reject("image_begin must have t_ms 0");
      s.open_image = e.image_id;
      s.last_t_ms = 0.0;
      s.description_final = false;
      break;
    }
    case EventKind::click:
    case EventKind::move_sample: {
      require_open_image();
      const bool click_mode = cfg.mouse_modality == MouseModality::click;
      if ((e.kind == EventKind::click) != click_mode)
        reject(std::string(to_string(e.kind)) + " events do not match the experiment's mouse modality");
      auto img = catalog_.images.find(e.image_id);
      if (img == catalog_.images.end()) reject("image '" + e.image_id + "' has no known dimensions");
      if (!(*e.x >= 0.0 && *e.x < img->second.width && *e.y >= 0.0 && *e.y < img->second.height))
        throw Error(ErrorCode::out_of_bounds, "coordinates outside image '" + e.image_id + "'");
      s.last_t_ms = e.t_ms;
      break;
    }
    case EventKind::description_update:
    case EventKind::description_final: {
      require_open_image();
      if (cfg.task_type != TaskType::describe) reject("descriptions are only logged for the describe task");
      if (s.description_final) reject("description already final for this image");
      if (e.kind == EventKind::description_final) {
        const auto n = char_count(*e.text);
        if (n < static_cast<std::size_t>(cfg.min_description_chars))
          reject("description has " + std::to_string(n) + " characters; " +
                 std::to_string(cfg.min_description_chars) + " required");
        s.description_final = true;
      }
      s.last_t_ms = e.t_ms;
      break;
    }
    case EventKind::image_end: {
      require_open_image();
      if (cfg.task_type == TaskType::describe && !s.description_final)
        reject("image_end before description_final");
      s.open_image.reset();
      s.images_done += 1;
      s.last_t_ms = e.t_ms;
      break;
    }
    case EventKind::session_end: {
      if (!e.image_id.empty()) reject("session_end carries no image_id");
      if (s.open_image) reject("session_end while an image is shown");
      s.status = s.images_done == s.images.size() ? SessionStatus::complete : SessionStatus::abandoned;
      break;
    }
  }
  s.last_seq = e.seq;
}

void EventLog::write_lines(const std::string& lines) {
  if (fd_ < 0) throw Error(ErrorCode::io, "event log opened read-only");
  std::size_t off = 0;
  while (off < lines.size()) {
    const auto n = ::write(fd_, lines.data() + off, lines.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io, std::string("log write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fdatasync(fd_) != 0) throw Error(ErrorCode::io, std::string("fdatasync failed: ") + std::strerror(errno));
}

void EventLog::quarantine(const EventRecord& e, const std::string& reason) {
  std::ofstream q(quarantine_path(), std::ios::app);
  q << json{{"reason", reason}, {"event", to_json(e)}}.dump() << '\n';
}

std::int64_t EventLog::append(const EventRecord& e) {
  return append_batch(std::span<const EventRecord>(&e, 1)).last;
}

SeqRange EventLog::append_batch(std::span<const EventRecord> batch) {
  if (batch.empty()) throw ValidationError({"empty batch"});
  std::unique_lock lock(mutex_);

  const bool duplicate = std::all_of(batch.begin(), batch.end(), [&](const EventRecord& e) {
    auto it = sessions_.find(e.session_id);
    if (it == sessions_.end() || e.seq < 1 || e.seq > it->second.state.last_seq) return false;
    return it->second.events[static_cast<std::size_t>(e.seq - 1)] == e;
  });
  if (duplicate) return {batch.front().seq, batch.back().seq, true};

  std::map<std::string, SessionData> scratch;
  for (const auto& e : batch) {
    auto it = sessions_.find(e.session_id);
    if (it != sessions_.end() && !scratch.count(e.session_id)) scratch[e.session_id].state = it->second.state;
  }
  try {
    for (const auto& e : batch) apply(scratch, e);
  } catch (const Error& ex) {
    for (const auto& e : batch) quarantine(e, ex.what());
    throw;
  }

  std::string lines;
  for (const auto& e : batch) lines += line_of(e);
  write_lines(lines);

  for (auto& [id, d] : scratch) sessions_[id].state = d.state;
  for (const auto& e : batch) sessions_[e.session_id].events.push_back(e);
  return {batch.front().seq, batch.back().seq, false};
}

std::optional<Session> EventLog::session(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second.state;
}

std::vector<Session> EventLog::sessions() const {
  std::shared_lock lock(mutex_);
  std::vector<Session> out;
  for (const auto& [_, d] : sessions_) out.push_back(d.state);
  return out;
}

std::vector<EventRecord> EventLog::events(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return {};
  return it->second.events;
}

std::int64_t EventLog::next_seq(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? 1 : it->second.state.last_seq + 1;
}

std::string EventLog::state_digest() const {
  std::shared_lock lock(mutex_);
  json out = json::array();
  for (const auto& [id, d] : sessions_) {
    const Session& s = d.state;
    json events = json::array();
    for (const auto& e : d.events) events.push_back(to_json(e));
    out.push_back({{"session_id", s.session_id},
                   {"participant_id", s.participant_id},
                   {"experiment_id", s.experiment_id},
                   {"images", s.images},
                   {"status", std::string(to_string(s.status))},
                   {"created_at_ms", s.created_at_ms},
                   {"last_seq", s.last_seq},
                   {"images_done", s.images_done},
                   {"open_image", s.open_image ? json(*s.open_image) : json(nullptr)},
                   {"events", std::move(events)}});
  }
  return out.dump();
}

void EventLog::set_experiment_closed(const std::string& experiment_id, bool closed) {
  std::unique_lock lock(mutex_);
  if (closed) catalog_.closed_experiments.insert(experiment_id);
  else catalog_.closed_experiments.erase(experiment_id);
}

bool EventLog::experiment_closed(const std::string& experiment_id) const {
  std::shared_lock lock(mutex_);
  return catalog_.closed_experiments.count(experiment_id) > 0;
}

std::string describe(const FilterPolicy& p) {
  std::string s = "min_clicks_per_image=" + std::to_string(p.min_clicks_per_image) + ";out_of_bounds=drop_click;participant_outlier_sd=";
  if (p.participant_outlier_sd) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", *p.participant_outlier_sd);
    s += buf;
  } else {
    s += "none";
  }
  return s;
}

FilteredPoints to_pointset(const EventLog& log, const std::string& experiment_id,
                           const std::string& image_id, const FilterPolicy& policy) {
  if (policy.min_clicks_per_image < 0) throw ValidationError({"min_clicks_per_image must be nonnegative"});
  if (policy.participant_outlier_sd && !(*policy.participant_outlier_sd > 0.0))
    throw ValidationError({"participant_outlier_sd must be positive"});
  const auto& cat = log.catalog();
  auto exp = cat.experiments.find(experiment_id);
  if (exp == cat.experiments.end()) throw Error(ErrorCode::not_found, "unknown experiment '" + experiment_id + "'");
  auto img = cat.images.find(image_id);
  if (img == cat.images.end()) throw Error(ErrorCode::not_found, "unknown image '" + image_id + "'");
  const bool move = exp->second.mouse_modality == MouseModality::move;
  const EventKind wanted = move ? EventKind::move_sample : EventKind::click;

  std::map<std::string, std::vector<Point>> by_participant;
  bool seen_image = false;
  std::size_t total = 0;
  for (const auto& s : log.sessions()) {
    if (s.experiment_id != experiment_id) continue;
    for (const auto& e : log.events(s.session_id)) {
      if (e.image_id != image_id) continue;
      if (e.kind == EventKind::image_begin) {
        seen_image = true;
        by_participant[e.participant_id];
      } else if (e.kind == wanted) {
        ++total;
        if (*e.x >= 0.0 && *e.x < img->second.width && *e.y >= 0.0 && *e.y < img->second.height)
          by_participant[e.participant_id].push_back({*e.x, *e.y, e.t_ms, e.participant_id});
      }
    }
  }
  if (!seen_image) throw Error(ErrorCode::not_found, "log has no views of image '" + image_id + "'");

  std::set<std::string> outliers;
  if (policy.participant_outlier_sd && !by_participant.empty()) {
    double mean = 0.0;
    for (const auto& [_, pts] : by_participant) mean += static_cast<double>(pts.size());
    mean /= static_cast<double>(by_participant.size());
    double var = 0.0;
    for (const auto& [_, pts] : by_participant) var += std::pow(static_cast<double>(pts.size()) - mean, 2);
    const double sd = std::sqrt(var / static_cast<double>(by_participant.size()));
    if (sd > 0.0)
      for (const auto& [id, pts] : by_participant)
        if (std::abs(static_cast<double>(pts.size()) - mean) > *policy.participant_outlier_sd * sd)
          outliers.insert(id);
  }

  FilteredPoints out;
  out.points = PointSet{img->second.width, img->second.height, move ? PointKind::move_sample : PointKind::click, {}};
  out.total_points = total;
  for (auto& [id, pts] : by_participant) {
    if (static_cast<int>(pts.size()) < policy.min_clicks_per_image || outliers.count(id)) {
      out.removed_participants.push_back(id);
      continue;
    }
    for (auto& p : pts) out.points.points.push_back(std::move(p));
  }
  out.kept_points = out.points.points.size();
  out.removed_fraction = total == 0 ? 0.0 : static_cast<double>(total - out.kept_points) / static_cast<double>(total);
  if (out.points.points.empty())
    throw Error(ErrorCode::empty_point_set, "every participant was filtered out on image '" + image_id + "'");
  return out;
}

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

bool parse_number(std::string_view s, double& v) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

}  // namespace

FixationImport import_fixations(std::istream& in, const std::string& dataset_tag,
                                const std::map<std::string, ImageInfo>& images) {
  FixationImport out;
  out.dataset_tag = dataset_tag;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError({"fixation file is empty"});
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_id,observer_id,x,y,t_ms")
    throw ValidationError({"line 1: expected header image_id,observer_id,x,y,t_ms"});

  std::vector<std::string> errors;
  std::size_t lineno = 1, rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    const std::string at = "line " + std::to_string(lineno) + ": ";
    if (f.size() != 5) {
      errors.push_back(at + "expected 5 fields, got " + std::to_string(f.size()));
      continue;
    }
    double x, y, t;
    if (f[0].empty() || f[1].empty()) {
      errors.push_back(at + "empty image_id or observer_id");
      continue;
    }
    if (!parse_number(f[2], x) || !parse_number(f[3], y) || !parse_number(f[4], t)) {
      errors.push_back(at + "x, y and t_ms must be numbers");
      continue;
    }
    auto img = images.find(f[0]);
    if (img == images.end()) {
      errors.push_back(at + "unknown image '" + f[0] + "'");
      continue;
    }
    if (!(x >= 0.0 && x < img->second.width && y >= 0.0 && y < img->second.height) || t < 0.0) {
      ++out.dropped;
      continue;
    }
    auto [it, fresh] = out.by_image.try_emplace(
        f[0], PointSet{img->second.width, img->second.height, PointKind::fixation, {}});
    it->second.points.push_back({x, y, t, f[1]});
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  if (rows == 0) throw ValidationError({"fixation file has no rows"});
  if (out.dropped)
    out.warnings.push_back(std::to_string(out.dropped) + " out-of-bounds fixation(s) dropped");

  for (auto& [_, ps] : out.by_image)
    std::stable_sort(ps.points.begin(), ps.points.end(), [](const Point& a, const Point& b) {
      return a.participant_id != b.participant_id ? a.participant_id < b.participant_id : a.t_ms < b.t_ms;
    });
  return out;
}

FixationImport import_fixations(const std::filesystem::path& path, const std::string& dataset_tag,
                                const std::map<std::string, ImageInfo>& images) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open fixations " + path.string());
  return import_fixations(in, dataset_tag, images);
}

void export_fixations(std::ostream& out, const FixationImport& data) {
  out << "image_id,observer_id,x,y,t_ms\n";
  for (const auto& [image_id, ps] : data.by_image)
    for (const auto& p : ps.points)
      out << image_id << ',' << p.participant_id << ',' << shortest(p.x) << ',' << shortest(p.y) << ','
          << shortest(p.t_ms) << '\n';
}

}  // namespace bubbleview
