#include "bubbleview/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <httplib.h>

#include <json.hpp>

#include "bubbleview/random.hpp"

namespace bubbleview {

using nlohmann::json;

Catalog make_catalog(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& stimuli_dir) {
  Catalog cat;
  for (const auto& cfg : configs) {
    validate_config(cfg);
    if (!cat.experiments.emplace(cfg.experiment_id, cfg).second)
      throw ValidationError({"duplicate experiment id '" + cfg.experiment_id + "'"});
    for (const auto& id : cfg.image_ids) {
      if (cat.images.count(id)) continue;
      const auto [w, h] = png_dimensions(stimuli_dir / (id + ".png"));
      cat.images[id] = ImageInfo{w, h};
    }
  }
  return cat;
}

ImageVariant parse_variant(std::string_view s) {
  if (s == "blurred") return ImageVariant::blurred;
  if (s == "original") return ImageVariant::original;
  throw ValidationError({"variant must be 'blurred' or 'original'"});
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::dimension_mismatch:
    case ErrorCode::out_of_bounds: return 400;
    case ErrorCode::unauthorized: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::session_closed:
    case ErrorCode::experiment_closed:
    case ErrorCode::premature_advance: return 409;
    case ErrorCode::empty_point_set:
    case ErrorCode::zero_variance: return 422;
    case ErrorCode::io: return 500;
  }
  return 500;
}

namespace {

std::filesystem::path tokens_path(const EventLog& log) {
  auto p = log.path();
  p += ".tokens";
  return p;
}

std::string hex(std::uint64_t v, int digits = 16) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf + 16 - digits, buf + 16);
}

}  // namespace

Service::Service(EventLog& log, ServiceOptions opts)
    : log_(log), opts_(std::move(opts)), cache_(opts_.cache_dir) {
  if (opts_.seed) {
    rng_.seed(*opts_.seed);
  } else {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
    rng_.seed(seq);
  }
  if (std::ifstream in(tokens_path(log_)); in) {
    std::string sid, token;
    while (in >> sid >> token) token_to_session_[token] = sid;
  }
}

Service::~Service() = default;

double Service::now_ms() const {
  if (opts_.clock_ms) return opts_.clock_ms();
  using namespace std::chrono;
  return static_cast<double>(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

std::string Service::new_token() { return hex(rng_()) + hex(rng_()); }

void Service::remember_token(const std::string& session_id, const std::string& token) {
  token_to_session_[token] = session_id;
  std::ofstream out(tokens_path(log_), std::ios::app);
  out << session_id << ' ' << token << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::io, "cannot persist session token");
}

std::mutex& Service::session_mutex(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  auto& m = session_mutexes_[session_id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

void Service::authorize(const std::string& session_id, const std::string& token) const {
  std::lock_guard lock(mutex_);
  auto it = token_to_session_.find(token);
  if (token.empty() || it == token_to_session_.end() || it->second != session_id)
    throw Error(ErrorCode::unauthorized, "missing or invalid session token");
}

const ExperimentConfig& Service::experiment(const std::string& experiment_id) const {
  const auto& exps = log_.catalog().experiments;
  auto it = exps.find(experiment_id);
  if (it == exps.end()) throw Error(ErrorCode::not_found, "unknown experiment '" + experiment_id + "'");
  return it->second;
}

std::filesystem::path Service::stimulus_path(const std::string& image_id) const {
  return opts_.stimuli_dir / (image_id + ".png");
}

CreatedSession Service::create_session(const std::string& experiment_id, const std::string& participant_id) {
  const ExperimentConfig& cfg = experiment(experiment_id);
  if (log_.experiment_closed(experiment_id))
    throw Error(ErrorCode::experiment_closed, "experiment '" + experiment_id + "' is closed");
  if (participant_id.empty()) throw ValidationError({"participant_id must be nonempty"});

  std::lock_guard lock(mutex_);
  std::string session_id;
  std::vector<std::string> order;
  if (opts_.seed) {
    char buf[32];
    std::size_t n = log_.sessions().size();
    do {
      std::snprintf(buf, sizeof buf, "s%06zu", ++n);
    } while (log_.session(buf));
    session_id = buf;
    std::mt19937_64 perm_rng(derive_seed(*opts_.seed, session_id));
    order = sample_without_replacement(cfg.image_ids, static_cast<std::size_t>(cfg.images_per_session), perm_rng);
  } else {
    do {
      session_id = "s" + hex(rng_());
    } while (log_.session(session_id));
    order = sample_without_replacement(cfg.image_ids, static_cast<std::size_t>(cfg.images_per_session), rng_);
  }
  const std::string token = new_token();

  EventRecord begin{session_id, participant_id, experiment_id, "", 1, EventKind::session_begin,
                    std::nullopt, std::nullopt, now_ms(), json(order).dump()};
  EventRecord first{session_id, participant_id, experiment_id, order.front(), 2, EventKind::image_begin,
                    std::nullopt, std::nullopt, 0.0, std::nullopt};
  const std::vector<EventRecord> batch{begin, first};
  log_.append_batch(batch);
  remember_token(session_id, token);
  image_started_ms_[session_id] = now_ms();

  CreatedSession out;
  out.session = *log_.session(session_id);
  out.token = token;
  out.next_seq = 3;
  return out;
}

std::shared_ptr<const std::vector<std::uint8_t>> Service::get_image(const std::string& image_id,
                                                                    ImageVariant variant,
                                                                    const Credentials& cred,
                                                                    const std::string& experiment_id) {
  std::string exp_id;
  if (!cred.session_token.empty()) {
    std::string sid;
    {
      std::lock_guard lock(mutex_);
      auto it = token_to_session_.find(cred.session_token);
      if (it == token_to_session_.end()) throw Error(ErrorCode::unauthorized, "invalid session token");
      sid = it->second;
    }
    const auto s = log_.session(sid);
    if (!s || std::find(s->images.begin(), s->images.end(), image_id) == s->images.end())
      throw Error(ErrorCode::unauthorized, "image '" + image_id + "' is not part of this session");
    exp_id = s->experiment_id;
  } else if (!opts_.experimenter_key.empty() && cred.experimenter_key == opts_.experimenter_key) {
    const auto& cfg = experiment(experiment_id);
    if (std::find(cfg.image_ids.begin(), cfg.image_ids.end(), image_id) == cfg.image_ids.end())
      throw Error(ErrorCode::not_found, "image '" + image_id + "' is not part of experiment " + experiment_id);
    exp_id = experiment_id;
  } else {
    throw Error(ErrorCode::unauthorized, "a session token or experimenter key is required");
  }

  const double sigma = experiment(exp_id).blur_sigma_px;
  // Key by sigma bits so experiments sharing an image and sigma share bytes.
  const int key = variant == ImageVariant::original ? -1 : static_cast<int>(std::lround(sigma * 1000.0));
  {
    std::lock_guard lock(mutex_);
    if (auto it = bytes_.find({image_id, key}); it != bytes_.end()) return it->second;
  }

  std::vector<std::uint8_t> data;
  if (variant == ImageVariant::original) {
    std::ifstream in(stimulus_path(image_id), std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "missing stimulus for '" + image_id + "'");
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  } else {
    cache_.ensure(image_id, stimulus_path(image_id), sigma);
    data = cache_.read_bytes(image_id, sigma);
  }
  auto shared = std::make_shared<const std::vector<std::uint8_t>>(std::move(data));
  std::lock_guard lock(mutex_);
  return bytes_.try_emplace({image_id, key}, std::move(shared)).first->second;
}

SeqRange Service::post_events(const std::string& session_id, const std::string& token,
                              std::vector<EventRecord> batch) {
  authorize(session_id, token);
  if (batch.empty()) throw ValidationError({"event batch is empty"});
  std::lock_guard writer(session_mutex(session_id));
  const auto s = log_.session(session_id);
  if (!s) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'");

  for (auto& e : batch) {
    if (e.kind != EventKind::click && e.kind != EventKind::move_sample && e.kind != EventKind::description_update)
      throw ValidationError({"participants may only post click, move_sample and description_update events"});
    if (e.session_id.empty()) e.session_id = session_id;
    if (e.participant_id.empty()) e.participant_id = s->participant_id;
    if (e.experiment_id.empty()) e.experiment_id = s->experiment_id;
    if (e.session_id != session_id) throw ValidationError({"event session_id does not match the route"});
  }
  try {
    return log_.append_batch(batch);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::conflict)
      throw Error(ErrorCode::conflict, "seq conflict; expected " + std::to_string(log_.next_seq(session_id)));
    throw;
  }
}

std::string Service::completion_code(const std::string& session_id) const {
  return hex(fnv1a64(opts_.completion_secret + ":" + session_id), 12);
}

AdvanceResult Service::advance(const std::string& session_id, const std::string& token,
                               const std::string& image_id, const std::optional<std::string>& description) {
  authorize(session_id, token);
  std::lock_guard writer(session_mutex(session_id));
  const auto s = log_.session(session_id);
  if (!s) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'");
  if (s->status != SessionStatus::open) throw Error(ErrorCode::session_closed, "session is closed");
  if (!s->open_image || *s->open_image != image_id)
    throw ValidationError({"image '" + image_id + "' is not the current image"});
  const ExperimentConfig& cfg = experiment(s->experiment_id);

  double started;
  {
    std::lock_guard lock(mutex_);
    // After a restart the boundary time is unknown; the clock restarts.
    started = image_started_ms_.try_emplace(session_id, now_ms()).first->second;
  }
  const double elapsed_ms = std::max(0.0, now_ms() - started);

  if (cfg.task_type == TaskType::describe) {
    const int have = description ? static_cast<int>(char_count(*description)) : 0;
    if (have < cfg.min_description_chars) {
      const int missing = cfg.min_description_chars - have;
      throw AdvanceRejected(std::to_string(missing) + " more characters required", 0.0, missing);
    }
  } else if (cfg.time_limit_s) {
    const double remaining = *cfg.time_limit_s - elapsed_ms / 1000.0;
    if (remaining > opts_.advance_skew_s) {
      const double shown = std::ceil(remaining - 1e-9);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%g s remaining", shown);
      throw AdvanceRejected(buf, remaining, 0);
    }
  }

  const double t = std::max(elapsed_ms, s->last_t_ms);
  std::int64_t seq = s->last_seq;
  std::vector<EventRecord> batch;
  auto make = [&](EventKind kind, const std::string& img, double t_ms, std::optional<std::string> text) {
    return EventRecord{session_id, s->participant_id, s->experiment_id, img, ++seq, kind,
                       std::nullopt, std::nullopt, t_ms, std::move(text)};
  };
  if (cfg.task_type == TaskType::describe) batch.push_back(make(EventKind::description_final, image_id, t, description));
  batch.push_back(make(EventKind::image_end, image_id, t, std::nullopt));

  AdvanceResult out;
  if (s->images_done + 1 < s->images.size()) {
    const std::string& next = s->images[s->images_done + 1];
    batch.push_back(make(EventKind::image_begin, next, 0.0, std::nullopt));
    out.next_image = next;
  } else {
    batch.push_back(make(EventKind::session_end, "", 0.0, std::nullopt));
    out.complete = true;
    out.completion_code = completion_code(session_id);
  }
  log_.append_batch(batch);
  {
    std::lock_guard lock(mutex_);
    image_started_ms_[session_id] = now_ms();
  }
  out.next_seq = seq + 1;
  return out;
}

MonitorSnapshot Service::monitor(const std::string& experiment_id, const std::string& image_id,
                                 const std::string& experimenter_key) const {
  if (opts_.experimenter_key.empty() || experimenter_key != opts_.experimenter_key)
    throw Error(ErrorCode::unauthorized, "experimenter credential required");
  const ExperimentConfig& cfg = experiment(experiment_id);
  if (std::find(cfg.image_ids.begin(), cfg.image_ids.end(), image_id) == cfg.image_ids.end())
    throw Error(ErrorCode::not_found, "image '" + image_id + "' is not part of experiment " + experiment_id);

  MonitorSnapshot snap;
  snap.config = cfg;
  snap.image_id = image_id;
  snap.blurred_url = "/api/images/" + image_id + "?variant=blurred&experiment=" + experiment_id;
  snap.original_url = "/api/images/" + image_id + "?variant=original&experiment=" + experiment_id;
  for (const auto& s : log_.sessions()) {
    if (s.experiment_id != experiment_id) continue;
    MonitorStream stream{s.session_id, s.participant_id, {}};
    for (const auto& e : log_.events(s.session_id))
      if (e.image_id == image_id) stream.events.push_back(e);
    if (!stream.events.empty()) snap.streams.push_back(std::move(stream));
  }
  return snap;
}

int Service::warm_cache() {
  int computed = 0;
  std::set<std::pair<std::string, double>> done;
  for (const auto& [_, cfg] : log_.catalog().experiments)
    for (const auto& id : cfg.image_ids)
      if (done.insert({id, cfg.blur_sigma_px}).second && cache_.ensure(id, stimulus_path(id), cfg.blur_sigma_px))
        ++computed;
  return computed;
}

namespace {

void send_error(httplib::Response& res, const Error& e, json extra = json::object()) {
  extra["reason"] = std::string(reason_code(e.code()));
  extra["message"] = e.what();
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) extra["violations"] = v->violations();
  res.status = http_status(e.code());
  res.set_content(extra.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ValidationError({std::string("request body is not valid JSON: ") + e.what()});
  }
}

json monitor_json(const MonitorSnapshot& snap) {
  json streams = json::array();
  for (const auto& s : snap.streams) {
    json events = json::array();
    for (const auto& e : s.events) events.push_back(to_json(e));
    streams.push_back({{"session_id", s.session_id}, {"participant_id", s.participant_id}, {"events", events}});
  }
  return {{"experiment", to_json(snap.config)},
          {"image_id", snap.image_id},
          {"blurred", snap.blurred_url},
          {"original", snap.original_url},
          {"sessions", streams}};
}

}  // namespace

void Service::install_routes(httplib::Server& server) {
  auto guarded = [](auto&& body) {
    return [body](const httplib::Request& req, httplib::Response& res) {
      try {
        body(req, res);
      } catch (const AdvanceRejected& e) {
        send_error(res, e, {{"remaining_s", e.remaining_s}, {"remaining_chars", e.remaining_chars}});
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, Error(ErrorCode::io, e.what()));
      }
    };
  };

  server.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    std::string exp, participant;
    try {
      exp = body.at("experiment_id").get<std::string>();
      participant = body.at("participant_id").get<std::string>();
    } catch (const json::exception&) {
      throw ValidationError({"body needs experiment_id and participant_id strings"});
    }
    const auto created = create_session(exp, participant);
    res.status = 201;
    res.set_content(json{{"session_id", created.session.session_id},
                         {"token", created.token},
                         {"images", created.session.images},
                         {"next_seq", created.next_seq},
                         {"experiment", to_json(experiment(exp))}}
                        .dump(),
                    "application/json");
  }));

  server.Get("/api/experiments/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    const auto& cfg = experiment(id);
    res.set_content(json{{"config", to_json(cfg)}, {"status", log_.experiment_closed(id) ? "closed" : "open"}}.dump(),
                    "application/json");
  }));

  server.Get("/api/images/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto variant = parse_variant(req.has_param("variant") ? req.get_param_value("variant") : "blurred");
    const Credentials cred{req.get_header_value("X-Session-Token"), req.get_header_value("X-Experimenter-Key")};
    const auto bytes = get_image(req.path_params.at("id"), variant, cred, req.get_param_value("experiment"));
    res.set_header("Cache-Control", "private, max-age=31536000, immutable");
    res.set_content(reinterpret_cast<const char*>(bytes->data()), bytes->size(), "image/png");
  }));

  server.Post("/api/sessions/:sid/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    const json body = parse_body(req);
    std::vector<EventRecord> batch;
    if (!body.contains("events") || !body["events"].is_array())
      throw ValidationError({"body needs an events array"});
    for (auto ev : body["events"]) {
      // Identity fields default to the session's.
      for (const char* k : {"session_id", "participant_id", "experiment_id"})
        if (!ev.contains(k)) ev[k] = "";
      batch.push_back(event_from_json(ev));
    }
    try {
      const auto range = post_events(sid, req.get_header_value("X-Session-Token"), std::move(batch));
      res.set_content(json{{"first_seq", range.first},
                           {"last_seq", range.last},
                           {"duplicate", range.duplicate},
                           {"next_seq", log_.next_seq(sid)}}
                          .dump(),
                      "application/json");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::conflict) throw;
      send_error(res, e, {{"expected_seq", log_.next_seq(sid)}});
    }
  }));

  server.Post("/api/sessions/:sid/advance", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("image_id") || !body["image_id"].is_string())
      throw ValidationError({"body needs image_id"});
    std::optional<std::string> description;
    if (body.contains("description") && body["description"].is_string())
      description = body["description"].get<std::string>();
    const auto r = advance(req.path_params.at("sid"), req.get_header_value("X-Session-Token"),
                           body["image_id"].get<std::string>(), description);
    res.set_content(json{{"next_image", r.next_image ? json(*r.next_image) : json(nullptr)},
                         {"complete", r.complete},
                         {"completion_code", r.complete ? json(r.completion_code) : json(nullptr)},
                         {"next_seq", r.next_seq}}
                        .dump(),
                    "application/json");
  }));

  server.Get("/api/monitor/:experiment/:image", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto snap = monitor(req.path_params.at("experiment"), req.path_params.at("image"),
                              req.get_header_value("X-Experimenter-Key"));
    res.set_content(monitor_json(snap).dump(), "application/json");
  }));

  if (opts_.consent_page) {
    const auto page = *opts_.consent_page;
    server.Get("/consent", [page](const httplib::Request&, httplib::Response& res) {
      std::ifstream in(page);
      res.set_content(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()),
                      "text/html");
    });
  }
}

}  // namespace bubbleview
