#include "bubbleview/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "bubbleview/error.hpp"

namespace bubbleview {

using nlohmann::json;

std::string_view to_string(TaskType t) {
  return t == TaskType::free_view ? "free_view" : "describe";
}

std::string_view to_string(MouseModality m) {
  return m == MouseModality::click ? "click" : "move";
}

TaskType parse_task_type(std::string_view s) {
  if (s == "free_view") return TaskType::free_view;
  if (s == "describe") return TaskType::describe;
  throw ValidationError({"unknown task_type '" + std::string(s) + "'"});
}

MouseModality parse_mouse_modality(std::string_view s) {
  if (s == "click") return MouseModality::click;
  if (s == "move") return MouseModality::move;
  throw ValidationError({"unknown mouse_modality '" + std::string(s) + "'"});
}

std::vector<std::string> config_violations(const ExperimentConfig& cfg) {
  std::vector<std::string> v;
  if (cfg.experiment_id.empty()) v.emplace_back("experiment_id must be nonempty");
  if (!(cfg.blur_sigma_px > 0.0) || !std::isfinite(cfg.blur_sigma_px))
    v.emplace_back("blur_sigma_px must be positive");
  if (!(cfg.bubble_radius_px > 0.0) || !std::isfinite(cfg.bubble_radius_px))
    v.emplace_back("bubble_radius_px must be positive");
  if (cfg.time_limit_s) {
    if (!(*cfg.time_limit_s > 0.0) || !std::isfinite(*cfg.time_limit_s))
      v.emplace_back("time_limit_s must be positive");
  } else if (cfg.task_type == TaskType::free_view) {
    v.emplace_back("free_view requires finite time");
  }
  if (cfg.min_description_chars < 0) v.emplace_back("min_description_chars must be nonnegative");
  if (cfg.task_type == TaskType::describe && cfg.min_description_chars < 1)
    v.emplace_back("describe requires min_description_chars >= 1");
  if (cfg.task_type == TaskType::free_view && cfg.min_description_chars != 0)
    v.emplace_back("free_view requires min_description_chars = 0");
  if (cfg.images_per_session < 1) v.emplace_back("images_per_session must be positive");
  if (cfg.images_per_session > static_cast<int>(cfg.image_ids.size()))
    v.emplace_back("images_per_session exceeds number of image_ids");
  std::set<std::string> seen;
  for (const auto& id : cfg.image_ids) {
    if (id.empty()) v.emplace_back("image_ids must be nonempty strings");
    else if (!seen.insert(id).second) v.emplace_back("duplicate image id '" + id + "'");
  }
  if (cfg.move_sample_hz < 1) v.emplace_back("move_sample_hz must be positive");
  return v;
}

ExperimentConfig validate_config(const ExperimentConfig& cfg) {
  auto v = config_violations(cfg);
  if (!v.empty()) throw ValidationError(std::move(v));
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment_id"] = cfg.experiment_id;
  j["task_type"] = std::string(to_string(cfg.task_type));
  j["blur_sigma_px"] = cfg.blur_sigma_px;
  j["bubble_radius_px"] = cfg.bubble_radius_px;
  if (cfg.time_limit_s) j["time_limit_s"] = *cfg.time_limit_s;
  else j["time_limit_s"] = "unlimited";
  j["mouse_modality"] = std::string(to_string(cfg.mouse_modality));
  j["min_description_chars"] = cfg.min_description_chars;
  j["images_per_session"] = cfg.images_per_session;
  j["image_ids"] = cfg.image_ids;
  j["move_sample_hz"] = cfg.move_sample_hz;
  j["qualification_note"] = cfg.qualification_note;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "experiment_id",    "task_type",         "blur_sigma_px",
      "bubble_radius_px", "time_limit_s",      "mouse_modality",
      "min_description_chars", "images_per_session", "image_ids",
      "move_sample_hz",   "qualification_note"};
  if (!j.is_object()) throw ValidationError({"experiment config must be an object"});

  std::vector<std::string> problems;
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) problems.push_back("unknown field '" + key + "'");
  for (const auto& key : known)
    if (!j.contains(key)) problems.push_back("missing field '" + key + "'");
  if (!problems.empty()) throw ValidationError(std::move(problems));

  ExperimentConfig cfg;
  try {
    cfg.experiment_id = j.at("experiment_id").get<std::string>();
    cfg.task_type = parse_task_type(j.at("task_type").get<std::string>());
    cfg.blur_sigma_px = j.at("blur_sigma_px").get<double>();
    cfg.bubble_radius_px = j.at("bubble_radius_px").get<double>();
    const auto& t = j.at("time_limit_s");
    if (t.is_string()) {
      if (t.get<std::string>() != "unlimited")
        throw ValidationError({"time_limit_s must be a number or \"unlimited\""});
      cfg.time_limit_s.reset();
    } else {
      cfg.time_limit_s = t.get<double>();
    }
    cfg.mouse_modality = parse_mouse_modality(j.at("mouse_modality").get<std::string>());
    cfg.min_description_chars = j.at("min_description_chars").get<int>();
    cfg.images_per_session = j.at("images_per_session").get<int>();
    cfg.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    cfg.move_sample_hz = j.at("move_sample_hz").get<int>();
    cfg.qualification_note = j.at("qualification_note").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError({std::string("malformed experiment config: ") + e.what()});
  }
  return validate_config(cfg);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write config " + path.string());
  out << to_json(validate_config(cfg)).dump(2) << '\n';
}

double pixels_per_degree(const ViewingGeometry& geom) {
  std::vector<std::string> v;
  if (!(geom.viewer_distance_cm > 0.0)) v.emplace_back("viewer_distance_cm must be positive");
  if (!(geom.screen_width_cm > 0.0)) v.emplace_back("screen_width_cm must be positive");
  if (geom.screen_width_px <= 0) v.emplace_back("screen_width_px must be positive");
  if (!v.empty()) throw ValidationError(std::move(v));

  const double half_degree = 0.5 * std::numbers::pi / 180.0;
  const double cm_per_degree = 2.0 * geom.viewer_distance_cm * std::tan(half_degree);
  return cm_per_degree * (geom.screen_width_px / geom.screen_width_cm);
}

MapParams validate_map_params(const MapParams& p) {
  if (!(p.map_sigma_px > 0.0) || !std::isfinite(p.map_sigma_px))
    throw ValidationError({"map_sigma_px must be positive"});
  return p;
}

MapParams map_params_from_geometry(const ViewingGeometry& geom) {
  return MapParams{pixels_per_degree(geom)};
}

MapParams dataset_map_params(std::string_view dataset_tag) {
  if (dataset_tag == "osie") return MapParams{10.0};
  if (dataset_tag == "massvis" || dataset_tag == "fiwi") return MapParams{25.0};
  throw Error(ErrorCode::not_found, "no map sigma preset for dataset '" + std::string(dataset_tag) + "'");
}

}  // namespace bubbleview
