#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bubbleview {

enum class TaskType { free_view, describe };
enum class MouseModality { click, move };

std::string_view to_string(TaskType t);
std::string_view to_string(MouseModality m);
TaskType parse_task_type(std::string_view s);
MouseModality parse_mouse_modality(std::string_view s);

/// One experiment's parameter set. Stimulus parameters are in image pixels.
struct ExperimentConfig {
  std::string experiment_id;
  TaskType task_type = TaskType::free_view;
  double blur_sigma_px = 30.0;
  double bubble_radius_px = 30.0;
  /// nullopt means unlimited; only allowed for the describe task.
  std::optional<double> time_limit_s = 10.0;
  MouseModality mouse_modality = MouseModality::click;
  int min_description_chars = 0;
  int images_per_session = 1;
  std::vector<std::string> image_ids;
  int move_sample_hz = 100;
  std::string qualification_note;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Returns one message per violated invariant; empty when the config is valid.
std::vector<std::string> config_violations(const ExperimentConfig& cfg);

/// Returns `cfg` unchanged if valid, otherwise throws ValidationError listing
/// every violation.
ExperimentConfig validate_config(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Strict: unknown or missing fields are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

struct ViewingGeometry {
  double viewer_distance_cm = 0.0;
  double screen_width_cm = 0.0;
  int screen_width_px = 0;
};

double pixels_per_degree(const ViewingGeometry& geom);

struct MapParams {
  double map_sigma_px = 25.0;
};

MapParams validate_map_params(const MapParams& p);

/// One degree of visual angle under `geom`. Never applied implicitly.
MapParams map_params_from_geometry(const ViewingGeometry& geom);

/// Map sigmas used for the reference eye-tracking datasets ("osie", "massvis",
/// "fiwi"). Throws Error(not_found) for anything else.
MapParams dataset_map_params(std::string_view dataset_tag);

}  // namespace bubbleview
