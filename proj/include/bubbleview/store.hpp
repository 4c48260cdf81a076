#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bubbleview/config.hpp"
#include "bubbleview/maps.hpp"

namespace bubbleview {

enum class EventKind {
  session_begin,
  image_begin,
  click,
  move_sample,
  description_update,
  description_final,
  image_end,
  session_end,
};

std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view s);

/// One line of the event log.
///
/// Session-level records (session_begin, session_end) carry an empty
/// image_id. session_begin stores the session's image order in `text` as a
/// JSON array and its creation time (epoch ms) in `t_ms`; every other record
/// has t_ms relative to the current image_begin.
struct EventRecord {
  std::string session_id;
  std::string participant_id;
  std::string experiment_id;
  std::string image_id;
  std::int64_t seq = 0;
  EventKind kind = EventKind::click;
  std::optional<double> x;
  std::optional<double> y;
  double t_ms = 0.0;
  std::optional<std::string> text;

  bool operator==(const EventRecord&) const = default;
};

nlohmann::json to_json(const EventRecord& e);
/// Strict: exactly the EventRecord fields.
EventRecord event_from_json(const nlohmann::json& j);

struct ImageInfo {
  int width = 0;
  int height = 0;
};

/// What the log validates events against.
struct Catalog {
  std::map<std::string, ExperimentConfig> experiments;
  std::map<std::string, ImageInfo> images;
  std::set<std::string> closed_experiments;
};

enum class SessionStatus { open, complete, abandoned };
std::string_view to_string(SessionStatus s);

struct Session {
  std::string session_id;
  std::string participant_id;
  std::string experiment_id;
  std::vector<std::string> images;
  SessionStatus status = SessionStatus::open;
  double created_at_ms = 0.0;

  std::int64_t last_seq = 0;
  std::size_t images_done = 0;
  std::optional<std::string> open_image;
  double last_t_ms = 0.0;
  bool description_final = false;

  bool operator==(const Session&) const = default;
};

/// Raw code-point count of UTF-8 text.
std::size_t char_count(std::string_view utf8);

struct SeqRange {
  std::int64_t first = 0;
  std::int64_t last = 0;
  bool duplicate = false;
};

/// Append-only, line-delimited JSON event log. Every accepted record is
/// flushed and fsync'ed before the call returns; rejected records go to
/// `<path>.quarantine` with the reason. Opening an existing log replays it.
class EventLog {
 public:
  enum class Mode { read_write, read_only };

  EventLog(std::filesystem::path path, Catalog catalog, Mode mode = Mode::read_write);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  std::int64_t append(const EventRecord& e);

  /// All-or-nothing. A batch identical to already-committed records is a
  /// no-op reported with duplicate = true. Throws Error(conflict) naming the
  /// expected next seq on gaps or overlaps.
  SeqRange append_batch(std::span<const EventRecord> batch);

  std::optional<Session> session(const std::string& session_id) const;
  std::vector<Session> sessions() const;
  std::vector<EventRecord> events(const std::string& session_id) const;
  std::int64_t next_seq(const std::string& session_id) const;

  /// Canonical dump of all session state; equal digests mean equal state.
  std::string state_digest() const;

  const Catalog& catalog() const { return catalog_; }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path quarantine_path() const;

  void set_experiment_closed(const std::string& experiment_id, bool closed);
  bool experiment_closed(const std::string& experiment_id) const;

 private:
  struct SessionData {
    Session state;
    std::vector<EventRecord> events;
  };

  void apply(std::map<std::string, SessionData>& sessions, const EventRecord& e) const;
  void write_lines(const std::string& lines);
  void quarantine(const EventRecord& e, const std::string& reason);

  std::filesystem::path path_;
  Catalog catalog_;
  int fd_ = -1;
  mutable std::shared_mutex mutex_;
  std::map<std::string, SessionData> sessions_;
};

struct FilterPolicy {
  int min_clicks_per_image = 2;
  /// Drop participants whose per-image count is more than this many
  /// population SDs from the per-image mean. nullopt disables the rule.
  std::optional<double> participant_outlier_sd = 3.0;
};

std::string describe(const FilterPolicy& p);

struct FilteredPoints {
  PointSet points;
  std::size_t total_points = 0;
  std::size_t kept_points = 0;
  double removed_fraction = 0.0;
  std::vector<std::string> removed_participants;
};

/// Clicks (or move samples, for move-modality experiments) on one image,
/// after the participant filters. Outlier statistics are taken over every
/// participant that viewed the image, so raising the click minimum can only
/// remove points.
FilteredPoints to_pointset(const EventLog& log, const std::string& experiment_id,
                           const std::string& image_id, const FilterPolicy& policy);

struct FixationImport {
  std::string dataset_tag;
  std::map<std::string, PointSet> by_image;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

/// CSV with header image_id,observer_id,x,y,t_ms. Out-of-bounds rows are
/// dropped and counted; malformed rows raise ValidationError listing line
/// numbers. Points are ordered by (observer_id, t_ms).
FixationImport import_fixations(std::istream& in, const std::string& dataset_tag,
                                const std::map<std::string, ImageInfo>& images);
FixationImport import_fixations(const std::filesystem::path& path, const std::string& dataset_tag,
                                const std::map<std::string, ImageInfo>& images);
void export_fixations(std::ostream& out, const FixationImport& data);

}  // namespace bubbleview
