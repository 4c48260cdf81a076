#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bubbleview/error.hpp"
#include "bubbleview/imaging.hpp"
#include "bubbleview/store.hpp"

namespace httplib {
class Server;
}

namespace bubbleview {

/// Image dimensions for every image referenced by `configs`, read from
/// `<stimuli_dir>/<image_id>.png`.
Catalog make_catalog(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& stimuli_dir);

enum class ImageVariant { blurred, original };
ImageVariant parse_variant(std::string_view s);

struct ServiceOptions {
  std::filesystem::path stimuli_dir;
  std::filesystem::path cache_dir;
  std::string experimenter_key;
  /// Fixes session ids, image orders and tokens (test hook).
  std::optional<std::uint64_t> seed;
  /// Free-view advances are accepted this much before the limit.
  double advance_skew_s = 0.5;
  /// Milliseconds; defaults to the system clock.
  std::function<double()> clock_ms;
  std::string completion_secret = "bubbleview";
  std::optional<std::filesystem::path> consent_page;
};

struct Credentials {
  std::string session_token;
  std::string experimenter_key;
};

struct CreatedSession {
  Session session;
  std::string token;
  std::int64_t next_seq = 0;
};

struct AdvanceResult {
  std::optional<std::string> next_image;
  bool complete = false;
  std::string completion_code;
  std::int64_t next_seq = 0;
};

struct MonitorStream {
  std::string session_id;
  std::string participant_id;
  std::vector<EventRecord> events;
};

struct MonitorSnapshot {
  ExperimentConfig config;
  std::string image_id;
  std::string blurred_url;
  std::string original_url;
  std::vector<MonitorStream> streams;
};

/// Premature advance, with what is still missing.
class AdvanceRejected : public Error {
 public:
  AdvanceRejected(const std::string& message, double remaining_s, int remaining_chars)
      : Error(ErrorCode::premature_advance, message), remaining_s(remaining_s), remaining_chars(remaining_chars) {}
  double remaining_s;
  int remaining_chars;
};

/// Participant and monitoring endpoints over an EventLog. Participants only
/// post interaction records (clicks, move samples, description drafts); the
/// service writes session/image boundaries and final descriptions itself.
class Service {
 public:
  Service(EventLog& log, ServiceOptions opts);
  ~Service();

  CreatedSession create_session(const std::string& experiment_id, const std::string& participant_id);
  const ExperimentConfig& experiment(const std::string& experiment_id) const;

  /// Blurred bytes come from the on-disk cache at the experiment's sigma;
  /// original bytes are the stimulus file. Either is immutable once served.
  /// Participants are limited to their session's images; experimenters name
  /// the experiment whose sigma applies.
  std::shared_ptr<const std::vector<std::uint8_t>> get_image(const std::string& image_id, ImageVariant variant,
                                                             const Credentials& cred,
                                                             const std::string& experiment_id = {});

  SeqRange post_events(const std::string& session_id, const std::string& token,
                       std::vector<EventRecord> batch);

  AdvanceResult advance(const std::string& session_id, const std::string& token, const std::string& image_id,
                        const std::optional<std::string>& description);

  MonitorSnapshot monitor(const std::string& experiment_id, const std::string& image_id,
                          const std::string& experimenter_key) const;

  /// Pre-blurs every image of every experiment. Returns how many were computed.
  int warm_cache();

  void install_routes(httplib::Server& server);

  std::string completion_code(const std::string& session_id) const;

 private:
  double now_ms() const;
  std::string new_token();
  std::mutex& session_mutex(const std::string& session_id);
  void authorize(const std::string& session_id, const std::string& token) const;
  void remember_token(const std::string& session_id, const std::string& token);
  std::filesystem::path stimulus_path(const std::string& image_id) const;

  EventLog& log_;
  ServiceOptions opts_;
  BlurCache cache_;

  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, std::string> token_to_session_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_mutexes_;
  std::map<std::string, double> image_started_ms_;
  std::map<std::pair<std::string, int>, std::shared_ptr<const std::vector<std::uint8_t>>> bytes_;
};

int http_status(ErrorCode code);

}  // namespace bubbleview
