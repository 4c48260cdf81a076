// Experimenter command-line driver: preprocess, serve, analyze, cost,
// export-heatmaps.

#include <csignal>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "bubbleview/analysis.hpp"
#include "bubbleview/config.hpp"
#include "bubbleview/error.hpp"
#include "bubbleview/pipeline.hpp"
#include "bubbleview/service.hpp"
#include "bubbleview/store.hpp"

namespace fs = std::filesystem;
using namespace bubbleview;

namespace {

enum Exit : int { ok = 0, failure = 1, usage = 2, partial = 3, io = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  int jobs = 1;
  std::vector<fs::path> configs;
};

void print_list(const char* prefix, const std::vector<std::string>& items) {
  for (const auto& s : items) std::cerr << prefix << s << '\n';
}

int cmd_preprocess(const Globals& g, const fs::path& stimuli, std::optional<double> sigma) {
  if (!sigma) {
    if (g.configs.empty()) throw ValidationError({"preprocess needs --sigma or --config"});
    sigma = load_config(g.configs.front()).blur_sigma_px;
  }
  const fs::path cache = g.out.value_or("cache");
  const auto summary = run_preprocess(stimuli, *sigma, cache, g.jobs);
  std::cout << "blurred " << summary.blurred << ", cached " << summary.cache_hits << ", failed "
            << summary.failures.size() << " (sigma " << sigma_token(*sigma) << ", " << cache.string() << ")\n";
  print_list("failed: ", summary.failures);
  return summary.failures.empty() ? ok : partial;
}

struct ServeArgs {
  fs::path stimuli;
  fs::path cache = "cache";
  fs::path log = "events.jsonl";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string experimenter_key;
  std::optional<fs::path> consent;
};

int cmd_serve(const Globals& g, const ServeArgs& a) {
  if (g.configs.empty()) throw ValidationError({"serve needs at least one --config"});
  std::string key = a.experimenter_key;
  if (key.empty())
    if (const char* env = std::getenv("BUBBLEVIEW_EXPERIMENTER_KEY")) key = env;
  if (key.empty()) throw ValidationError({"serve needs --experimenter-key or BUBBLEVIEW_EXPERIMENTER_KEY"});

  std::vector<ExperimentConfig> configs;
  for (const auto& p : g.configs) configs.push_back(load_config(p));
  EventLog log(a.log, make_catalog(configs, a.stimuli));
  ServiceOptions opts;
  opts.stimuli_dir = a.stimuli;
  opts.cache_dir = a.cache;
  opts.experimenter_key = key;
  opts.seed = g.seed;
  opts.consent_page = a.consent;
  Service service(log, opts);
  const int warmed = service.warm_cache();
  std::cerr << "blurred " << warmed << " images into " << a.cache.string() << '\n';

  httplib::Server server;
  service.install_routes(server);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::jthread stopper([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });

  std::cerr << "listening on " << a.host << ':' << a.port << '\n';
  const bool listened = server.listen(a.host, a.port);
  if (!listened) {
    pthread_kill(stopper.native_handle(), SIGTERM);
    throw Error(ErrorCode::io, "cannot listen on " + a.host + ":" + std::to_string(a.port));
  }
  return ok;
}

struct AnalyzeArgs {
  fs::path manifest;
  std::optional<int> min_clicks_per_image;
  std::optional<double> participant_outlier_sd;
  bool no_outlier_rule = false;
  std::optional<int> n_pred;
  std::optional<int> n_splits;
};

RunManifest resolve_manifest(const Globals& g, const AnalyzeArgs& a) {
  RunManifest m = load_manifest(a.manifest);
  if (g.seed) m.seed = *g.seed;
  if (g.out) m.out = *g.out;
  if (!g.configs.empty()) m.config = g.configs.front();
  m.jobs = g.jobs;
  if (a.min_clicks_per_image) m.policy.min_clicks_per_image = *a.min_clicks_per_image;
  if (a.participant_outlier_sd) m.policy.participant_outlier_sd = *a.participant_outlier_sd;
  if (a.no_outlier_rule) m.policy.participant_outlier_sd.reset();
  if (a.n_pred) m.n_pred = *a.n_pred;
  if (a.n_splits) m.n_splits = *a.n_splits;
  return m;
}

int report(const AnalyzeSummary& s) {
  print_list("warning: ", s.warnings);
  print_list("failed: ", s.failures);
  for (const auto& p : s.written) std::cout << p.string() << '\n';
  return s.failures.empty() ? ok : partial;
}

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::validation: return usage;
    case ErrorCode::io:
    case ErrorCode::not_found: return io;
    default: return failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BubbleView experiment and analysis driver"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed recorded in every output");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", g.configs, "Experiment config (JSON); serve accepts several");

  auto* pre = app.add_subcommand("preprocess", "Blur every stimulus into the cache")->fallthrough();
  fs::path pre_stimuli;
  std::optional<double> pre_sigma;
  pre->add_option("--stimuli", pre_stimuli, "Directory of PNG stimuli")->required();
  pre->add_option("--sigma,--blur-sigma-px", pre_sigma, "Blur sigma in pixels (default: from --config)");

  auto* serve = app.add_subcommand("serve", "Run the experiment HTTP service")->fallthrough();
  ServeArgs sa;
  serve->add_option("--stimuli", sa.stimuli, "Directory of PNG stimuli")->required();
  serve->add_option("--cache", sa.cache, "Blurred image cache directory");
  serve->add_option("--log", sa.log, "Event log (JSON lines)");
  serve->add_option("--host", sa.host);
  serve->add_option("--port", sa.port);
  serve->add_option("--experimenter-key", sa.experimenter_key, "Key for monitoring routes");
  serve->add_option("--consent", sa.consent, "Static consent page");

  AnalyzeArgs aa;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("manifest", aa.manifest, "Run manifest (JSON)")->required();
    sub->add_option("--min-clicks-per-image", aa.min_clicks_per_image)->check(CLI::NonNegativeNumber);
    sub->add_option("--participant-outlier-sd", aa.participant_outlier_sd)->check(CLI::PositiveNumber);
    sub->add_flag("--no-outlier-rule", aa.no_outlier_rule);
  };
  auto* analyze = app.add_subcommand("analyze", "Maps, metrics, power fit, element and center-bias CSVs")->fallthrough();
  add_run_options(analyze);
  analyze->add_option("--n-pred", aa.n_pred, "Participants per prediction map (0 = all)");
  analyze->add_option("--n-splits", aa.n_splits)->check(CLI::PositiveNumber);
  auto* heat = app.add_subcommand("export-heatmaps", "Click maps and heatmap overlays only")->fallthrough();
  add_run_options(heat);

  auto* cost = app.add_subcommand("cost", "Per-image cost table")->fallthrough();
  CostModel cm;
  std::string label = "task";
  cost->add_option("--rate-per-min", cm.rate_per_min, "Dollars per minute of work")->capture_default_str();
  cost->add_option("--time-per-image-s", cm.time_per_image_s)->capture_default_str();
  cost->add_option("--images-per-task", cm.images_per_task)->capture_default_str();
  cost->add_option("--participants-lo", cm.participants_lo)->capture_default_str();
  cost->add_option("--participants-hi", cm.participants_hi)->capture_default_str();
  cost->add_option("--task-price", cm.task_price, "Fixed price per task (overrides rate * time)");
  cost->add_option("--label", label, "Row label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  try {
    if (*pre) return cmd_preprocess(g, pre_stimuli, pre_sigma);
    if (*serve) return cmd_serve(g, sa);
    if (*analyze) return report(run_analyze(resolve_manifest(g, aa)));
    if (*heat) return report(run_export_heatmaps(resolve_manifest(g, aa)));
    if (*cost) {
      const std::pair<std::string, CostModel> rows[] = {{label, cm}};
      write_cost_table(std::cout, rows);
      return ok;
    }
  } catch (const ValidationError& e) {
    print_list("invalid: ", e.violations());
    return usage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return io;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return failure;
  }
  return usage;
}
