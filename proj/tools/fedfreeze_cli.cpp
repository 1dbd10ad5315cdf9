#include "fedfreeze/experiment.hpp"
#include "fedfreeze/report.hpp"

#include <CLI11.hpp>
#include <glob.h>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

namespace ff = fedfreeze;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::vector<std::string> expand(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const auto& p : patterns) {
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    } else {
      out.push_back(p);
    }
    ::globfree(&g);
  }
  return out;
}

std::vector<nlohmann::json> load_all(const std::vector<std::string>& patterns) {
  std::vector<nlohmann::json> reports;
  for (const auto& path : expand(patterns)) reports.push_back(ff::load_report(path));
  return reports;
}

int run(const std::string& config_path, std::optional<std::uint64_t> seed, std::string out, int parallel) {
  ff::ExperimentConfig cfg = ff::load_config(config_path);
  if (seed) cfg.train.seed = *seed;
  if (out.empty()) {
    if (const char* env = std::getenv("FEDFREEZE_OUTPUT_DIR"); env && *env) out = env;
  }
  if (!out.empty()) cfg.output_dir = out;
  if (parallel < 1) throw ff::ConfigError("--parallel: must be >= 1");

  std::atomic<int> next{0};
  std::mutex io;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int r = next++; r < cfg.repetitions; r = next++) {
      try {
        const ff::RunReport report = ff::run_repetition(cfg, r);
        ff::write_run_artifacts(report, cfg.output_dir);
        std::lock_guard lock(io);
        std::cout << report.run_id << ": seed " << report.seed << ", freeze_round "
                  << (report.freeze_round ? std::to_string(*report.freeze_round) : "none") << ", "
                  << report.wall_ms_total / 1000.0 << " s\n";
      } catch (...) {
        std::lock_guard lock(io);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (int i = 0; i < std::min(parallel, cfg.repetitions); ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training simulator with adaptive encoder freezing"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int parallel = 1;
  auto* run_cmd = app.add_subcommand("run", "Run every repetition of a config");
  run_cmd->add_option("config", config_path, "YAML config file")->required();
  run_cmd->add_option("--seed", seed, "Base seed (overrides train.seed)");
  run_cmd->add_option("--out", out_dir, "Output directory (overrides FEDFREEZE_OUTPUT_DIR and output_dir)");
  run_cmd->add_option("--parallel", parallel, "Repetitions run concurrently");

  std::vector<std::string> off_globs, on_globs;
  std::string compare_json;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare no-freeze and adaptive-freeze reports");
  cmp_cmd->add_option("--off", off_globs, "Reports without freezing (globs)")->required();
  cmp_cmd->add_option("--on", on_globs, "Reports with adaptive freezing (globs)")->required();
  cmp_cmd->add_option("--json", compare_json, "Also write the comparison as JSON");

  std::string report_path, trace_csv;
  auto* trace_cmd = app.add_subcommand("trace", "Print the per-round drift log of a report");
  trace_cmd->add_option("report", report_path, "Report JSON")->required();
  trace_cmd->add_option("--csv", trace_csv, "Also write the trace as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run(config_path, seed, out_dir, parallel);
    if (*cmp_cmd) {
      const auto c = ff::compare(load_all(off_globs), load_all(on_globs));
      std::cout << c.text;
      if (!compare_json.empty()) ff::write_file_atomic(compare_json, c.json.dump(2) + "\n");
      return 0;
    }
    if (*trace_cmd) {
      const auto rows = ff::drift_trace(ff::load_report(report_path));
      std::cout << ff::format_drift_trace(rows);
      if (!trace_csv.empty()) ff::write_file_atomic(trace_csv, ff::drift_trace_csv(rows));
      return 0;
    }
  } catch (const ff::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
