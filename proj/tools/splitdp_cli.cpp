#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "splitdp/splitdp.hpp"

namespace {

struct Options {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string format = "both";
};

int report_error(const std::string& kind, const std::string& message, const std::string& path = "") {
  nlohmann::ordered_json e;
  e["error"] = kind;
  e["message"] = message;
  if (!path.empty()) e["path"] = path;
  std::cerr << e.dump() << "\n";
  return kind == "usage" ? 2 : 1;
}

splitdp::Scenario load(const Options& opt) {
  splitdp::Scenario s = splitdp::load_scenario(opt.scenario);
  if (opt.seed) {
    s.seed = *opt.seed;
    s.echo["seed"] = *opt.seed;
  }
  if (!opt.out.empty()) s.output_dir = opt.out;
  return s;
}

void finish(const splitdp::RunRecord& record, const splitdp::Scenario& s, const Options& opt,
            std::chrono::steady_clock::time_point start) {
  const auto files = splitdp::emit_report(record, s.output_dir, splitdp::parse_report_format(opt.format));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::ordered_json summary;
  summary["output_dir"] = s.output_dir.string();
  summary["files"] = files.size();
  summary["scenario_hash"] = record.scenario_hash;
  summary["wall_clock_seconds"] = seconds;
  std::cout << summary.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-inference latency planning, feature-map privacy and reconstruction attack sweeps"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("-s,--scenario", opt.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  app.add_option("-o,--out", opt.out, "Output directory (overrides the scenario's output_dir)");
  app.add_option("--seed", opt.seed, "Master seed override");
  app.add_option("-j,--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("-f,--format", opt.format, "Table format")->check(CLI::IsMember({"csv", "json", "both"}));

  auto* profile_cmd = app.add_subcommand("profile", "Per-layer FLOPs, compute times and output sizes");
  auto* partition_cmd = app.add_subcommand("partition", "Optimal split point per network preset and trace point");
  auto* privacy_cmd = app.add_subcommand("privacy-sweep", "Argmax agreement vs Non-DP across the epsilon grid");
  auto* attack_cmd = app.add_subcommand("attack", "WRA and BINA reconstruction campaign");
  auto* report_cmd = app.add_subcommand("report", "Run every block present in the scenario");
  for (auto* cmd : {profile_cmd, partition_cmd, privacy_cmd, attack_cmd, report_cmd}) cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    const auto start = std::chrono::steady_clock::now();
    const splitdp::Scenario s = load(opt);
    splitdp::RunRecord record = splitdp::make_record(s);

    if (*profile_cmd) {
      if (!s.partition) throw splitdp::ConfigError("partition", "profile needs a partition block (compute capabilities)");
      record.has_partition = true;
      record.profile = splitdp::profile_rows(s.model, *s.partition);
      std::cout << splitdp::detail::rows_to_csv(record.profile);
      return 0;
    }
    if (*partition_cmd) splitdp::run_partition_sweep(s, record);
    if (*privacy_cmd) splitdp::run_privacy_sweep(s, record, opt.jobs);
    if (*attack_cmd) splitdp::run_attack_campaign(s, record, opt.jobs);
    if (*report_cmd) {
      if (s.partition) splitdp::run_partition_sweep(s, record);
      if (s.privacy) splitdp::run_privacy_sweep(s, record, opt.jobs);
      if (s.attack) splitdp::run_attack_campaign(s, record, opt.jobs);
    }
    finish(record, s, opt, start);
    return 0;
  } catch (const splitdp::ConfigError& e) {
    return report_error(e.kind(), e.what(), e.path());
  } catch (const splitdp::Error& e) {
    return report_error(e.kind(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error("config", e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
}
