#include <CLI11.hpp>

#include <iostream>

#include "reef/pipeline.hpp"

namespace rp = reef::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"reef: vulnerability-fix dataset pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  bool offline = false;
  std::string out_dir;
  std::string filter_report;

  for (auto stage : {rp::Stage::Collect, rp::Stage::Filter, rp::Stage::Enrich, rp::Stage::Analyze, rp::Stage::Eval,
                     rp::Stage::Validate, rp::Stage::Export}) {
    auto* sub = app.add_subcommand(std::string(rp::stage_name(stage)));
    sub->add_option("--config", config_path, "pipeline configuration (JSON)")->required();
    sub->add_flag("--offline", offline, "serve every request from the cache; no network access");
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    if (stage == rp::Stage::Filter)
      sub->add_option("--filter-report", filter_report, "write every filter decision to this file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : rp::kUsage;
  }

  auto stage = *rp::parse_stage(app.get_subcommands().front()->get_name());
  rp::PipelineConfig config;
  try {
    config = rp::PipelineConfig::load(config_path);
    if (offline) config.offline = true;
    if (!out_dir.empty()) {
      bool default_cache = config.cache_dir == (std::filesystem::path(config.output_dir) / "cache").string();
      config.output_dir = std::filesystem::absolute(out_dir).lexically_normal().string();
      if (default_cache) config.cache_dir = (std::filesystem::path(config.output_dir) / "cache").string();
    }
  } catch (const reef::Error& e) {
    std::cerr << "reef: " << e.what() << "\n";
    return rp::kUsage;
  }

  rp::StageOptions options;
  if (!filter_report.empty()) options.filter_report = filter_report;
  auto env = rp::Environment::process();
  auto result = rp::run_stage(stage, config, env, options);
  std::cout << result.report.dump(2) << "\n";
  for (const auto& e : result.errors) std::cerr << "reef " << rp::stage_name(stage) << ": " << e << "\n";
  return result.exit_code;
}
