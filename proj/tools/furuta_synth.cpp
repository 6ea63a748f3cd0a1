// Command-line front end for the experiment pipeline.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "furuta/experiment.hpp"

namespace {

struct Options {
  std::string config_path;
  std::optional<long> seed;
  std::string out_dir;
  std::string preset;
  std::string objective;
};

furuta::ExperimentConfig resolve(const Options& opt, const std::string& preset,
                                 const std::optional<std::string>& forced_controller) {
  furuta::Config cfg;
  const std::string base = preset.empty() ? opt.preset : preset;
  if (!base.empty()) cfg = furuta::preset_config(base);
  if (!opt.config_path.empty()) cfg.merge(furuta::Config::load(opt.config_path));
  if (forced_controller) cfg.set("controller", *forced_controller);
  if (opt.seed) cfg.set("seed", std::to_string(*opt.seed));
  if (!opt.out_dir.empty()) cfg.set("output_dir", opt.out_dir);
  if (!opt.objective.empty()) cfg.set("objective", opt.objective);
  return furuta::ExperimentConfig::from_config(cfg);
}

int execute(const Options& opt, furuta::Stage stage, const std::string& preset = {},
            const std::optional<std::string>& forced_controller = std::nullopt) {
  furuta::ExperimentConfig cfg;
  try {
    cfg = resolve(opt, preset, forced_controller);
  } catch (const furuta::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return furuta::kExitConfigError;
  }
  const auto report = furuta::run_guarded(cfg, stage);
  if (report.exit_code == furuta::kExitOk && report.stability) {
    std::cout << "wrote " << cfg.output_dir << " (" << (report.stability->stable ? "stable" : "unstable")
              << ", spectral abscissa " << report.stability->spectral_abscissa << ", radius "
              << report.stability->spectral_radius << ")\n";
  }
  return report.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Furuta pendulum controller synthesis and simulation"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "Key-value or JSON configuration file");
  app.add_option("--seed", opt.seed, "Seed for synthesis and noise");
  app.add_option("--out", opt.out_dir, "Output directory");
  app.add_option("--preset", opt.preset, "Start from a named preset");
  app.add_option("--objective", opt.objective, "Synthesis objective")
      ->check(CLI::IsMember({"abscissa", "paper-infnorm"}));

  auto* linearize = app.add_subcommand("linearize", "Write the plant model and its open-loop spectrum");
  auto* lqr = app.add_subcommand("lqr", "Design an LQR gain and analyze the closed loop");
  auto* synthesize = app.add_subcommand("synthesize", "Search a dynamic controller by Bayesian optimization");
  auto* simulate = app.add_subcommand("simulate", "Design, analyze and simulate the configured loop");
  auto* analyze = app.add_subcommand("analyze", "Closed-loop stability of the configured controller");
  auto* preset = app.add_subcommand("preset", "Run a named experiment end to end");
  std::string preset_name;
  preset->add_option("name", preset_name, "Preset name")
      ->required()
      ->check(CLI::IsMember(furuta::preset_names()));
  for (auto* sub : {linearize, lqr, synthesize, simulate, analyze, preset}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return furuta::kExitConfigError;
  }

  if (*linearize) return execute(opt, furuta::Stage::kModel);
  if (*lqr) return execute(opt, furuta::Stage::kAnalysis, {}, "lqr");
  if (*synthesize) return execute(opt, furuta::Stage::kAnalysis, {}, "synthesize");
  if (*analyze) return execute(opt, furuta::Stage::kAnalysis);
  if (*simulate) return execute(opt, furuta::Stage::kSimulation);
  return execute(opt, furuta::Stage::kSimulation, preset_name);
}
