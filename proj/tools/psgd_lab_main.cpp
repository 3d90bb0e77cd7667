// Command-line front end: desk-scale experiments with CSV/JSON reports.
//
//   psgd_lab <escape|equivalence|convergence|constants|noise_sweep>
//            [--config FILE] [--seed N] [--replicas N] [--out DIR]
//            [--zeta Z] [--gamma G] [--steps T] [--epsilon E] [--theorem {2,3}]
//
// Exit codes: 0 = all assertable checks passed, 1 = a check failed or the
// experiment errored, 2 = usage or configuration error.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "psgd/harness.hpp"

namespace {

struct KindFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  std::optional<double> zeta;
  std::optional<double> gamma;
  std::optional<int> steps;
  std::optional<double> epsilon;
  std::optional<int> theorem;
};

void add_common(CLI::App* sub, KindFlags& flags) {
  sub->add_option("--config", flags.config_path, "JSON config file (flags take precedence)");
  sub->add_option("--out", flags.out_dir, "output directory for manifest.json and CSV tables");
  sub->add_option("--seed", flags.seed, "experiment seed");
  sub->add_option("--replicas", flags.replicas, "independent replicas");
  sub->add_option("--zeta", flags.zeta, "smoothing level");
  sub->add_option("--gamma", flags.gamma, "step size (0 = grid search / theoretical)");
  sub->add_option("--steps", flags.steps, "iterations per run");
  sub->add_option("--epsilon", flags.epsilon, "target accuracy for theoretical step sizes");
  sub->add_option("--theorem", flags.theorem, "theorem id for convergence envelopes")
      ->check(CLI::IsMember({1, 2, 3}));
}

nlohmann::json overrides_from(psgd::ExperimentKind kind, const KindFlags& flags) {
  nlohmann::json o = nlohmann::json::object();
  if (flags.seed) o["seed"] = *flags.seed;
  if (flags.replicas) o["replicas"] = *flags.replicas;
  if (flags.gamma) o["gamma"] = *flags.gamma;
  if (flags.steps) o["steps"] = *flags.steps;
  if (flags.epsilon) o["epsilon"] = *flags.epsilon;
  if (flags.theorem) o["theorem"] = *flags.theorem;
  if (flags.zeta) {
    // escape and noise_sweep take a list of smoothing levels
    if (kind == psgd::ExperimentKind::escape || kind == psgd::ExperimentKind::noise_sweep)
      o["zetas"] = nlohmann::json::array({*flags.zeta});
    else
      o["zeta"] = *flags.zeta;
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbed-SGD laboratory: escape, equivalence, convergence, constants"};
  app.require_subcommand(1);

  const psgd::ExperimentKind kinds[] = {
      psgd::ExperimentKind::escape, psgd::ExperimentKind::equivalence,
      psgd::ExperimentKind::convergence, psgd::ExperimentKind::constants,
      psgd::ExperimentKind::noise_sweep};
  KindFlags flags[5];
  CLI::App* subs[5];
  const char* descriptions[5] = {
      "last-iterate escape comparison of GD vs perturbed SGD",
      "SGD vs perturbed GD equality-in-expectation trajectories",
      "convergence envelope verification for theorem 2 or 3",
      "assumption-constant estimation and analytic comparison",
      "escape behaviour across smoothing levels at matched noise"};
  for (int i = 0; i < 5; ++i) {
    subs[i] = app.add_subcommand(psgd::kind_name(kinds[i]), descriptions[i]);
    add_common(subs[i], flags[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit clean, usage errors are 2
  }

  int which = -1;
  for (int i = 0; i < 5; ++i)
    if (subs[i]->parsed()) which = i;
  if (which < 0) {
    std::fprintf(stderr, "error: no subcommand given\n");
    return 2;
  }

  const psgd::ExperimentKind kind = kinds[which];
  const KindFlags& kf = flags[which];

  psgd::ExperimentReport report;
  try {
    const psgd::ExperimentConfig config =
        psgd::load_config(kind, kf.config_path, overrides_from(kind, kf));
    try {
      report = psgd::run_experiment(config);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "experiment failed: %s\n", e.what());
      return 1;
    }
  } catch (const psgd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  const std::string out_dir = kf.out_dir.empty() ? "out_" + psgd::kind_name(kind) : kf.out_dir;
  try {
    psgd::write_report(report, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "report error: %s\n", e.what());
    return 1;
  }

  std::printf("wrote %s/manifest.json (%zu tables)\n", out_dir.c_str(), report.tables.size());
  for (const auto& [name, ok] : report.verdicts)
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name.c_str());
  return report.all_passed() ? 0 : 1;
}
