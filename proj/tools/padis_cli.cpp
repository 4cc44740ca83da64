// padis: reconstruction experiments, prior training, reader-study
// statistics and the study server.

#include "padis/experiment.hpp"
#include "padis/study_service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <optional>

namespace {

constexpr int kUsageError = 2;

struct SamplerFlags {
  std::optional<int> steps;
  std::optional<double> zeta;
  std::optional<int> inner_loops;
  std::optional<int> pad;
  std::optional<int> workers;
  std::optional<std::string> output;

  void add(CLI::App* app) {
    app->add_option("--steps,-K", steps, "Noise levels K (default 104)");
    app->add_option("--zeta", zeta, "Data-consistency weight (default 3.0)");
    app->add_option("--inner-loops,-L", inner_loops, "Inner loops per level L (default 10)");
    app->add_option("--pad,-M", pad, "Canvas padding M per side (default 64)");
    app->add_option("--workers,-j", workers, "Concurrent cases");
    app->add_option("--output,-o", output, "Output directory");
  }

  void apply(padis::ExperimentConfig& cfg) const {
    if (steps) cfg.schedule.steps = *steps;
    if (zeta) cfg.sampler.zeta = *zeta;
    if (inner_loops) cfg.sampler.inner_loops = *inner_loops;
    if (pad) cfg.sampler.pad = *pad;
    if (workers) cfg.workers = *workers;
    if (output) cfg.output = *output;
  }
};

void report(const padis::RunSummary& s) {
  std::cerr << s.succeeded << " succeeded, " << s.failed << " failed\n";
}

padis::StudyServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-prior diffusion MRI reconstruction toolkit"};
  app.require_subcommand(1);

  std::string config;
  SamplerFlags recon_flags, unc_flags, sweep_flags;

  auto* recon = app.add_subcommand("recon", "Reconstruct every case with every configured method");
  recon->add_option("--config,-c", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  recon_flags.add(recon);

  int mask_seeds = 10;
  auto* unc = app.add_subcommand("uncertainty", "Pixelwise SD maps over random masks");
  unc->add_option("--config,-c", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  auto* seeds_opt = unc->add_option("--mask-seeds", mask_seeds, "Number of mask seeds 0..n-1 (default 10)");
  unc_flags.add(unc);

  auto* sweep = app.add_subcommand("sweep", "Grid over R and training-set size");
  sweep->add_option("--config,-c", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep_flags.add(sweep);

  std::string prior_out;
  auto* train = app.add_subcommand("train-prior", "Fit a GMM patch prior and write a weights container");
  train->add_option("--config,-c", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", prior_out, "Weights directory")->required();

  std::string votes, target, stats_out;
  int methods = 3;
  auto* stats = app.add_subcommand("stats", "Reader-study statistics from a votes CSV");
  stats->add_option("--votes", votes, "Votes CSV")->required()->check(CLI::ExistingFile);
  stats->add_option("--target", target, "Method whose preference is tested")->required();
  stats->add_option("--methods", methods, "Methods per case (default 3)");
  stats->add_option("--out", stats_out, "Write <out>.md and <out>.json");

  padis::PhantomSpec phantom{1, 64, 4, 1};
  std::string phantom_out;
  auto* pgen = app.add_subcommand("phantom-gen", "Write phantoms as fully sampled volume containers");
  pgen->add_option("--count", phantom.count, "Number of phantoms");
  pgen->add_option("--size", phantom.size, "Image side");
  pgen->add_option("--coils", phantom.coils, "Coil count");
  pgen->add_option("--seed", phantom.seed, "Seed of the first phantom");
  pgen->add_option("--out", phantom_out, "Output directory")->required();

  std::string root = "studies", host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the reader-study HTTP service");
  serve->add_option("--root", root, "Study store directory");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*recon || *unc || *sweep) {
      padis::ExperimentConfig cfg = padis::load_config(config);
      padis::RunSummary s;
      if (*recon) {
        recon_flags.apply(cfg);
        s = padis::cmd_recon(cfg);
      } else if (*unc) {
        unc_flags.apply(cfg);
        if (*seeds_opt || cfg.mask_seeds.size() < 2) {
          if (mask_seeds < 2) throw padis::DomainError("uncertainty: --mask-seeds must be at least 2");
          cfg.mask_seeds.clear();
          for (int i = 0; i < mask_seeds; ++i) cfg.mask_seeds.push_back(static_cast<std::uint64_t>(i));
        }
        s = padis::cmd_uncertainty(cfg);
      } else {
        sweep_flags.apply(cfg);
        s = padis::cmd_sweep(cfg);
      }
      report(s);
      return padis::exit_code(s);
    }
    if (*train) {
      const auto s = padis::cmd_train_prior(padis::load_config(config), prior_out);
      report(s);
      return padis::exit_code(s);
    }
    if (*stats) {
      const auto summary = padis::cmd_stats(votes, target, methods, stats_out);
      std::cout << padis::to_markdown(summary);
      return 0;
    }
    if (*pgen) {
      padis::cmd_phantom_gen(phantom, phantom_out);
      return 0;
    }
    if (*serve) {
      padis::StudyServer server(root);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::cerr << "serving studies from " << root << " on http://" << host << ":" << port << "\n";
      server.run(host, port);
      g_server = nullptr;
      return 0;
    }
  } catch (const padis::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsageError;
}
