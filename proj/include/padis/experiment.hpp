#pragma once

// Batch experiment driver behind the command-line tool: case loading,
// retrospective undersampling, the four reconstruction methods, metric
// tables, uncertainty maps, sweeps and prior training.

#include "padis/data_io.hpp"
#include "padis/metrics.hpp"
#include "padis/priors.hpp"
#include "padis/reader_study.hpp"
#include "padis/samplers.hpp"
#include "padis/table.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace padis {

struct PhantomSpec {
  int count = 0;
  int size = 64;
  int coils = 4;
  std::uint64_t seed = 1;
};

struct PriorSpec {
  /// "gmm-fit": fit on `train_volumes`, or on `train_images` phantoms seeded
  /// from `train_seed` when that list is empty; "weights": load a weights
  /// container from `weights`; "none".
  std::string source = "gmm-fit";
  std::filesystem::path weights;
  std::vector<std::filesystem::path> train_volumes;
  int patch_size = 8;
  int patches = 200;
  int train_images = 8;
  std::uint64_t train_seed = 1000;
  EmOptions em;
};

struct ExperimentConfig {
  std::optional<PhantomSpec> phantoms;
  std::vector<std::filesystem::path> volumes;
  std::vector<double> R = {4.0};
  std::vector<std::uint64_t> mask_seeds = {0};
  int acs = 24;
  std::vector<std::string> methods = {"padis-dps", "whole-image-dps", "ista-l1", "adjoint"};
  PriorSpec prior;
  ScheduleParams schedule;
  DpsConfig sampler;
  IstaOptions ista;
  CropRegion crop;
  /// Reuses the first mask seed for every uncertainty draw.
  bool repeat_mask = false;
  std::vector<int> train_sizes;  // sweep only
  std::filesystem::path output = "results";
  int workers = 1;
  bool save_recons = true;

  int num_cases() const;
};

/// Parses the JSON config; relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// One ground-truth case: fully sampled truth image and coil maps.
struct Case {
  std::string id;
  ComplexImage truth;
  CoilSensitivities sens;
};

/// Phantom cases are generated; volume cases use truth = sum_c conj(S_c) F^H y_c
/// of the stored (fully sampled) k-space.
Case load_case(const ExperimentConfig& cfg, int index);

/// Undersampled, ACS-normalized measurement plus the truth on the same scale.
struct Acquisition {
  KSpace y;
  ComplexImage truth;
  double scale = 1.0;
};

Acquisition acquire(const Case& c, double R, std::uint64_t mask_seed, int acs);

/// Trains or loads the prior named by the config. Returns nullptr for "none".
ScoreModelPtr build_prior(const ExperimentConfig& cfg, std::vector<double>* log_likelihood = nullptr);

/// ACS-normalized training truths for a gmm-fit prior.
std::vector<ComplexImage> training_images(const ExperimentConfig& cfg, const PriorSpec& spec);
EmResult train_prior(const ExperimentConfig& cfg, const PriorSpec& spec);

/// Runs `method` on an acquisition. Sampler seeds are derived from `seed`.
ComplexImage run_method(const std::string& method, const Acquisition& acq, const CoilSensitivities& sens,
                        const ScoreModelPtr& prior, const ExperimentConfig& cfg, std::uint64_t seed);

struct RecordRow {
  std::string case_id;
  std::string method;
  double R = 0.0;
  std::uint64_t mask_seed = 0;
  MetricReport metrics;
  std::string status = "ok";
};

/// Adds per-(R, method pair) paired-difference footers: case_id "paired_mean"
/// and "paired_sd", method "a-b".
ResultTable metrics_table(const std::vector<RecordRow>& rows, const std::vector<std::string>& methods);

struct RunSummary {
  int succeeded = 0;
  int failed = 0;
};

/// Exit code for a batch: 0 all ok, 1 some failed, and when nothing
/// succeeded also 1.
int exit_code(const RunSummary& s);

RunSummary cmd_recon(const ExperimentConfig& cfg, std::vector<RecordRow>* out = nullptr);
RunSummary cmd_uncertainty(const ExperimentConfig& cfg, ResultTable* out = nullptr);
RunSummary cmd_sweep(const ExperimentConfig& cfg, ResultTable* out = nullptr);
RunSummary cmd_train_prior(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
/// Writes summary.md and summary.json next to `out_prefix`.
ReaderSummary cmd_stats(const std::filesystem::path& votes_csv, const std::string& target,
                        int num_methods, const std::filesystem::path& out_prefix);
void cmd_phantom_gen(const PhantomSpec& spec, const std::filesystem::path& out_dir);

/// Runs fn(i) for i in [0, n) on at most `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

RealImage magnitude(const ComplexImage& x);

}  // namespace padis
