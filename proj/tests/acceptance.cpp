// Acceptance gate: one PASS/FAIL line per exit criterion.
//
//   acceptance                    run every criterion
//   acceptance --criterion NAME   run one
//   acceptance --list             print the criterion names

#include "padis/experiment.hpp"
#include "padis/patch_engine.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace padis;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig desk_config(const fs::path& out) {
  ExperimentConfig cfg = load_config(fs::path(PADIS_CONFIG_DIR) / "desk_scale.json");
  cfg.output = out;
  cfg.workers = 1;
  return cfg;
}

void schedule(Outcome& o) {
  const auto t0 = Clock::now();
  const auto ts = make_schedule({104, 0.003, 10.0, 7.0});
  const double ms = 1e3 * seconds_since(t0);
  bool decreasing = true;
  for (std::size_t k = 1; k < ts.size(); ++k) decreasing = decreasing && ts[k] < ts[k - 1];
  o.detail << "K=" << ts.size() << " t0=" << ts.front() << " t_last=" << ts.back() << " " << ms << " ms";
  o.require(ts.size() == 104, "length 104");
  o.require(ts.front() == 10.0 && ts.back() == 0.003, "exact endpoints");
  o.require(decreasing, "strictly decreasing");
  o.require(ms < 1.0, "runtime < 1 ms");
}

void network_calls(Outcome& o) {
  Rng rng(1);
  const CoilSensitivities sens = test::random_sens(16, 16, 2, rng);
  const SamplingMask mask = generate_mask({0, 16, 2.0, 4});
  const KSpace y = apply_forward(random_complex_image(16, 16, rng), sens, mask);
  CountingModel counter(std::make_shared<IdentityDenoiser>());
  DpsConfig cfg;
  cfg.pad = 8;
  cfg.patch_size = 16;
  ve_dps_reconstruct(y, sens, counter, ScheduleParams{}, cfg);
  o.detail << counter.calls() << " denoiser calls";
  o.require(counter.calls() == 1040, "exactly 1040 calls");
}

void adjoint_suite(Outcome& o) {
  Rng rng(2);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const CoilSensitivities s = test::random_sens(64, 64, 4, rng);
    const SamplingMask m = test::random_mask(64, rng.uniform(0.1, 1.0), rng);
    const ComplexImage x = random_complex_image(64, 64, rng);
    KSpace u;
    u.mask = m;
    for (int c = 0; c < 4; ++c) {
      ComplexImage k = random_complex_image(64, 64, rng);
      apply_mask_inplace(k, m);
      u.coils.push_back(std::move(k));
    }
    const cdouble lhs = inner(apply_forward(x, s, m), u);
    const cdouble rhs = (x.conjugate() * apply_adjoint(u, s)).sum();
    worst = std::max(worst, std::abs(lhs - rhs) / (test::norm(x) * std::sqrt(squared_norm(u))));
  }
  const double secs = seconds_since(t0);
  o.detail << "100 dot tests, worst rel. err " << worst << ", " << secs << " s";
  o.require(worst <= 1e-10, "rel. err <= 1e-10");
  o.require(secs < 5.0, "runtime < 5 s");
}

Eigen::VectorXd randn(int n, Rng& rng, double s = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = s * rng.normal();
  return v;
}

void score_oracles(Outcome& o) {
  const auto t0 = Clock::now();
  Rng rng(3);

  // Gaussian prior: denoiser score against the analytic smoothed-density gradient.
  double tweedie = 0.0;
  const Eigen::VectorXd mu = randn(32, rng);
  const IsotropicGaussianPrior gauss(4, mu, 2.5);
  for (int k = 0; k < 20; ++k) {
    const double t = rng.uniform(0.01, 10.0);
    const Eigen::VectorXd x = randn(32, rng, 3.0);
    const Eigen::VectorXd score = (gauss.denoise(x, t, {}) - x) / (t * t);
    const Eigen::VectorXd analytic = -(x - mu) / (2.5 + t * t);
    tweedie = std::max(tweedie, (score - analytic).norm() / analytic.norm());
  }

  // Mixture score against central differences of log p_t.
  const GmmPatchPrior gmm = test::random_gmm(8, 3, rng, 0.5);
  const Eigen::VectorXd pos = Eigen::VectorXd::Zero(128);
  double fd_worst = 0.0;
  const double h = 1e-4;
  for (int k = 0; k < 50; ++k) {
    const double t = rng.uniform(0.1, 2.0);
    const int comp = static_cast<int>(rng.uniform_index(3));
    const Eigen::VectorXd x = gmm.components()[comp].mean + randn(128, rng, 0.5);
    Eigen::MatrixXd batch(128, 256);
    for (int i = 0; i < 128; ++i) {
      batch.col(2 * i) = x;
      batch.col(2 * i + 1) = x;
      batch(i, 2 * i) += h;
      batch(i, 2 * i + 1) -= h;
    }
    const Eigen::VectorXd lp = gmm.log_density(batch, t, pos.replicate(1, 256));
    Eigen::VectorXd fd(128);
    for (int i = 0; i < 128; ++i) fd(i) = (lp(2 * i) - lp(2 * i + 1)) / (2 * h);
    const Eigen::VectorXd score = (gmm.denoise(x, t, pos) - x) / (t * t);
    fd_worst = std::max(fd_worst, (score - fd).norm() / fd.norm());
  }

  // Offset-averaged patch score against the whole-image closed form.
  const PadSpec spec = PadSpec::make(8, 4, 4);
  const IsotropicGaussianPrior patch = IsotropicGaussianPrior::constant(4, cdouble(0.3, -0.2), 1.7);
  const ComplexImage x = random_complex_image(16, 16, rng);
  const double t = 0.6;
  ComplexImage avg = ComplexImage::Zero(16, 16);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) avg += patch_score_at(x, t, patch, spec, {a, b});
  avg /= 16.0;
  const double offset_err = test::max_abs(avg + (x - cdouble(0.3, -0.2)) / (1.7 + t * t));

  const double secs = seconds_since(t0);
  o.detail << "tweedie " << tweedie << ", fd " << fd_worst << ", offset-avg " << offset_err << ", " << secs << " s";
  o.require(tweedie <= 1e-10, "Tweedie to 1e-10");
  o.require(fd_worst <= 1e-4, "finite differences to 1e-4");
  o.require(offset_err <= 1e-8, "offset average to 1e-8");
  o.require(secs < 30.0, "runtime < 30 s");
}

void reassembly(Outcome& o) {
  Rng rng(4);
  int trials = 0, exact = 0;
  while (trials < 1000) {
    const int p = 1 + static_cast<int>(rng.uniform_index(6));
    const int n = p * (1 + static_cast<int>(rng.uniform_index(5)));
    const int m = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n / 2 + 1)));
    if (n - 2 * m < 1) continue;
    const PadSpec s = PadSpec::make(n - 2 * m, m, p);
    const PatchGrid g = make_grid(s, sample_offset(s, rng));
    const ComplexImage x = random_complex_image(n, n, rng);
    PatchBatch d(2 * p * p, static_cast<Eigen::Index>(g.patches.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = 1e3 * rng.normal();
    ComplexImage brute = x;
    for (std::size_t k = 0; k < g.patches.size(); ++k)
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          brute((g.patches[k].row_start + r) % n, (g.patches[k].col_start + c) % n) =
              cdouble(d(r * p + c, k), d(p * p + r * p + c, k));
    exact += (reassemble_denoised(x, g, d) == brute).all();
    ++trials;
  }
  o.detail << exact << "/" << trials << " grids bit-exact";
  o.require(exact == trials, "all grids exact");
}

void reader_study_statistics(Outcome& o) {
  const auto t0 = Clock::now();
  test::TempDir dir;
  write_text_file(dir / "votes.csv", votes_to_csv(test::preference_table_votes()));
  const ReaderSummary s = cmd_stats(dir / "votes.csv", "padis", 3, {});

  struct ReferenceRow {
    std::string label;
    int picks, total;
    double lo, hi;
  };
  const std::vector<ReferenceRow> rows = {
      {"majority", 55, 60, 81.9, 96.4},       {"slices=25", 30, 30, 88.7, 100.0},
      {"slices=500", 25, 30, 66.4, 92.7},     {"contrast=T1/FLAIR", 21, 24, 69.0, 95.7},
      {"contrast=T2", 34, 36, 81.9, 98.5},    {"r1", 50, 60, 72.0, 90.7},
      {"r2", 58, 60, 88.6, 99.1},             {"r3", 47, 60, 66.4, 86.9}};
  auto find = [&](const std::string& label) -> const ProportionRow* {
    if (label == "majority") return &s.majority;
    for (const auto& r : s.cohorts)
      if (r.label == label) return &r;
    for (const auto& r : s.raters)
      if (r.label == label) return &r;
    return nullptr;
  };
  double worst = 0.0;
  int stars = 0;
  for (const auto& p : rows) {
    const ProportionRow* r = find(p.label);
    if (!r) {
      o.require(false, "row " + p.label + " present");
      continue;
    }
    o.require(r->tally.picks == p.picks && r->tally.total == p.total, p.label + " counts");
    const double err = std::max(std::abs(100 * r->ci.lower - p.lo), std::abs(100 * r->ci.upper - p.hi));
    worst = std::max(worst, err);
    o.require(err <= 0.1, p.label + " CI within 0.1 pp");
    const double p0 = p.label[0] == 'r' ? 1.0 / 3.0 : 7.0 / 27.0;
    o.require(std::abs(r->p0 - p0) < 1e-15, p.label + " p0");
    stars += r->significant && r->p_value < 0.001;
  }
  o.require(stars == 8, "all 8 rows starred");

  // Strict-majority null probability by enumerating all 27 vote patterns.
  int wins = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) wins += (a == 0) + (b == 0) + (c == 0) >= 2;
  const double enumerated = wins / 27.0;
  o.require(std::abs(majority_null_p0(3, 3) - enumerated) < 1e-15 && wins == 7, "majority null 7/27");

  const double secs = seconds_since(t0);
  o.detail << "8 rows, worst CI error " << worst << " pp, " << stars << "/8 stars, p0 = " << majority_null_p0(3, 3)
           << ", " << secs << " s";
  o.require(secs < 1.0, "runtime < 1 s");
}

void desk_quality(Outcome& o) {
  test::TempDir dir;
  ExperimentConfig cfg = desk_config(dir.path());
  cfg.methods = {"padis-dps", "ista-l1", "adjoint"};
  const auto t0 = Clock::now();
  std::vector<RecordRow> rows;
  const RunSummary s = cmd_recon(cfg, &rows);
  const double secs = seconds_since(t0);
  std::map<std::pair<std::string, double>, std::pair<double, int>> acc;
  for (const auto& r : rows)
    if (r.status == "ok") {
      auto& a = acc[{r.method, r.R}];
      a.first += r.metrics.psnr;
      a.second += 1;
    }
  auto mean = [&](const std::string& m, double R) {
    const auto& a = acc[{m, R}];
    return a.second ? a.first / a.second : NAN;
  };
  o.require(s.failed == 0 && s.succeeded == 90, "all 90 reconstructions succeed");
  o.detail << "mean PSNR dB";
  for (const auto& m : cfg.methods) {
    o.detail << " | " << m;
    for (double R : {2.0, 4.0, 8.0}) o.detail << " R" << R << "=" << mean(m, R);
  }
  const double dps = mean("padis-dps", 4.0);
  o.detail << " | R4 gain vs adjoint " << dps - mean("adjoint", 4.0) << ", vs ista-l1 " << dps - mean("ista-l1", 4.0)
           << " | " << secs << " s";
  o.require(dps - mean("adjoint", 4.0) >= 3.0, "padis-dps >= adjoint + 3 dB at R=4");
  o.require(dps - mean("ista-l1", 4.0) >= 1.0, "padis-dps >= ista-l1 + 1 dB at R=4");
  o.require(mean("padis-dps", 4.0) <= mean("padis-dps", 2.0) + 0.5 &&
                mean("padis-dps", 8.0) <= mean("padis-dps", 4.0) + 0.5,
            "padis-dps PSNR non-increasing in R within 0.5 dB");
  o.require(secs < 600.0, "runtime < 10 min");
}

void uncertainty(Outcome& o) {
  test::TempDir dir;
  ExperimentConfig cfg = desk_config(dir.path());
  cfg.phantoms->count = 1;
  cfg.R = {4.0};
  cfg.mask_seeds.clear();
  for (std::uint64_t k = 0; k < 10; ++k) cfg.mask_seeds.push_back(k);
  cfg.crop = {8, 12, 40, 36};

  cfg.methods = {"adjoint"};
  cfg.repeat_mask = true;
  cfg.output = dir / "repeat";
  ResultTable repeated;
  cmd_uncertainty(cfg, &repeated);
  const RealImage zero_map = read_image(dir / "repeat" / "uncertainty" / "phantom_000" / "adjoint_R4").real();

  cfg.methods = {"padis-dps"};
  cfg.repeat_mask = false;
  cfg.output = dir / "distinct";
  ResultTable distinct;
  const RunSummary s = cmd_uncertainty(cfg, &distinct);
  const RealImage map = read_image(dir / "distinct" / "uncertainty" / "phantom_000" / "padis-dps_R4").real();
  const double scalar = std::get<double>(distinct.rows.at(0)[3]);
  const double gap = std::abs(scalar - map.mean());

  o.detail << "repeated-mask adjoint max SD " << zero_map.maxCoeff() << ", padis-dps mean SD " << scalar
           << " over " << map.rows() << "x" << map.cols() << " crop, |scalar - map mean| " << gap;
  o.require(s.failed == 0, "all runs succeed");
  o.require(zero_map.maxCoeff() == 0.0 && std::get<double>(repeated.rows.at(0)[3]) == 0.0, "zero map");
  o.require(scalar > 0.0, "positive padis-dps mean SD");
  o.require(map.rows() == 40 && map.cols() == 36, "crop shape");
  o.require(gap <= 1e-12, "scalar equals map mean to 1e-12");
}

void determinism(Outcome& o) {
  const MaskSeedSpec spec{12345, 64, 4.0, 6};
  const bool masks = generate_mask(spec).kept_lines == generate_mask(spec).kept_lines;
  const Phantom a = generate_phantom(64, 4, 9), b = generate_phantom(64, 4, 9);
  bool phantoms = (a.truth == b.truth).all();
  for (std::size_t c = 0; c < a.sens.maps.size(); ++c) phantoms = phantoms && (a.sens.maps[c] == b.sens.maps[c]).all();

  test::TempDir dir;
  ExperimentConfig cfg = desk_config(dir / "first");
  cfg.phantoms->count = 2;
  cfg.phantoms->size = 32;
  cfg.R = {4.0};
  cfg.mask_seeds = {0, 1};
  cfg.schedule.steps = 20;
  cfg.sampler.inner_loops = 3;
  cmd_recon(cfg);
  cfg.output = dir / "second";
  cmd_recon(cfg);
  int identical = 0, files = 0;
  for (const auto& f : {"metrics.csv", "cases/case_000.csv", "cases/case_001.csv"}) {
    ++files;
    const std::string x = slurp(dir / "first" / f);
    identical += !x.empty() && x == slurp(dir / "second" / f);
  }
  o.detail << "masks " << (masks ? "identical" : "differ") << ", phantoms " << (phantoms ? "identical" : "differ")
           << ", " << identical << "/" << files << " CSVs byte-identical";
  o.require(masks, "masks identical");
  o.require(phantoms, "phantoms identical");
  o.require(identical == files, "CSVs byte-identical");
}

void em_training(Outcome& o) {
  int good = 0, monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(7000 + seed);
    Eigen::MatrixXd x(4, 600);
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 2.0);
    for (int i = 0; i < 600; ++i)
      for (int d = 0; d < 4; ++d) x(d, i) = (i % 2 ? p(d) : -p(d)) + 0.3 * rng.normal();
    EmOptions opts;
    opts.num_components = 2;
    const MixtureFit f = fit_gaussian_mixture(x, opts, rng);
    const auto& a = f.components[0].mean;
    const auto& b = f.components[1].mean;
    const double err =
        std::min(std::max((a - p).norm(), (b + p).norm()), std::max((a + p).norm(), (b - p).norm()));
    good += err <= 0.1;
    bool up = true;
    for (std::size_t i = 1; i < f.log_likelihood.size(); ++i)
      up = up && f.log_likelihood[i] >= f.log_likelihood[i - 1] - 1e-10 * std::abs(f.log_likelihood[i - 1]);
    monotone += up;
  }
  o.detail << good << "/20 seeds within 0.1, " << monotone << "/20 monotone";
  o.require(good >= 18, ">= 18/20 recovered");
  o.require(monotone == 20, "log-likelihood monotone in every run");
}

const std::vector<std::pair<std::string, std::function<void(Outcome&)>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> all = {
      {"schedule", schedule},
      {"network_calls", network_calls},
      {"adjoint_suite", adjoint_suite},
      {"score_oracles", score_oracles},
      {"reassembly", reassembly},
      {"reader_study_statistics", reader_study_statistics},
      {"desk_quality", desk_quality},
      {"uncertainty", uncertainty},
      {"determinism", determinism},
      {"em_training", em_training},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<std::string> only;
  bool list = false;
  app.add_option("--criterion", only, "Run only these criteria");
  app.add_flag("--list", list, "List criterion names");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& [name, _] : criteria()) std::cout << name << "\n";
    return 0;
  }
  for (const auto& name : only) {
    bool known = false;
    for (const auto& c : criteria()) known = known || c.first == name;
    if (!known) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }
  }

  int failed = 0;
  for (const auto& [name, run] : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
