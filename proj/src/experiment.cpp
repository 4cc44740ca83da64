#include "padis/experiment.hpp"

#include "padis/patch_engine.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

namespace padis {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  return SplitMix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2))).next();
}

std::string fmt_r(double R) { return "R" + format_csv_double(R); }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw DomainError("config: '" + where + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw DomainError("config: unknown key '" + where + k + "'");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DomainError(std::string("config: bad value for '") + key + "'");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

const std::set<std::string>& known_methods() {
  static const std::set<std::string> m{"padis-dps", "whole-image-dps", "ista-l1", "adjoint"};
  return m;
}

// Rounds through float32 so metrics are recomputable from the stored images.
ComplexImage quantize_f32(const ComplexImage& x) {
  ComplexImage q(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    q.data()[i] = {static_cast<float>(x.data()[i].real()), static_cast<float>(x.data()[i].imag())};
  return q;
}

RealImage quantize_f32(const RealImage& x) { return x.cast<float>().cast<double>(); }

Case volume_case(const fs::path& dir) {
  const VolumeContainer vol = read_volume(dir);
  if (vol.maps.empty()) throw FormatError(dir.string() + ": volume has no coil maps");
  if (vol.height != vol.width) throw DimensionError(dir.string() + ": only square volumes are supported");
  if (!vol.mask.empty())
    for (auto b : vol.mask)
      if (!b) throw DomainError(dir.string() + ": stored k-space must be fully sampled");
  Case c;
  c.id = dir.filename().string();
  if (c.id.empty()) c.id = dir.parent_path().filename().string();
  c.sens.maps = vol.maps;
  c.sens.support = BoolImage::Constant(vol.height, vol.width, false);
  for (Eigen::Index i = 0; i < vol.height; ++i)
    for (Eigen::Index j = 0; j < vol.width; ++j) {
      double ss = 0.0;
      for (const auto& m : vol.maps) ss += std::norm(m(i, j));
      c.sens.support(i, j) = ss > 0.5;
    }
  KSpace y{vol.kspace, SamplingMask::full(vol.width)};
  c.truth = apply_adjoint(y, c.sens);
  return c;
}

}  // namespace

int ExperimentConfig::num_cases() const {
  return (phantoms ? phantoms->count : 0) + static_cast<int>(volumes.size());
}

ExperimentConfig parse_config(const json& j, const fs::path& base) {
  check_keys(j, "", {"phantoms", "volumes", "R", "mask_seeds", "acs", "methods", "prior", "schedule",
                     "sampler", "ista", "crop", "repeat_mask", "train_sizes", "output", "workers",
                     "save_recons"});
  ExperimentConfig cfg;
  if (j.contains("phantoms")) {
    const auto& p = j["phantoms"];
    check_keys(p, "phantoms.", {"count", "size", "coils", "seed"});
    PhantomSpec ps;
    get(p, "count", ps.count);
    get(p, "size", ps.size);
    get(p, "coils", ps.coils);
    get(p, "seed", ps.seed);
    if (ps.count < 0) throw DomainError("config: phantoms.count must be non-negative");
    cfg.phantoms = ps;
  }
  std::vector<std::string> vols;
  get(j, "volumes", vols);
  for (const auto& v : vols) cfg.volumes.push_back(resolve(base, v));
  get(j, "R", cfg.R);
  get(j, "mask_seeds", cfg.mask_seeds);
  get(j, "acs", cfg.acs);
  get(j, "methods", cfg.methods);
  get(j, "repeat_mask", cfg.repeat_mask);
  get(j, "train_sizes", cfg.train_sizes);
  std::string out = cfg.output.string();
  get(j, "output", out);
  cfg.output = resolve(base, out);
  get(j, "workers", cfg.workers);
  get(j, "save_recons", cfg.save_recons);

  if (j.contains("prior")) {
    const auto& p = j["prior"];
    check_keys(p, "prior.", {"source", "weights", "train_volumes", "patch_size", "patches",
                             "train_images", "train_seed", "components", "max_iters", "tol",
                             "cov_floor_rel", "covariance", "conditioning"});
    auto& ps = cfg.prior;
    get(p, "source", ps.source);
    std::string w;
    get(p, "weights", w);
    if (!w.empty()) ps.weights = resolve(base, w);
    std::vector<std::string> tv;
    get(p, "train_volumes", tv);
    for (const auto& v : tv) ps.train_volumes.push_back(resolve(base, v));
    get(p, "patch_size", ps.patch_size);
    get(p, "patches", ps.patches);
    get(p, "train_images", ps.train_images);
    get(p, "train_seed", ps.train_seed);
    get(p, "components", ps.em.num_components);
    get(p, "max_iters", ps.em.max_iters);
    get(p, "tol", ps.em.tol);
    get(p, "cov_floor_rel", ps.em.cov_floor_rel);
    std::string cov = "full", cond = "none";
    get(p, "covariance", cov);
    get(p, "conditioning", cond);
    if (cov != "full" && cov != "diagonal") throw DomainError("config: prior.covariance must be full or diagonal");
    if (cond != "none" && cond != "feature_augmented")
      throw DomainError("config: prior.conditioning must be none or feature_augmented");
    ps.em.covariance = cov == "full" ? CovarianceType::full : CovarianceType::diagonal;
    ps.em.conditioning =
        cond == "none" ? PositionConditioning::none : PositionConditioning::feature_augmented;
    if (ps.source != "gmm-fit" && ps.source != "weights" && ps.source != "none")
      throw DomainError("config: prior.source must be gmm-fit, weights or none");
    if (ps.source == "weights" && ps.weights.empty())
      throw DomainError("config: prior.weights is required for source 'weights'");
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    check_keys(s, "schedule.", {"steps", "sigma_min", "sigma_max", "rho"});
    get(s, "steps", cfg.schedule.steps);
    get(s, "sigma_min", cfg.schedule.sigma_min);
    get(s, "sigma_max", cfg.schedule.sigma_max);
    get(s, "rho", cfg.schedule.rho);
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, "sampler.", {"zeta", "inner_loops", "pad", "patch_size", "jacobian", "seed"});
    get(s, "zeta", cfg.sampler.zeta);
    get(s, "inner_loops", cfg.sampler.inner_loops);
    get(s, "pad", cfg.sampler.pad);
    get(s, "patch_size", cfg.sampler.patch_size);
    get(s, "seed", cfg.sampler.seed);
    std::string jac = "identity";
    get(s, "jacobian", jac);
    if (jac != "identity" && jac != "exact_vjp")
      throw DomainError("config: sampler.jacobian must be identity or exact_vjp");
    cfg.sampler.jacobian = jac == "identity" ? JacobianMode::identity : JacobianMode::exact_vjp;
  }
  if (j.contains("ista")) {
    const auto& s = j["ista"];
    check_keys(s, "ista.", {"lambda", "iters", "levels", "power_iters", "seed"});
    get(s, "lambda", cfg.ista.lambda);
    get(s, "iters", cfg.ista.iters);
    get(s, "levels", cfg.ista.levels);
    get(s, "power_iters", cfg.ista.power_iters);
    get(s, "seed", cfg.ista.seed);
  }
  if (j.contains("crop")) {
    const auto& s = j["crop"];
    check_keys(s, "crop.", {"row", "col", "rows", "cols"});
    get(s, "row", cfg.crop.row);
    get(s, "col", cfg.crop.col);
    get(s, "rows", cfg.crop.rows);
    get(s, "cols", cfg.crop.cols);
  }

  if (cfg.num_cases() < 1) throw DomainError("config: no cases (set phantoms.count or volumes)");
  if (cfg.R.empty()) throw DomainError("config: R list is empty");
  if (cfg.mask_seeds.empty()) throw DomainError("config: mask_seeds is empty");
  if (cfg.methods.empty()) throw DomainError("config: methods list is empty");
  for (const auto& m : cfg.methods)
    if (!known_methods().count(m)) throw DomainError("config: unknown method '" + m + "'");
  if (cfg.workers < 1) throw DomainError("config: workers must be at least 1");
  for (const auto& v : cfg.volumes)
    if (!fs::exists(v / "meta.json")) throw DomainError("config: volume not found: " + v.string());
  for (const auto& v : cfg.prior.train_volumes)
    if (!fs::exists(v / "meta.json")) throw DomainError("config: volume not found: " + v.string());
  if (cfg.prior.source == "weights" && !fs::exists(cfg.prior.weights / "meta.json"))
    throw DomainError("config: weights not found: " + cfg.prior.weights.string());
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DomainError("config: cannot parse " + path.string() + ": " + e.what());
  } catch (const Error&) {
    throw DomainError("config: cannot read " + path.string());
  }
  return parse_config(j, path.parent_path());
}

Case load_case(const ExperimentConfig& cfg, int index) {
  const int n_ph = cfg.phantoms ? cfg.phantoms->count : 0;
  if (index < n_ph) {
    const auto& ps = *cfg.phantoms;
    Phantom ph = generate_phantom(ps.size, ps.coils, ps.seed + static_cast<std::uint64_t>(index));
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%03d", index);
    return {id, std::move(ph.truth), std::move(ph.sens)};
  }
  return volume_case(cfg.volumes.at(index - n_ph));
}

Acquisition acquire(const Case& c, double R, std::uint64_t mask_seed, int acs) {
  const SamplingMask mask = generate_mask({mask_seed, static_cast<int>(c.truth.cols()), R, acs});
  const KSpace y = apply_forward(c.truth, c.sens, mask);
  AcsNormalization norm = normalize_by_acs(y, acs);
  // Reference is the coil-combined fully sampled adjoint on the same scale.
  const AcsNormalization full = normalize_by_acs(apply_forward(c.truth, c.sens, SamplingMask::full(mask.width())), acs);
  return {std::move(norm.normalized), apply_adjoint(full.normalized, c.sens), norm.scale};
}

std::vector<ComplexImage> training_images(const ExperimentConfig& cfg, const PriorSpec& spec) {
  std::vector<Case> cases;
  if (!spec.train_volumes.empty()) {
    for (const auto& v : spec.train_volumes) cases.push_back(volume_case(v));
  } else {
    const int size = cfg.phantoms ? cfg.phantoms->size : 64;
    const int coils = cfg.phantoms ? cfg.phantoms->coils : 4;
    for (int i = 0; i < spec.train_images; ++i) {
      Phantom ph = generate_phantom(size, coils, spec.train_seed + static_cast<std::uint64_t>(i));
      cases.push_back({"", std::move(ph.truth), std::move(ph.sens)});
    }
  }
  std::vector<ComplexImage> images;
  for (const auto& c : cases) images.push_back(acquire(c, 1.0, 0, cfg.acs).truth);
  return images;
}

EmResult train_prior(const ExperimentConfig& cfg, const PriorSpec& spec) {
  const auto images = training_images(cfg, spec);
  if (images.empty()) throw DomainError("train_prior: no training images");
  Rng rng(mix(spec.train_seed, 0x7261696eULL));
  const auto patches = sample_training_patches(images, {spec.patch_size}, {1.0}, spec.patches, rng);
  PatchBatch positions;
  if (spec.em.conditioning == PositionConditioning::feature_augmented) {
    positions.resize(2 * spec.patch_size * spec.patch_size, static_cast<Eigen::Index>(patches.size()));
    for (std::size_t k = 0; k < patches.size(); ++k) positions.col(k) = patches[k].position;
  }
  return fit_gmm_em(to_batch(patches), spec.patch_size, spec.em, rng, positions);
}

ScoreModelPtr build_prior(const ExperimentConfig& cfg, std::vector<double>* log_likelihood) {
  const auto& ps = cfg.prior;
  if (ps.source == "none") return nullptr;
  if (ps.source == "weights") return load_external_denoiser(ps.weights);
  EmResult fit = train_prior(cfg, ps);
  if (log_likelihood) *log_likelihood = fit.log_likelihood;
  return std::make_shared<GmmPatchPrior>(std::move(fit.prior));
}

ComplexImage run_method(const std::string& method, const Acquisition& acq, const CoilSensitivities& sens,
                        const ScoreModelPtr& prior, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (method == "adjoint") return zero_filled_adjoint(acq.y, sens);
  if (method == "ista-l1") {
    return ista_l1_wavelet(acq.y, sens, cfg.ista).image;
  }
  if (method == "padis-dps" || method == "whole-image-dps") {
    if (!prior) throw DomainError(method + ": no prior configured");
    DpsConfig d = cfg.sampler;
    d.seed = mix(d.seed, seed);
    if (prior->patch_size() != 0) d.patch_size = prior->patch_size();
    if (method == "whole-image-dps") d.pad = 0;
    return ve_dps_reconstruct(acq.y, sens, *prior, cfg.schedule, d);
  }
  throw DomainError("unknown method '" + method + "'");
}

RealImage magnitude(const ComplexImage& x) { return x.abs(); }

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  const int threads = std::max(1, std::min(workers, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

int exit_code(const RunSummary& s) { return s.failed == 0 ? 0 : 1; }

namespace {

// A single pair has no sample SD; it is reported as nan.
PairedDelta paired_or_single(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() == 1) return {a[0] - b[0], NAN, 1};
  return paired_differences(a, b);
}

// PSNR, SSIM and NRMSE differences a - b over successful rows matched on
// (case, mask seed) at one acceleration.
std::optional<std::array<PairedDelta, 3>> paired_metrics(const std::vector<RecordRow>& rows, double R,
                                                         const std::string& a, const std::string& b) {
  std::array<std::vector<double>, 3> va, vb;
  for (const auto& ra : rows) {
    if (ra.R != R || ra.method != a || ra.status != "ok") continue;
    for (const auto& rb : rows)
      if (rb.R == R && rb.method == b && rb.status == "ok" && rb.case_id == ra.case_id &&
          rb.mask_seed == ra.mask_seed) {
        va[0].push_back(ra.metrics.psnr), vb[0].push_back(rb.metrics.psnr);
        va[1].push_back(ra.metrics.ssim), vb[1].push_back(rb.metrics.ssim);
        va[2].push_back(ra.metrics.nrmse), vb[2].push_back(rb.metrics.nrmse);
      }
  }
  if (va[0].empty()) return std::nullopt;
  return std::array<PairedDelta, 3>{paired_or_single(va[0], vb[0]), paired_or_single(va[1], vb[1]),
                                   paired_or_single(va[2], vb[2])};
}

}  // namespace

ResultTable metrics_table(const std::vector<RecordRow>& rows, const std::vector<std::string>& methods) {
  ResultTable t;
  t.columns = {"case_id", "method", "R", "mask_seed", "psnr", "ssim", "nrmse", "status"};
  t.markdown_precision = {-1, -1, 1, -1, 2, 4, 4, -1};
  for (const auto& r : rows)
    t.add_row({r.case_id, r.method, r.R, static_cast<std::int64_t>(r.mask_seed), r.metrics.psnr,
               r.metrics.ssim, r.metrics.nrmse, r.status});

  std::vector<double> rs;
  for (const auto& r : rows)
    if (std::find(rs.begin(), rs.end(), r.R) == rs.end()) rs.push_back(r.R);
  for (double R : rs)
    for (std::size_t a = 0; a < methods.size(); ++a)
      for (std::size_t b = a + 1; b < methods.size(); ++b) {
        const auto d = paired_metrics(rows, R, methods[a], methods[b]);
        if (!d) continue;
        const std::string label = methods[a] + "-" + methods[b];
        const std::string n = "n=" + std::to_string((*d)[0].n);
        t.add_row({std::string("paired_mean"), label, R, std::string(), (*d)[0].mean, (*d)[1].mean,
                   (*d)[2].mean, n});
        t.add_row({std::string("paired_sd"), label, R, std::string(), (*d)[0].sd, (*d)[1].sd, (*d)[2].sd, n});
      }
  return t;
}

namespace {

void write_table(const ResultTable& t, const fs::path& stem) {
  export_results(t, stem.string() + ".csv", TableFormat::csv);
  export_results(t, stem.string() + ".md", TableFormat::markdown);
}

struct CaseRows {
  std::vector<RecordRow> rows;
};

// Runs every (R, mask seed, method) combination of one case.
CaseRows run_case(const ExperimentConfig& cfg, int index, const ScoreModelPtr& prior, const fs::path& out) {
  CaseRows res;
  Case c;
  try {
    c = load_case(cfg, index);
  } catch (const Error& e) {
    for (double R : cfg.R)
      for (auto s : cfg.mask_seeds)
        for (const auto& m : cfg.methods)
          res.rows.push_back({"case_" + std::to_string(index), m, R, s, {NAN, NAN, NAN},
                              std::string("failed: ") + e.what()});
    return res;
  }
  for (double R : cfg.R)
    for (auto s : cfg.mask_seeds) {
      Acquisition acq;
      std::string acq_error;
      try {
        acq = acquire(c, R, s, cfg.acs);
      } catch (const Error& e) {
        acq_error = e.what();
      }
      const std::string tag = fmt_r(R) + "_m" + std::to_string(s);
      const fs::path dir = out / "recons" / c.id;
      if (acq_error.empty() && cfg.save_recons) write_image(dir / ("truth_" + tag), quantize_f32(acq.truth));
      for (const auto& m : cfg.methods) {
        RecordRow row{c.id, m, R, s, {NAN, NAN, NAN}, "ok"};
        if (!acq_error.empty()) {
          row.status = "failed: " + acq_error;
          res.rows.push_back(row);
          continue;
        }
        try {
          const std::uint64_t seed = mix(mix(static_cast<std::uint64_t>(index), s),
                                         static_cast<std::uint64_t>(std::llround(R * 1000)));
          const ComplexImage x = quantize_f32(run_method(m, acq, c.sens, prior, cfg, seed));
          if (cfg.save_recons) write_image(dir / (m + "_" + tag), x);
          row.metrics = evaluate_metrics(magnitude(x), magnitude(quantize_f32(acq.truth)));
        } catch (const Error& e) {
          row.status = std::string("failed: ") + e.what();
        }
        res.rows.push_back(row);
      }
    }
  return res;
}

std::vector<RecordRow> run_all(const ExperimentConfig& cfg, const ScoreModelPtr& prior, const fs::path& out,
                               RunSummary& summary) {
  const int n = cfg.num_cases();
  std::vector<CaseRows> per_case(n);
  parallel_for(n, cfg.workers, [&](int i) {
    per_case[i] = run_case(cfg, i, prior, out);
    ResultTable t = metrics_table(per_case[i].rows, {});
    char name[32];
    std::snprintf(name, sizeof name, "case_%03d", i);
    export_results(t, out / "cases" / (std::string(name) + ".csv"), TableFormat::csv);
  });
  std::vector<RecordRow> rows;
  for (auto& pc : per_case)
    for (auto& r : pc.rows) {
      (r.status == "ok" ? summary.succeeded : summary.failed) += 1;
      rows.push_back(std::move(r));
    }
  return rows;
}

bool needs_prior(const std::vector<std::string>& methods) {
  for (const auto& m : methods)
    if (m == "padis-dps" || m == "whole-image-dps") return true;
  return false;
}

ScoreModelPtr prior_or_null(const ExperimentConfig& cfg, RunSummary& summary) {
  if (!needs_prior(cfg.methods)) return nullptr;
  try {
    return build_prior(cfg);
  } catch (const Error& e) {
    std::cerr << "prior: " << e.what() << "\n";
    summary.failed += 1;
    return nullptr;
  }
}

}  // namespace

RunSummary cmd_recon(const ExperimentConfig& cfg, std::vector<RecordRow>* out) {
  RunSummary summary;
  const ScoreModelPtr prior = prior_or_null(cfg, summary);
  std::vector<RecordRow> rows = run_all(cfg, prior, cfg.output, summary);
  write_table(metrics_table(rows, cfg.methods), cfg.output / "metrics");
  if (out) *out = std::move(rows);
  return summary;
}

RunSummary cmd_uncertainty(const ExperimentConfig& cfg, ResultTable* out) {
  if (cfg.mask_seeds.size() < 2) throw DomainError("uncertainty: need at least two mask seeds");
  RunSummary summary;
  const ScoreModelPtr prior = prior_or_null(cfg, summary);
  const int n = cfg.num_cases();
  struct Row {
    std::string case_id, method;
    double R;
    double mean_sd;
    std::string status;
  };
  std::vector<std::vector<Row>> per_case(n);
  parallel_for(n, cfg.workers, [&](int i) {
    Case c;
    try {
      c = load_case(cfg, i);
    } catch (const Error& e) {
      for (double R : cfg.R)
        for (const auto& m : cfg.methods)
          per_case[i].push_back({"case_" + std::to_string(i), m, R, NAN, std::string("failed: ") + e.what()});
      return;
    }
    for (double R : cfg.R)
      for (const auto& m : cfg.methods) {
        Row row{c.id, m, R, NAN, "ok"};
        try {
          std::vector<RealImage> recons;
          for (std::size_t k = 0; k < cfg.mask_seeds.size(); ++k) {
            const auto s = cfg.mask_seeds[k];
            const Acquisition acq = acquire(c, R, cfg.repeat_mask ? cfg.mask_seeds.front() : s, cfg.acs);
            const std::uint64_t seed = mix(mix(static_cast<std::uint64_t>(i), s),
                                           static_cast<std::uint64_t>(std::llround(R * 1000)));
            recons.push_back(magnitude(quantize_f32(run_method(m, acq, c.sens, prior, cfg, seed))));
          }
          UncertaintyMap u = pixelwise_std(recons, cfg.crop);
          const RealImage sd = quantize_f32(u.sd);
          row.mean_sd = sd.mean();
          write_image(cfg.output / "uncertainty" / c.id / (m + "_" + fmt_r(R)),
                      sd.cast<cdouble>(), "real");
        } catch (const Error& e) {
          row.status = std::string("failed: ") + e.what();
        }
        per_case[i].push_back(row);
      }
  });

  ResultTable t;
  t.columns = {"case_id", "method", "R", "mean_sd", "status"};
  t.markdown_precision = {-1, -1, 1, 6, -1};
  std::vector<Row> all;
  for (auto& pc : per_case)
    for (auto& r : pc) {
      (r.status == "ok" ? summary.succeeded : summary.failed) += 1;
      t.add_row({r.case_id, r.method, r.R, r.mean_sd, r.status});
      all.push_back(r);
    }
  for (double R : cfg.R)
    for (const auto& m : cfg.methods) {
      double acc = 0.0;
      int k = 0;
      for (const auto& r : all)
        if (r.R == R && r.method == m && r.status == "ok") acc += r.mean_sd, ++k;
      if (k > 0) t.add_row({std::string("mean"), m, R, acc / k, "n=" + std::to_string(k)});
    }
  write_table(t, cfg.output / "uncertainty");
  if (out) *out = std::move(t);
  return summary;
}

RunSummary cmd_sweep(const ExperimentConfig& cfg, ResultTable* out) {
  RunSummary summary;
  std::vector<int> sizes = cfg.train_sizes;
  if (sizes.empty() || cfg.prior.source != "gmm-fit" || !needs_prior(cfg.methods)) sizes = {cfg.prior.patches};

  ResultTable t;
  t.columns = {"train_size", "R", "method", "n", "psnr", "psnr_sd", "ssim", "ssim_sd", "nrmse", "nrmse_sd"};
  t.markdown_precision = {-1, 1, -1, -1, 2, 2, 4, 4, 4, 4};
  for (int ts : sizes) {
    ExperimentConfig c = cfg;
    c.prior.patches = ts;
    c.output = cfg.output / ("train_" + std::to_string(ts));
    const ScoreModelPtr prior = prior_or_null(c, summary);
    const auto rows = run_all(c, prior, c.output, summary);
    write_table(metrics_table(rows, c.methods), c.output / "metrics");
    for (double R : cfg.R) {
      auto column = [&](const std::string& m, auto field) {
        std::vector<double> v;
        for (const auto& r : rows)
          if (r.R == R && r.method == m && r.status == "ok") v.push_back(field(r.metrics));
        return v;
      };
      // Mean and sample SD of one metric column.
      auto stat = [](const std::vector<double>& v) {
        return paired_or_single(v, std::vector<double>(v.size(), 0.0));
      };
      const auto fp = [](const MetricReport& m) { return m.psnr; };
      const auto fs_ = [](const MetricReport& m) { return m.ssim; };
      const auto fn = [](const MetricReport& m) { return m.nrmse; };
      for (const auto& m : cfg.methods) {
        const auto p = column(m, fp), s = column(m, fs_), nr = column(m, fn);
        if (p.empty()) continue;
        const auto dp = stat(p), ds = stat(s), dn = stat(nr);
        t.add_row({static_cast<std::int64_t>(ts), R, m, static_cast<std::int64_t>(dp.n), dp.mean, dp.sd,
                   ds.mean, ds.sd, dn.mean, dn.sd});
      }
      for (std::size_t a = 0; a < cfg.methods.size(); ++a)
        for (std::size_t b = a + 1; b < cfg.methods.size(); ++b) {
          const auto d = paired_metrics(rows, R, cfg.methods[a], cfg.methods[b]);
          if (!d) continue;
          t.add_row({static_cast<std::int64_t>(ts), R, cfg.methods[a] + "-" + cfg.methods[b],
                     static_cast<std::int64_t>((*d)[0].n), (*d)[0].mean, (*d)[0].sd, (*d)[1].mean,
                     (*d)[1].sd, (*d)[2].mean, (*d)[2].sd});
        }
    }
  }
  write_table(t, cfg.output / "sweep");
  if (out) *out = std::move(t);
  return summary;
}

RunSummary cmd_train_prior(const ExperimentConfig& cfg, const fs::path& out_dir) {
  RunSummary summary;
  if (cfg.prior.source != "gmm-fit") throw DomainError("train-prior: prior.source must be gmm-fit");
  EmResult fit = train_prior(cfg, cfg.prior);
  write_weights(out_dir, to_weights(fit.prior));
  ResultTable log;
  log.columns = {"iteration", "log_likelihood"};
  for (std::size_t i = 0; i < fit.log_likelihood.size(); ++i)
    log.add_row({static_cast<std::int64_t>(i + 1), fit.log_likelihood[i]});
  export_results(log, out_dir / "training_log.csv", TableFormat::csv);
  if (fit.degenerate) {
    std::cerr << "train-prior: EM degenerated (too few distinct patches); wrote a single-component prior\n";
    summary.failed = 1;
  } else {
    summary.succeeded = 1;
  }
  return summary;
}

ReaderSummary cmd_stats(const fs::path& votes_csv, const std::string& target, int num_methods,
                        const fs::path& out_prefix) {
  const auto votes = parse_votes_csv(read_text_file(votes_csv));
  ReaderSummary s = summarize_votes(votes, target, num_methods);
  if (!out_prefix.empty()) {
    write_text_file(out_prefix.string() + ".md", to_markdown(s));
    write_text_file(out_prefix.string() + ".json", to_json(s).dump(2) + "\n");
  }
  return s;
}

void cmd_phantom_gen(const PhantomSpec& spec, const fs::path& out_dir) {
  if (spec.count < 1) throw DomainError("phantom-gen: count must be positive");
  for (int i = 0; i < spec.count; ++i) {
    const Phantom ph = generate_phantom(spec.size, spec.coils, spec.seed + static_cast<std::uint64_t>(i));
    const KSpace y = apply_forward(ph.truth, ph.sens, SamplingMask::full(spec.size));
    VolumeContainer vol{spec.size, spec.size, spec.coils, "phantom", y.coils, ph.sens.maps,
                        std::vector<std::uint8_t>(spec.size, 1)};
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%03d", i);
    write_volume(out_dir / name, vol);
    write_image(out_dir / (std::string(name) + "_truth"), ph.truth);
  }
}

}  // namespace padis
