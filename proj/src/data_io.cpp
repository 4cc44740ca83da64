#include "padis/data_io.hpp"

#include "padis/table.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace padis {

namespace fs = std::filesystem;
using nlohmann::json;

SamplingMask generate_mask(const MaskSeedSpec& spec) {
  if (spec.width < 1) throw DomainError("generate_mask: width must be positive");
  if (!(spec.R >= 1.0)) throw DomainError("generate_mask: R must be at least 1");
  if (spec.acs < 0 || spec.acs > spec.width) throw DomainError("generate_mask: acs exceeds width");
  const int keep = static_cast<int>(std::floor(spec.width / spec.R));
  if (keep < spec.acs)
    throw DomainError("generate_mask: floor(width/R) = " + std::to_string(keep) +
                      " is smaller than the ACS width " + std::to_string(spec.acs));

  SamplingMask mask;
  mask.kept_lines.assign(spec.width, 0);
  mask.acs_width = spec.acs;
  mask.nominal_R = spec.R;
  const int start = static_cast<int>(centered_start(spec.width, spec.acs));
  for (int c = start; c < start + spec.acs; ++c) mask.kept_lines[c] = 1;

  std::vector<int> pool;
  for (int c = 0; c < spec.width; ++c)
    if (!mask.kept_lines[c]) pool.push_back(c);
  SplitMix64 gen(spec.seed);
  for (std::size_t i = pool.size(); i > 1; --i) {
    const std::size_t j = gen.next() % i;
    std::swap(pool[i - 1], pool[j]);
  }
  for (int k = 0; k < keep - spec.acs; ++k) mask.kept_lines[pool[k]] = 1;
  return mask;
}

namespace {

constexpr const char* kVolumeFormat = "padis-volume";
constexpr const char* kImageFormat = "padis-image";
constexpr const char* kWeightsFormat = "padis-weights";

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void append_le(std::string& buf, T v) {
  const T le = to_little(v);
  char raw[sizeof(T)];
  std::memcpy(raw, &le, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}

void append_complex64(std::string& buf, const ComplexImage& img) {
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    append_le(buf, static_cast<float>(img.data()[i].real()));
    append_le(buf, static_cast<float>(img.data()[i].imag()));
  }
}

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

// Checks a payload of `count` elements of `elem` bytes: a partial element is
// truncation, a whole-element mismatch is a meta/payload conflict.
void check_payload(const fs::path& path, const std::string& bytes, std::size_t elem,
                   std::size_t count) {
  if (bytes.size() % elem != 0)
    throw TruncationError("truncated payload in " + path.string() + ": " +
                          std::to_string(bytes.size()) + " bytes is not a multiple of " +
                          std::to_string(elem));
  if (bytes.size() != elem * count)
    throw ConsistencyError("payload size of " + path.string() + " (" + std::to_string(bytes.size()) +
                           " bytes) conflicts with meta (" + std::to_string(elem * count) +
                           " bytes expected)");
}

std::vector<ComplexImage> decode_complex64(const std::string& bytes, int count, int rows, int cols) {
  std::vector<ComplexImage> out;
  std::size_t off = 0;
  for (int c = 0; c < count; ++c) {
    ComplexImage img(rows, cols);
    for (Eigen::Index i = 0; i < img.size(); ++i, off += 8)
      img.data()[i] = {read_le<float>(bytes.data() + off), read_le<float>(bytes.data() + off + 4)};
    out.push_back(std::move(img));
  }
  return out;
}

json read_meta(const fs::path& dir, const char* format) {
  const fs::path path = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError("malformed " + path.string() + ": " + e.what());
  } catch (const Error&) {
    throw FormatError("missing " + path.string());
  }
  auto field = [&](const char* name) -> const json& {
    if (!meta.contains(name)) throw FormatError(path.string() + ": missing field '" + name + "'");
    return meta[name];
  };
  if (field("format") != format)
    throw FormatError(path.string() + ": field 'format' is not '" + format + "'");
  if (field("endianness") != "little")
    throw EndiannessError(path.string() + ": unsupported endianness marker '" +
                          meta["endianness"].dump() + "'");
  return meta;
}

int int_field(const json& meta, const char* name, const fs::path& dir, int min_value) {
  if (!meta.contains(name) || !meta[name].is_number_integer() || meta[name].get<int>() < min_value)
    throw FormatError((dir / "meta.json").string() + ": bad field '" + name + "'");
  return meta[name].get<int>();
}

void write_meta(const fs::path& dir, const json& meta) {
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace

void write_volume(const fs::path& dir, const VolumeContainer& vol) {
  require_dims(static_cast<int>(vol.kspace.size()) == vol.num_coils,
               "write_volume: k-space coil count disagrees with num_coils");
  for (const auto& k : vol.kspace)
    require_dims(k.rows() == vol.height && k.cols() == vol.width, "write_volume: k-space shape");
  require_dims(vol.maps.empty() || vol.maps.size() == vol.kspace.size(), "write_volume: maps count");
  for (const auto& m : vol.maps)
    require_dims(m.rows() == vol.height && m.cols() == vol.width, "write_volume: map shape");
  require_dims(vol.mask.empty() || static_cast<int>(vol.mask.size()) == vol.width,
               "write_volume: mask width");

  json meta = {{"format", kVolumeFormat},
               {"version", 1},
               {"endianness", "little"},
               {"height", vol.height},
               {"width", vol.width},
               {"num_coils", vol.num_coils},
               {"contrast", vol.contrast},
               {"has_maps", !vol.maps.empty()},
               {"has_mask", !vol.mask.empty()}};
  write_meta(dir, meta);
  std::string ksp;
  ksp.reserve(8ull * vol.num_coils * vol.height * vol.width);
  for (const auto& k : vol.kspace) append_complex64(ksp, k);
  write_binary(dir / "kspace.bin", ksp);
  if (!vol.maps.empty()) {
    std::string maps;
    for (const auto& m : vol.maps) append_complex64(maps, m);
    write_binary(dir / "maps.bin", maps);
  }
  if (!vol.mask.empty())
    write_binary(dir / "mask.bin", std::string(vol.mask.begin(), vol.mask.end()));
}

VolumeContainer read_volume(const fs::path& dir) {
  const json meta = read_meta(dir, kVolumeFormat);
  VolumeContainer vol;
  vol.height = int_field(meta, "height", dir, 1);
  vol.width = int_field(meta, "width", dir, 1);
  vol.num_coils = int_field(meta, "num_coils", dir, 1);
  vol.contrast = meta.value("contrast", "");
  const std::size_t per_coil = static_cast<std::size_t>(vol.height) * vol.width;

  const auto ksp_path = dir / "kspace.bin";
  const std::string ksp = read_binary(ksp_path);
  check_payload(ksp_path, ksp, 8, per_coil * vol.num_coils);
  vol.kspace = decode_complex64(ksp, vol.num_coils, vol.height, vol.width);

  if (meta.value("has_maps", false)) {
    const auto path = dir / "maps.bin";
    const std::string maps = read_binary(path);
    check_payload(path, maps, 8, per_coil * vol.num_coils);
    vol.maps = decode_complex64(maps, vol.num_coils, vol.height, vol.width);
  }
  if (meta.value("has_mask", false)) {
    const auto path = dir / "mask.bin";
    const std::string mask = read_binary(path);
    check_payload(path, mask, 1, vol.width);
    vol.mask.assign(mask.begin(), mask.end());
    for (auto b : vol.mask)
      if (b > 1) throw FormatError(path.string() + ": mask bytes must be 0 or 1");
  }
  return vol;
}

void write_image(const fs::path& dir, const ComplexImage& img, const std::string& kind) {
  json meta = {{"format", kImageFormat},
               {"version", 1},
               {"endianness", "little"},
               {"height", img.rows()},
               {"width", img.cols()},
               {"kind", kind}};
  write_meta(dir, meta);
  std::string bytes;
  bytes.reserve(8ull * img.size());
  append_complex64(bytes, img);
  write_binary(dir / "image.bin", bytes);
}

ComplexImage read_image(const fs::path& dir) {
  const json meta = read_meta(dir, kImageFormat);
  const int h = int_field(meta, "height", dir, 1);
  const int w = int_field(meta, "width", dir, 1);
  const auto path = dir / "image.bin";
  const std::string bytes = read_binary(path);
  check_payload(path, bytes, 8, static_cast<std::size_t>(h) * w);
  return decode_complex64(bytes, 1, h, w).front();
}

void write_weights(const fs::path& dir, const WeightsContainer& w) {
  json tensors = json::array();
  std::string payload;
  for (const auto& [name, t] : w.tensors) {
    const auto count = std::accumulate(t.shape.begin(), t.shape.end(), std::int64_t{1},
                                       std::multiplies<>());
    if (count != static_cast<std::int64_t>(t.values.size()))
      throw DomainError("write_weights: tensor '" + name + "' shape does not match its values");
    const std::size_t offset = payload.size();
    if (t.dtype == "float64") {
      for (double v : t.values) append_le(payload, v);
    } else if (t.dtype == "float32") {
      for (double v : t.values) append_le(payload, static_cast<float>(v));
    } else {
      throw DomainError("write_weights: unsupported dtype '" + t.dtype + "'");
    }
    tensors.push_back({{"name", name},
                       {"dtype", t.dtype},
                       {"shape", t.shape},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  }
  json meta = {{"format", kWeightsFormat}, {"version", 1},          {"endianness", "little"},
               {"model", w.model},         {"patch_size", w.patch_size}, {"attributes", w.attributes},
               {"tensors", tensors}};
  write_meta(dir, meta);
  write_binary(dir / "weights.bin", payload);
}

WeightsContainer read_weights(const fs::path& dir) {
  const json meta = read_meta(dir, kWeightsFormat);
  const std::string where = (dir / "meta.json").string() + ": ";
  WeightsContainer w;
  if (!meta.contains("model") || !meta["model"].is_string())
    throw FormatError(where + "bad field 'model'");
  w.model = meta["model"];
  w.patch_size = int_field(meta, "patch_size", dir, 1);
  if (meta.contains("attributes")) {
    if (!meta["attributes"].is_object()) throw FormatError(where + "bad field 'attributes'");
    for (const auto& [k, v] : meta["attributes"].items()) {
      if (!v.is_string()) throw FormatError(where + "bad field 'attributes." + k + "'");
      w.attributes[k] = v.get<std::string>();
    }
  }
  if (!meta.contains("tensors") || !meta["tensors"].is_array())
    throw FormatError(where + "bad field 'tensors'");

  const auto path = dir / "weights.bin";
  const std::string payload = read_binary(path);
  std::size_t i = 0;
  for (const auto& tj : meta["tensors"]) {
    const std::string at = "tensors[" + std::to_string(i++) + "].";
    auto bad = [&](const std::string& f) { return FormatError(where + "bad field '" + at + f + "'"); };
    if (!tj.contains("name") || !tj["name"].is_string()) throw bad("name");
    if (!tj.contains("dtype") || !tj["dtype"].is_string()) throw bad("dtype");
    if (!tj.contains("shape") || !tj["shape"].is_array()) throw bad("shape");
    if (!tj.contains("offset") || !tj["offset"].is_number_unsigned()) throw bad("offset");
    if (!tj.contains("nbytes") || !tj["nbytes"].is_number_unsigned()) throw bad("nbytes");
    Tensor t;
    t.dtype = tj["dtype"];
    std::int64_t count = 1;
    for (const auto& d : tj["shape"]) {
      if (!d.is_number_integer() || d.get<std::int64_t>() < 0) throw bad("shape");
      t.shape.push_back(d.get<std::int64_t>());
      count *= t.shape.back();
    }
    std::size_t elem = 0;
    if (t.dtype == "float64")
      elem = 8;
    else if (t.dtype == "float32")
      elem = 4;
    else
      throw bad("dtype");
    const auto offset = tj["offset"].get<std::size_t>();
    const auto nbytes = tj["nbytes"].get<std::size_t>();
    if (nbytes != elem * static_cast<std::size_t>(count)) throw bad("nbytes");
    if (offset + nbytes > payload.size())
      throw TruncationError("truncated payload in " + path.string() + ": tensor '" +
                            tj["name"].get<std::string>() + "' extends past end of file");
    t.values.resize(count);
    for (std::int64_t k = 0; k < count; ++k) {
      const char* p = payload.data() + offset + k * elem;
      t.values[k] = elem == 8 ? read_le<double>(p) : static_cast<double>(read_le<float>(p));
    }
    w.tensors[tj["name"].get<std::string>()] = std::move(t);
  }
  return w;
}

WeightsContainer to_weights(const GmmPatchPrior& prior) {
  WeightsContainer w;
  w.model = "gmm";
  w.patch_size = prior.patch_size();
  w.attributes["conditioning"] =
      prior.conditioning() == PositionConditioning::feature_augmented ? "feature_augmented" : "none";
  const auto& comps = prior.components();
  const auto k = static_cast<std::int64_t>(comps.size());
  const auto f = static_cast<std::int64_t>(comps.front().mean.size());
  Tensor weights{{k}, {}, "float64"};
  Tensor means{{k, f}, {}, "float64"};
  Tensor covs{{k, f, f}, {}, "float64"};
  for (const auto& c : comps) {
    weights.values.push_back(c.weight);
    means.values.insert(means.values.end(), c.mean.data(), c.mean.data() + f);
    for (std::int64_t r = 0; r < f; ++r)
      for (std::int64_t col = 0; col < f; ++col) covs.values.push_back(c.covariance(r, col));
  }
  w.tensors["weights"] = std::move(weights);
  w.tensors["means"] = std::move(means);
  w.tensors["covariances"] = std::move(covs);
  return w;
}

namespace {

const Tensor& tensor(const WeightsContainer& w, const std::string& name, std::size_t rank) {
  const auto it = w.tensors.find(name);
  if (it == w.tensors.end()) throw FormatError("weights: missing tensor '" + name + "'");
  if (it->second.shape.size() != rank)
    throw FormatError("weights: tensor '" + name + "' has rank " +
                      std::to_string(it->second.shape.size()) + ", expected " + std::to_string(rank));
  return it->second;
}

}  // namespace

GmmPatchPrior gmm_from_weights(const WeightsContainer& w) {
  if (w.model != "gmm") throw FormatError("weights: model is '" + w.model + "', expected 'gmm'");
  const auto cond_it = w.attributes.find("conditioning");
  PositionConditioning cond = PositionConditioning::none;
  if (cond_it != w.attributes.end()) {
    if (cond_it->second == "feature_augmented")
      cond = PositionConditioning::feature_augmented;
    else if (cond_it->second != "none")
      throw FormatError("weights: bad attribute 'conditioning'");
  }
  const Tensor& weights = tensor(w, "weights", 1);
  const Tensor& means = tensor(w, "means", 2);
  const Tensor& covs = tensor(w, "covariances", 3);
  const auto k = weights.shape[0];
  const auto f = means.shape[1];
  if (means.shape[0] != k) throw FormatError("weights: tensor 'means' component count");
  if (covs.shape[0] != k || covs.shape[1] != f || covs.shape[2] != f)
    throw FormatError("weights: tensor 'covariances' shape");
  std::vector<GmmPatchPrior::Component> comps;
  for (std::int64_t i = 0; i < k; ++i) {
    GmmPatchPrior::Component c;
    c.weight = weights.values[i];
    c.mean = Eigen::Map<const Eigen::VectorXd>(means.values.data() + i * f, f);
    c.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(covs.values.data() + i * f * f, f, f);
    comps.push_back(std::move(c));
  }
  try {
    return GmmPatchPrior(w.patch_size, std::move(comps), cond);
  } catch (const Error& e) {
    throw FormatError(std::string("weights: ") + e.what());
  }
}

WeightsContainer to_weights(int patch_size, const std::vector<double>& sigmas,
                            const std::vector<Eigen::MatrixXd>& weights,
                            const std::vector<Eigen::VectorXd>& biases) {
  WeightsContainer w;
  w.model = "linear-patch";
  w.patch_size = patch_size;
  const auto l = static_cast<std::int64_t>(sigmas.size());
  const auto d = static_cast<std::int64_t>(2 * patch_size * patch_size);
  Tensor s{{l}, sigmas, "float64"};
  Tensor wt{{l, d, d}, {}, "float64"};
  Tensor b{{l, d}, {}, "float64"};
  for (std::int64_t i = 0; i < l; ++i) {
    for (std::int64_t r = 0; r < d; ++r)
      for (std::int64_t c = 0; c < d; ++c) wt.values.push_back(weights[i](r, c));
    b.values.insert(b.values.end(), biases[i].data(), biases[i].data() + d);
  }
  w.tensors["sigmas"] = std::move(s);
  w.tensors["weights"] = std::move(wt);
  w.tensors["biases"] = std::move(b);
  return w;
}

GmmPatchPrior load_gmm_prior(const fs::path& dir) { return gmm_from_weights(read_weights(dir)); }

ScoreModelPtr load_external_denoiser(const fs::path& dir) {
  const WeightsContainer w = read_weights(dir);
  if (w.model == "gmm")
    return std::make_shared<NoVjpModel>(std::make_shared<GmmPatchPrior>(gmm_from_weights(w)));
  if (w.model == "linear-patch") {
    const Tensor& s = tensor(w, "sigmas", 1);
    const Tensor& wt = tensor(w, "weights", 3);
    const Tensor& b = tensor(w, "biases", 2);
    const auto l = s.shape[0];
    const auto d = static_cast<std::int64_t>(2 * w.patch_size * w.patch_size);
    if (wt.shape != std::vector<std::int64_t>{l, d, d})
      throw FormatError("weights: tensor 'weights' shape does not match patch size");
    if (b.shape != std::vector<std::int64_t>{l, d})
      throw FormatError("weights: tensor 'biases' shape does not match patch size");
    std::vector<Eigen::MatrixXd> mats;
    std::vector<Eigen::VectorXd> biases;
    for (std::int64_t i = 0; i < l; ++i) {
      mats.emplace_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                       Eigen::RowMajor>>(wt.values.data() + i * d * d, d, d));
      biases.emplace_back(Eigen::Map<const Eigen::VectorXd>(b.values.data() + i * d, d));
    }
    return std::make_shared<LinearPatchDenoiser>(w.patch_size, s.values, std::move(mats),
                                                 std::move(biases));
  }
  throw FormatError("weights: unsupported model '" + w.model + "'");
}

}  // namespace padis
