#include "c2lab/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "c2lab/binary_io.hpp"
#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <typename T>
T manifest_field(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw IoError("manifest " + where.string() + " lacks \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError("manifest " + where.string() + " field \"" + key + "\": " + e.what());
  }
}

void check_version(const json& j, const fs::path& where) {
  const int version = manifest_field<int>(j, "version", where);
  if (version != kBundleVersion) {
    throw IoError("unsupported version " + std::to_string(version) + " in " + where.string());
  }
}

template <typename T>
void require_finite(std::span<const T> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

std::string bytes_id(const void* p, std::size_t n, std::string extra = {}) {
  std::vector<unsigned char> bytes(static_cast<const unsigned char*>(p), static_cast<const unsigned char*>(p) + n);
  bytes.insert(bytes.end(), extra.begin(), extra.end());
  return io::content_id(bytes);
}

}  // namespace

// ---------------------------------------------------------------- dataset

void EmbeddingDataset::validate() const {
  if (labels.size() != n()) {
    throw ValidationError("labels length " + std::to_string(labels.size()) + " != n " + std::to_string(n()));
  }
  if (ids.size() != n()) {
    throw ValidationError("ids length " + std::to_string(ids.size()) + " != n " + std::to_string(n()));
  }
  if (class_names.size() < 2) throw ValidationError("need at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_names.size()) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " outside [0, " + std::to_string(class_names.size()) + ")");
    }
  }
  require_finite<float>(embeddings.data(), "embeddings");
}

EmbeddingDataset EmbeddingDataset::subset(std::span<const std::size_t> indices) const {
  EmbeddingDataset out;
  out.embeddings = MatrixF(indices.size(), d());
  out.labels.reserve(indices.size());
  out.ids.reserve(indices.size());
  out.class_names = class_names;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= n()) throw ValidationError("subset index " + std::to_string(i) + " out of range");
    std::copy(embeddings.row(i).begin(), embeddings.row(i).end(), out.embeddings.row(r).begin());
    out.labels.push_back(labels[i]);
    out.ids.push_back(ids[i]);
  }
  return out;
}

std::string EmbeddingDataset::content_id() const {
  std::string label_bytes(reinterpret_cast<const char*>(labels.data()), labels.size() * sizeof(std::uint32_t));
  return bytes_id(embeddings.data().data(), embeddings.size() * sizeof(float), label_bytes);
}

void FeatureMapSet::validate() const {
  if (h * w == 0) throw ValidationError("feature map needs h*w > 0");
  if (m == 0) throw ValidationError("feature map needs m > 0");
  if (values.size() % (h * w * m) != 0) throw ValidationError("feature map buffer is not a whole number of maps");
  require_finite<float>(values, "feature maps");
}

// ---------------------------------------------------------------- bank

ConceptBank::ConceptBank(MatrixF cavs, std::vector<std::string> names)
    : cavs_(std::move(cavs)), names_(std::move(names)) {
  if (names_.size() != cavs_.rows()) throw ValidationError("bank: names count != CAV rows");
  if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size()) {
    throw ValidationError("bank: concept names must be unique");
  }
  require_finite<float>(cavs_.data(), "bank CAVs");
  squared_norms_.reserve(k());
  for (std::size_t i = 0; i < k(); ++i) {
    const double sq = squared_norm(cavs_.row(i));
    if (!(sq > 0.0)) throw ValidationError("bank: CAV '" + names_[i] + "' has zero norm");
    squared_norms_.push_back(sq);
  }
}

std::size_t ConceptBank::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("unknown concept name: " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

std::string ConceptBank::content_id() const {
  std::string name_bytes;
  for (const auto& n : names_) name_bytes += n + '\n';
  return bytes_id(cavs_.data().data(), cavs_.size() * sizeof(float), name_bytes);
}

ConceptBank ConceptBank::with_scaled_row(std::size_t k, float factor) const {
  MatrixF scaled = cavs_;
  for (float& v : scaled.row(k)) v *= factor;
  return ConceptBank(std::move(scaled), names_);
}

// ---------------------------------------------------------------- scores

std::vector<double> ConceptScores::column(std::size_t k) const {
  if (k >= this->k()) throw ValidationError("concept column " + std::to_string(k) + " out of range");
  std::vector<double> col(n());
  for (std::size_t i = 0; i < n(); ++i) col[i] = scores(i, k);
  return col;
}

void ConceptScores::validate() const {
  if (concept_names.size() != k()) throw ValidationError("scores: concept name count != columns");
  require_finite<double>(scores.data(), "concept scores");
}

// ---------------------------------------------------------------- backdoored

void BackdooredDataset::validate() const {
  base.validate();
  if (original_labels.size() != poisoned_indices.size()) {
    throw ValidationError("original_labels length != poisoned_indices length");
  }
  for (std::size_t j = 0; j < poisoned_indices.size(); ++j) {
    const std::size_t i = poisoned_indices[j];
    if (i >= base.n()) throw ValidationError("poisoned index out of range");
    if (j > 0 && i <= poisoned_indices[j - 1]) throw ValidationError("poisoned indices not strictly increasing");
    if (base.labels[i] != target_label) throw ValidationError("poisoned sample does not carry target label");
  }
}

std::vector<std::uint32_t> BackdooredDataset::restored_labels() const {
  std::vector<std::uint32_t> labels = base.labels;
  for (std::size_t j = 0; j < poisoned_indices.size(); ++j) labels[poisoned_indices[j]] = original_labels[j];
  return labels;
}

// ---------------------------------------------------------------- bundle I/O

void save_bundle(const EmbeddingDataset& ds, const fs::path& dir) {
  ds.validate();
  ensure_dir(dir);
  io::write_f32le(dir / "embeddings.f32le", ds.embeddings.data());
  io::write_u32le(dir / "labels.u32le", ds.labels);
  std::string ids;
  for (const auto& id : ds.ids) ids += json(id).dump() + "\n";
  io::write_text(dir / "ids.jsonl", ids);
  json manifest = {
      {"version", kBundleVersion},
      {"n", ds.n()},
      {"d", ds.d()},
      {"class_names", ds.class_names},
      {"embedding_file", "embeddings.f32le"},
      {"label_file", "labels.u32le"},
      {"id_file", "ids.jsonl"},
  };
  io::write_json(dir / "manifest.json", manifest);
}

EmbeddingDataset load_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = io::read_json(manifest_path);
  check_version(manifest, manifest_path);
  const auto n = manifest_field<std::size_t>(manifest, "n", manifest_path);
  const auto d = manifest_field<std::size_t>(manifest, "d", manifest_path);

  EmbeddingDataset ds;
  ds.class_names = manifest_field<std::vector<std::string>>(manifest, "class_names", manifest_path);
  ds.embeddings = MatrixF(
      n, d, io::read_f32le(dir / manifest_field<std::string>(manifest, "embedding_file", manifest_path), n * d));
  ds.labels = io::read_u32le(dir / manifest_field<std::string>(manifest, "label_file", manifest_path), n);

  const fs::path id_path = dir / manifest_field<std::string>(manifest, "id_file", manifest_path);
  std::ifstream ids(id_path);
  if (!ids) throw IoError("cannot open for reading: " + id_path.string());
  std::string line;
  while (std::getline(ids, line)) {
    if (line.empty()) continue;
    try {
      ds.ids.push_back(json::parse(line).get<std::string>());
    } catch (const json::exception& e) {
      throw IoError("malformed id line in " + id_path.string() + ": " + e.what());
    }
  }
  if (ds.ids.size() != n) {
    throw IoError("short read: " + id_path.string() + " holds " + std::to_string(ds.ids.size()) + " ids, expected " +
                  std::to_string(n));
  }
  ds.validate();
  return ds;
}

void save_feature_maps(const FeatureMapSet& maps, const fs::path& dir) {
  maps.validate();
  const fs::path manifest_path = dir / "manifest.json";
  json manifest = io::read_json(manifest_path);
  const auto n = manifest_field<std::size_t>(manifest, "n", manifest_path);
  if (maps.n() != n) throw ValidationError("feature map count != bundle n");
  io::write_f32le(dir / "feature_maps.f32le", maps.values);
  manifest["feature_map"] = {{"h", maps.h}, {"w", maps.w}, {"m", maps.m}, {"file", "feature_maps.f32le"}};
  io::write_json(manifest_path, manifest);
}

std::optional<FeatureMapSet> load_feature_maps(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = io::read_json(manifest_path);
  check_version(manifest, manifest_path);
  if (!manifest.contains("feature_map")) return std::nullopt;
  const auto n = manifest_field<std::size_t>(manifest, "n", manifest_path);
  const json& fm = manifest["feature_map"];
  FeatureMapSet maps;
  maps.h = manifest_field<std::size_t>(fm, "h", manifest_path);
  maps.w = manifest_field<std::size_t>(fm, "w", manifest_path);
  maps.m = manifest_field<std::size_t>(fm, "m", manifest_path);
  maps.values = io::read_f32le(dir / manifest_field<std::string>(fm, "file", manifest_path), n * maps.h * maps.w * maps.m);
  maps.validate();
  return maps;
}

// ---------------------------------------------------------------- bank I/O

void save_bank(const ConceptBank& bank, const fs::path& dir) {
  ensure_dir(dir);
  io::write_f32le(dir / "cavs.f32le", bank.cavs().data());
  io::write_json(dir / "bank.json", {{"version", kBundleVersion},
                                     {"k", bank.k()},
                                     {"d", bank.d()},
                                     {"names", bank.names()},
                                     {"cav_file", "cavs.f32le"}});
}

ConceptBank load_bank(const fs::path& dir) {
  const fs::path manifest_path = dir / "bank.json";
  const json manifest = io::read_json(manifest_path);
  check_version(manifest, manifest_path);
  const auto k = manifest_field<std::size_t>(manifest, "k", manifest_path);
  const auto d = manifest_field<std::size_t>(manifest, "d", manifest_path);
  auto names = manifest_field<std::vector<std::string>>(manifest, "names", manifest_path);
  MatrixF cavs(k, d, io::read_f32le(dir / manifest_field<std::string>(manifest, "cav_file", manifest_path), k * d));
  return ConceptBank(std::move(cavs), std::move(names));
}

// ---------------------------------------------------------------- scores I/O

void save_scores(const ConceptScores& scores, const fs::path& dir) {
  scores.validate();
  ensure_dir(dir);
  io::write_f64le(dir / "scores.f64le", scores.scores.data());
  io::write_json(dir / "scores.json", {{"version", kBundleVersion},
                                       {"n", scores.n()},
                                       {"k", scores.k()},
                                       {"concept_names", scores.concept_names},
                                       {"dataset_id", scores.dataset_id},
                                       {"bank_id", scores.bank_id},
                                       {"score_file", "scores.f64le"}});
}

ConceptScores load_scores(const fs::path& dir) {
  const fs::path manifest_path = dir / "scores.json";
  const json manifest = io::read_json(manifest_path);
  check_version(manifest, manifest_path);
  const auto n = manifest_field<std::size_t>(manifest, "n", manifest_path);
  const auto k = manifest_field<std::size_t>(manifest, "k", manifest_path);
  ConceptScores s;
  s.scores = MatrixD(n, k, io::read_f64le(dir / manifest_field<std::string>(manifest, "score_file", manifest_path), n * k));
  s.concept_names = manifest_field<std::vector<std::string>>(manifest, "concept_names", manifest_path);
  s.dataset_id = manifest_field<std::string>(manifest, "dataset_id", manifest_path);
  s.bank_id = manifest_field<std::string>(manifest, "bank_id", manifest_path);
  s.validate();
  return s;
}

// ---------------------------------------------------------------- split

Split split(const EmbeddingDataset& ds, double test_fraction, std::uint64_t seed) {
  const std::size_t n = ds.n();
  if (n < 2) throw ValidationError("split needs n >= 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must lie in (0, 1)");
  // Round half up.
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 0.5));
  if (n_test == 0 || n_test == n) {
    throw ValidationError("degenerate test_fraction: split of n=" + std::to_string(n) + " leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Split out;
  out.test_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(out.test_indices.begin(), out.test_indices.end());
  std::sort(out.train_indices.begin(), out.train_indices.end());
  out.train = ds.subset(out.train_indices);
  out.test = ds.subset(out.test_indices);
  return out;
}

}  // namespace c2lab
