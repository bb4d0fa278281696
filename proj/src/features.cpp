#include "mmlm/features.hpp"

#include "mmlm/errors.hpp"
#include "mmlm/io.hpp"

namespace mmlm {
namespace {

constexpr std::string_view kMagic = "MMF1";

}  // namespace

FeatureStore::FeatureStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ConfigError("feature dimension must be positive");
}

void FeatureStore::insert(const std::string& id, Tensor vector) {
  if (vector.rank() != 1 || vector.size() != dim_) {
    throw DimensionMismatchError("feature '" + id + "' has shape " + vector.shape().str() +
                                 ", store dimension is " + std::to_string(dim_));
  }
  auto [it, inserted] = vectors_.try_emplace(id, std::move(vector));
  if (!inserted && !(it->second == vector)) {
    throw DuplicateIdError("conflicting feature vectors for id '" + id + "'");
  }
}

const Tensor* FeatureStore::find(const std::string& id) const {
  auto it = vectors_.find(id);
  return it == vectors_.end() ? nullptr : &it->second;
}

const Tensor& FeatureStore::at(const std::string& id) const {
  const Tensor* t = find(id);
  if (t == nullptr) throw DataError("no feature vector for item '" + id + "'");
  return *t;
}

std::vector<std::string> FeatureStore::ids() const {
  std::vector<std::string> out;
  out.reserve(vectors_.size());
  for (const auto& [id, _] : vectors_) out.push_back(id);
  return out;
}

std::string encode_features(const FeatureStore& store) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(static_cast<std::uint32_t>(store.size()));
  w.u32(static_cast<std::uint32_t>(store.dim()));
  for (const auto& [id, vec] : store.entries()) {
    w.str(id);
    for (Real v : vec.data()) w.f32(static_cast<float>(v));
  }
  return w.bytes();
}

FeatureStore decode_features(std::string_view bytes, std::size_t expected_dim,
                             const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
    throw FormatError(origin + ": not an MMF1 feature file");
  }
  const auto count = r.u32();
  const auto dim = r.u32();
  if (dim == 0) throw FormatError(origin + ": feature dimension is zero");
  if (expected_dim != 0 && dim != expected_dim) {
    throw DimensionMismatchError(origin + ": header dimension " + std::to_string(dim) +
                                 ", expected " + std::to_string(expected_dim));
  }
  FeatureStore store(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.str();
    std::vector<Real> values(dim);
    for (auto& v : values) v = static_cast<Real>(r.f32());
    store.insert(id, Tensor::vector(std::move(values)));
  }
  if (!r.at_end()) {
    throw FormatError(origin + ": " + std::to_string(r.remaining()) +
                      " trailing bytes after the last record");
  }
  return store;
}

FeatureStore load_features(const std::filesystem::path& path, std::size_t expected_dim) {
  if (!std::filesystem::exists(path)) throw DataError("feature file not found: " + path.string());
  return decode_features(read_file(path), expected_dim, path.string());
}

void save_features(const std::filesystem::path& path, const FeatureStore& store) {
  write_file_atomic(path, encode_features(store));
}

}  // namespace mmlm
