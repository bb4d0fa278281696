#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmlm/tensor.hpp"

namespace mmlm {

// Fixed-dimension vectors keyed by item id: image features, or transfer
// features extracted from a source model.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim);

  // Re-inserting an identical vector is a no-op; a different one throws
  // DuplicateIdError.
  void insert(const std::string& id, Tensor vector);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }
  const Tensor* find(const std::string& id) const;
  const Tensor& at(const std::string& id) const;
  std::vector<std::string> ids() const;
  const std::map<std::string, Tensor>& entries() const { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, Tensor> vectors_;
};

// MMF1 container: "MMF1", u32 count, u32 dim, then per record u32 id length,
// id bytes and dim little-endian float32 values. Records are written in id order.
std::string encode_features(const FeatureStore& store);
FeatureStore decode_features(std::string_view bytes, std::size_t expected_dim,
                             const std::string& origin = "<memory>");

// expected_dim == 0 accepts whatever the header declares.
FeatureStore load_features(const std::filesystem::path& path, std::size_t expected_dim = 0);
void save_features(const std::filesystem::path& path, const FeatureStore& store);

}  // namespace mmlm
