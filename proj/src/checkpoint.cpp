#include "mmlm/checkpoint.hpp"

#include <map>

#include "mmlm/errors.hpp"
#include "mmlm/io.hpp"

namespace mmlm {
namespace {

constexpr std::string_view kMagic = "MMC1";

}  // namespace

std::string encode_checkpoint(const ConditionedSequenceModel& model) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);

  const auto& cfg = model.config();
  w.u32(static_cast<std::uint32_t>(cfg.hidden_size));
  w.u32(static_cast<std::uint32_t>(cfg.embedding_size));
  w.u32(static_cast<std::uint32_t>(cfg.vocab_size));
  w.u8(cfg.conditioning.use_visual ? 1 : 0);
  w.u8(cfg.conditioning.use_source ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(cfg.conditioning.visual_dim));
  w.u32(static_cast<std::uint32_t>(cfg.conditioning.source_dim));

  const auto& vocab = model.vocabulary();
  w.u32(static_cast<std::uint32_t>(vocab.min_count()));
  w.u32(static_cast<std::uint32_t>(vocab.size() - Vocabulary::kReserved));
  for (auto i = static_cast<Index>(Vocabulary::kReserved); i < vocab.size(); ++i) {
    w.str(vocab.token(i));
    w.u64(vocab.count(i));
  }

  std::uint32_t n = 0;
  model.params().visit([&](std::string_view, const Tensor&) { ++n; });
  w.u32(n);
  model.params().visit([&](std::string_view name, const Tensor& t) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Real v : t.data()) w.f64(static_cast<double>(v));
  });
  return w.bytes();
}

ConditionedSequenceModel decode_checkpoint(std::string_view bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
    throw FormatError(origin + ": not an MMC1 checkpoint");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError(origin + ": checkpoint version " + std::to_string(version) + ", this build reads " +
                       std::to_string(kCheckpointVersion));
  }

  ModelConfig cfg;
  cfg.hidden_size = r.u32();
  cfg.embedding_size = r.u32();
  cfg.vocab_size = r.u32();
  cfg.conditioning.use_visual = r.u8() != 0;
  cfg.conditioning.use_source = r.u8() != 0;
  cfg.conditioning.visual_dim = r.u32();
  cfg.conditioning.source_dim = r.u32();
  cfg.validate();

  const auto min_count = static_cast<int>(r.u32());
  const auto n_types = r.u32();
  std::vector<std::string> types;
  std::vector<std::uint64_t> counts;
  for (std::uint32_t i = 0; i < n_types; ++i) {
    types.push_back(r.str());
    counts.push_back(r.u64());
  }
  Vocabulary vocab = Vocabulary::from_types(std::move(types), std::move(counts), min_count);

  std::map<std::string, Tensor, std::less<>> stored;
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const auto rank = r.u8();
    const auto rows = r.u32();
    const auto cols = r.u32();
    if ((rank != 1 && rank != 2) || rows == 0 || cols == 0 || (rank == 1 && cols != 1)) {
      throw FormatError(origin + ": malformed shape for tensor " + name);
    }
    const Shape shape = rank == 1 ? Shape::vector(rows) : Shape::matrix(rows, cols);
    std::vector<Real> data(shape.size());
    for (auto& v : data) v = static_cast<Real>(r.f64());
    if (!stored.emplace(name, Tensor(shape, std::move(data))).second) {
      throw FormatError(origin + ": tensor " + name + " stored twice");
    }
  }
  if (!r.at_end()) throw FormatError(origin + ": trailing bytes after the last tensor");

  ModelParams params = zero_params(cfg);
  params.visit([&](std::string_view name, Tensor& t) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError(origin + ": missing tensor " + std::string(name));
    if (it->second.shape() != t.shape()) {
      throw DimensionMismatchError(origin + ": tensor " + std::string(name) + " has shape " +
                                   it->second.shape().str() + ", configuration implies " + t.shape().str());
    }
    t = std::move(it->second);
    stored.erase(it);
  });
  if (!stored.empty()) {
    throw FormatError(origin + ": unexpected tensor " + stored.begin()->first);
  }
  if (vocab.size() != cfg.vocab_size) {
    throw DimensionMismatchError(origin + ": vocabulary has " + std::to_string(vocab.size()) +
                                 " entries, configuration says " + std::to_string(cfg.vocab_size));
  }
  return ConditionedSequenceModel(cfg, std::move(vocab), std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const ConditionedSequenceModel& model) {
  write_file_atomic(path, encode_checkpoint(model));
}

ConditionedSequenceModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace mmlm
