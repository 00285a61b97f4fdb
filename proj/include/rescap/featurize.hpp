#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rescap/seqio.hpp"

namespace rescap::featurize {

inline constexpr std::size_t kMaxLength = 1000;
inline constexpr std::size_t kEmbeddingDim = 512;

enum class FeatureKind { OneHot, LocalEmbed, GlobalEmbed };

const char* feature_kind_name(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);  // onehot | local | global

/// Row-major rows x cols matrix of model input for one sequence.
struct FeatureMatrix {
  FeatureKind kind = FeatureKind::OneHot;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::string source_id;
  /// Set when the encoded sequence had no canonical residue at all.
  bool degenerate = false;

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const FeatureMatrix&) const = default;
};

FeatureMatrix onehot_encode(const seqio::ProteinSequence& seq, std::size_t l_max = kMaxLength);

enum class StoreKind : std::uint8_t { Global = 0, Local = 1 };

struct EmbeddingRecord {
  std::size_t rows = 1;       // always 1 for global stores
  std::vector<double> values;  // rows * dim, row-major

  bool operator==(const EmbeddingRecord&) const = default;
};

/// Precomputed per-sequence embeddings in the PBEM container format.
struct EmbeddingStore {
  StoreKind kind = StoreKind::Global;
  std::uint32_t dim = kEmbeddingDim;
  std::map<std::string, EmbeddingRecord> records;

  bool operator==(const EmbeddingStore&) const = default;

  /// Throws DimMismatch / NonFiniteValue when invariants are violated.
  void validate() const;
};

EmbeddingStore decode_embedding_store(const std::string& bytes);
std::string encode_embedding_store(const EmbeddingStore& store);

EmbeddingStore read_embedding_store(const std::filesystem::path& path);
void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path);

/// Converts one store record into a feature matrix, truncating local records to l_max rows.
FeatureMatrix from_store(const EmbeddingStore& store, const std::string& id, std::size_t l_max = kMaxLength);

struct LabeledFeature {
  std::string id;
  FeatureMatrix features;
  int label = 0;
};

struct FeatureSources {
  const EmbeddingStore* global = nullptr;
  const EmbeddingStore* local = nullptr;
  std::size_t l_max = kMaxLength;
};

/// Featurizes the given split of a manifest in manifest order. One-hot input reads the
/// manifest's resolved sequences; embedding kinds read the matching store.
std::vector<LabeledFeature> batch_features(const seqio::DatasetManifest& manifest, seqio::Split split,
                                           FeatureKind kind, const FeatureSources& sources);

}  // namespace rescap::featurize
