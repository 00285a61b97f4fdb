#include "rescap/featurize.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "rescap/error.hpp"
#include "rescap/io_util.hpp"

static_assert(std::endian::native == std::endian::little, "PBEM I/O assumes a little-endian host");
static_assert(std::numeric_limits<float>::is_iec559);

namespace rescap::featurize {

namespace {

constexpr char kMagic[4] = {'P', 'B', 'E', 'M'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw Error(ErrorCode::TruncatedFile, "needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::OneHot: return "onehot";
    case FeatureKind::LocalEmbed: return "local";
    case FeatureKind::GlobalEmbed: return "global";
  }
  return "?";
}

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "onehot") return FeatureKind::OneHot;
  if (name == "local") return FeatureKind::LocalEmbed;
  if (name == "global") return FeatureKind::GlobalEmbed;
  throw Error(ErrorCode::InvalidArgument, "unknown feature kind '" + name + "'");
}

FeatureMatrix onehot_encode(const seqio::ProteinSequence& seq, std::size_t l_max) {
  FeatureMatrix m;
  m.kind = FeatureKind::OneHot;
  m.rows = l_max;
  m.cols = seqio::kAlphabetSize;
  m.data.assign(m.rows * m.cols, 0.0);
  m.source_id = seq.id;
  const std::size_t n = std::min(seq.residues.size(), l_max);
  bool any = false;
  for (std::size_t r = 0; r < n; ++r) {
    int col = seqio::residue_index(seq.residues[r]);
    if (col < 0) continue;  // mapped unknown residue: all-zero row
    m.data[r * m.cols + static_cast<std::size_t>(col)] = 1.0;
    any = true;
  }
  m.degenerate = !any;
  return m;
}

void EmbeddingStore::validate() const {
  if (dim == 0) throw Error(ErrorCode::DimMismatch, "store dim must be positive");
  for (const auto& [id, rec] : records) {
    if (kind == StoreKind::Global && rec.rows != 1)
      throw Error(ErrorCode::DimMismatch, "global record '" + id + "' has " + std::to_string(rec.rows) + " rows");
    if (rec.values.size() != rec.rows * dim)
      throw Error(ErrorCode::DimMismatch, "record '" + id + "' has " + std::to_string(rec.values.size()) +
                                              " values, expected " + std::to_string(rec.rows * dim));
    for (double v : rec.values)
      if (!std::isfinite(v) || !std::isfinite(static_cast<float>(v)))
        throw Error(ErrorCode::NonFiniteValue, "record '" + id + "'");
  }
}

std::string encode_embedding_store(const EmbeddingStore& store) {
  store.validate();
  std::string out(kMagic, 4);
  put<std::uint8_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(store.kind));
  put<std::uint32_t>(out, store.dim);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.records.size()));
  for (const auto& [id, rec] : store.records) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max())
      throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    if (store.kind == StoreKind::Local) put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.rows));
    for (double v : rec.values) put<float>(out, static_cast<float>(v));
  }
  return out;
}

EmbeddingStore decode_embedding_store(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a PBEM file");
  in.get_string(4);
  auto version = in.get<std::uint8_t>();
  if (version != kVersion) throw Error(ErrorCode::VersionMismatch, "PBEM version " + std::to_string(version));
  auto kind = in.get<std::uint8_t>();
  if (kind > 1) throw Error(ErrorCode::InvalidArgument, "PBEM kind byte " + std::to_string(kind));

  EmbeddingStore store;
  store.kind = static_cast<StoreKind>(kind);
  store.dim = in.get<std::uint32_t>();
  if (store.dim == 0) throw Error(ErrorCode::DimMismatch, "dim is zero");
  auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto id_len = in.get<std::uint16_t>();
    auto id = in.get_string(id_len);
    EmbeddingRecord rec;
    rec.rows = store.kind == StoreKind::Local ? in.get<std::uint32_t>() : 1;
    rec.values.resize(rec.rows * store.dim);
    for (auto& v : rec.values) {
      v = in.get<float>();
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "record '" + id + "'");
    }
    if (!store.records.emplace(id, std::move(rec)).second)
      throw Error(ErrorCode::DuplicateId, "record '" + id + "' appears twice");
  }
  if (!in.done()) throw Error(ErrorCode::DimMismatch, "trailing bytes after last record");
  return store;
}

EmbeddingStore read_embedding_store(const std::filesystem::path& path) {
  return decode_embedding_store(read_file(path));
}

void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, encode_embedding_store(store));
}

FeatureMatrix from_store(const EmbeddingStore& store, const std::string& id, std::size_t l_max) {
  auto it = store.records.find(id);
  if (it == store.records.end()) throw Error(ErrorCode::MissingFeature, "no embedding for '" + id + "'");
  const auto& rec = it->second;
  FeatureMatrix m;
  m.kind = store.kind == StoreKind::Global ? FeatureKind::GlobalEmbed : FeatureKind::LocalEmbed;
  m.rows = store.kind == StoreKind::Global ? 1 : std::min(rec.rows, l_max);
  m.cols = store.dim;
  m.data.assign(rec.values.begin(), rec.values.begin() + static_cast<std::ptrdiff_t>(m.rows * m.cols));
  m.source_id = id;
  return m;
}

std::vector<LabeledFeature> batch_features(const seqio::DatasetManifest& manifest, seqio::Split split,
                                           FeatureKind kind, const FeatureSources& sources) {
  const EmbeddingStore* store = nullptr;
  if (kind == FeatureKind::GlobalEmbed) store = sources.global;
  if (kind == FeatureKind::LocalEmbed) store = sources.local;
  if (kind != FeatureKind::OneHot && store == nullptr)
    throw Error(ErrorCode::MissingFeature, std::string("no ") + feature_kind_name(kind) + " embedding store supplied");
  if (store != nullptr) {
    auto expected = kind == FeatureKind::GlobalEmbed ? StoreKind::Global : StoreKind::Local;
    if (store->kind != expected) throw Error(ErrorCode::KindMismatch, "embedding store kind does not match features");
  }

  std::vector<LabeledFeature> out;
  for (const auto* entry : manifest.entries_for(split)) {
    LabeledFeature item;
    item.id = entry->id;
    item.label = entry->label;
    if (kind == FeatureKind::OneHot) {
      auto it = manifest.sequences.find(entry->id);
      if (it == manifest.sequences.end()) throw Error(ErrorCode::MissingFeature, "no sequence for '" + entry->id + "'");
      item.features = onehot_encode(it->second, sources.l_max);
    } else {
      item.features = from_store(*store, entry->id, sources.l_max);
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace rescap::featurize
