#pragma once
// Fixtures shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rescap/featurize.hpp"
#include "rescap/harness.hpp"
#include "rescap/seqio.hpp"

namespace rescap::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("rescap_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Coordinates of a global embedding that decide the class of a separable sample.
inline constexpr std::size_t kSignalCoords[3] = {100, 250, 400};

/// Global-embedding-shaped samples whose class is the sign of x[100] + x[250] - x[400],
/// resampled until that sum is at least `margin` away from zero.
inline harness::Dataset separable_set(std::size_t n, std::uint64_t seed, std::size_t dim = featurize::kEmbeddingDim,
                                      double margin = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  harness::Dataset out;
  for (std::size_t i = 0; i < n; ++i) {
    featurize::FeatureMatrix m;
    m.kind = featurize::FeatureKind::GlobalEmbed;
    m.rows = 1;
    m.cols = dim;
    m.data.resize(dim);
    double s = 0.0;
    do {
      for (auto& x : m.data) x = dist(rng);
      s = m.data[kSignalCoords[0] % dim] + m.data[kSignalCoords[1] % dim] - m.data[kSignalCoords[2] % dim];
    } while (std::abs(s) < margin);
    m.source_id = "s" + std::to_string(i);
    out.push_back({m.source_id, std::move(m), s > 0 ? 1 : 0});
  }
  return out;
}

/// Same inputs with labels permuted at random, keeping the class balance.
inline harness::Dataset shuffle_labels(harness::Dataset data, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& s : data) labels.push_back(s.label);
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < data.size(); ++i) data[i].label = labels[i];
  return data;
}

/// Training accuracy of plain logistic regression fit by full-batch gradient descent.
inline double logistic_regression_accuracy(const harness::Dataset& data, std::size_t iters = 500, double lr = 0.5) {
  const std::size_t d = data.front().features.data.size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (const auto& s : data) {
      double z = b;
      for (std::size_t k = 0; k < d; ++k) z += w[k] * s.features.data[k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - s.label;
      for (std::size_t k = 0; k < d; ++k) gw[k] += err * s.features.data[k];
      gb += err;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= lr * gw[k] / static_cast<double>(data.size());
    b -= lr * gb / static_cast<double>(data.size());
  }
  std::size_t correct = 0;
  for (const auto& s : data) {
    double z = b;
    for (std::size_t k = 0; k < d; ++k) z += w[k] * s.features.data[k];
    correct += (z >= 0.0) == (s.label == 1);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Files for driving the CLI: FASTA, manifest and a global PBEM store over one dataset.
struct DatasetFiles {
  std::filesystem::path fasta, manifest, global_emb, local_emb;
};

/// Writes `train` and `test` as one dataset. Sequences are random; the global store holds the
/// feature vectors, the local store a short random per-residue embedding of width `local_dim`.
inline DatasetFiles write_dataset(const TempDir& dir, const harness::Dataset& train, const harness::Dataset& test,
                                  std::uint64_t seed, std::size_t local_dim = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  DatasetFiles f{dir / "data.fasta", dir / "manifest.tsv", dir / "global.pbem", dir / "local.pbem"};
  std::vector<seqio::ProteinSequence> seqs;
  featurize::EmbeddingStore global, local;
  global.kind = featurize::StoreKind::Global;
  global.dim = static_cast<std::uint32_t>(train.front().features.cols);
  local.kind = featurize::StoreKind::Local;
  local.dim = static_cast<std::uint32_t>(local_dim);
  std::string manifest = "id\tlabel\tsplit\n";
  auto add = [&](const featurize::LabeledFeature& s, const char* split) {
    const std::string residues = random_protein(rng, 20 + rng() % 20);
    seqs.push_back({s.id, residues, std::nullopt});
    manifest += s.id + "\t" + std::to_string(s.label) + "\t" + split + "\n";
    global.records[s.id] = {1, s.features.data};
    featurize::EmbeddingRecord rec{residues.size(), {}};
    rec.values.resize(residues.size() * local_dim);
    for (auto& v : rec.values) v = dist(rng) + (s.label ? 0.5 : -0.5);
    local.records[s.id] = std::move(rec);
  };
  for (const auto& s : train) add(s, "train");
  for (const auto& s : test) add(s, "test");
  seqio::write_fasta(seqs, f.fasta);
  write_text(f.manifest, manifest);
  featurize::write_embedding_store(global, f.global_emb);
  featurize::write_embedding_store(local, f.local_emb);
  return f;
}

}  // namespace rescap::testing
