#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rescap/seqio.hpp"

namespace rescap::redundancy {

/// Substitution matrix plus affine gap penalties. A gap run of length k costs
/// gap_open + (k - 1) * gap_extend.
class ScoringScheme {
 public:
  /// Parses a matrix in NCBI layout (comment lines start with '#', a header row of
  /// column letters, then one row per letter).
  static ScoringScheme from_ncbi_text(std::string_view text, double gap_open = 10.0, double gap_extend = 0.5);
  static ScoringScheme from_ncbi_file(const std::filesystem::path& path, double gap_open = 10.0,
                                      double gap_extend = 0.5);
  /// The bundled BLOSUM62.
  static ScoringScheme blosum62(double gap_open = 10.0, double gap_extend = 0.5);

  int score(char a, char b) const { return table_[index(a)][index(b)]; }
  bool has_letter(char c) const { return present_[index(c)]; }
  double gap_open() const { return gap_open_; }
  double gap_extend() const { return gap_extend_; }

 private:
  static std::size_t index(char c) { return static_cast<unsigned char>(c) & 0x7f; }

  std::array<std::array<int, 128>, 128> table_{};
  std::array<bool, 128> present_{};
  double gap_open_ = 10.0;
  double gap_extend_ = 0.5;
};

std::string_view bundled_blosum62_text();

struct AlignmentResult {
  double score = 0.0;
  std::string aligned_a;
  std::string aligned_b;
  double identity_pct = 0.0;
};

inline constexpr char kGap = '-';

/// Optimal global alignment with affine gaps (three-state Gotoh recurrence).
/// Ties in the traceback prefer a diagonal step, then a gap in b, then a gap in a.
AlignmentResult nw_align(std::string_view a, std::string_view b, const ScoringScheme& scheme);

/// Score of a given alignment under the scheme, evaluated column by column.
double alignment_score(std::string_view aligned_a, std::string_view aligned_b, const ScoringScheme& scheme);

/// 100 * identical non-gap columns / alignment length.
double identity_pct(std::string_view aligned_a, std::string_view aligned_b);

inline constexpr std::size_t kHistogramBins = 100;

struct AuditReport {
  double mean_identity_pct = 0.0;
  double fraction_above_threshold = 0.0;
  double threshold = 25.0;
  std::array<std::size_t, kHistogramBins> identity_histogram{};
  std::vector<std::pair<std::string, std::string>> duplicate_pairs;
  std::size_t pair_count = 0;

  bool empty() const { return pair_count == 0; }
  bool operator==(const AuditReport&) const = default;
};

/// Histogram bin of an identity percentage: [k, k+1) for k < 99, and [99, 100] for the last bin.
std::size_t histogram_bin(double identity_pct);

struct AuditOptions {
  double threshold = 25.0;
  unsigned jobs = 1;
};

/// Self-audit over all unordered pairs of set_a when set_b is absent, else all cross pairs.
AuditReport pairwise_audit(const std::vector<seqio::ProteinSequence>& set_a,
                           const std::vector<seqio::ProteinSequence>* set_b, const ScoringScheme& scheme,
                           const AuditOptions& opts = {});

std::string audit_to_json(const AuditReport& report);
std::string histogram_to_csv(const AuditReport& report);

/// Writes the JSON report to `path` and the histogram to `histogram_path(path)`.
void emit_audit(const AuditReport& report, const std::filesystem::path& path);
std::filesystem::path histogram_path(const std::filesystem::path& report_path);
AuditReport read_audit(const std::filesystem::path& path);

}  // namespace rescap::redundancy
