#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rescap::seqio {

/// Canonical amino-acid alphabet; the index of a letter is its one-hot column.
inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kAlphabetSize = 20;
/// Placeholder produced by map_unknown for B, J, O, U, X and Z.
inline constexpr char kUnknownResidue = 'X';

/// Column of a canonical letter, or -1 for anything else (including X).
int residue_index(char c) noexcept;

struct ProteinSequence {
  std::string id;
  std::string residues;
  std::optional<int> label;  // 1 = DBP, 0 = non-DBP

  bool operator==(const ProteinSequence&) const = default;
};

struct ParseOptions {
  bool map_unknown = false;
};

std::vector<ProteinSequence> parse_fasta_text(std::string_view text, const ParseOptions& opts = {});
std::vector<ProteinSequence> parse_fasta(const std::filesystem::path& path, const ParseOptions& opts = {});

std::string format_fasta(const std::vector<ProteinSequence>& records, std::size_t line_width = 60);
void write_fasta(const std::vector<ProteinSequence>& records, const std::filesystem::path& path);

enum class Split { Train, Test };

struct ManifestEntry {
  std::string id;
  int label = 0;
  Split split = Split::Train;
};

struct ClassCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;

  std::size_t total() const { return positive + negative; }
  bool operator==(const ClassCounts&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::filesystem::path source_fasta;
  std::vector<ManifestEntry> entries;
  /// Resolved, labelled sequences keyed by id.
  std::map<std::string, ProteinSequence> sequences;

  ClassCounts counts(Split split) const;
  std::vector<const ManifestEntry*> entries_for(Split split) const;
  /// Copy restricted to one split; the other split's rows and sequences are dropped.
  DatasetManifest restricted_to(Split split) const;
};

DatasetManifest parse_manifest_text(std::string_view text, const std::vector<ProteinSequence>& fasta,
                                    std::string name = {});
DatasetManifest load_manifest(const std::filesystem::path& path, const std::vector<ProteinSequence>& fasta);

/// Pairs (id_a, id_b) whose residue strings are byte-identical.
std::vector<std::pair<std::string, std::string>> find_exact_duplicates(const std::vector<ProteinSequence>& a,
                                                                       const std::vector<ProteinSequence>& b);
/// Unordered pairs i < j within one set.
std::vector<std::pair<std::string, std::string>> find_exact_duplicates(const std::vector<ProteinSequence>& a);

}  // namespace rescap::seqio
