#include "rescap/seqio.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "rescap/error.hpp"
#include "rescap/io_util.hpp"

namespace rescap::seqio {

namespace {

constexpr std::string_view kMappable = "BJOUXZ";

std::string_view trim_cr(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
  return line;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

void validate_record(ProteinSequence& rec, const ParseOptions& opts) {
  if (rec.residues.empty()) throw Error(ErrorCode::MalformedFasta, "record '" + rec.id + "' has an empty body");
  for (std::size_t i = 0; i < rec.residues.size(); ++i) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(rec.residues[i])));
    if (residue_index(c) >= 0) {
      rec.residues[i] = c;
    } else if (opts.map_unknown && kMappable.find(c) != std::string_view::npos) {
      rec.residues[i] = kUnknownResidue;
    } else {
      throw Error(ErrorCode::IllegalResidue, "record '" + rec.id + "': illegal residue '" +
                                                 std::string(1, rec.residues[i]) + "' at position " +
                                                 std::to_string(i));
    }
  }
}

}  // namespace

int residue_index(char c) noexcept {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (std::size_t i = 0; i < kAlphabet.size(); ++i) t[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
    return t;
  }();
  return table[static_cast<unsigned char>(c)];
}

std::vector<ProteinSequence> parse_fasta_text(std::string_view text, const ParseOptions& opts) {
  std::vector<ProteinSequence> records;
  std::unordered_set<std::string> seen;
  bool open = false;

  auto close = [&] {
    if (!open) return;
    validate_record(records.back(), opts);
  };

  std::size_t line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = trim_cr(raw);
    if (line.empty()) continue;
    if (line.front() == '>') {
      close();
      auto header = line.substr(1);
      auto begin = header.find_first_not_of(" \t");
      if (begin == std::string_view::npos)
        throw Error(ErrorCode::MalformedFasta, "empty header at line " + std::to_string(line_no));
      auto end = header.find_first_of(" \t", begin);
      std::string id(header.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin));
      if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate id '" + id + "'");
      records.push_back({std::move(id), {}, std::nullopt});
      open = true;
    } else {
      if (!open) throw Error(ErrorCode::MalformedFasta, "sequence data before first header at line " + std::to_string(line_no));
      for (char c : line)
        if (c != ' ' && c != '\t') records.back().residues.push_back(c);
    }
  }
  close();
  return records;
}

std::vector<ProteinSequence> parse_fasta(const std::filesystem::path& path, const ParseOptions& opts) {
  return parse_fasta_text(read_file(path), opts);
}

std::string format_fasta(const std::vector<ProteinSequence>& records, std::size_t line_width) {
  std::string out;
  for (const auto& rec : records) {
    out += '>';
    out += rec.id;
    out += '\n';
    for (std::size_t i = 0; i < rec.residues.size(); i += line_width) {
      out.append(rec.residues, i, line_width);
      out += '\n';
    }
  }
  return out;
}

void write_fasta(const std::vector<ProteinSequence>& records, const std::filesystem::path& path) {
  write_file_atomic(path, format_fasta(records));
}

ClassCounts DatasetManifest::counts(Split split) const {
  ClassCounts c;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    (e.label == 1 ? c.positive : c.negative)++;
  }
  return c;
}

std::vector<const ManifestEntry*> DatasetManifest::entries_for(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

DatasetManifest DatasetManifest::restricted_to(Split split) const {
  DatasetManifest out;
  out.name = name;
  out.source_fasta = source_fasta;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    out.entries.push_back(e);
    out.sequences.emplace(e.id, sequences.at(e.id));
  }
  return out;
}

DatasetManifest parse_manifest_text(std::string_view text, const std::vector<ProteinSequence>& fasta,
                                    std::string name) {
  std::unordered_map<std::string_view, const ProteinSequence*> by_id;
  for (const auto& rec : fasta) by_id.emplace(rec.id, &rec);

  DatasetManifest manifest;
  manifest.name = std::move(name);
  bool header_seen = false;
  std::size_t line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = trim_cr(raw);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss{std::string(line)};
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (!header_seen) {
      if (fields.size() != 3 || fields[0] != "id" || fields[1] != "label" || fields[2] != "split")
        throw Error(ErrorCode::InvalidArgument, "manifest header must be 'id<TAB>label<TAB>split'");
      header_seen = true;
      continue;
    }
    auto where = " at manifest line " + std::to_string(line_no);
    if (fields.size() != 3) throw Error(ErrorCode::InvalidArgument, "expected 3 tab-separated fields" + where);
    ManifestEntry entry;
    entry.id = fields[0];
    if (fields[1] == "0" || fields[1] == "1") {
      entry.label = fields[1][0] - '0';
    } else {
      throw Error(ErrorCode::BadLabel, "label '" + fields[1] + "'" + where);
    }
    if (fields[2] == "train") {
      entry.split = Split::Train;
    } else if (fields[2] == "test") {
      entry.split = Split::Test;
    } else {
      throw Error(ErrorCode::BadSplit, "split '" + fields[2] + "'" + where);
    }
    auto it = by_id.find(entry.id);
    if (it == by_id.end()) throw Error(ErrorCode::UnresolvedId, "id '" + entry.id + "' not in FASTA" + where);
    auto seq = *it->second;
    seq.label = entry.label;
    if (!manifest.sequences.emplace(entry.id, std::move(seq)).second)
      throw Error(ErrorCode::DuplicateId, "id '" + entry.id + "' listed twice" + where);
    manifest.entries.push_back(std::move(entry));
  }
  if (!header_seen) throw Error(ErrorCode::InvalidArgument, "manifest is empty");
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const std::vector<ProteinSequence>& fasta) {
  auto m = parse_manifest_text(read_file(path), fasta, path.stem().string());
  return m;
}

std::vector<std::pair<std::string, std::string>> find_exact_duplicates(const std::vector<ProteinSequence>& a,
                                                                       const std::vector<ProteinSequence>& b) {
  std::unordered_map<std::string_view, std::vector<std::size_t>> index;
  for (std::size_t j = 0; j < b.size(); ++j) index[b[j].residues].push_back(j);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& x : a) {
    auto it = index.find(x.residues);
    if (it == index.end()) continue;
    for (auto j : it->second) pairs.emplace_back(x.id, b[j].id);
  }
  return pairs;
}

std::vector<std::pair<std::string, std::string>> find_exact_duplicates(const std::vector<ProteinSequence>& a) {
  std::unordered_map<std::string_view, std::vector<std::size_t>> index;
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t j = 0; j < a.size(); ++j) {
    auto& earlier = index[a[j].residues];
    for (auto i : earlier) pairs.emplace_back(a[i].id, a[j].id);
    earlier.push_back(j);
  }
  return pairs;
}

}  // namespace rescap::seqio
