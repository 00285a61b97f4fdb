#include "rescap/redundancy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "rescap/error.hpp"
#include "rescap/io_util.hpp"

namespace rescap::redundancy {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum State : std::uint8_t { kMatch = 0, kGapInB = 1, kGapInA = 2 };

// Picks the best of three candidates; earlier entries win ties.
inline std::pair<double, State> best3(double m, double x, double y) {
  State s = kMatch;
  double v = m;
  if (x > v) { v = x; s = kGapInB; }
  if (y > v) { v = y; s = kGapInA; }
  return {v, s};
}

}  // namespace

ScoringScheme ScoringScheme::from_ncbi_text(std::string_view text, double gap_open, double gap_extend) {
  if (gap_open < 0 || gap_extend < 0) throw Error(ErrorCode::InvalidArgument, "gap penalties must be non-negative");
  ScoringScheme s;
  s.gap_open_ = gap_open;
  s.gap_extend_ = gap_extend;

  std::istringstream in{std::string(text)};
  std::vector<char> columns;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (columns.empty()) {
      for (std::string tok; ls >> tok;) columns.push_back(tok[0]);
      continue;
    }
    std::string row;
    if (!(ls >> row)) continue;
    for (char col : columns) {
      int v;
      if (!(ls >> v)) throw Error(ErrorCode::InvalidArgument, "short matrix row '" + row + "'");
      s.table_[index(row[0])][index(col)] = v;
    }
    s.present_[index(row[0])] = true;
  }
  for (char a : seqio::kAlphabet) {
    if (!s.present_[index(a)]) throw Error(ErrorCode::InvalidArgument, std::string("matrix lacks letter ") + a);
    if (s.score(a, a) <= 0) throw Error(ErrorCode::InvalidArgument, std::string("non-positive diagonal at ") + a);
    for (char b : seqio::kAlphabet)
      if (s.score(a, b) != s.score(b, a)) throw Error(ErrorCode::InvalidArgument, "matrix is not symmetric");
  }
  return s;
}

ScoringScheme ScoringScheme::from_ncbi_file(const std::filesystem::path& path, double gap_open, double gap_extend) {
  return from_ncbi_text(read_file(path), gap_open, gap_extend);
}

ScoringScheme ScoringScheme::blosum62(double gap_open, double gap_extend) {
  return from_ncbi_text(bundled_blosum62_text(), gap_open, gap_extend);
}

AlignmentResult nw_align(std::string_view a, std::string_view b, const ScoringScheme& scheme) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySequence, "alignment needs two non-empty sequences");
  for (char c : a)
    if (!scheme.has_letter(c)) throw Error(ErrorCode::IllegalResidue, std::string("letter '") + c + "' not in matrix");
  for (char c : b)
    if (!scheme.has_letter(c)) throw Error(ErrorCode::IllegalResidue, std::string("letter '") + c + "' not in matrix");

  const std::size_t n = a.size(), m = b.size(), w = m + 1;
  const double open = scheme.gap_open(), extend = scheme.gap_extend();

  // Rolling score rows; full predecessor tables for the traceback.
  std::vector<double> M(w), X(w), Y(w), pM(w), pX(w), pY(w);
  std::vector<std::uint8_t> tM((n + 1) * w), tX((n + 1) * w), tY((n + 1) * w);

  pM[0] = 0.0;
  pX[0] = pY[0] = kNegInf;
  for (std::size_t j = 1; j <= m; ++j) {
    pM[j] = pX[j] = kNegInf;
    pY[j] = -open - static_cast<double>(j - 1) * extend;
    tY[j] = j == 1 ? kMatch : kGapInA;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    M[0] = Y[0] = kNegInf;
    X[0] = -open - static_cast<double>(i - 1) * extend;
    tX[i * w] = i == 1 ? kMatch : kGapInB;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cell = i * w + j;
      auto [dm, sm] = best3(pM[j - 1], pX[j - 1], pY[j - 1]);
      M[j] = dm + scheme.score(a[i - 1], b[j - 1]);
      tM[cell] = sm;
      auto [dx, sx] = best3(pM[j] - open, pX[j] - extend, pY[j] - open);
      X[j] = dx;
      tX[cell] = sx;
      auto [dy, sy] = best3(M[j - 1] - open, X[j - 1] - open, Y[j - 1] - extend);
      Y[j] = dy;
      tY[cell] = sy;
    }
    std::swap(M, pM);
    std::swap(X, pX);
    std::swap(Y, pY);
  }

  auto [score, state] = best3(pM[m], pX[m], pY[m]);
  AlignmentResult result;
  result.score = score;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t cell = i * w + j;
    switch (state) {
      case kMatch:
        result.aligned_a.push_back(a[i - 1]);
        result.aligned_b.push_back(b[j - 1]);
        state = static_cast<State>(tM[cell]);
        --i;
        --j;
        break;
      case kGapInB:
        result.aligned_a.push_back(a[i - 1]);
        result.aligned_b.push_back(kGap);
        state = static_cast<State>(tX[cell]);
        --i;
        break;
      case kGapInA:
        result.aligned_a.push_back(kGap);
        result.aligned_b.push_back(b[j - 1]);
        state = static_cast<State>(tY[cell]);
        --j;
        break;
    }
  }
  std::reverse(result.aligned_a.begin(), result.aligned_a.end());
  std::reverse(result.aligned_b.begin(), result.aligned_b.end());
  result.identity_pct = identity_pct(result.aligned_a, result.aligned_b);
  return result;
}

double alignment_score(std::string_view aligned_a, std::string_view aligned_b, const ScoringScheme& scheme) {
  if (aligned_a.size() != aligned_b.size()) throw Error(ErrorCode::ShapeMismatch, "aligned strings differ in length");
  double total = 0.0;
  State prev = kMatch;
  bool first = true;
  for (std::size_t k = 0; k < aligned_a.size(); ++k) {
    const bool gap_a = aligned_a[k] == kGap, gap_b = aligned_b[k] == kGap;
    if (gap_a && gap_b) throw Error(ErrorCode::InvalidArgument, "column with two gaps");
    State cur = gap_b ? kGapInB : gap_a ? kGapInA : kMatch;
    if (cur == kMatch) {
      total += scheme.score(aligned_a[k], aligned_b[k]);
    } else {
      total -= (!first && prev == cur) ? scheme.gap_extend() : scheme.gap_open();
    }
    prev = cur;
    first = false;
  }
  return total;
}

double identity_pct(std::string_view aligned_a, std::string_view aligned_b) {
  if (aligned_a.empty()) return 0.0;
  std::size_t same = 0;
  for (std::size_t k = 0; k < aligned_a.size(); ++k)
    if (aligned_a[k] != kGap && aligned_a[k] == aligned_b[k]) ++same;
  return 100.0 * static_cast<double>(same) / static_cast<double>(aligned_a.size());
}

std::size_t histogram_bin(double pct) {
  auto bin = static_cast<long>(std::floor(pct));
  return static_cast<std::size_t>(std::clamp<long>(bin, 0, static_cast<long>(kHistogramBins) - 1));
}

namespace {

constexpr std::size_t kChunkPairs = 1024;

struct Partial {
  double sum = 0.0;
  std::size_t above = 0;
  std::array<std::size_t, kHistogramBins> hist{};
};

}  // namespace

AuditReport pairwise_audit(const std::vector<seqio::ProteinSequence>& set_a,
                           const std::vector<seqio::ProteinSequence>* set_b, const ScoringScheme& scheme,
                           const AuditOptions& opts) {
  if (set_a.empty() || (set_b != nullptr && set_b->empty()))
    throw Error(ErrorCode::InvalidArgument, "audit needs non-empty sequence sets");

  const std::size_t n = set_a.size();
  const bool cross = set_b != nullptr;
  const std::size_t total = cross ? n * set_b->size() : n * (n - 1) / 2;

  // Pair k -> (i, j). Self pairs are enumerated row by row over i < j.
  std::vector<std::size_t> row_start;
  if (!cross) {
    row_start.resize(n + 1);
    for (std::size_t i = 0, acc = 0; i <= n; ++i) {
      row_start[i] = acc;
      if (i < n) acc += n - 1 - i;
    }
  }
  auto pair_at = [&](std::size_t k) -> std::pair<std::size_t, std::size_t> {
    if (cross) return {k / set_b->size(), k % set_b->size()};
    auto it = std::upper_bound(row_start.begin(), row_start.end(), k);
    std::size_t i = static_cast<std::size_t>(it - row_start.begin()) - 1;
    return {i, i + 1 + (k - row_start[i])};
  };

  const std::size_t chunks = (total + kChunkPairs - 1) / kChunkPairs;
  std::vector<Partial> partials(chunks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    try {
      for (std::size_t c; (c = next.fetch_add(1)) < chunks;) {
        Partial& p = partials[c];
        const std::size_t end = std::min(total, (c + 1) * kChunkPairs);
        for (std::size_t k = c * kChunkPairs; k < end; ++k) {
          auto [i, j] = pair_at(k);
          const std::string* x = &set_a[i].residues;
          const std::string* y = cross ? &(*set_b)[j].residues : &set_a[j].residues;
          // Within one set the pair is unordered; align it in a fixed orientation.
          if (!cross && *y < *x) std::swap(x, y);
          const double pct = nw_align(*x, *y, scheme).identity_pct;
          p.sum += pct;
          if (pct > opts.threshold) ++p.above;
          ++p.hist[histogram_bin(pct)];
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(chunks);
    }
  };

  const unsigned jobs = std::max(1u, opts.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  AuditReport report;
  report.threshold = opts.threshold;
  report.pair_count = total;
  double sum = 0.0;
  std::size_t above = 0;
  for (const auto& p : partials) {
    sum += p.sum;
    above += p.above;
    for (std::size_t b = 0; b < kHistogramBins; ++b) report.identity_histogram[b] += p.hist[b];
  }
  if (total > 0) {
    report.mean_identity_pct = sum / static_cast<double>(total);
    report.fraction_above_threshold = static_cast<double>(above) / static_cast<double>(total);
  }
  report.duplicate_pairs = cross ? seqio::find_exact_duplicates(set_a, *set_b) : seqio::find_exact_duplicates(set_a);
  return report;
}

std::string audit_to_json(const AuditReport& report) {
  nlohmann::ordered_json j;
  j["mean_identity_pct"] = report.mean_identity_pct;
  j["fraction_above_threshold"] = report.fraction_above_threshold;
  j["threshold"] = report.threshold;
  j["pair_count"] = report.pair_count;
  j["empty"] = report.empty();
  auto dups = nlohmann::ordered_json::array();
  for (const auto& [x, y] : report.duplicate_pairs) dups.push_back({x, y});
  j["duplicates"] = dups;
  return j.dump(2) + "\n";
}

std::string histogram_to_csv(const AuditReport& report) {
  std::string out = "bin_low,bin_high,count\n";
  for (std::size_t b = 0; b < kHistogramBins; ++b)
    out += std::to_string(b) + "," + std::to_string(b + 1) + "," + std::to_string(report.identity_histogram[b]) + "\n";
  return out;
}

std::filesystem::path histogram_path(const std::filesystem::path& report_path) {
  auto p = report_path;
  p.replace_extension(".histogram.csv");
  return p;
}

void emit_audit(const AuditReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, audit_to_json(report));
  write_file_atomic(histogram_path(path), histogram_to_csv(report));
}

AuditReport read_audit(const std::filesystem::path& path) {
  AuditReport report;
  try {
    auto j = nlohmann::json::parse(read_file(path));
    report.mean_identity_pct = j.at("mean_identity_pct").get<double>();
    report.fraction_above_threshold = j.at("fraction_above_threshold").get<double>();
    report.threshold = j.at("threshold").get<double>();
    report.pair_count = j.at("pair_count").get<std::size_t>();
    for (const auto& d : j.at("duplicates"))
      report.duplicate_pairs.emplace_back(d.at(0).get<std::string>(), d.at(1).get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "bad audit report " + path.string() + ": " + e.what());
  }

  std::istringstream csv(read_file(histogram_path(path)));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::size_t low = 0, high = 0, count = 0;
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> low >> c1 >> high >> c2 >> count) || low >= kHistogramBins)
      throw Error(ErrorCode::InvalidArgument, "bad histogram row '" + line + "'");
    report.identity_histogram[low] = count;
  }
  return report;
}

}  // namespace rescap::redundancy
