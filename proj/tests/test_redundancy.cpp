#include <random>

#include "doctest.h"
#include "support.hpp"
#include "rescap/error.hpp"
#include "rescap/redundancy.hpp"

using namespace rescap;
using namespace rescap::redundancy;
using rescap::testing::brute_force_alignment_score;
using rescap::testing::random_protein;

namespace {

std::string strip_gaps(std::string s) {
  std::erase(s, kGap);
  return s;
}

void check_well_formed(const AlignmentResult& r, std::string_view a, std::string_view b) {
  REQUIRE(r.aligned_a.size() == r.aligned_b.size());
  CHECK(strip_gaps(r.aligned_a) == a);
  CHECK(strip_gaps(r.aligned_b) == b);
  for (std::size_t k = 0; k < r.aligned_a.size(); ++k) CHECK_FALSE((r.aligned_a[k] == kGap && r.aligned_b[k] == kGap));
}

/// A random monotone alignment of a and b.
std::pair<std::string, std::string> random_alignment(std::mt19937_64& rng, std::string_view a, std::string_view b) {
  std::string x, y;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    int move = static_cast<int>(rng() % 3);
    if (i == a.size()) move = 2;
    if (j == b.size()) move = 1;
    if (move == 0) x += a[i++], y += b[j++];
    else if (move == 1) x += a[i++], y += kGap;
    else x += kGap, y += b[j++];
  }
  return {x, y};
}

std::vector<seqio::ProteinSequence> random_set(std::mt19937_64& rng, std::size_t n, std::size_t min_len,
                                               std::size_t max_len, const std::string& prefix) {
  std::vector<seqio::ProteinSequence> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({prefix + std::to_string(i), random_protein(rng, min_len + rng() % (max_len - min_len + 1)),
                   std::nullopt});
  return out;
}

}  // namespace

TEST_SUITE("redundancy") {

TEST_CASE("BLOSUM62 spot values") {
  auto s = ScoringScheme::blosum62();
  CHECK(s.score('A', 'A') == 4);
  CHECK(s.score('W', 'W') == 11);
  CHECK(s.score('A', 'C') == 0);
  CHECK(s.score('C', 'C') == 9);
  CHECK(s.score('E', 'D') == 2);
  CHECK(s.score('W', 'C') == -2);
  for (char a : seqio::kAlphabet)
    for (char b : seqio::kAlphabet) CHECK(s.score(a, b) == s.score(b, a));
}

TEST_CASE("asymmetric matrix is rejected") {
  const std::string text = "   A  C\nA  4  1\nC  0  9\n";
  CHECK_THROWS_AS(ScoringScheme::from_ncbi_text(text), Error);
}

TEST_CASE("AAA vs AAA") {
  auto r = nw_align("AAA", "AAA", ScoringScheme::blosum62());
  CHECK(r.score == 12.0);
  CHECK(r.identity_pct == 100.0);
  CHECK(r.aligned_a == "AAA");
  CHECK(r.aligned_b == "AAA");
}

TEST_CASE("A vs C") {
  auto r = nw_align("A", "C", ScoringScheme::blosum62());
  CHECK(r.aligned_a == "A");
  CHECK(r.aligned_b == "C");
  CHECK(r.identity_pct == 0.0);
  CHECK(r.score == 0.0);
}

TEST_CASE("empty sequence") {
  auto s = ScoringScheme::blosum62();
  CHECK_THROWS_AS(nw_align("", "A", s), Error);
  try {
    nw_align("A", "", s);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySequence);
  }
}

TEST_CASE("gap costs are affine") {
  auto s = ScoringScheme::blosum62(10.0, 0.5);
  // Three-residue gap: one open plus two extensions.
  auto r = nw_align("WWWCCCWWW", "WWWWWW", s);
  CHECK(r.aligned_b == "WWW---WWW");
  CHECK(r.score == doctest::Approx(6 * 11 - 10.0 - 2 * 0.5));
}

TEST_CASE("scores match exhaustive enumeration") {
  const ScoringScheme schemes[] = {ScoringScheme::blosum62(10.0, 0.5), ScoringScheme::blosum62(2.0, 1.0),
                                   ScoringScheme::blosum62(1.0, 0.0), ScoringScheme::blosum62(0.0, 0.0)};
  const auto short_strings = testing::all_strings("ACDE", 3);
  for (const auto& scheme : schemes) {
    for (const auto& a : short_strings)
      for (const auto& b : short_strings) {
        auto r = nw_align(a, b, scheme);
        REQUIRE(r.score == doctest::Approx(brute_force_alignment_score(a, b, scheme)).epsilon(1e-12));
      }
  }
  std::mt19937_64 rng(17);
  for (int i = 0; i < 150; ++i) {
    auto a = random_protein(rng, 4 + rng() % 2, "ACDE"), b = random_protein(rng, 4 + rng() % 2, "ACDE");
    for (const auto& scheme : schemes) {
      auto r = nw_align(a, b, scheme);
      REQUIRE(r.score == doctest::Approx(brute_force_alignment_score(a, b, scheme)).epsilon(1e-12));
    }
  }
}

TEST_CASE("reported alignment is well formed and scores its own value") {
  std::mt19937_64 rng(4);
  const ScoringScheme schemes[] = {ScoringScheme::blosum62(), ScoringScheme::blosum62(1.0, 0.5)};
  for (int i = 0; i < 200; ++i) {
    auto a = random_protein(rng, 1 + rng() % 40), b = random_protein(rng, 1 + rng() % 40);
    const auto& s = schemes[i % 2];
    auto r = nw_align(a, b, s);
    check_well_formed(r, a, b);
    CHECK(testing::score_alignment(r.aligned_a, r.aligned_b, s) == doctest::Approx(r.score));
    CHECK(alignment_score(r.aligned_a, r.aligned_b, s) == doctest::Approx(r.score));
    CHECK(r.identity_pct == doctest::Approx(identity_pct(r.aligned_a, r.aligned_b)));
  }
}

TEST_CASE("optimal score bounds random alignments") {
  std::mt19937_64 rng(8);
  auto s = ScoringScheme::blosum62(3.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    auto a = random_protein(rng, 1 + rng() % 30), b = random_protein(rng, 1 + rng() % 30);
    const double best = nw_align(a, b, s).score;
    for (int k = 0; k < 20; ++k) {
      auto [x, y] = random_alignment(rng, a, b);
      CHECK(best >= testing::score_alignment(x, y, s) - 1e-12);
    }
  }
}

TEST_CASE("symmetry and self-identity") {
  std::mt19937_64 rng(12);
  auto s = ScoringScheme::blosum62();
  for (int i = 0; i < 100; ++i) {
    auto a = random_protein(rng, 1 + rng() % 100), b = random_protein(rng, 1 + rng() % 100);
    CHECK(nw_align(a, b, s).score == nw_align(b, a, s).score);
    CHECK(nw_align(a, a, s).identity_pct == 100.0);
  }
}

TEST_CASE("histogram bins") {
  CHECK(histogram_bin(0.0) == 0);
  CHECK(histogram_bin(0.99) == 0);
  CHECK(histogram_bin(25.0) == 25);
  CHECK(histogram_bin(99.5) == 99);
  CHECK(histogram_bin(100.0) == 99);
}

TEST_CASE("identical singletons across sets") {
  std::vector<seqio::ProteinSequence> a{{"x", "MKVLA", std::nullopt}}, b{{"y", "MKVLA", std::nullopt}};
  auto r = pairwise_audit(a, &b, ScoringScheme::blosum62());
  CHECK(r.pair_count == 1);
  CHECK(r.mean_identity_pct == 100.0);
  CHECK(r.fraction_above_threshold == 1.0);
  REQUIRE(r.duplicate_pairs.size() == 1);
  CHECK(r.duplicate_pairs[0] == std::pair<std::string, std::string>{"x", "y"});
  CHECK(r.identity_histogram[99] == 1);
}

TEST_CASE("singleton self-audit is empty") {
  std::vector<seqio::ProteinSequence> a{{"x", "MKVLA", std::nullopt}};
  auto r = pairwise_audit(a, nullptr, ScoringScheme::blosum62());
  CHECK(r.pair_count == 0);
  CHECK(r.empty());
}

TEST_CASE("audit statistics match per-pair alignments") {
  std::mt19937_64 rng(30);
  auto a = random_set(rng, 15, 5, 40, "a");
  auto s = ScoringScheme::blosum62();
  auto r = pairwise_audit(a, nullptr, s);
  CHECK(r.pair_count == 15 * 14 / 2);
  double sum = 0.0;
  std::size_t above = 0, mass = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double id = nw_align(a[i].residues, a[j].residues, s).identity_pct;
      sum += id;
      above += id > 25.0;
    }
  for (auto c : r.identity_histogram) mass += c;
  CHECK(mass == r.pair_count);
  CHECK(r.mean_identity_pct == doctest::Approx(sum / static_cast<double>(r.pair_count)).epsilon(1e-12));
  CHECK(r.fraction_above_threshold == doctest::Approx(static_cast<double>(above) / static_cast<double>(r.pair_count)));
  CHECK(r.fraction_above_threshold >= 0.0);
  CHECK(r.fraction_above_threshold <= 1.0);
}

TEST_CASE("worker count does not change the report") {
  std::mt19937_64 rng(31);
  auto a = random_set(rng, 50, 5, 30, "a");
  auto b = random_set(rng, 40, 5, 30, "b");
  auto s = ScoringScheme::blosum62();
  auto one = pairwise_audit(a, &b, s, {25.0, 1});
  CHECK(one == pairwise_audit(a, &b, s, {25.0, 4}));
  CHECK(one == pairwise_audit(a, &b, s, {25.0, 7}));
  auto self = pairwise_audit(a, nullptr, s, {25.0, 1});
  CHECK(self == pairwise_audit(a, nullptr, s, {25.0, 3}));
}

TEST_CASE("audit mean is invariant to input order") {
  std::mt19937_64 rng(32);
  auto a = random_set(rng, 30, 5, 30, "a");
  auto s = ScoringScheme::blosum62();
  auto base = pairwise_audit(a, nullptr, s);
  for (int i = 0; i < 3; ++i) {
    std::shuffle(a.begin(), a.end(), rng);
    auto r = pairwise_audit(a, nullptr, s);
    CHECK(r.mean_identity_pct == doctest::Approx(base.mean_identity_pct).epsilon(1e-12));
    CHECK(r.identity_histogram == base.identity_histogram);
  }
}

TEST_CASE("emit and read back") {
  testing::TempDir dir;
  std::mt19937_64 rng(33);
  auto a = random_set(rng, 10, 5, 20, "a");
  a.push_back({"dup", a[0].residues, std::nullopt});
  auto r = pairwise_audit(a, nullptr, ScoringScheme::blosum62());
  emit_audit(r, dir / "audit.json");
  auto back = read_audit(dir / "audit.json");
  CHECK(back == r);
  std::size_t mass = 0;
  for (auto c : back.identity_histogram) mass += c;
  CHECK(mass == back.pair_count);

  const auto csv = testing::slurp(histogram_path(dir / "audit.json"));
  CHECK(csv.rfind("bin_low,bin_high,count\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);

  AuditReport empty;
  emit_audit(empty, dir / "empty.json");
  CHECK(read_audit(dir / "empty.json").pair_count == 0);
  CHECK(testing::slurp(dir / "empty.json").find("\"pair_count\": 0") != std::string::npos);
}

}  // TEST_SUITE
