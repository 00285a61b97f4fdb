#include <random>

#include "doctest.h"
#include "support.hpp"
#include "rescap/error.hpp"
#include "rescap/seqio.hpp"

using namespace rescap;
using namespace rescap::seqio;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("seqio") {

TEST_CASE("two records") {
  auto recs = parse_fasta_text(">s1\nACD\n>s2\nWY");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].id == "s1");
  CHECK(recs[0].residues == "ACD");
  CHECK(recs[1].id == "s2");
  CHECK(recs[1].residues == "WY");
}

TEST_CASE("folded lines are joined") {
  auto recs = parse_fasta_text(">s1\nAC\nDE");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].residues == "ACDE");
}

TEST_CASE("lowercase and CRLF input") {
  auto recs = parse_fasta_text(">s1 some description\r\nacd\r\n");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == "s1");
  CHECK(recs[0].residues == "ACD");
}

TEST_CASE("non-canonical residue") {
  try {
    parse_fasta_text(">s1\nACB");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IllegalResidue);
    const std::string msg = e.what();
    CHECK(msg.find("'B'") != std::string::npos);
    CHECK(msg.find("position 2") != std::string::npos);
  }
}

TEST_CASE("map_unknown maps to X") {
  auto recs = parse_fasta_text(">s1\nACBZUOJX", {true});
  CHECK(recs[0].residues == "ACXXXXXX");
  CHECK(residue_index('X') == -1);
}

TEST_CASE("malformed input") {
  CHECK(code_of([] { parse_fasta_text("ACD\n>s1\nAC"); }) == ErrorCode::MalformedFasta);
  CHECK(code_of([] { parse_fasta_text(">s1\n>s2\nAC"); }) == ErrorCode::MalformedFasta);
  CHECK(code_of([] { parse_fasta_text(">s1\nAC\n>s1\nDE"); }) == ErrorCode::DuplicateId);
  CHECK(code_of([] { parse_fasta_text(">s1\nA1C"); }) == ErrorCode::IllegalResidue);
}

TEST_CASE("alphabet order gives one-hot columns") {
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) CHECK(residue_index(kAlphabet[i]) == static_cast<int>(i));
  CHECK(residue_index('A') == 0);
  CHECK(residue_index('C') == 1);
  CHECK(residue_index('D') == 2);
}

TEST_CASE("write then parse is the identity") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ProteinSequence> recs;
    const std::size_t n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i)
      recs.push_back({"r" + std::to_string(trial) + "_" + std::to_string(i), testing::random_protein(rng, 1 + rng() % 200),
                      std::nullopt});
    CHECK(parse_fasta_text(format_fasta(recs, 1 + rng() % 80)) == recs);
  }
}

TEST_CASE("write_fasta and parse_fasta on disk") {
  testing::TempDir dir;
  std::vector<ProteinSequence> recs{{"a", "ACDEFGHIKLMNPQRSTVWY", std::nullopt}, {"b", "W", std::nullopt}};
  write_fasta(recs, dir / "x.fasta");
  CHECK(parse_fasta(dir / "x.fasta") == recs);
  CHECK(code_of([&] { parse_fasta(dir / "missing.fasta"); }) == ErrorCode::IoError);
}

TEST_CASE("manifest counts and splits") {
  auto fasta = parse_fasta_text(">a\nAC\n>b\nDE\n>c\nFG\n>d\nHI\n");
  auto m = parse_manifest_text("id\tlabel\tsplit\na\t1\ttrain\nb\t0\ttrain\nc\t1\ttrain\nd\t0\ttest\n", fasta);
  CHECK(m.counts(Split::Train) == ClassCounts{2, 1});
  CHECK(m.counts(Split::Test) == ClassCounts{0, 1});
  CHECK(m.sequences.at("a").label == 1);
  CHECK(m.entries_for(Split::Test).size() == 1);

  auto train = m.restricted_to(Split::Train);
  CHECK(train.entries.size() == 3);
  CHECK(train.sequences.count("d") == 0);
}

TEST_CASE("manifest counts do not depend on row order") {
  auto fasta = parse_fasta_text(">a\nAC\n>b\nDE\n>c\nFG\n>d\nHI\n>e\nKL\n");
  std::vector<std::string> rows{"a\t1\ttrain", "b\t0\ttrain", "c\t1\ttest", "d\t0\ttest", "e\t1\ttrain"};
  auto reference = parse_manifest_text("id\tlabel\tsplit\n" + [&] {
    std::string s;
    for (auto& r : rows) s += r + "\n";
    return s;
  }(), fasta);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(rows.begin(), rows.end(), rng);
    std::string text = "id\tlabel\tsplit\n";
    for (auto& r : rows) text += r + "\n";
    auto m = parse_manifest_text(text, fasta);
    CHECK(m.counts(Split::Train) == reference.counts(Split::Train));
    CHECK(m.counts(Split::Test) == reference.counts(Split::Test));
  }
}

TEST_CASE("manifest errors") {
  auto fasta = parse_fasta_text(">a\nAC\n");
  CHECK(code_of([&] { parse_manifest_text("id\tlabel\tsplit\nzz\t1\ttrain\n", fasta); }) == ErrorCode::UnresolvedId);
  CHECK(code_of([&] { parse_manifest_text("id\tlabel\tsplit\na\t2\ttrain\n", fasta); }) == ErrorCode::BadLabel);
  CHECK(code_of([&] { parse_manifest_text("id\tlabel\tsplit\na\t1\tdev\n", fasta); }) == ErrorCode::BadSplit);
}

TEST_CASE("exact duplicates") {
  std::vector<ProteinSequence> a{{"x", "ACD", std::nullopt}}, b{{"y", "ACD", std::nullopt}},
      c{{"z", "WWW", std::nullopt}};
  CHECK(find_exact_duplicates(a, c).empty());
  auto pairs = find_exact_duplicates(a, b);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == std::pair<std::string, std::string>{"x", "y"});

  std::vector<ProteinSequence> self{{"p", "AC", std::nullopt}, {"q", "AC", std::nullopt}, {"r", "AC", std::nullopt},
                                    {"s", "DE", std::nullopt}};
  CHECK(find_exact_duplicates(self).size() == 3);
}

TEST_CASE("duplicate finder agrees with pairwise comparison") {
  std::mt19937_64 rng(3);
  std::vector<ProteinSequence> a, b;
  for (int i = 0; i < 60; ++i) a.push_back({"a" + std::to_string(i), testing::random_protein(rng, 2, "AC"), std::nullopt});
  for (int i = 0; i < 40; ++i) b.push_back({"b" + std::to_string(i), testing::random_protein(rng, 2, "AC"), std::nullopt});
  std::size_t expected = 0;
  for (auto& x : a)
    for (auto& y : b) expected += x.residues == y.residues;
  CHECK(find_exact_duplicates(a, b).size() == expected);
}

}  // TEST_SUITE
