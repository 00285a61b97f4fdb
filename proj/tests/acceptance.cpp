// Acceptance runner: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "gradient_cases.hpp"
#include "support.hpp"
#include "rescap/cli.hpp"
#include "rescap/harness.hpp"
#include "rescap/model.hpp"
#include "rescap/redundancy.hpp"
#include "rescap/seqio.hpp"

using namespace rescap;
using ad::Tensor;

namespace {

struct Verdict {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

Verdict pass_if(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double wall_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

// 1 ------------------------------------------------------------------------

Verdict gradient_suite() {
  constexpr int kInstances = 50;
  constexpr double kTol = 1e-4;
  const double start = cpu_seconds();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_name, failures;
  auto record = [&](const std::string& name, double err) {
    if (!(err < kTol) && failures.find(name) == std::string::npos) failures += " " + name;
    if (!(err <= worst)) worst = err, worst_name = name;
  };
  const auto cases = testing::op_gradient_cases();
  for (const auto& c : cases)
    for (int i = 0; i < kInstances; ++i) record(c.name, c.run(rng));
  for (int i = 0; i < kInstances; ++i) record("full forward", testing::model_gradient_error(model::Variant::Full, rng));
  const double elapsed = cpu_seconds() - start;
  const bool ok = failures.empty() && elapsed < 120.0;
  std::string detail = std::to_string(cases.size()) + " ops + full forward x " + std::to_string(kInstances) +
                       ", max rel err " + num(worst) + " (" + worst_name + "), " + num(elapsed, 3) + " s CPU";
  if (!failures.empty()) detail += ", over tolerance:" + failures;
  return pass_if(ok, detail);
}

// 2 ------------------------------------------------------------------------

void squash_inplace(double* v, std::size_t d) {
  double n2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) n2 += v[k] * v[k];
  if (n2 == 0.0) return;
  const double f = std::sqrt(n2) / (1.0 + n2);
  for (std::size_t k = 0; k < d; ++k) v[k] *= f;
}

Verdict capsule_invariants() {
  std::mt19937_64 rng(202);
  double worst_sum = 0.0, max_norm = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng() % 2, N = 1 + rng() % 8, J = 1 + rng() % 4, d = 1 + rng() % 6;
    auto u_hat = testing::random_tensor(rng, {B, N, J, d}, false, 3.0);
    model::RoutingTrace trace;
    model::dynamic_routing(u_hat, 1 + rng() % 4, &trace);
    for (const auto& c : trace.coupling)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < N; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < J; ++j) s += c.at({b, i, j});
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
    for (const auto& v : trace.outputs)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < J; ++j) {
          double n2 = 0.0;
          for (std::size_t k = 0; k < d; ++k) n2 += v.at({b, j, k}) * v.at({b, j, k});
          max_norm = std::max(max_norm, std::sqrt(n2));
        }
  }

  bool single_exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    auto u_hat = testing::random_tensor(rng, {1, 1, 1, 5}, false);
    auto v = model::dynamic_routing(u_hat, 2);
    auto expected = ad::squash(ad::reshape(u_hat, {1, 1, 5}));
    single_exact &= std::equal(v.values().begin(), v.values().end(), expected.values().begin());
  }

  // Hand trace: two input capsules, two output capsules, two iterations.
  const double u[2][2] = {{1.0, 0.0}, {0.0, 2.0}};
  const double W[2][2][2][2] = {{{{1.0, 0.5}, {0.0, 1.0}}, {{-1.0, 0.0}, {0.3, 0.2}}},
                                {{{0.2, 0.1}, {0.4, -0.3}}, {{0.5, 0.5}, {-0.5, 1.0}}}};
  double uh[2][2][2], v1[2][2], b[2][2], c2[2][2], v2[2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int r = 0; r < 2; ++r) uh[i][j][r] = W[i][j][r][0] * u[i][0] + W[i][j][r][1] * u[i][1];
  for (int j = 0; j < 2; ++j) {
    for (int r = 0; r < 2; ++r) v1[j][r] = 0.5 * uh[0][j][r] + 0.5 * uh[1][j][r];
    squash_inplace(v1[j], 2);
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) b[i][j] = uh[i][j][0] * v1[j][0] + uh[i][j][1] * v1[j][1];
  for (int i = 0; i < 2; ++i) {
    const double e0 = std::exp(b[i][0]), e1 = std::exp(b[i][1]);
    c2[i][0] = e0 / (e0 + e1);
    c2[i][1] = e1 / (e0 + e1);
  }
  for (int j = 0; j < 2; ++j) {
    for (int r = 0; r < 2; ++r) v2[j][r] = c2[0][j] * uh[0][j][r] + c2[1][j] * uh[1][j][r];
    squash_inplace(v2[j], 2);
  }
  std::vector<double> wv;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int r = 0; r < 2; ++r)
        for (int k = 0; k < 2; ++k) wv.push_back(W[i][j][r][k]);
  auto u_hat = ad::capsule_predict(Tensor::from({1, 2, 2}, {1.0, 0.0, 0.0, 2.0}), Tensor::from({2, 2, 2, 2}, wv));
  model::RoutingTrace trace;
  auto v = model::dynamic_routing(u_hat, 2, &trace);
  double trace_err = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      trace_err = std::max(trace_err, std::abs(trace.coupling[0].at({0, i, j}) - 0.5));
      trace_err = std::max(trace_err, std::abs(trace.coupling[1].at({0, i, j}) - c2[i][j]));
      trace_err = std::max(trace_err, std::abs(v.at({0, i, j}) - v2[i][j]));
    }

  const bool ok = worst_sum <= 1e-12 && max_norm < 1.0 && single_exact && trace_err <= 1e-12;
  return pass_if(ok, "coupling sum err " + num(worst_sum) + ", max norm " + num(max_norm, 6) + ", 1x1 exact " +
                         (single_exact ? "yes" : "no") + ", hand trace err " + num(trace_err));
}

// 3 ------------------------------------------------------------------------

Verdict metric_oracles() {
  using namespace harness;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto scored = [&](std::size_t n, bool ties) {
    std::vector<ScoredSample> s(n);
    for (auto& x : s) {
      x.label = static_cast<int>(rng() % 2);
      x.score = ties ? std::round(u(rng) * 5.0) / 5.0 : u(rng);
    }
    s[0].label = 1;
    s[1].label = 0;
    return s;
  };

  std::size_t metric_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto s = scored(2 + rng() % 60, trial % 2 == 0);
    const double thr = u(rng);
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (const auto& x : s) {
      const bool pos = x.score >= thr;
      if (x.label == 1) (pos ? tp : fn) += 1;
      else (pos ? fp : tn) += 1;
    }
    const auto m = report_from_scores(s, thr).metrics;
    const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    const bool same = m.acc == (tp + tn) / (tp + tn + fp + fn) && m.sen == (tp + fn > 0 ? tp / (tp + fn) : 0.0) &&
                      m.spe == (tn + fp > 0 ? tn / (tn + fp) : 0.0) && m.pre == (tp + fp > 0 ? tp / (tp + fp) : 0.0) &&
                      m.mcc == (den > 0 ? (tp * tn - fp * fn) / den : 0.0);
    metric_mismatch += !same;
  }

  double auc_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto s = scored(2 + rng() % 80, trial % 2 == 1);
    std::vector<double> pos, neg;
    for (const auto& x : s) (x.label == 1 ? pos : neg).push_back(x.score);
    auc_err = std::max(auc_err, std::abs(roc_auc(s).auc - testing::brute_force_auc(pos, neg)));
  }

  const double expected = (90.0 * 80 - 20.0 * 10) / std::sqrt(110.0 * 100 * 100 * 90);
  const double mcc = metrics_from_counts({90, 80, 20, 10}).mcc;
  const bool worked = std::abs(mcc - expected) <= 1e-12 && std::abs(mcc - 0.70353) <= 5e-6;

  return pass_if(metric_mismatch == 0 && auc_err <= 1e-9 && worked,
                 "metric mismatches " + std::to_string(metric_mismatch) + "/1000, max AUC err " + num(auc_err) +
                     "/200 sets, worked mcc " + num(mcc, 7));
}

// 4 ------------------------------------------------------------------------

Verdict alignment_oracle() {
  using namespace redundancy;
  const ScoringScheme schemes[] = {ScoringScheme::blosum62(10.0, 0.5), ScoringScheme::blosum62(2.0, 1.0),
                                   ScoringScheme::blosum62(1.0, 0.0)};
  std::size_t pairs = 0, mismatches = 0;
  auto check = [&](const std::string& a, const std::string& b) {
    for (const auto& s : schemes) {
      ++pairs;
      if (std::abs(nw_align(a, b, s).score - testing::brute_force_alignment_score(a, b, s)) > 1e-9) ++mismatches;
    }
  };
  const auto strings = testing::all_strings("ACDE", 3);
  for (const auto& a : strings)
    for (const auto& b : strings) check(a, b);
  std::mt19937_64 rng(404);
  for (int i = 0; i < 600; ++i)
    check(testing::random_protein(rng, 4 + rng() % 2, "ACDE"), testing::random_protein(rng, 4 + rng() % 2, "ACDE"));

  const auto s = ScoringScheme::blosum62();
  std::size_t self_bad = 0, sym_bad = 0;
  for (int i = 0; i < 100; ++i) {
    auto a = testing::random_protein(rng, 1 + rng() % 200);
    self_bad += nw_align(a, a, s).identity_pct != 100.0;
  }
  for (int i = 0; i < 100; ++i) {
    auto a = testing::random_protein(rng, 1 + rng() % 200), b = testing::random_protein(rng, 1 + rng() % 200);
    sym_bad += nw_align(a, b, s).score != nw_align(b, a, s).score;
  }
  return pass_if(mismatches == 0 && self_bad == 0 && sym_bad == 0,
                 std::to_string(pairs) + " scored pairs vs enumeration, " + std::to_string(mismatches) +
                     " mismatches; self-identity failures " + std::to_string(self_bad) +
                     "/100; asymmetric scores " + std::to_string(sym_bad) + "/100");
}

// 5 ------------------------------------------------------------------------

Verdict receptive_field() {
  auto params = model::build(model::ModelConfig::reference(model::Variant::Full));
  std::mt19937_64 rng(505);
  auto x = testing::random_tensor(rng, {1, 1, 512}, false);
  const std::vector<double> xv(x.values().begin(), x.values().end());
  auto base = model::encoder_features(params, x, ad::Mode::Infer);
  const std::size_t S = base.dim(1);
  auto perturbed = [&](std::size_t pos) {
    auto v = xv;
    v[pos] += 1.0;
    return model::encoder_features(params, Tensor::from({1, 1, 512}, v), ad::Mode::Infer);
  };
  auto changed_at = [&](std::size_t pos, std::size_t t) {
    auto out = perturbed(pos);
    for (std::size_t s = 0; s < S; ++s)
      if (out.at({0, s, t}) != base.at({0, s, t})) return true;
    return false;
  };

  bool causal = true;
  for (std::size_t t : {0u, 1u, 127u, 300u, 510u}) {
    auto out = perturbed(t + 1);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t u = 0; u <= t; ++u) causal &= out.at({0, s, u}) == base.at({0, s, u});
  }
  const std::size_t t = 300;
  const bool at_126 = changed_at(t - 126, t), at_127 = changed_at(t - 127, t), at_128 = changed_at(t - 128, t);
  const bool ok = causal && at_127 && !at_128;
  return pass_if(ok, std::string("t+1 leaves <=t identical: ") + (causal ? "yes" : "no") +
                         "; output at t changes for t-126: " + (at_126 ? "yes" : "no") + ", t-127: " +
                         (at_127 ? "yes" : "no") + ", t-128: " + (at_128 ? "yes" : "no") +
                         " (receptive field " + std::to_string(model::encoder_receptive_field(params.config)) + ")");
}

// 6 ------------------------------------------------------------------------

Verdict trainability() {
  auto data = testing::separable_set(200, 606);
  auto config = model::ModelConfig::reference(model::Variant::Full);
  config.seed = 6;
  harness::TrainHyper hyper;
  hyper.epochs = 50;
  const double c0 = cpu_seconds(), w0 = wall_seconds();
  auto result = harness::train(config, data, nullptr, hyper);
  const double cpu = cpu_seconds() - c0, wall = wall_seconds() - w0;
  const double acc = harness::evaluate(result.params, data).metrics.acc;

  auto shuffled = testing::shuffle_labels(testing::separable_set(500, 607), 608);
  auto small = testing::small_config(model::Variant::Full, 7);
  small.input_length = featurize::kEmbeddingDim;
  harness::TrainHyper cv_hyper;
  cv_hyper.epochs = 10;
  cv_hyper.batch_size = 32;
  cv_hyper.lr = 1e-2;
  const auto cv = harness::cross_validate(small, shuffled, cv_hyper, {5, 8, 5});

  const bool ok = acc >= 0.99 && cpu < 600.0 && cv.mean.auc >= 0.40 && cv.mean.auc <= 0.60;
  return pass_if(ok, "train acc " + num(acc) + " after " + std::to_string(result.history.size()) + " epochs, " +
                         num(cpu, 4) + " s CPU (" + num(wall, 4) + " s wall); shuffled-label CV mean AUC " +
                         num(cv.mean.auc));
}

// 7 ------------------------------------------------------------------------

Verdict parameter_budget() {
  std::string out;
  if (run_cli({"params"}, &out) != 0) return {Verdict::Fail, "params exited non-zero"};
  const auto pos = out.rfind("total\t");
  if (pos == std::string::npos) return {Verdict::Fail, "no total line"};
  const double total = std::stod(out.substr(pos + 6));
  const double rel = (total - 608806.0) / 608806.0;
  return pass_if(std::abs(rel) <= 0.10, "total " + num(total, 8) + " (" + num(100.0 * rel, 3) + "% vs 608806)");
}

// 8 ------------------------------------------------------------------------

Verdict cv_determinism() {
  testing::TempDir dir;
  auto train = testing::separable_set(60, 801);
  auto test = testing::separable_set(10, 802);
  for (auto& s : test) s.id = "t" + s.id;
  const auto files = testing::write_dataset(dir, train, test, 803);
  std::vector<std::string> args{"cv", "--manifest", files.manifest.string(), "--fasta", files.fasta.string(),
                                "--emb", files.global_emb.string(), "--seed", "11", "--epochs", "3",
                                "--residual-channels", "4", "--skip-channels", "4", "--caps-channels", "4"};
  std::string texts[2];
  for (int i = 0; i < 2; ++i) {
    auto a = args;
    const auto path = dir / ("cv" + std::to_string(i) + ".json");
    a.push_back("--out");
    a.push_back(path.string());
    if (run_cli(a) != 0) return {Verdict::Fail, "cv exited non-zero"};
    texts[i] = testing::slurp(path);
  }
  return pass_if(!texts[0].empty() && texts[0] == texts[1],
                 "two seeded cv runs, summary JSON " + std::to_string(texts[0].size()) + " bytes, " +
                     (texts[0] == texts[1] ? "byte-identical" : "different"));
}

// 9, 10 --------------------------------------------------------------------

std::optional<std::filesystem::path> data_dir() {
  const char* env = std::getenv("RESCAP_DATA_DIR");
  if (!env || !*env) return std::nullopt;
  return std::filesystem::path(env);
}

std::vector<seqio::ProteinSequence> load_set(const std::filesystem::path& dir, const std::string& name) {
  return seqio::parse_fasta(dir / (name + ".fasta"), {true});
}

Verdict official_counts() {
  const auto dir = data_dir();
  if (!dir) return {Verdict::Skip, "RESCAP_DATA_DIR not set"};
  struct Expect {
    const char* train;
    const char* test;
    std::size_t train_pos, train_neg, test_pos, test_neg;
  };
  const Expect expect[] = {{"PDB14189", "PDB2272", 7129, 7060, 1153, 1119}, {"PDB1075", "PDB186", 525, 550, 93, 93}};
  std::string detail;
  bool ok = true, any = false;
  for (const auto& e : expect) {
    const auto manifest_path = *dir / (std::string(e.train) + "_" + e.test + ".tsv");
    if (!std::filesystem::exists(manifest_path)) continue;
    any = true;
    auto fasta = load_set(*dir, e.train);
    auto test = load_set(*dir, e.test);
    fasta.insert(fasta.end(), test.begin(), test.end());
    const auto m = seqio::load_manifest(manifest_path, fasta);
    const auto tr = m.counts(seqio::Split::Train), te = m.counts(seqio::Split::Test);
    const bool match =
        tr.positive == e.train_pos && tr.negative == e.train_neg && te.positive == e.test_pos && te.negative == e.test_neg;
    ok &= match;
    detail += std::string(e.train) + " " + std::to_string(tr.positive) + "/" + std::to_string(tr.negative) + ", " +
              e.test + " " + std::to_string(te.positive) + "/" + std::to_string(te.negative) + "; ";
  }
  if (std::filesystem::exists(*dir / "PDB1075.fasta") && std::filesystem::exists(*dir / "PDB186.fasta")) {
    any = true;
    const auto dups = seqio::find_exact_duplicates(load_set(*dir, "PDB1075"), load_set(*dir, "PDB186")).size();
    ok &= dups == 42;
    detail += "PDB1075 x PDB186 identical " + std::to_string(dups);
  }
  if (!any) return {Verdict::Skip, "no official datasets in " + dir->string()};
  return pass_if(ok, detail);
}

Verdict official_audit() {
  const char* extended = std::getenv("RESCAP_EXTENDED");
  if (!extended || std::string(extended) != "1") return {Verdict::Skip, "extended run, set RESCAP_EXTENDED=1"};
  const auto dir = data_dir();
  if (!dir || !std::filesystem::exists(*dir / "PDB1075.fasta") || !std::filesystem::exists(*dir / "PDB186.fasta"))
    return {Verdict::Skip, "PDB1075/PDB186 FASTA not found under RESCAP_DATA_DIR"};
  const auto a = load_set(*dir, "PDB1075"), b = load_set(*dir, "PDB186");
  const auto scheme = redundancy::ScoringScheme::blosum62();
  const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  const auto self_a = redundancy::pairwise_audit(a, nullptr, scheme, {25.0, jobs});
  const auto self_b = redundancy::pairwise_audit(b, nullptr, scheme, {25.0, jobs});
  const auto cross = redundancy::pairwise_audit(a, &b, scheme, {25.0, jobs});
  const double frac = 100.0 * cross.fraction_above_threshold;
  const bool ok = std::abs(self_a.mean_identity_pct - 20.41) <= 1.0 && std::abs(self_b.mean_identity_pct - 21.09) <= 1.0 &&
                  std::abs(frac - 32.35) <= 1.0;
  return pass_if(ok, "PDB1075 mean " + num(self_a.mean_identity_pct) + "%, PDB186 mean " +
                         num(self_b.mean_identity_pct) + "%, cross above 25% " + num(frac) + "%");
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"gradient suite", gradient_suite},
      {"capsule invariants", capsule_invariants},
      {"metric oracles", metric_oracles},
      {"alignment oracle", alignment_oracle},
      {"receptive field and causality", receptive_field},
      {"trainability", trainability},
      {"parameter budget", parameter_budget},
      {"cv determinism", cv_determinism},
      {"official dataset counts", official_counts},
      {"official redundancy audit", official_audit},
  };
  int failed = 0;
  for (std::size_t i = 0; i < std::size(criteria); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.kind == Verdict::Pass ? "PASS" : v.kind == Verdict::Skip ? "SKIP" : "FAIL";
    failed += v.kind == Verdict::Fail;
    std::cout << tag << " " << (i + 1) << " " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
