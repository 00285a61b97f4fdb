#include "rescap/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "rescap/error.hpp"

namespace rescap::harness {

using ad::Tensor;
using nlohmann::ordered_json;

namespace {

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_both_classes(const Dataset& data) {
  bool pos = false, neg = false;
  for (const auto& s : data) (s.label == 1 ? pos : neg) = true;
  if (!pos || !neg) throw Error(ErrorCode::SingleClass, "training data must contain both classes");
}

}  // namespace

ClassMetrics metrics_from_counts(const ConfusionCounts& c) {
  ClassMetrics m;
  bool unused = false;
  m.acc = ratio(c.tp + c.tn, c.total(), unused);
  m.sen = ratio(c.tp, c.tp + c.fn, m.sen_undefined);
  m.spe = ratio(c.tn, c.tn + c.fp, m.spe_undefined);
  m.pre = ratio(c.tp, c.tp + c.fp, m.pre_undefined);
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  m.mcc_undefined = den == 0.0;
  m.mcc = m.mcc_undefined ? 0.0 : (tp * tn - fp * fn) / den;
  return m;
}

RocResult roc_auc(std::span<const ScoredSample> samples) {
  std::size_t P = 0, N = 0;
  for (const auto& s : samples) (s.label == 1 ? P : N)++;
  if (P == 0 || N == 0) throw Error(ErrorCode::SingleClass, "ROC/AUC needs both classes");

  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });

  RocResult r;
  r.points.push_back({0.0, 0.0});
  // Walking thresholds from high to low: each tie group adds its positives and negatives.
  // A positive in the group beats every negative still below it and ties the group's negatives.
  double wins = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i, gp = 0, gn = 0;
    for (; j < sorted.size() && sorted[j].score == sorted[i].score; ++j) (sorted[j].label == 1 ? gp : gn)++;
    const std::size_t negatives_below = N - fp - gn;
    wins += static_cast<double>(gp) * (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(gn));
    tp += gp;
    fp += gn;
    r.points.push_back({static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P)});
    i = j;
  }
  r.auc = wins / (static_cast<double>(P) * static_cast<double>(N));
  return r;
}

ConfusionCounts confusion_at(std::span<const ScoredSample> samples, double threshold) {
  ConfusionCounts c;
  for (const auto& s : samples) {
    const bool predicted = s.score >= threshold;
    if (s.label == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

MetricsReport report_from_scores(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no samples to evaluate");
  MetricsReport report;
  report.threshold = threshold;
  report.confusion = confusion_at(samples, threshold);
  report.metrics = metrics_from_counts(report.confusion);
  try {
    auto roc = roc_auc(samples);
    report.auc = roc.auc;
    report.roc_points = std::move(roc.points);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingleClass) throw;
  }
  return report;
}

namespace {

ordered_json report_json(const MetricsReport& r) {
  ordered_json j;
  j["acc"] = r.metrics.acc;
  j["sen"] = r.metrics.sen;
  j["spe"] = r.metrics.spe;
  j["pre"] = r.metrics.pre;
  j["mcc"] = r.metrics.mcc;
  j["auc"] = r.auc ? ordered_json(*r.auc) : ordered_json(nullptr);
  j["threshold"] = r.threshold;
  j["confusion"] = {{"tp", r.confusion.tp}, {"tn", r.confusion.tn}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}};
  auto roc = ordered_json::array();
  for (const auto& p : r.roc_points) roc.push_back({p.fpr, p.tpr});
  j["roc"] = roc;
  auto flags = ordered_json::array();
  if (r.metrics.sen_undefined) flags.push_back("sen_undefined");
  if (r.metrics.spe_undefined) flags.push_back("spe_undefined");
  if (r.metrics.pre_undefined) flags.push_back("pre_undefined");
  if (r.metrics.mcc_undefined) flags.push_back("mcc_undefined");
  j["flags"] = flags;
  return j;
}

ordered_json summary_json(const MetricSummary& s) {
  return {{"acc", s.acc}, {"sen", s.sen}, {"spe", s.spe}, {"pre", s.pre}, {"mcc", s.mcc}, {"auc", s.auc}};
}

}  // namespace

std::string report_to_json(const MetricsReport& report) { return report_json(report).dump(2) + "\n"; }

MetricsReport report_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.metrics.acc = j.at("acc").get<double>();
    r.metrics.sen = j.at("sen").get<double>();
    r.metrics.spe = j.at("spe").get<double>();
    r.metrics.pre = j.at("pre").get<double>();
    r.metrics.mcc = j.at("mcc").get<double>();
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    r.threshold = j.at("threshold").get<double>();
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<std::size_t>(), c.at("tn").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                   c.at("fn").get<std::size_t>()};
    for (const auto& p : j.at("roc")) r.roc_points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    for (const auto& f : j.value("flags", nlohmann::json::array())) {
      auto name = f.get<std::string>();
      if (name == "sen_undefined") r.metrics.sen_undefined = true;
      if (name == "spe_undefined") r.metrics.spe_undefined = true;
      if (name == "pre_undefined") r.metrics.pre_undefined = true;
      if (name == "mcc_undefined") r.metrics.mcc_undefined = true;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad metrics report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Folds

FoldPlan stratified_kfold(const std::vector<std::pair<std::string, int>>& labelled_ids, std::size_t k,
                          std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be >= 2");
  std::vector<std::string> classes[2];
  for (const auto& [id, label] : labelled_ids) classes[label == 1 ? 1 : 0].push_back(id);
  for (const auto& c : classes)
    if (c.size() < k)
      throw Error(ErrorCode::TooFewSamples, "a class has " + std::to_string(c.size()) + " samples, need " + std::to_string(k));

  FoldPlan plan;
  plan.seed = seed;
  plan.k = k;
  plan.folds.resize(k);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (int cls : {1, 0}) {
    auto ids = classes[cls];
    std::shuffle(ids.begin(), ids.end(), rng);
    for (auto& id : ids) {
      const std::size_t f = next++ % k;
      if (!plan.fold_of.emplace(id, f).second) throw Error(ErrorCode::DuplicateId, "id '" + id + "' listed twice");
      plan.folds[f].push_back(std::move(id));
    }
  }
  return plan;
}

FoldPlan stratified_kfold(const seqio::DatasetManifest& manifest, std::size_t k, std::uint64_t seed) {
  std::vector<std::pair<std::string, int>> items;
  for (const auto* e : manifest.entries_for(seqio::Split::Train)) items.emplace_back(e->id, e->label);
  return stratified_kfold(items, k, seed);
}

// ---------------------------------------------------------------------------
// Training

namespace {

Tensor batch_input(const model::ModelConfig& config, const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<const featurize::FeatureMatrix*> feats;
  feats.reserve(idx.size());
  for (auto i : idx) feats.push_back(&data[i].features);
  return model::assemble_batch(config, feats);
}

Tensor batch_target(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<double> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(static_cast<double>(data[i].label));
  return Tensor::from({idx.size(), 1}, std::move(y));
}

double dataset_loss(model::ModelParams& params, const Dataset& data, std::size_t batch_size, double* accuracy) {
  auto probs = predict(params, data, batch_size);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double p = std::clamp(probs[i], ad::kBceEps, 1.0 - ad::kBceEps);
    const double y = data[i].label;
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if ((probs[i] >= kDefaultThreshold) == (data[i].label == 1)) ++correct;
  }
  if (accuracy) *accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return loss / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(const model::ModelConfig& config, const Dataset& data, const Dataset* validation,
                  const TrainHyper& hyper) {
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "no training data");
  require_both_classes(data);
  if (hyper.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  if (validation && validation->empty()) validation = nullptr;

  TrainResult result{model::build(config), {}, 0};
  auto params = result.params.trainable();
  ad::Adam adam({hyper.lr, 0.9, 0.999, 1e-7});
  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  double best_val = std::numeric_limits<double>::infinity();
  std::optional<model::ModelParams> best;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      std::span<const std::size_t> idx(order.data() + start, std::min(hyper.batch_size, order.size() - start));
      for (auto& p : params) p.zero_grad();
      Tensor loss;
      try {
        auto prob = model::forward(result.params, batch_input(config, data, idx), ad::Mode::Train);
        loss = ad::bce_loss(prob, batch_target(data, idx));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteValueInGraph) throw;
        throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", batch at " + std::to_string(start) +
                                                  ": " + e.what());
      }
      if (!std::isfinite(loss.item()))
        throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": loss is not finite");
      loss.backward();
      ad::clip_grad_norm(params, hyper.clip_norm);
      adam.step(params);
      loss_sum += loss.item() * static_cast<double>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(data.size());
    if (validation) {
      double acc = 0.0;
      rec.val_loss = dataset_loss(result.params, *validation, hyper.batch_size, &acc);
      rec.val_acc = acc;
    }
    result.history.push_back(rec);

    if (validation) {
      if (*rec.val_loss < best_val) {
        best_val = *rec.val_loss;
        best = result.params.clone();
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= hyper.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (best) result.params = std::move(*best);
  return result;
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_loss << ',';
    if (r.val_loss) out << *r.val_loss;
    out << ',';
    if (r.val_acc) out << *r.val_acc;
    out << '\n';
  }
  return out.str();
}

std::vector<double> predict(model::ModelParams& params, const Dataset& data, std::size_t batch_size) {
  ad::NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::span<const std::size_t> chunk(idx.data() + start, std::min(batch_size, data.size() - start));
    auto prob = model::forward(params, batch_input(params.config, data, chunk), ad::Mode::Infer);
    for (double p : prob.values()) out.push_back(p);
  }
  return out;
}

MetricsReport evaluate(model::ModelParams& params, const Dataset& data, double threshold) {
  auto probs = predict(params, data);
  std::vector<ScoredSample> scored(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) scored[i] = {probs[i], data[i].label};
  return report_from_scores(scored, threshold);
}

// ---------------------------------------------------------------------------
// Cross-validation

MetricSummary summary_mean(const std::vector<MetricsReport>& folds) {
  MetricSummary s;
  if (folds.empty()) return s;
  for (const auto& f : folds) {
    s.acc += f.metrics.acc;
    s.sen += f.metrics.sen;
    s.spe += f.metrics.spe;
    s.pre += f.metrics.pre;
    s.mcc += f.metrics.mcc;
    s.auc += f.auc.value_or(0.0);
  }
  const double n = static_cast<double>(folds.size());
  return {s.acc / n, s.sen / n, s.spe / n, s.pre / n, s.mcc / n, s.auc / n};
}

MetricSummary summary_std(const std::vector<MetricsReport>& folds) {
  MetricSummary s;
  if (folds.size() < 2) return s;
  auto m = summary_mean(folds);
  for (const auto& f : folds) {
    auto sq = [](double x) { return x * x; };
    s.acc += sq(f.metrics.acc - m.acc);
    s.sen += sq(f.metrics.sen - m.sen);
    s.spe += sq(f.metrics.spe - m.spe);
    s.pre += sq(f.metrics.pre - m.pre);
    s.mcc += sq(f.metrics.mcc - m.mcc);
    s.auc += sq(f.auc.value_or(0.0) - m.auc);
  }
  const double d = static_cast<double>(folds.size() - 1);
  return {std::sqrt(s.acc / d), std::sqrt(s.sen / d), std::sqrt(s.spe / d),
          std::sqrt(s.pre / d), std::sqrt(s.mcc / d), std::sqrt(s.auc / d)};
}

CvResult cross_validate(const model::ModelConfig& config, const Dataset& data, const TrainHyper& hyper,
                        const CvOptions& opts) {
  std::vector<std::pair<std::string, int>> items;
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < data.size(); ++i) {
    items.emplace_back(data[i].id, data[i].label);
    position[data[i].id] = i;
  }
  CvResult result;
  result.plan = stratified_kfold(items, opts.k, opts.seed);
  result.folds.resize(opts.k);

  auto run_fold = [&](std::size_t f) {
    Dataset train_set, held_out;
    for (std::size_t i = 0; i < data.size(); ++i)
      (result.plan.fold_of.at(data[i].id) == f ? held_out : train_set).push_back(data[i]);
    auto cfg = config;
    cfg.seed = config.seed + f;
    auto h = hyper;
    h.seed = hyper.seed + f;
    auto trained = train(cfg, train_set, &held_out, h);
    return evaluate(trained.params, held_out);
  };

  const unsigned jobs = std::max(1u, opts.jobs);
  for (std::size_t start = 0; start < opts.k; start += jobs) {
    std::vector<std::future<MetricsReport>> running;
    for (std::size_t f = start; f < std::min(opts.k, start + jobs); ++f)
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_fold, f));
    for (std::size_t i = 0; i < running.size(); ++i) result.folds[start + i] = running[i].get();
  }
  result.mean = summary_mean(result.folds);
  result.std = summary_std(result.folds);
  return result;
}

CvResult cross_validate(const model::ModelConfig& config, const seqio::DatasetManifest& manifest,
                        const featurize::FeatureSources& sources, const TrainHyper& hyper, const CvOptions& opts) {
  auto data = featurize::batch_features(manifest, seqio::Split::Train, config.input_kind, sources);
  return cross_validate(config, data, hyper, opts);
}

std::string cv_to_json(const CvResult& result) {
  ordered_json j;
  j["k"] = result.plan.k;
  j["seed"] = result.plan.seed;
  auto folds = ordered_json::array();
  for (std::size_t f = 0; f < result.folds.size(); ++f) {
    auto fj = report_json(result.folds[f]);
    fj["fold"] = f;
    fj["size"] = result.plan.folds[f].size();
    folds.push_back(fj);
  }
  j["per_fold"] = folds;
  j["mean"] = summary_json(result.mean);
  j["std"] = summary_json(result.std);
  return j.dump(2) + "\n";
}

}  // namespace rescap::harness
