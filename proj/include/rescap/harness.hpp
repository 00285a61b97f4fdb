#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rescap/featurize.hpp"
#include "rescap/model.hpp"
#include "rescap/seqio.hpp"

namespace rescap::harness {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// ACC, SEN, SPE, PRE and MCC. A zero denominator yields 0 and sets the matching flag.
struct ClassMetrics {
  double acc = 0, sen = 0, spe = 0, pre = 0, mcc = 0;
  bool sen_undefined = false, spe_undefined = false, pre_undefined = false, mcc_undefined = false;
};

ClassMetrics metrics_from_counts(const ConfusionCounts& c);

struct ScoredSample {
  double score = 0.0;
  int label = 0;
};

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;
};

/// Rank (Mann-Whitney) AUC with ties counted one half, plus the ROC curve swept over all
/// distinct score thresholds from (0,0) to (1,1). Throws SingleClass.
RocResult roc_auc(std::span<const ScoredSample> samples);

/// Confusion counts with "score >= threshold" predicted positive.
ConfusionCounts confusion_at(std::span<const ScoredSample> samples, double threshold);

inline constexpr double kDefaultThreshold = 0.5;

struct MetricsReport {
  ClassMetrics metrics;
  std::optional<double> auc;  // absent for single-class data
  std::vector<RocPoint> roc_points;
  ConfusionCounts confusion;
  double threshold = kDefaultThreshold;
};

MetricsReport report_from_scores(std::span<const ScoredSample> samples, double threshold = kDefaultThreshold);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

struct FoldPlan {
  std::uint64_t seed = 0;
  std::size_t k = 5;
  std::map<std::string, std::size_t> fold_of;
  /// Ids of each fold in assignment order.
  std::vector<std::vector<std::string>> folds;
};

/// Shuffles each class with the seed and deals it round-robin over k folds; the second class
/// continues where the first stopped. Throws TooFewSamples when a class has fewer than k members.
FoldPlan stratified_kfold(const std::vector<std::pair<std::string, int>>& labelled_ids, std::size_t k,
                          std::uint64_t seed);
/// Plans over the train split of a manifest only.
FoldPlan stratified_kfold(const seqio::DatasetManifest& manifest, std::size_t k, std::uint64_t seed);

struct TrainHyper {
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

struct TrainResult {
  model::ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

using Dataset = std::vector<featurize::LabeledFeature>;

/// Minibatch Adam on BCE. With validation data, stops after `patience` epochs without a
/// better validation loss and returns the best parameters seen.
TrainResult train(const model::ModelConfig& config, const Dataset& data, const Dataset* validation,
                  const TrainHyper& hyper);

std::string history_to_csv(const std::vector<EpochRecord>& history);

/// Positive-class probabilities in Infer mode, in data order.
std::vector<double> predict(model::ModelParams& params, const Dataset& data, std::size_t batch_size = 128);

MetricsReport evaluate(model::ModelParams& params, const Dataset& data, double threshold = kDefaultThreshold);

struct MetricSummary {
  double acc = 0, sen = 0, spe = 0, pre = 0, mcc = 0, auc = 0;
};

struct CvResult {
  FoldPlan plan;
  std::vector<MetricsReport> folds;
  MetricSummary mean;
  MetricSummary std;  // sample standard deviation across folds
};

struct CvOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  unsigned jobs = 1;  // folds trained concurrently
};

/// k-fold cross-validation over `data` (which must hold training rows only). Fold f builds its
/// model with seed config.seed + f and validates/early-stops on its held-out fold.
CvResult cross_validate(const model::ModelConfig& config, const Dataset& data, const TrainHyper& hyper,
                        const CvOptions& opts);

/// Featurizes the manifest's train split only and cross-validates it.
CvResult cross_validate(const model::ModelConfig& config, const seqio::DatasetManifest& manifest,
                        const featurize::FeatureSources& sources, const TrainHyper& hyper, const CvOptions& opts);

MetricSummary summary_mean(const std::vector<MetricsReport>& folds);
MetricSummary summary_std(const std::vector<MetricsReport>& folds);

std::string cv_to_json(const CvResult& result);

}  // namespace rescap::harness
