#include "rescap/cli.hpp"

#include <cstdlib>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "rescap/error.hpp"
#include "rescap/featurize.hpp"
#include "rescap/harness.hpp"
#include "rescap/io_util.hpp"
#include "rescap/model.hpp"
#include "rescap/redundancy.hpp"
#include "rescap/seqio.hpp"

namespace rescap::cli {

namespace {

using featurize::EmbeddingStore;
using featurize::FeatureKind;
using model::ModelConfig;
using model::Variant;

/// Failure while producing output, as opposed to bad input.
struct OutputFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const std::filesystem::path& path, std::string_view contents) {
  try {
    write_file_atomic(path, contents);
  } catch (const Error& e) {
    throw OutputFailure(e.what());
  }
}

std::string fmt(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::GraphCycle:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteValueInGraph:
    case ErrorCode::NonFiniteLoss:
      return kExitRuntime;
    default:
      return kExitInput;
  }
}

std::uint64_t default_seed() {
  const char* env = std::getenv("RESCAP_SEED");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const auto v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw Error(ErrorCode::InvalidArgument, std::string("RESCAP_SEED is not an integer: ") + env);
  return v;
}

struct ModelFlags {
  std::string variant = "full";
  std::string features;  // empty: the variant's reference input
  std::size_t max_len = featurize::kMaxLength;
  std::size_t residual_channels = 32;
  std::size_t skip_channels = 32;
  std::size_t blocks = 6;
  std::size_t kernel = 3;
  std::size_t caps_channels = 32;
  std::size_t caps_dim = 8;
  std::size_t caps_kernel = 9;
  std::size_t caps_stride = 8;
  std::size_t out_caps_dim = 16;
  std::size_t routing_iters = 2;
};

void add_model_flags(CLI::App* app, ModelFlags& f, bool with_features = true) {
  app->add_option("--variant", f.variant, "Model variant: full, baseline1 .. baseline5");
  if (with_features)
    app->add_option("--features", f.features, "Input features: onehot, global or local (default: the variant's)")
        ->check(CLI::IsMember({"onehot", "global", "local"}));
  app->add_option("--max-len", f.max_len, "Sequence length for one-hot and local inputs")->check(CLI::PositiveNumber);
  app->add_option("--residual-channels", f.residual_channels, "Encoder residual width")->check(CLI::PositiveNumber);
  app->add_option("--skip-channels", f.skip_channels, "Encoder skip width")->check(CLI::PositiveNumber);
  app->add_option("--blocks", f.blocks, "Residual blocks (dilations 1, 2, 4, ...)")->check(CLI::PositiveNumber);
  app->add_option("--kernel", f.kernel, "Encoder kernel size")->check(CLI::PositiveNumber);
  app->add_option("--caps-channels", f.caps_channels, "Primary capsule channels")->check(CLI::PositiveNumber);
  app->add_option("--caps-dim", f.caps_dim, "Primary capsule dimension")->check(CLI::PositiveNumber);
  app->add_option("--caps-kernel", f.caps_kernel, "Primary capsule kernel")->check(CLI::PositiveNumber);
  app->add_option("--caps-stride", f.caps_stride, "Primary capsule stride")->check(CLI::PositiveNumber);
  app->add_option("--out-caps-dim", f.out_caps_dim, "Output capsule dimension")->check(CLI::PositiveNumber);
  app->add_option("--routing-iters", f.routing_iters, "Dynamic routing iterations")->check(CLI::PositiveNumber);
}

/// Builds the model configuration; `store_dim` is the embedding width when one is loaded.
ModelConfig make_config(const ModelFlags& f, std::optional<FeatureKind> kind_override, std::size_t store_dim,
                        std::uint64_t seed) {
  const Variant variant = model::parse_variant(f.variant);
  ModelConfig c = ModelConfig::reference(variant, store_dim);
  if (!f.features.empty()) c.input_kind = featurize::parse_feature_kind(f.features);
  if (kind_override) c.input_kind = *kind_override;
  switch (c.input_kind) {
    case FeatureKind::OneHot:
      c.input_channels = seqio::kAlphabetSize;
      c.input_length = f.max_len;
      break;
    case FeatureKind::LocalEmbed:
      c.input_channels = store_dim;
      c.input_length = f.max_len;
      break;
    case FeatureKind::GlobalEmbed:
      c.input_channels = 1;
      c.input_length = store_dim;
      break;
  }
  c.residual_channels = f.residual_channels;
  c.skip_channels = f.skip_channels;
  c.kernel_size = f.kernel;
  c.num_blocks = f.blocks;
  c.dilations.clear();
  for (std::size_t l = 0; l < f.blocks; ++l) c.dilations.push_back(std::size_t{1} << l);
  c.primary_caps = {f.caps_channels, f.caps_dim, f.caps_kernel, f.caps_stride};
  c.out_caps.dim = f.out_caps_dim;
  c.routing_iters = f.routing_iters;
  c.seed = seed;
  c.validate();
  return c;
}

void add_hyper_flags(CLI::App* app, harness::TrainHyper& h) {
  app->add_option("--batch-size", h.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  app->add_option("--epochs", h.epochs, "Maximum training epochs");
  app->add_option("--lr", h.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app->add_option("--patience", h.patience, "Early-stopping patience in epochs");
  app->add_option("--clip-norm", h.clip_norm, "Global gradient-norm clip")->check(CLI::PositiveNumber);
}

struct DataFlags {
  std::string manifest;
  std::string fasta;
  std::string emb;
  bool map_unknown = false;
};

void add_data_flags(CLI::App* app, DataFlags& d) {
  app->add_option("--manifest", d.manifest, "Dataset manifest TSV (id, label, split)")->required();
  app->add_option("--fasta", d.fasta, "FASTA holding every manifest id")->required();
  app->add_option("--emb", d.emb, "PBEM embedding store for global or local features");
  app->add_flag("--map-unknown", d.map_unknown, "Map B, J, O, U, X, Z residues to X instead of rejecting them");
}

seqio::DatasetManifest load_dataset(const DataFlags& d) {
  auto fasta = seqio::parse_fasta(d.fasta, {d.map_unknown});
  return seqio::load_manifest(d.manifest, fasta);
}

std::optional<EmbeddingStore> load_store(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return featurize::read_embedding_store(path);
}

FeatureKind requested_kind(const ModelFlags& f) {
  if (!f.features.empty()) return featurize::parse_feature_kind(f.features);
  return ModelConfig::reference(model::parse_variant(f.variant)).input_kind;
}

/// Width of the store a feature kind reads, checking that the store exists and matches.
std::size_t store_dim_for(FeatureKind kind, const std::optional<EmbeddingStore>& store) {
  if (kind == FeatureKind::OneHot) return featurize::kEmbeddingDim;
  if (!store)
    throw Error(ErrorCode::MissingFeature,
                std::string(featurize::feature_kind_name(kind)) + " features need an embedding store (--emb)");
  const auto want = kind == FeatureKind::GlobalEmbed ? featurize::StoreKind::Global : featurize::StoreKind::Local;
  if (store->kind != want)
    throw Error(ErrorCode::KindMismatch, std::string("embedding store does not hold ") + featurize::feature_kind_name(kind) +
                                             " embeddings");
  return store->dim;
}

featurize::FeatureSources sources_for(const ModelConfig& c, const std::optional<EmbeddingStore>& store) {
  featurize::FeatureSources s;
  if (store) (store->kind == featurize::StoreKind::Global ? s.global : s.local) = &*store;
  s.l_max = c.input_kind == FeatureKind::GlobalEmbed ? featurize::kMaxLength : c.input_length;
  return s;
}

harness::Dataset featurize_split(const seqio::DatasetManifest& m, const std::string& split, const ModelConfig& c,
                                 const std::optional<EmbeddingStore>& store) {
  const auto sources = sources_for(c, store);
  harness::Dataset out;
  if (split == "train" || split == "all") out = featurize::batch_features(m, seqio::Split::Train, c.input_kind, sources);
  if (split == "test" || split == "all") {
    auto test = featurize::batch_features(m, seqio::Split::Test, c.input_kind, sources);
    out.insert(out.end(), std::make_move_iterator(test.begin()), std::make_move_iterator(test.end()));
  }
  return out;
}

std::string metrics_line(const harness::ClassMetrics& m, std::optional<double> auc) {
  return "acc " + fmt(m.acc, 4) + ", sen " + fmt(m.sen, 4) + ", spe " + fmt(m.spe, 4) + ", pre " + fmt(m.pre, 4) +
         ", mcc " + fmt(m.mcc, 4) + ", auc " + (auc ? fmt(*auc, 4) : std::string("n/a"));
}

/// Loads a checkpoint and reconciles it with the flags the user set explicitly.
model::ModelParams load_for_inference(const std::string& path, CLI::App* app, const ModelFlags& f) {
  auto params = model::load_checkpoint(path);
  if (app->count("--variant") && model::parse_variant(f.variant) != params.config.variant)
    throw Error(ErrorCode::VersionMismatch, "checkpoint holds variant " +
                                                std::string(model::variant_name(params.config.variant)) + ", not " +
                                                f.variant);
  if (app->count("--features") && featurize::parse_feature_kind(f.features) != params.config.input_kind)
    throw Error(ErrorCode::KindMismatch, "checkpoint expects " +
                                             std::string(featurize::feature_kind_name(params.config.input_kind)) +
                                             " features, not " + f.features);
  return params;
}

// ---------------------------------------------------------------------------

struct AuditFlags {
  std::string fasta_a, fasta_b, out, matrix;
  double gap_open = 10.0, gap_extend = 0.5, threshold = 25.0;
  unsigned jobs = 1;
  bool map_unknown = false;
};

void cmd_audit(const AuditFlags& f, std::ostream& out) {
  const seqio::ParseOptions po{f.map_unknown};
  const auto a = seqio::parse_fasta(f.fasta_a, po);
  std::optional<std::vector<seqio::ProteinSequence>> b;
  if (!f.fasta_b.empty()) b = seqio::parse_fasta(f.fasta_b, po);
  const auto scheme = f.matrix.empty() ? redundancy::ScoringScheme::blosum62(f.gap_open, f.gap_extend)
                                       : redundancy::ScoringScheme::from_ncbi_file(f.matrix, f.gap_open, f.gap_extend);
  const auto report = redundancy::pairwise_audit(a, b ? &*b : nullptr, scheme, {f.threshold, f.jobs});
  if (!f.out.empty()) {
    try {
      redundancy::emit_audit(report, f.out);
    } catch (const Error& e) {
      throw OutputFailure(e.what());
    }
  }
  out << "mean " << fmt(report.mean_identity_pct, 2) << ", above-threshold " << fmt(report.fraction_above_threshold, 3)
      << ", duplicates " << report.duplicate_pairs.size() << "\n";
  out << "pairs " << report.pair_count << "\n";
}

struct EncodeFlags {
  std::string fasta, out;
  std::size_t max_len = featurize::kMaxLength;
  bool map_unknown = false;
};

void cmd_encode(const EncodeFlags& f, std::ostream& out) {
  const auto seqs = seqio::parse_fasta(f.fasta, {f.map_unknown});
  EmbeddingStore store;
  store.kind = featurize::StoreKind::Local;
  store.dim = static_cast<std::uint32_t>(seqio::kAlphabetSize);
  for (const auto& s : seqs) {
    const std::size_t rows = std::min(s.residues.size(), f.max_len);
    auto m = featurize::onehot_encode(s, rows);
    store.records[s.id] = {rows, std::move(m.data)};
  }
  emit(f.out, featurize::encode_embedding_store(store));
  out << "encoded " << store.records.size() << " sequences\n";
}

struct RunFlags {
  DataFlags data;
  ModelFlags model;
  harness::TrainHyper hyper;
  std::uint64_t seed = 0;
  std::string checkpoint, out, split = "test";
  std::size_t k = 5;
};

void cmd_train(const RunFlags& f, std::ostream& out) {
  const auto manifest = load_dataset(f.data);
  const auto store = load_store(f.data.emb);
  const auto kind = requested_kind(f.model);
  const auto config = make_config(f.model, kind, store_dim_for(kind, store), f.seed);
  const auto data = featurize_split(manifest, "train", config, store);
  auto hyper = f.hyper;
  hyper.seed = f.seed;
  auto result = harness::train(config, data, nullptr, hyper);
  try {
    model::save_checkpoint(result.params, f.checkpoint);
  } catch (const Error& e) {
    throw OutputFailure(e.what());
  }
  const std::string history = f.out.empty() ? f.checkpoint + ".history.csv" : f.out;
  emit(history, harness::history_to_csv(result.history));
  const auto report = harness::evaluate(result.params, data);
  out << "trained " << model::variant_name(config.variant) << " on " << data.size() << " samples, "
      << result.history.size() << " epochs\n";
  out << "train " << metrics_line(report.metrics, report.auc) << "\n";
}

void cmd_cv(const RunFlags& f, std::ostream& out) {
  const auto manifest = load_dataset(f.data);
  const auto store = load_store(f.data.emb);
  const auto kind = requested_kind(f.model);
  const auto config = make_config(f.model, kind, store_dim_for(kind, store), f.seed);
  auto hyper = f.hyper;
  hyper.seed = f.seed;
  const auto result = harness::cross_validate(config, manifest, sources_for(config, store), hyper, {f.k, f.seed, 1});
  emit(f.out, harness::cv_to_json(result));
  const std::filesystem::path base(f.out);
  for (std::size_t i = 0; i < result.folds.size(); ++i) {
    auto fold_path = base;
    fold_path.replace_extension(".fold" + std::to_string(i) + ".json");
    emit(fold_path, harness::report_to_json(result.folds[i]));
  }
  const auto& m = result.mean;
  out << "cv " << f.k << " folds, mean acc " << fmt(m.acc, 4) << ", sen " << fmt(m.sen, 4) << ", spe "
      << fmt(m.spe, 4) << ", pre " << fmt(m.pre, 4) << ", mcc " << fmt(m.mcc, 4) << ", auc " << fmt(m.auc, 4)
      << "\n";
}

void cmd_eval(const RunFlags& f, CLI::App* app, std::ostream& out) {
  auto params = load_for_inference(f.checkpoint, app, f.model);
  const auto manifest = load_dataset(f.data);
  const auto store = load_store(f.data.emb);
  if (params.config.input_kind != FeatureKind::OneHot) store_dim_for(params.config.input_kind, store);
  const auto data = featurize_split(manifest, f.split, params.config, store);
  const auto report = harness::evaluate(params, data);
  emit(f.out, harness::report_to_json(report));
  out << f.split << " " << metrics_line(report.metrics, report.auc) << "\n";
}

void cmd_predict(const RunFlags& f, CLI::App* app, std::ostream& out) {
  auto params = load_for_inference(f.checkpoint, app, f.model);
  const auto manifest = load_dataset(f.data);
  const auto store = load_store(f.data.emb);
  if (params.config.input_kind != FeatureKind::OneHot) store_dim_for(params.config.input_kind, store);
  const auto data = featurize_split(manifest, f.split, params.config, store);
  const auto probs = harness::predict(params, data, f.hyper.batch_size);
  std::string tsv = "id\tprobability\tlabel\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    tsv += data[i].id + "\t" + fmt(probs[i], 6) + "\t" + (probs[i] >= harness::kDefaultThreshold ? "1" : "0") + "\n";
  emit(f.out, tsv);
  out << "predicted " << data.size() << " sequences\n";
}

struct AblateFlags {
  std::string manifest, fasta, emb_global, emb_local, out;
  bool map_unknown = false;
  ModelFlags model;
  harness::TrainHyper hyper;
  std::uint64_t seed = 0;
  std::size_t k = 5;
};

void cmd_ablate(const AblateFlags& f, std::ostream& out) {
  const auto manifest = load_dataset({f.manifest, f.fasta, "", f.map_unknown});
  const auto global = load_store(f.emb_global);
  const auto local = load_store(f.emb_local);
  auto hyper = f.hyper;
  hyper.seed = f.seed;

  std::string table = "variant\tACC\tSEN\tSPE\tPRE\tAUC\tMCC\n";
  for (const Variant v : model::kAllVariants) {
    ModelFlags flags = f.model;
    flags.variant = model::variant_name(v);
    flags.features.clear();
    const auto kind = ModelConfig::reference(v).input_kind;
    const auto& store = kind == FeatureKind::LocalEmbed ? local : global;
    const auto config = make_config(flags, kind, store_dim_for(kind, store), f.seed);
    const auto result =
        harness::cross_validate(config, manifest, sources_for(config, store), hyper, {f.k, f.seed, 1});
    const auto& m = result.mean;
    table += std::string(model::variant_name(v)) + "\t" + fmt(m.acc, 4) + "\t" + fmt(m.sen, 4) + "\t" +
             fmt(m.spe, 4) + "\t" + fmt(m.pre, 4) + "\t" + fmt(m.auc, 4) + "\t" + fmt(m.mcc, 4) + "\n";
  }
  if (!f.out.empty()) emit(f.out, table);
  out << table;
}

struct ParamsFlags {
  ModelFlags model;
  std::size_t emb_dim = featurize::kEmbeddingDim;
};

void cmd_params(const ParamsFlags& f, std::ostream& out) {
  const auto config = make_config(f.model, std::nullopt, f.emb_dim, 0);
  const auto params = model::build(config);
  out << "layer\tparams\n";
  for (const auto& [layer, n] : model::layer_parameter_counts(params)) out << layer << "\t" << n << "\n";
  out << "total\t" << model::count_parameters(params) << "\n";
}

void add_run_flags(CLI::App* app, RunFlags& f) {
  add_data_flags(app, f.data);
  add_model_flags(app, f.model);
  add_hyper_flags(app, f.hyper);
  app->add_option("--seed", f.seed, "Random seed (default: RESCAP_SEED or 0)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DNA-binding protein classifier: audit, encode, train, cv, eval, predict, ablate, params", "rescap"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  try {
    seed = default_seed();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  AuditFlags audit;
  auto* audit_cmd = app.add_subcommand("audit", "Pairwise global-alignment identity audit");
  audit_cmd->add_option("--fasta-a", audit.fasta_a, "First (or only) FASTA set")->required();
  audit_cmd->add_option("--fasta-b", audit.fasta_b, "Second set; enables a cross-set audit");
  audit_cmd->add_option("--gap-open", audit.gap_open, "Gap opening penalty")->check(CLI::NonNegativeNumber);
  audit_cmd->add_option("--gap-extend", audit.gap_extend, "Gap extension penalty")->check(CLI::NonNegativeNumber);
  audit_cmd->add_option("--threshold", audit.threshold, "Identity threshold in percent");
  audit_cmd->add_option("--matrix", audit.matrix, "Substitution matrix in NCBI layout (default: BLOSUM62)");
  audit_cmd->add_option("--out", audit.out, "Report JSON path; the histogram CSV is written beside it");
  audit_cmd->add_option("--jobs", audit.jobs, "Worker threads")->check(CLI::PositiveNumber);
  audit_cmd->add_flag("--map-unknown", audit.map_unknown, "Map B, J, O, U, X, Z residues to X");

  EncodeFlags encode;
  auto* encode_cmd = app.add_subcommand("encode", "Write one-hot encodings as a local PBEM store");
  encode_cmd->add_option("--fasta", encode.fasta, "Input FASTA")->required();
  encode_cmd->add_option("--out", encode.out, "Output PBEM path")->required();
  encode_cmd->add_option("--max-len", encode.max_len, "Truncation length")->check(CLI::PositiveNumber);
  encode_cmd->add_flag("--map-unknown", encode.map_unknown, "Map B, J, O, U, X, Z residues to X");

  RunFlags train, cv, eval, predict;
  train.seed = cv.seed = eval.seed = predict.seed = seed;
  auto* train_cmd = app.add_subcommand("train", "Train on the train split and save a checkpoint");
  add_run_flags(train_cmd, train);
  train_cmd->add_option("--checkpoint", train.checkpoint, "Checkpoint output path")->required();
  train_cmd->add_option("--out", train.out, "History CSV path (default: <checkpoint>.history.csv)");

  auto* cv_cmd = app.add_subcommand("cv", "Stratified k-fold cross-validation on the train split");
  add_run_flags(cv_cmd, cv);
  cv_cmd->add_option("-k,--folds", cv.k, "Number of folds")->check(CLI::Range(2, 1000));
  cv_cmd->add_option("--out", cv.out, "Summary JSON path; per-fold reports go beside it")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_run_flags(eval_cmd, eval);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint to load")->required();
  eval_cmd->add_option("--split", eval.split, "Split to evaluate")->check(CLI::IsMember({"train", "test", "all"}));
  eval_cmd->add_option("--out", eval.out, "Metrics JSON path")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Write per-sequence probabilities");
  add_run_flags(predict_cmd, predict);
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "Checkpoint to load")->required();
  predict_cmd->add_option("--split", predict.split, "Split to score")->check(CLI::IsMember({"train", "test", "all"}));
  predict_cmd->add_option("--out", predict.out, "Predictions TSV path")->required();

  AblateFlags ablate;
  ablate.seed = seed;
  auto* ablate_cmd = app.add_subcommand("ablate", "Cross-validate every variant under identical folds");
  ablate_cmd->add_option("--manifest", ablate.manifest, "Dataset manifest TSV")->required();
  ablate_cmd->add_option("--fasta", ablate.fasta, "FASTA holding every manifest id")->required();
  ablate_cmd->add_option("--emb-global", ablate.emb_global, "Global PBEM store")->required();
  ablate_cmd->add_option("--emb-local", ablate.emb_local, "Local PBEM store")->required();
  ablate_cmd->add_option("--seed", ablate.seed, "Random seed (default: RESCAP_SEED or 0)");
  ablate_cmd->add_option("-k,--folds", ablate.k, "Number of folds")->check(CLI::Range(2, 1000));
  ablate_cmd->add_option("--out", ablate.out, "Table TSV path");
  ablate_cmd->add_flag("--map-unknown", ablate.map_unknown, "Map B, J, O, U, X, Z residues to X");
  add_model_flags(ablate_cmd, ablate.model, false);
  add_hyper_flags(ablate_cmd, ablate.hyper);

  ParamsFlags params;
  auto* params_cmd = app.add_subcommand("params", "Print trainable parameter counts per layer");
  add_model_flags(params_cmd, params.model);
  params_cmd->add_option("--emb-dim", params.emb_dim, "Embedding width for global and local inputs")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*audit_cmd) cmd_audit(audit, out);
    else if (*encode_cmd) cmd_encode(encode, out);
    else if (*train_cmd) cmd_train(train, out);
    else if (*cv_cmd) cmd_cv(cv, out);
    else if (*eval_cmd) cmd_eval(eval, eval_cmd, out);
    else if (*predict_cmd) cmd_predict(predict, predict_cmd, out);
    else if (*ablate_cmd) cmd_ablate(ablate, out);
    else if (*params_cmd) cmd_params(params, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const OutputFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"rescap"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rescap::cli
