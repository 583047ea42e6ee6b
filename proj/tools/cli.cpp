#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "voxpipe/audio_io.hpp"
#include "voxpipe/csv.hpp"
#include "voxpipe/engine.hpp"
#include "voxpipe/error.hpp"
#include "voxpipe/features.hpp"
#include "voxpipe/models.hpp"
#include "voxpipe/payload.hpp"
#include "voxpipe/synth.hpp"
#include "voxpipe/training.hpp"

namespace voxpipe::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kParameter: return kUsage;
    case ErrorKind::kIo: return kIo;
    default: return kData;
  }
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string fmt(double v) { return csv::format_double(v); }

int parse_int(const std::string& text, const char* what) {
  int v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ParameterError(std::string(what) + ": '" + text + "' is not an integer");
  }
  return v;
}

// ------------------------------------------------------------------ run

struct RunOptions {
  std::string config;
  std::string input;
  std::string output;
  int workers = 0;
  bool resume = false;
  long long seed = -1;
};

int cmd_run(const RunOptions& o, std::ostream& out) {
  engine::PipelineConfig cfg = engine::load_config(o.config);
  if (!o.input.empty()) {
    if (cfg.pipeline.empty() || cfg.pipeline.front().name != "payload_init") {
      throw ConfigError("--input needs a pipeline starting with payload_init");
    }
    cfg.pipeline.front().settings["input_dir"] = o.input;
  }
  if (!o.output.empty()) cfg.output = o.output;
  if (o.workers > 0) cfg.workers = o.workers;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.resume) cfg.resume = true;
  const auto result = engine::run_config(cfg);
  for (const auto& c : result.report.components) {
    out << c.name << " processed=" << c.processed << " failed=" << c.failed << " skipped=" << c.skipped
        << " rows=" << c.rows_out << " elapsed_s=" << fmt(c.elapsed_s) << "\n";
  }
  out << "rows=" << result.payload.row_count();
  if (cfg.output) out << " output=" << table_path_for(*cfg.output).string();
  out << "\n";
  return kOk;
}

// ------------------------------------------------------------------ features

int cmd_features(const std::string& file, const std::string& spec_name, std::ostream& out, std::ostream& err) {
  features::FeatureSpec spec;
  if (spec_name == "canonical") {
    spec = features::FeatureSpec::canonical();
  } else if (spec_name == "extended") {
    spec = features::FeatureSpec::extended();
  } else {
    throw ParameterError("unknown feature spec '" + spec_name + "' (have: canonical, extended)");
  }
  const auto v = features::extract_feature_vector(audio::downmix(audio::read_wav(file)), spec);
  for (std::size_t i = 0; i < v.labels.size(); ++i) out << v.labels[i] << " " << fmt(v.values[i]) << "\n";
  if (v.short_clip) err << "note: clip is shorter than one frame; zero-padded\n";
  if (v.unvoiced) err << "note: no voiced frames; f0_mean reported as 0\n";
  return kOk;
}

// ------------------------------------------------------------------ train

struct TrainOptions {
  std::string payload;
  std::string target;
  std::string model = "logistic";
  std::string task;
  std::string features = "all";
  std::string strata;
  std::string merge;
  std::string out;
  std::optional<std::string> hidden;
  double weight_bins = 0.0;
  double split = 0.8;
  bool holdout = false;
  int cv = 0;
  int trials = 0;
  std::uint64_t seed = 0;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> l2;
  std::optional<double> svm_c;
  std::optional<double> epsilon;
  std::optional<int> batch;
};

fs::path payload_base(const std::string& arg) {
  if (arg.size() > 4 && arg.compare(arg.size() - 4, 4, ".csv") == 0) return arg.substr(0, arg.size() - 4);
  return arg;
}

void print_eval(std::ostream& out, const std::string& tag, const models::Evaluation& e) {
  if (e.classification) {
    out << tag << " accuracy=" << fmt(e.classification->accuracy) << " macro_f1=" << fmt(e.classification->macro_f1)
        << "\n";
  } else if (e.regression) {
    out << tag << " mae=" << fmt(e.regression->mae) << " rmse=" << fmt(e.regression->rmse) << "\n";
  }
}

void print_confusion(std::ostream& out, const std::string& tag, const models::Evaluation& e,
                     const std::vector<std::string>& classes) {
  if (!e.classification) return;
  const auto& c = e.classification->confusion;
  for (std::size_t r = 0; r < c.size(); ++r) {
    out << tag << "_confusion " << (r < classes.size() ? classes[r] : std::to_string(r)) << ":";
    for (long v : c[r]) out << " " << v;
    out << "\n";
  }
}

int cmd_train(TrainOptions o, std::ostream& out, std::ostream& err) {
  const auto kind = models::parse_model_kind(o.model);
  const bool regression_only = kind == models::ModelKind::kSvr || kind == models::ModelKind::kRidge;
  if (o.task.empty()) o.task = regression_only ? "reg" : "clf";
  bool classify;
  if (o.task == "clf" || o.task == "classification") {
    classify = true;
  } else if (o.task == "reg" || o.task == "regression") {
    classify = false;
  } else {
    throw ParameterError("--task must be clf or reg");
  }
  if (classify && regression_only) {
    throw ParameterError(o.model + " is a regression model; use --task reg");
  }
  if (!classify && (kind == models::ModelKind::kLogistic || kind == models::ModelKind::kLinearSvm)) {
    throw ParameterError(o.model + " is a classifier; use --task clf");
  }
  if (o.weight_bins > 0 && classify) throw ParameterError("--weight-bins needs a numeric regression target");

  const fs::path base = payload_base(o.payload);
  const Payload p = load(table_path_for(base), metadata_path_for(base));
  if (!p.has_column(o.target)) throw ConfigError("payload has no target column '" + o.target + "'");

  std::vector<std::string> feats;
  if (o.features == "all") {
    for (const auto& c : p.columns()) {
      if (p.category_of(c) == ColumnCategory::kFeature && c != o.target) feats.push_back(c);
    }
  } else if (o.features == "canonical") {
    feats = features::FeatureSpec::canonical().labels();
  } else {
    feats = split(o.features, ',');
  }
  if (feats.empty()) throw ConfigError("payload has no feature columns");
  std::vector<std::size_t> fcols;
  for (const auto& f : feats) {
    if (!p.has_column(f)) throw ConfigError("payload has no feature column '" + f + "'");
    fcols.push_back(p.column_index(f));
  }

  std::string strata_num, strata_group;
  int strata_bins = 5;
  if (!o.strata.empty()) {
    const auto parts = split(o.strata, ':');
    if (parts.size() < 2 || parts.size() > 3) throw ParameterError("--strata wants numcol:groupcol[:bins]");
    strata_num = parts[0];
    strata_group = parts[1];
    if (parts.size() == 3) strata_bins = parse_int(parts[2], "--strata bins");
    for (const auto& c : {strata_num, strata_group}) {
      if (!p.has_column(c)) throw ConfigError("payload has no strata column '" + c + "'");
    }
  }

  const std::size_t tcol = p.column_index(o.target);
  const auto ecol = p.find_column(engine::kErrorColumn);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < p.row_count(); ++i) {
    if (ecol && !is_missing(p.cell(i, *ecol))) continue;
    if (is_missing(p.cell(i, tcol))) continue;
    if (!classify && !as_number(p.cell(i, tcol))) continue;
    if (!std::all_of(fcols.begin(), fcols.end(), [&](std::size_t c) { return as_number(p.cell(i, c)); })) continue;
    if (!strata_num.empty() && (!as_number(p.cell(i, strata_num)) || is_missing(p.cell(i, strata_group)))) continue;
    rows.push_back(i);
  }
  err << "rows used=" << rows.size() << " skipped=" << p.row_count() - rows.size() << "\n";
  if (rows.empty()) throw DegenerateDataError("no usable rows for training");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(fcols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < fcols.size(); ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *as_number(p.cell(rows[r], fcols[c]));
    }
  }
  models::Dataset data;
  if (classify) {
    std::vector<std::string> labels;
    for (std::size_t r : rows) labels.push_back(to_display(p.cell(r, tcol)));
    if (!o.merge.empty()) {
      std::map<std::string, std::string> mapping;
      for (const auto& pair : split(o.merge, ',')) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) throw ParameterError("--merge wants from=to pairs");
        mapping[pair.substr(0, eq)] = pair.substr(eq + 1);
      }
      labels = models::merge_labels(labels, mapping);
    }
    data = models::Dataset::classification(x, labels, feats);
  } else {
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) y[static_cast<Eigen::Index>(r)] = *as_number(p.cell(rows[r], tcol));
    data = models::Dataset::regression(x, y, feats);
  }
  if (classify) {
    out << "classes";
    for (const auto& c : data.class_names) out << " " << c;
    out << "\n";
  }

  // Optional stratified holdout.
  models::Dataset train_set = data;
  std::optional<models::Dataset> holdout_set;
  if (o.holdout || !o.strata.empty()) {
    std::vector<std::string> groups(rows.size(), "all");
    if (!o.strata.empty()) {
      std::vector<double> nums;
      std::vector<std::string> gs;
      for (std::size_t r : rows) {
        nums.push_back(*as_number(p.cell(r, strata_num)));
        gs.push_back(to_display(p.cell(r, strata_group)));
      }
      groups = models::age_gender_strata(nums, gs, strata_bins);
    } else if (classify) {
      for (std::size_t r = 0; r < rows.size(); ++r) groups[r] = data.class_names[static_cast<std::size_t>(data.y[static_cast<Eigen::Index>(r)])];
    }
    const auto s = models::stratified_split(groups, o.split, o.seed);
    train_set = models::subset(data, s.train);
    holdout_set = models::subset(data, s.holdout);
    out << "split train=" << s.train.size() << " holdout=" << s.holdout.size() << "\n";
  }
  if (o.weight_bins > 0) {
    const auto w = models::sample_weights_by_bins(std::span<const double>(train_set.y.data(), train_set.size()),
                                                  o.weight_bins);
    train_set.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  }

  models::Hyperparams hp = models::default_hyperparams(kind);
  if (o.hidden) {
    hp.hidden.clear();
    for (const auto& h : split(*o.hidden, ',')) hp.hidden.push_back(parse_int(h, "--hidden"));
  }
  if (o.epochs) hp.epochs = *o.epochs;
  if (o.lr) hp.learning_rate = *o.lr;
  if (o.l2) hp.l2 = *o.l2;
  if (o.svm_c) hp.svm_c = *o.svm_c;
  if (o.epsilon) hp.svr_epsilon = *o.epsilon;
  if (o.batch) hp.batch_size = *o.batch;
  hp.seed = o.seed;
  hp.validate();
  auto trainer_for = [&](const models::Hyperparams& h) {
    return models::Trainer([kind, h](const models::Dataset& d) { return models::train(kind, d, h); });
  };

  if (o.trials > 0) {
    const int k = o.cv > 1 ? o.cv : 3;
    const auto space = models::default_search_space(kind);
    const auto result = models::random_search(
        space, o.trials,
        [&](const models::ParamSet& params) {
          return models::kfold_cv(train_set, k, trainer_for(models::apply_params(hp, params)), o.seed).mean.score();
        },
        o.seed);
    for (const auto& t : result.trials) {
      out << "trial " << t.index;
      for (const auto& [key, v] : t.params) out << " " << key << "=" << fmt(v);
      out << " score=" << fmt(t.score) << "\n";
    }
    out << "best trial=" << result.best_index << " score=" << fmt(result.best_score) << "\n";
    hp = models::apply_params(hp, result.best);
  }
  if (o.cv > 0) {
    const auto report = models::kfold_cv(train_set, o.cv, trainer_for(hp), o.seed);
    for (std::size_t f = 0; f < report.folds.size(); ++f) print_eval(out, "cv_fold " + std::to_string(f), report.folds[f]);
    print_eval(out, "cv_mean", report.mean);
    print_confusion(out, "cv", report.mean, data.class_names);
  }
  const auto model = models::train(kind, train_set, hp);
  print_eval(out, "train", models::evaluate(model, train_set));
  if (holdout_set && holdout_set->size() > 0) {
    const auto e = models::evaluate(model, *holdout_set);
    print_eval(out, "holdout", e);
    print_confusion(out, "holdout", e, data.class_names);
  }
  if (!o.out.empty()) {
    models::save_model(model, o.out);
    out << "model " << o.out << "\n";
  }
  return kOk;
}

// ------------------------------------------------------------------ synth

struct SynthOptions {
  std::string out;
  std::string spec;
  std::string presets = "low,high";
  int n = 10;
  std::uint64_t seed = 1;
  double snr_db = 0.0;
  bool snr_set = false;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  synth::CorpusSpec spec;
  if (!o.spec.empty()) {
    std::ifstream in(o.spec, std::ios::binary);
    if (!in) throw IoError("cannot open corpus spec '" + o.spec + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    spec = synth::parse_corpus_spec(ss.str());
  } else {
    spec = synth::default_corpus(o.n, o.seed);
    spec.classes.clear();
    for (const auto& name : split(o.presets, ',')) spec.classes.push_back(synth::preset(name));
  }
  if (o.snr_set) {
    for (auto& c : spec.classes) c.snr_db = o.snr_db;
  }
  const auto rows = synth::generate_corpus(spec, o.out);
  out << "wrote " << rows.size() << " clips and " << synth::kManifestName << " to " << o.out << "\n";
  return kOk;
}

// ------------------------------------------------------------------ list-components

int cmd_list(bool as_json, std::ostream& out) {
  for (const auto* d : engine::default_registry().list()) {
    if (as_json) {
      json j;
      j["name"] = d->name;
      j["stage"] = std::string(engine::to_string(d->stage));
      j["purity"] = std::string(engine::to_string(d->purity));
      j["produces"] = d->produces;
      j["summary"] = d->summary;
      j["settings"] = json::array();
      for (const auto& s : d->settings) {
        j["settings"].push_back({{"key", s.key},
                                 {"type", std::string(engine::to_string(s.type))},
                                 {"default", s.default_value},
                                 {"help", s.help}});
      }
      out << j.dump() << "\n";
    } else {
      out << d->name << "\t" << engine::to_string(d->stage) << "\t" << engine::to_string(d->purity) << "\t";
      for (std::size_t i = 0; i < d->produces.size(); ++i) out << (i ? "; " : "") << d->produces[i];
      out << "\n";
    }
  }
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"voxpipe: config-driven speaker characterization pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for every command");

  RunOptions run_opts;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", run_opts.config, "Pipeline config (JSON)")->required();
    sub->add_option("--input", run_opts.input, "Override payload_init input_dir");
    sub->add_option("--output", run_opts.output, "Override the output base (<base>.csv, <base>.meta.json)");
    sub->add_option("--workers", run_opts.workers, "Override the worker count")->check(CLI::PositiveNumber);
    sub->add_option("--seed", run_opts.seed, "Override the pipeline seed")->check(CLI::NonNegativeNumber);
  };
  auto* run = app.add_subcommand("run", "Run a pipeline");
  add_run_flags(run);
  run->add_flag("--resume", run_opts.resume, "Continue from the saved payload, skipping processed paths");
  auto* resume = app.add_subcommand("resume", "Same as run --resume");
  add_run_flags(resume);

  std::string feat_file, feat_spec = "canonical";
  auto* feats = app.add_subcommand("features", "Print the feature vector of one WAV file");
  feats->add_option("--file", feat_file, "WAV file")->required();
  feats->add_option("--spec", feat_spec, "canonical (31 dims) or extended");

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train and evaluate a model on a saved payload");
  train->add_option("--payload", tr.payload, "Payload base or .csv path")->required();
  train->add_option("--target", tr.target, "Target column")->required();
  train->add_option("--model", tr.model, "logistic, linear_svm, svr, ridge or mlp");
  train->add_option("--task", tr.task, "clf or reg (default reg for svr and ridge, clf otherwise)");
  train->add_option("--features", tr.features, "all (every feature column), canonical, or a comma list");
  train->add_option("--weight-bins", tr.weight_bins, "Inverse-frequency weights over target bins of this width");
  train->add_option("--strata", tr.strata, "numcol:groupcol[:bins] stratified holdout groups");
  train->add_flag("--holdout", tr.holdout, "Hold out part of the data even without --strata");
  train->add_option("--split", tr.split, "Train fraction for the holdout split");
  train->add_option("--cv", tr.cv, "k-fold cross-validation on the training part");
  train->add_option("--trials", tr.trials, "Random hyperparameter search trials");
  train->add_option("--merge", tr.merge, "Label merges, e.g. calm=neutral");
  train->add_option("--out", tr.out, "Model file to write");
  train->add_option("--seed", tr.seed, "Seed for splits, folds, search and initialization");
  train->add_option("--epochs", tr.epochs, "Training epochs");
  train->add_option("--lr", tr.lr, "Learning rate");
  train->add_option("--l2", tr.l2, "L2 penalty (ridge lambda for ridge)");
  train->add_option("--C", tr.svm_c, "SVM/SVR C");
  train->add_option("--epsilon", tr.epsilon, "SVR epsilon in target units");
  train->add_option("--hidden", tr.hidden, "MLP hidden sizes, e.g. 32,16 (default 32)");
  train->add_option("--batch", tr.batch, "MLP mini-batch size");

  SynthOptions sy;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic voiced corpus with manifest.csv");
  syn->add_option("--out", sy.out, "Output directory")->required();
  syn->add_option("--spec", sy.spec, "Corpus spec (JSON)");
  syn->add_option("--preset", sy.presets, "Comma list of class presets (low, high)");
  syn->add_option("--n", sy.n, "Number of clips")->check(CLI::PositiveNumber);
  syn->add_option("--seed", sy.seed, "Seed");
  auto* snr = syn->add_option("--snr", sy.snr_db, "Override every class's SNR in dB");

  bool list_json = false;
  auto* list = app.add_subcommand("list-components", "List registered pipeline components");
  list->add_flag("--json", list_json, "One JSON record per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, out);
    if (resume->parsed()) {
      run_opts.resume = true;
      return cmd_run(run_opts, out);
    }
    if (feats->parsed()) return cmd_features(feat_file, feat_spec, out, err);
    if (train->parsed()) return cmd_train(tr, out, err);
    if (syn->parsed()) {
      sy.snr_set = snr->count() > 0;
      return cmd_synth(sy, out);
    }
    if (list->parsed()) return cmd_list(list_json, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}

}  // namespace voxpipe::cli
