// Command-line front end for the theft-detection pipeline:
//   etd synth      generate a synthetic consumption CSV + manifest
//   etd preprocess impute/winsorize/scale a CSV and dump the result
//   etd train      split, bag, train the ensemble, write models + run report
//   etd eval       score an ensemble on labelled data, write metrics + ROC
//   etd predict    per-consumer labels, vote counts, and scores
//
// Every option can come from a JSON --config file; explicit flags win. Exit
// codes: 0 success, 1 pipeline failure, 2 usage/config error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "etd/dataset.hpp"
#include "etd/ensemble.hpp"
#include "etd/metrics.hpp"
#include "etd/neuralnet.hpp"
#include "etd/preprocess.hpp"
#include "etd/sampler.hpp"
#include "etd/synth.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Keeps the stratified split independent of the bagging and model streams.
constexpr std::uint64_t kSplitSeedStream = 0x517;

struct RunConfig {
  std::string config_path;
  std::string data_path;
  std::string out_dir;
  std::string ensemble_dir;
  std::uint64_t seed = 0;

  // synth
  std::size_t consumers = 2000;
  std::size_t days = 365;
  std::string start_date = "2014/1/1";
  double theft_fraction = 0.08;
  double missing_rate = 0.0;
  std::vector<double> attack_mix{0.0, 1.0, 1.0};
  double weekend_frac = 0.2;
  double seasonal_frac = 0.25;
  double noise_frac = 0.1;

  // preprocess
  double winsor_low_q = 0.0;
  double winsor_high_q = 0.99;

  // train
  std::size_t bags = 9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double train_fraction = 0.7;
  std::string optimizer = "adam";
  std::size_t workers = 0;
  json architecture;  // empty -> default stack

  // eval / predict
  std::string positive_class = "normal";
};

void apply_config_file(const fs::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "data") cfg.data_path = value.get<std::string>();
      else if (key == "out") cfg.out_dir = value.get<std::string>();
      else if (key == "ensemble") cfg.ensemble_dir = value.get<std::string>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "consumers") cfg.consumers = value.get<std::size_t>();
      else if (key == "days") cfg.days = value.get<std::size_t>();
      else if (key == "start_date") cfg.start_date = value.get<std::string>();
      else if (key == "theft_fraction") cfg.theft_fraction = value.get<double>();
      else if (key == "missing_rate") cfg.missing_rate = value.get<double>();
      else if (key == "attack_mix") cfg.attack_mix = value.get<std::vector<double>>();
      else if (key == "weekend_frac") cfg.weekend_frac = value.get<double>();
      else if (key == "seasonal_frac") cfg.seasonal_frac = value.get<double>();
      else if (key == "noise_frac") cfg.noise_frac = value.get<double>();
      else if (key == "winsor_low_q") cfg.winsor_low_q = value.get<double>();
      else if (key == "winsor_high_q") cfg.winsor_high_q = value.get<double>();
      else if (key == "bags") cfg.bags = value.get<std::size_t>();
      else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "train_fraction") cfg.train_fraction = value.get<double>();
      else if (key == "optimizer") cfg.optimizer = value.get<std::string>();
      else if (key == "workers") cfg.workers = value.get<std::size_t>();
      else if (key == "architecture") cfg.architecture = value;
      else if (key == "positive_class") cfg.positive_class = value.get<std::string>();
      else throw UsageError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw UsageError("bad value in config file: " + std::string(e.what()));
  }
}

void require_input_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::exists(path)) throw UsageError(what + " '" + path + "' does not exist");
}

fs::path require_out_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out directory is required");
  fs::create_directories(out);
  return out;
}

etd::Label parse_positive_class(const std::string& s) {
  if (s == "normal") return etd::Label::Normal;
  if (s == "theft") return etd::Label::Theft;
  throw UsageError("--positive-class must be 'normal' or 'theft', got '" + s + "'");
}

etd::PreprocessConfig preprocess_config(const RunConfig& cfg) {
  etd::PreprocessConfig pp;
  pp.winsor_low_q = cfg.winsor_low_q;
  pp.winsor_high_q = cfg.winsor_high_q;
  try {
    pp.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return pp;
}

etd::TrainConfig train_config(const RunConfig& cfg) {
  etd::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  if (cfg.optimizer == "adam") tc.optimizer = etd::OptimizerKind::Adam;
  else if (cfg.optimizer == "sgd") tc.optimizer = etd::OptimizerKind::SGD;
  else throw UsageError("--optimizer must be 'adam' or 'sgd', got '" + cfg.optimizer + "'");
  try {
    tc.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return tc;
}

std::vector<etd::LayerSpec> architecture_from(const RunConfig& cfg) {
  if (cfg.architecture.is_null() || cfg.architecture.empty()) return etd::default_architecture();
  try {
    return etd::layer_specs_from_json(cfg.architecture);
  } catch (const std::exception& e) {
    throw UsageError(std::string("bad architecture spec: ") + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cli: cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cli: write to '" + path.string() + "' failed");
}

int run_synth(const RunConfig& cfg) {
  etd::SynthConfig sc;
  sc.n_consumers = cfg.consumers;
  sc.n_days = cfg.days;
  sc.theft_fraction = cfg.theft_fraction;
  sc.missing_rate = cfg.missing_rate;
  sc.seed = cfg.seed;
  sc.weekend_frac = cfg.weekend_frac;
  sc.seasonal_frac = cfg.seasonal_frac;
  sc.noise_frac = cfg.noise_frac;
  if (cfg.attack_mix.size() != 3) {
    throw UsageError("--attack-mix needs exactly three weights (uniform-scale, interval-zero, daily-scale)");
  }
  std::copy(cfg.attack_mix.begin(), cfg.attack_mix.end(), sc.attack_mix.begin());
  try {
    sc.start_date = etd::parse_date(cfg.start_date);
    sc.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const fs::path out = require_out_dir(cfg.out_dir);

  const etd::Dataset ds = etd::generate_dataset(sc);
  etd::write_csv(ds, out / "dataset.csv");
  json manifest = etd::synth_manifest_json(sc);
  std::size_t theft = 0;
  for (const auto& s : ds.series) theft += s.label == etd::Label::Theft;
  manifest["theft_rows"] = theft;
  manifest["normal_rows"] = ds.size() - theft;
  write_json(manifest, out / "manifest.json");
  std::cout << "wrote " << (out / "dataset.csv").string() << " (" << ds.size() << " consumers x "
            << ds.n_days() << " days, " << theft << " theft)\n";
  return 0;
}

int run_preprocess(const RunConfig& cfg) {
  require_input_file(cfg.data_path, "--data");
  const etd::PreprocessConfig pp = preprocess_config(cfg);
  const fs::path out = require_out_dir(cfg.out_dir);
  const etd::Dataset ds = etd::load_csv(cfg.data_path);
  const auto processed = etd::run_pipeline(ds, pp);
  etd::write_processed_csv(processed, ds.calendar.start_date, out / "processed.csv");
  std::cout << "wrote " << (out / "processed.csv").string() << "\n";
  return 0;
}

int run_train(const RunConfig& cfg) {
  require_input_file(cfg.data_path, "--data");
  const etd::PreprocessConfig pp = preprocess_config(cfg);
  const etd::TrainConfig tc = train_config(cfg);
  const auto spec = architecture_from(cfg);
  if (cfg.bags == 0 || cfg.bags % 2 == 0) throw UsageError("--bags must be odd");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw UsageError("--train-fraction must be in (0,1)");
  }
  const fs::path out = require_out_dir(cfg.out_dir);

  const etd::Dataset ds = etd::load_csv(cfg.data_path);
  try {
    etd::Model probe(spec, ds.n_days(), 0);  // architecture/shape check up front
  } catch (const std::exception& e) {
    throw UsageError(std::string("architecture does not fit the data: ") + e.what());
  }

  const std::uint64_t split_seed = etd::rng::derive_seed(cfg.seed, kSplitSeedStream);
  const auto [train_ds, test_ds] = etd::stratified_split(ds, cfg.train_fraction, split_seed);
  const auto processed = etd::run_pipeline(train_ds, pp);

  const etd::EnsembleFitResult fit =
      etd::fit_ensemble(processed, cfg.bags, spec, tc, cfg.seed, cfg.workers);

  etd::save_ensemble(fit.ensemble, out);
  etd::write_csv(test_ds, out / "test.csv");
  {
    std::ofstream bags_out(out / "bags.txt", std::ios::binary);
    bags_out << etd::plan_to_text(fit.ensemble.plan);
  }

  json report;
  report["command"] = "train";
  json eff;
  eff["data"] = cfg.data_path;
  eff["out"] = cfg.out_dir;
  eff["seed"] = cfg.seed;
  eff["bags"] = cfg.bags;
  eff["epochs"] = cfg.epochs;
  eff["batch_size"] = cfg.batch_size;
  eff["learning_rate"] = cfg.learning_rate;
  eff["optimizer"] = cfg.optimizer;
  eff["train_fraction"] = cfg.train_fraction;
  eff["winsor_low_q"] = cfg.winsor_low_q;
  eff["winsor_high_q"] = cfg.winsor_high_q;
  eff["workers"] = cfg.workers;
  eff["architecture"] = etd::layer_specs_to_json(spec);
  report["effective_config"] = std::move(eff);

  const auto label_counts = [](const etd::Dataset& d) {
    std::size_t theft = 0;
    for (const auto& s : d.series) theft += s.label == etd::Label::Theft;
    return json{{"total", d.size()}, {"theft", theft}, {"normal", d.size() - theft}};
  };
  report["input"] = {{"consumers", ds.size()},
                     {"days", ds.n_days()},
                     {"train", label_counts(train_ds)},
                     {"test", label_counts(test_ds)}};

  json seeds;
  seeds["master"] = cfg.seed;
  seeds["split"] = split_seed;
  seeds["bags"] = fit.ensemble.plan.seed;
  json model_seeds = json::array();
  for (const auto& m : fit.ensemble.models) model_seeds.push_back(m.rng_seed());
  seeds["models"] = std::move(model_seeds);
  report["seeds"] = std::move(seeds);

  json per_bag = json::array();
  for (std::size_t b = 0; b < fit.histories.size(); ++b) {
    json epochs = json::array();
    for (const auto& e : fit.histories[b]) {
      epochs.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
    }
    per_bag.push_back({{"model_seed", fit.ensemble.models[b].rng_seed()},
                       {"epochs", std::move(epochs)}});
  }
  report["per_bag"] = std::move(per_bag);

  json test_ids = json::array();
  for (const auto& s : test_ds.series) test_ids.push_back(s.consumer_id);
  report["test_consumers"] = std::move(test_ids);

  write_json(report, out / "run_report.json");
  std::cout << "trained " << cfg.bags << " models; ensemble in " << out.string() << "\n";
  return 0;
}

// The winsor quantiles used at training time live in the run report next to
// the manifest; fall back to the defaults when the report is absent.
etd::PreprocessConfig preprocess_config_for(const fs::path& ensemble_dir, const RunConfig& cfg) {
  etd::PreprocessConfig pp = preprocess_config(cfg);
  const fs::path report_path = ensemble_dir / "run_report.json";
  if (fs::exists(report_path)) {
    std::ifstream in(report_path);
    json report;
    in >> report;
    const auto& eff = report.at("effective_config");
    pp.winsor_low_q = eff.value("winsor_low_q", pp.winsor_low_q);
    pp.winsor_high_q = eff.value("winsor_high_q", pp.winsor_high_q);
  }
  return pp;
}

struct ScoredData {
  std::vector<etd::Label> y_true;
  std::vector<etd::Label> y_pred;
  std::vector<double> scores;
  std::vector<etd::EnsemblePrediction> predictions;
  std::vector<std::string> consumer_ids;
};

ScoredData classify_csv(const RunConfig& cfg, const fs::path& data_path) {
  require_input_file(cfg.ensemble_dir, "--ensemble");
  if (!fs::exists(fs::path(cfg.ensemble_dir) / "manifest.json")) {
    throw UsageError("'" + cfg.ensemble_dir + "' has no manifest.json");
  }
  const etd::Ensemble ens = etd::load_ensemble(cfg.ensemble_dir);
  const etd::PreprocessConfig pp = preprocess_config_for(cfg.ensemble_dir, cfg);
  const etd::Dataset ds = etd::load_csv(data_path);
  const auto processed = etd::run_pipeline(ds, pp);
  const etd::BatchData batch = etd::reshape_3d(processed);
  const etd::ClassifyResult res = etd::classify(ens, batch.x);

  ScoredData out;
  out.scores = res.scores;
  out.predictions = res.predictions;
  for (const auto& s : ds.series) {
    out.y_true.push_back(s.label);
    out.consumer_ids.push_back(s.consumer_id);
  }
  for (const auto& p : res.predictions) out.y_pred.push_back(p.label);
  return out;
}

int run_eval(const RunConfig& cfg) {
  require_input_file(cfg.ensemble_dir, "--ensemble");
  std::string data_path = cfg.data_path;
  if (data_path.empty()) data_path = (fs::path(cfg.ensemble_dir) / "test.csv").string();
  require_input_file(data_path, "--data");
  const etd::Label positive = parse_positive_class(cfg.positive_class);
  const fs::path out = require_out_dir(cfg.out_dir);

  const ScoredData scored = classify_csv(cfg, data_path);
  const etd::MetricsReport report =
      etd::evaluate(scored.y_true, scored.y_pred, scored.scores, positive);

  json j = report;
  j["data"] = data_path;
  j["ensemble"] = cfg.ensemble_dir;
  j["samples"] = scored.y_true.size();
  // The hard-vote fraction is a coarser score than the mean probability;
  // report its AUC alongside for comparison.
  {
    std::vector<double> vote_fraction;
    vote_fraction.reserve(scored.predictions.size());
    for (const auto& p : scored.predictions) {
      vote_fraction.push_back(static_cast<double>(p.votes_theft) /
                              static_cast<double>(p.per_model_proba.size()));
    }
    j["vote_fraction_auc_theft"] = etd::roc_auc(vote_fraction, scored.y_true, etd::Label::Theft);
  }
  write_json(j, out / "metrics.json");

  // ROC points for the primary orientation.
  std::vector<double> oriented = scored.scores;
  if (positive == etd::Label::Normal) {
    for (double& s : oriented) s = 1.0 - s;
  }
  etd::write_roc_csv(etd::roc_curve(oriented, scored.y_true, positive), out / "roc.csv");

  std::cout << "positive=" << etd::to_string(positive) << " precision=" << report.primary.precision
            << " recall=" << report.primary.recall << " f1=" << report.primary.f1
            << " accuracy=" << report.primary.accuracy << " auc=" << report.primary.auc << "\n"
            << "wrote " << (out / "metrics.json").string() << " and " << (out / "roc.csv").string()
            << "\n";
  return 0;
}

int run_predict(const RunConfig& cfg) {
  require_input_file(cfg.ensemble_dir, "--ensemble");
  require_input_file(cfg.data_path, "--data");
  const fs::path out = require_out_dir(cfg.out_dir);

  const ScoredData scored = classify_csv(cfg, cfg.data_path);
  const fs::path path = out / "predictions.csv";
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cli: cannot write '" + path.string() + "'");
  file << "consumer_id,predicted,votes_theft,votes_normal,score\n";
  for (std::size_t i = 0; i < scored.predictions.size(); ++i) {
    const auto& p = scored.predictions[i];
    file << scored.consumer_ids[i] << ',' << etd::to_string(p.label) << ',' << p.votes_theft << ','
         << p.votes_normal << ',' << etd::detail::format_double(p.score) << '\n';
  }
  if (!file) throw std::runtime_error("cli: write to '" + path.string() + "' failed");
  std::cout << "wrote " << path.string() << " (" << scored.predictions.size() << " consumers)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;

  // Config file values become the defaults; explicit flags override them.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string_view(argv[i]) == "--config") {
      try {
        apply_config_file(argv[i + 1], cfg);
      } catch (const UsageError& e) {
        std::cerr << "etd: usage error: " << e.what() << "\n";
        return 2;
      }
      break;
    }
  }

  CLI::App app{"Electricity-theft detection via an under-bagged CNN ensemble"};
  app.require_subcommand(1);

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", cfg.config_path, "JSON config file (flags override it)");
    cmd->add_option("--seed", cfg.seed, "master seed");
    cmd->add_option("--out", cfg.out_dir, "output directory");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  add_common(synth);
  synth->add_option("--consumers", cfg.consumers, "number of consumers");
  synth->add_option("--days", cfg.days, "number of daily readings");
  synth->add_option("--start-date", cfg.start_date, "first day, YYYY/M/D");
  synth->add_option("--theft-fraction", cfg.theft_fraction, "fraction of attacked consumers");
  synth->add_option("--missing-rate", cfg.missing_rate, "per-day missing probability");
  synth->add_option("--attack-mix", cfg.attack_mix,
                    "weights for uniform-scale, interval-zero, daily-scale")
      ->delimiter(',')
      ->expected(1, 3);
  synth->add_option("--weekend-frac", cfg.weekend_frac, "weekend uplift as a fraction of base");
  synth->add_option("--seasonal-frac", cfg.seasonal_frac, "annual swing as a fraction of base");
  synth->add_option("--noise-frac", cfg.noise_frac, "noise sigma as a fraction of base");

  CLI::App* preprocess = app.add_subcommand("preprocess", "run the preprocessing chain on a CSV");
  add_common(preprocess);
  preprocess->add_option("--data", cfg.data_path, "input CSV");
  preprocess->add_option("--winsor-low", cfg.winsor_low_q, "lower winsor quantile");
  preprocess->add_option("--winsor-high", cfg.winsor_high_q, "upper winsor quantile");

  CLI::App* train = app.add_subcommand("train", "train the under-bagged ensemble");
  add_common(train);
  train->add_option("--data", cfg.data_path, "input CSV");
  train->add_option("--bags", cfg.bags, "number of bags/models (odd)");
  train->add_option("--epochs", cfg.epochs, "training epochs per model");
  train->add_option("--batch-size", cfg.batch_size, "mini-batch size");
  train->add_option("--learning-rate", cfg.learning_rate, "optimizer step size");
  train->add_option("--optimizer", cfg.optimizer, "adam or sgd");
  train->add_option("--train-fraction", cfg.train_fraction, "share of data used for training");
  train->add_option("--winsor-low", cfg.winsor_low_q, "lower winsor quantile");
  train->add_option("--winsor-high", cfg.winsor_high_q, "upper winsor quantile");
  train->add_option("--workers", cfg.workers, "parallel bag trainers (0 = all cores)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate an ensemble on labelled data");
  add_common(eval);
  eval->add_option("--ensemble", cfg.ensemble_dir, "trained ensemble directory");
  eval->add_option("--data", cfg.data_path, "labelled CSV (default: the held-out test.csv)");
  eval->add_option("--positive-class", cfg.positive_class, "normal or theft");

  CLI::App* predict = app.add_subcommand("predict", "classify consumers in a CSV");
  add_common(predict);
  predict->add_option("--ensemble", cfg.ensemble_dir, "trained ensemble directory");
  predict->add_option("--data", cfg.data_path, "input CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(cfg);
    if (preprocess->parsed()) return run_preprocess(cfg);
    if (train->parsed()) return run_train(cfg);
    if (eval->parsed()) return run_eval(cfg);
    return run_predict(cfg);
  } catch (const UsageError& e) {
    std::cerr << "etd: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "etd: error: " << e.what() << "\n";
    return 1;
  }
}
