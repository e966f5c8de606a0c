#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "etd/neuralnet.hpp"
#include "etd/sampler.hpp"

// Ensemble of per-bag CNNs combined by majority vote: a sample is flagged as
// theft exactly when the attack votes X outnumber the normal votes Y, which
// an odd model count keeps tie-free. The continuous score is the mean of the
// per-model probabilities.

namespace etd {

struct Ensemble {
  std::vector<Model> models;
  BaggingPlan plan;
  double threshold = 0.5;

  std::size_t model_count() const { return models.size(); }
  bool operator==(const Ensemble&) const = default;
};

struct EnsemblePrediction {
  std::vector<double> per_model_proba;
  std::size_t votes_theft = 0;   // X
  std::size_t votes_normal = 0;  // Y
  Label label = Label::Normal;
  double score = 0.0;
};

inline EnsemblePrediction vote(std::span<const double> per_model_proba, double threshold) {
  if (per_model_proba.empty() || per_model_proba.size() % 2 == 0) {
    throw std::invalid_argument("ensemble: vote needs an odd number of probabilities");
  }
  EnsemblePrediction pred;
  pred.per_model_proba.assign(per_model_proba.begin(), per_model_proba.end());
  double sum = 0.0;
  for (double p : per_model_proba) {
    if (p > threshold) ++pred.votes_theft;
    sum += p;
  }
  pred.votes_normal = per_model_proba.size() - pred.votes_theft;
  pred.label = pred.votes_theft > pred.votes_normal ? Label::Theft : Label::Normal;
  pred.score = sum / static_cast<double>(per_model_proba.size());
  return pred;
}

struct ClassifyResult {
  std::vector<EnsemblePrediction> predictions;
  std::vector<double> scores;  // mean per-model probability, one per sample
};

inline ClassifyResult classify(const Ensemble& ens, const Tensor& batch) {
  if (ens.models.empty()) throw std::invalid_argument("ensemble: no models");
  ClassifyResult res;
  const std::size_t n = batch.dim(0);
  if (n == 0) return res;
  std::vector<Tensor> probas;
  probas.reserve(ens.models.size());
  for (const auto& model : ens.models) probas.push_back(predict_proba(model, batch));
  res.predictions.reserve(n);
  res.scores.reserve(n);
  std::vector<double> row(ens.models.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < ens.models.size(); ++m) row[m] = probas[m].data[i];
    res.predictions.push_back(vote(row, ens.threshold));
    res.scores.push_back(res.predictions.back().score);
  }
  return res;
}

struct EnsembleFitResult {
  Ensemble ensemble;
  std::vector<std::vector<EpochStats>> histories;  // one per bag
};

namespace detail {
// Stream tag separating the bagging draw from the per-model training streams.
inline constexpr std::uint64_t kBagSeedStream = 0xb16;
inline constexpr std::uint64_t kShuffleSeedStream = 0x5f;
}  // namespace detail

// Trains one model per balanced bag. Bags come from a seed derived from
// master_seed; model i initializes from master_seed ^ i. Training the bags
// concurrently cannot change the result: each model's computation is
// self-contained and single-threaded.
inline EnsembleFitResult fit_ensemble(std::span<const ProcessedSeries> train,
                                      std::size_t bag_count, const std::vector<LayerSpec>& spec,
                                      const TrainConfig& cfg, std::uint64_t master_seed,
                                      std::size_t max_workers = 0) {
  std::vector<Label> labels;
  labels.reserve(train.size());
  for (const auto& s : train) labels.push_back(s.label);

  EnsembleFitResult res;
  res.ensemble.plan = make_bags(labels, bag_count, rng::derive_seed(master_seed, detail::kBagSeedStream));
  res.ensemble.threshold = 0.5;
  res.ensemble.models.resize(bag_count);
  res.histories.resize(bag_count);

  const auto train_bag = [&](std::size_t i) {
    const Bag& bag = res.ensemble.plan.bags[i];
    std::vector<ProcessedSeries> members;
    members.reserve(bag.minority_indices.size() + bag.majority_indices.size());
    for (std::size_t idx : bag.minority_indices) members.push_back(train[idx]);
    for (std::size_t idx : bag.majority_indices) members.push_back(train[idx]);
    const BatchData data = reshape_3d(members);
    const std::uint64_t model_seed = master_seed ^ static_cast<std::uint64_t>(i);
    TrainConfig bag_cfg = cfg;
    bag_cfg.shuffle_seed = rng::derive_seed(model_seed, detail::kShuffleSeedStream);
    TrainResult tr = etd::train(spec, data.x, data.labels, bag_cfg, model_seed);
    res.ensemble.models[i] = std::move(tr.model);
    res.histories[i] = std::move(tr.history);
  };

  std::size_t workers = max_workers ? max_workers : std::thread::hardware_concurrency();
  workers = std::max<std::size_t>(1, std::min(workers, bag_count));
  if (workers == 1) {
    for (std::size_t i = 0; i < bag_count; ++i) train_bag(i);
  } else {
    std::vector<std::future<void>> futures;
    futures.reserve(bag_count);
    for (std::size_t i = 0; i < bag_count; ++i) {
      futures.push_back(std::async(std::launch::async, train_bag, i));
    }
    for (auto& f : futures) f.get();
  }
  return res;
}

// --- JSON helpers for layer specs (shared by the manifest and the CLI) ---

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear:
      return "linear";
    case Activation::ReLU:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("ensemble: unknown activation '" + s + "'");
}

inline nlohmann::json layer_specs_to_json(const std::vector<LayerSpec>& specs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& spec : specs) {
    nlohmann::json j;
    if (const auto* conv = std::get_if<Conv1DSpec>(&spec)) {
      j["type"] = "conv1d";
      j["filters"] = conv->filters;
      j["kernel"] = conv->kernel;
      j["activation"] = to_string(conv->activation);
    } else if (const auto* pool = std::get_if<MaxPool1DSpec>(&spec)) {
      j["type"] = "maxpool1d";
      j["pool"] = pool->pool;
    } else if (std::holds_alternative<FlattenSpec>(spec)) {
      j["type"] = "flatten";
    } else {
      const auto& dense = std::get<DenseSpec>(spec);
      j["type"] = "dense";
      j["units"] = dense.units;
      j["activation"] = to_string(dense.activation);
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<LayerSpec> layer_specs_from_json(const nlohmann::json& arr) {
  std::vector<LayerSpec> specs;
  for (const auto& j : arr) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv1d") {
      specs.emplace_back(Conv1DSpec{j.at("filters").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                                    activation_from_string(j.at("activation").get<std::string>())});
    } else if (type == "maxpool1d") {
      specs.emplace_back(MaxPool1DSpec{j.at("pool").get<std::size_t>()});
    } else if (type == "flatten") {
      specs.emplace_back(FlattenSpec{});
    } else if (type == "dense") {
      specs.emplace_back(DenseSpec{j.at("units").get<std::size_t>(),
                                   activation_from_string(j.at("activation").get<std::string>())});
    } else {
      throw std::invalid_argument("ensemble: unknown layer type '" + type + "'");
    }
  }
  return specs;
}

// --- serialization: manifest.json plus one binary file per model ---

inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

inline void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir) {
  if (ens.models.empty()) throw std::invalid_argument("ensemble: nothing to save");
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = kEnsembleFormatVersion;
  manifest["kind"] = "etd-ensemble";
  manifest["bag_count"] = ens.models.size();
  manifest["threshold"] = ens.threshold;
  manifest["input_length"] = ens.models.front().input_length();
  manifest["architecture"] = layer_specs_to_json(ens.models.front().specs());
  nlohmann::json seeds = nlohmann::json::array();
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < ens.models.size(); ++i) {
    const std::string name = "model_" + std::to_string(i) + ".bin";
    save_model(ens.models[i], dir / name);
    files.push_back(name);
    seeds.push_back(ens.models[i].rng_seed());
  }
  manifest["model_files"] = std::move(files);
  manifest["model_seeds"] = std::move(seeds);
  nlohmann::json plan;
  plan["seed"] = ens.plan.seed;
  nlohmann::json bags = nlohmann::json::array();
  for (const auto& bag : ens.plan.bags) {
    bags.push_back({{"minority", bag.minority_indices}, {"majority", bag.majority_indices}});
  }
  plan["bags"] = std::move(bags);
  manifest["plan"] = std::move(plan);

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("ensemble: cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("ensemble: manifest write failed");
}

inline Ensemble load_ensemble(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("ensemble: cannot open '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("format_version", std::uint32_t{0}) != kEnsembleFormatVersion) {
    throw std::runtime_error("ensemble: unsupported manifest format version");
  }
  Ensemble ens;
  ens.threshold = manifest.at("threshold").get<double>();
  for (const auto& name : manifest.at("model_files")) {
    ens.models.push_back(load_model(dir / name.get<std::string>()));
  }
  if (ens.models.empty() || ens.models.size() % 2 == 0) {
    throw std::runtime_error("ensemble: manifest must list an odd number of models");
  }
  const std::size_t input_length = ens.models.front().input_length();
  for (const auto& m : ens.models) {
    if (m.input_length() != input_length) {
      throw std::runtime_error("ensemble: models disagree on input length");
    }
  }
  ens.plan.seed = manifest.at("plan").at("seed").get<std::uint64_t>();
  for (const auto& bag : manifest.at("plan").at("bags")) {
    Bag b;
    b.minority_indices = bag.at("minority").get<std::vector<std::size_t>>();
    b.majority_indices = bag.at("majority").get<std::vector<std::size_t>>();
    ens.plan.bags.push_back(std::move(b));
  }
  return ens;
}

}  // namespace etd
