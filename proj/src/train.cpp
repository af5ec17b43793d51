#include "voicing/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace voicing::models {

using json = nlohmann::json;

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::kSvm: return "svm";
    case ModelFamily::kMlp: return "mlp";
    case ModelFamily::kCnn: return "cnn";
  }
  return "?";
}

std::optional<ModelFamily> family_from(const std::string& token) {
  if (token == "svm") return ModelFamily::kSvm;
  if (token == "mlp") return ModelFamily::kMlp;
  if (token == "cnn") return ModelFamily::kCnn;
  return std::nullopt;
}

std::pair<double, double> class_weights(std::size_t n_voiced, std::size_t n_unvoiced) {
  if (n_voiced == 0 || n_unvoiced == 0)
    throw DataError("class_weights: both classes must be present");
  const double total = double(n_voiced + n_unvoiced);
  return {total / (2.0 * double(n_voiced)), total / (2.0 * double(n_unvoiced))};
}

std::pair<double, double> class_weights(const std::vector<corpus::Voicing>& labels) {
  std::size_t voiced = 0, unvoiced = 0;
  for (const auto label : labels) {
    if (label == corpus::Voicing::kVoiced)
      ++voiced;
    else if (label == corpus::Voicing::kUnvoiced)
      ++unvoiced;
  }
  return class_weights(voiced, unvoiced);
}

Split stratified_split(const std::vector<int>& y, double dev_fraction,
                       std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 0.5))
    throw UsageError("stratified_split: dev fraction must be in (0, 0.5)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] > 0 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw DataError("stratified_split: both classes must be present");

  std::mt19937_64 rng(seed);
  Split split;
  for (auto* group : {&pos, &neg}) {
    std::shuffle(group->begin(), group->end(), rng);
    const auto n_dev = std::size_t(std::llround(dev_fraction * double(group->size())));
    if (n_dev == 0 || n_dev >= group->size())
      throw DataError("stratified_split: split would leave a class empty");
    split.dev.insert(split.dev.end(), group->begin(), group->begin() + std::ptrdiff_t(n_dev));
    split.train.insert(split.train.end(), group->begin() + std::ptrdiff_t(n_dev), group->end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.dev.begin(), split.dev.end());
  return split;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw UsageError("early stopping patience must be >= 1");
}

bool EarlyStopper::observe(int epoch, double dev_loss) {
  if (dev_loss < best_loss_) {
    best_loss_ = dev_loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

NetworkConfig default_cnn_config(features::FeatureVariant variant, std::uint64_t seed) {
  NetworkConfig config;
  config.seed = seed;
  config.input_channels = 1;
  if (variant == features::FeatureVariant::kFb40) {
    config.input_len = 40;
    // Wide second pool: detectors report pattern presence per spectral half,
    // which keeps them stable when bands shift between corpora.
    config.conv_blocks = {{16, 5, 2}, {32, 3, 8}};
  } else if (variant == features::FeatureVariant::kFft1024) {
    config.input_len = 513;
    config.conv_blocks = {{16, 9, 4}, {32, 5, 32}};
  } else {
    throw UsageError("cnn family expects fft1024 or fb40 input, got " +
                     features::to_string(variant));
  }
  config.fc_sizes = {64, 32};
  return config;
}

NetworkConfig default_mlp_config(std::size_t input_dim, std::uint64_t seed) {
  NetworkConfig config;
  config.seed = seed;
  config.input_len = int(input_dim);
  config.input_channels = 1;
  config.fc_sizes = {128, 64};
  return config;
}

namespace {

std::string hash_config(ModelFamily family, features::FeatureVariant variant,
                        const TrainConfig& config) {
  std::string canon = to_string(family) + "|" + features::to_string(variant) + "|" +
                      std::to_string(config.max_epochs) + "," + std::to_string(config.patience) +
                      "," + format_double(config.dev_fraction) + "," +
                      std::to_string(config.batch_size) + "," + std::to_string(config.seed) +
                      "," + format_double(config.learning_rate) + "," +
                      (config.class_weighting ? (*config.class_weighting ? "w1" : "w0") : "wd") +
                      "," + format_double(config.svm_c) + "," + format_double(config.svm_gamma) +
                      "," + (config.svm_grid_search ? "grid" : "nogrid");
  return to_hex(fnv1a64(canon));
}

struct Dataset {
  std::vector<std::vector<double>> x;  // standardized
  std::vector<int> y;                  // +1 voiced / -1 unvoiced
};

double evaluate_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] > 0 && truth[i] > 0) ++tp;
    if (pred[i] > 0 && truth[i] < 0) ++fp;
    if (pred[i] < 0 && truth[i] > 0) ++fn;
  }
  const double denom = double(2 * tp + fp + fn);
  return denom > 0.0 ? 2.0 * double(tp) / denom : 0.0;
}

TrainResult train_svm(const Dataset& data, const Split& split,
                      features::Standardizer standardizer,
                      const features::FeatureSet& features, const TrainConfig& config) {
  const bool weighting = config.class_weighting.value_or(false);
  std::vector<std::vector<double>> x_train;
  std::vector<int> y_train;
  for (const auto i : split.train) {
    x_train.push_back(data.x[i]);
    y_train.push_back(data.y[i]);
  }
  std::optional<std::pair<double, double>> weights;
  if (weighting) {
    std::size_t pos = 0, neg = 0;
    for (const int label : y_train) (label > 0 ? pos : neg)++;
    weights = class_weights(pos, neg);
  }

  std::vector<std::pair<double, double>> grid;
  if (config.svm_grid_search) {
    for (const double c : {0.1, 1.0, 10.0, 100.0})
      for (const double g : {1e-3, 1e-2, 1e-1, 1.0, 10.0}) grid.emplace_back(c, g);
  } else {
    grid.emplace_back(config.svm_c, config.svm_gamma);
  }

  TrainResult result;
  std::optional<SvmModel> best_model;
  double best_f1 = -1.0;
  int candidate = 0;
  for (const auto& [c, gamma] : grid) {
    SvmConfig svm_config;
    svm_config.c = c;
    svm_config.gamma = gamma;
    svm_config.seed = config.seed;
    svm_config.class_weights = weights;
    auto model = svm_train(x_train, y_train, svm_config);

    std::vector<int> dev_truth, dev_pred;
    double dev_loss = 0.0;  // hinge loss, for the log only
    for (const auto i : split.dev) {
      const double margin = model.decision(data.x[i]);
      dev_truth.push_back(data.y[i]);
      dev_pred.push_back(margin >= 0.0 ? 1 : -1);
      dev_loss += std::max(0.0, 1.0 - double(data.y[i]) * margin);
    }
    dev_loss /= double(split.dev.size());
    const double dev_f1 = evaluate_f1(dev_truth, dev_pred);
    result.log.push_back({candidate++, 0.0, dev_loss, dev_f1});
    if (dev_f1 > best_f1) {
      best_f1 = dev_f1;
      best_model = std::move(model);
    }
  }

  result.artifact.family = ModelFamily::kSvm;
  result.artifact.variant = features.variant;
  result.artifact.standardizer = std::move(standardizer);
  result.artifact.svm = std::move(best_model);
  result.artifact.seed = config.seed;
  result.artifact.config_hash = hash_config(ModelFamily::kSvm, features.variant, config);
  result.artifact.corpus_id = features.corpus_id;
  return result;
}

TrainResult train_network(ModelFamily family, const Dataset& data, const Split& split,
                          features::Standardizer standardizer,
                          const features::FeatureSet& features, const TrainConfig& config) {
  const bool weighting = config.class_weighting.value_or(true);
  NetworkConfig net_config =
      family == ModelFamily::kCnn
          ? default_cnn_config(features.variant, config.seed)
          : default_mlp_config(data.x.front().size(), config.seed);
  if (std::size_t(net_config.input_len) != data.x.front().size())
    throw DataError("network input length does not match feature dimension");
  Network net(net_config);

  std::pair<double, double> weights{1.0, 1.0};
  if (weighting) {
    std::size_t pos = 0, neg = 0;
    for (const auto i : split.train) (data.y[i] > 0 ? pos : neg)++;
    weights = class_weights(pos, neg);
  }
  auto sample_weight = [&](int label) { return label > 0 ? weights.first : weights.second; };

  AdamState adam(net.n_params(), config.learning_rate);
  EarlyStopper stopper(config.patience);
  Workspace ws;
  std::vector<double> grad(net.n_params(), 0.0);
  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  auto dev_metrics = [&](double& loss, double& f1) {
    loss = 0.0;
    std::vector<int> truth, pred;
    for (const auto i : split.dev) {
      const double y01 = data.y[i] > 0 ? 1.0 : 0.0;
      loss += net.loss(data.x[i], y01, sample_weight(data.y[i]), ws);
      truth.push_back(data.y[i]);
      pred.push_back(ws.logit >= 0.0 ? 1 : -1);
    }
    loss /= double(split.dev.size());
    f1 = evaluate_f1(truth, pred);
  };

  TrainResult result;
  std::vector<double> best_params = net.params();
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += std::size_t(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + std::size_t(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        const double y01 = data.y[i] > 0 ? 1.0 : 0.0;
        train_loss += net.backward(data.x[i], y01, sample_weight(data.y[i]), ws, grad);
      }
      const double inv = 1.0 / double(end - start);
      for (auto& g : grad) g *= inv;
      adam_step(adam, net.params(), grad);
    }
    train_loss /= double(order.size());

    double dev_loss = 0.0, dev_f1 = 0.0;
    dev_metrics(dev_loss, dev_f1);
    result.log.push_back({epoch, train_loss, dev_loss, dev_f1});
    const bool stop = stopper.observe(epoch, dev_loss);
    if (stopper.best_epoch() == epoch) best_params = net.params();
    if (stop) break;
  }
  net.params() = best_params;

  result.artifact.family = family;
  result.artifact.variant = features.variant;
  result.artifact.standardizer = std::move(standardizer);
  result.artifact.net_config = net_config;
  result.artifact.net_params = std::move(net.params());
  result.artifact.seed = config.seed;
  result.artifact.config_hash = hash_config(family, features.variant, config);
  result.artifact.corpus_id = features.corpus_id;
  return result;
}

}  // namespace

TrainResult train(ModelFamily family, const features::FeatureSet& features,
                  const TrainConfig& config) {
  if (features.rows.size() < 4)
    throw DataError("train: need at least a handful of samples");
  std::vector<std::vector<double>> raw;
  std::vector<int> y;
  raw.reserve(features.rows.size());
  for (const auto& row : features.rows) {
    raw.push_back(row.values);
    y.push_back(row.label == corpus::Voicing::kVoiced ? 1 : -1);
  }
  auto standardizer = features::fit_standardizer(raw);
  Dataset data;
  data.y = std::move(y);
  data.x.reserve(raw.size());
  for (const auto& row : raw) data.x.push_back(standardizer.apply(row));

  const auto split = stratified_split(data.y, config.dev_fraction, config.seed);
  if (family == ModelFamily::kSvm)
    return train_svm(data, split, std::move(standardizer), features, config);
  return train_network(family, data, split, std::move(standardizer), features, config);
}

Prediction ModelArtifact::predict(std::span<const double> raw) const {
  const auto x = standardizer.apply(raw);  // also the dimension guard
  Prediction prediction;
  if (family == ModelFamily::kSvm) {
    if (!svm) throw DataError("artifact: missing svm payload");
    const auto p = svm_predict(*svm, x);
    prediction.label = p.positive ? corpus::Voicing::kVoiced : corpus::Voicing::kUnvoiced;
    prediction.score = p.margin;
  } else {
    if (!net_config) throw DataError("artifact: missing network payload");
    thread_local Workspace ws;
    const auto net = Network::deserialize(*net_config, net_params);
    const double p = net.forward(x, ws);
    prediction.label = p >= 0.5 ? corpus::Voicing::kVoiced : corpus::Voicing::kUnvoiced;
    prediction.score = p;
  }
  return prediction;
}

std::string training_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "epoch,train_loss,dev_loss,dev_f1\n";
  for (const auto& row : log)
    out += std::to_string(row.epoch) + "," + format_double(row.train_loss) + "," +
           format_double(row.dev_loss) + "," + format_double(row.dev_f1) + "\n";
  return out;
}

namespace {

constexpr int kModelVersion = 1;

std::string encode_doubles(const std::vector<double>& values) {
  return base64_encode(values.data(), values.size() * sizeof(double));
}

std::vector<double> decode_doubles(const std::string& text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(double) != 0)
    throw DataError("model: parameter blob is not a whole number of doubles");
  std::vector<double> values(bytes.size() / sizeof(double));
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

std::string payload_checksum(const json& j) {
  std::uint64_t h = fnv1a64(j.at("family").get<std::string>());
  h = fnv1a64(j.at("variant").get<std::string>().data(),
              j.at("variant").get<std::string>().size(), h);
  auto mix = [&h](const std::string& s) { h = fnv1a64(s.data(), s.size(), h); };
  mix(j.at("standardizer").at("mean").get<std::string>());
  mix(j.at("standardizer").at("std").get<std::string>());
  if (j.contains("svm")) {
    mix(j.at("svm").at("alphas").get<std::string>());
    mix(j.at("svm").at("labels").get<std::string>());
    mix(j.at("svm").at("support_vectors").get<std::string>());
  }
  if (j.contains("nn")) mix(j.at("nn").at("params").get<std::string>());
  return to_hex(h);
}

}  // namespace

std::string serialize_model(const ModelArtifact& artifact) {
  json j;
  j["format"] = "voicing-model";
  j["version"] = kModelVersion;
  j["family"] = to_string(artifact.family);
  j["variant"] = features::to_string(artifact.variant);
  j["metadata"] = {{"seed", artifact.seed},
                   {"config_hash", artifact.config_hash},
                   {"corpus_id", artifact.corpus_id}};
  j["standardizer"] = {{"dim", artifact.standardizer.dim()},
                       {"mean", encode_doubles(artifact.standardizer.mean)},
                       {"std", encode_doubles(artifact.standardizer.std_dev)}};
  if (artifact.family == ModelFamily::kSvm) {
    if (!artifact.svm) throw DataError("model: svm artifact without svm payload");
    const auto& svm = *artifact.svm;
    std::vector<double> flat;
    flat.reserve(svm.support_vectors.size() * svm.dim());
    for (const auto& sv : svm.support_vectors) flat.insert(flat.end(), sv.begin(), sv.end());
    j["svm"] = {{"gamma", svm.gamma},
                {"c", svm.c},
                {"bias", svm.bias},
                {"n_sv", svm.support_vectors.size()},
                {"dim", svm.dim()},
                {"alphas", encode_doubles(svm.alphas)},
                {"labels", encode_doubles(svm.labels)},
                {"support_vectors", encode_doubles(flat)}};
  } else {
    if (!artifact.net_config) throw DataError("model: network artifact without payload");
    const auto& cfg = *artifact.net_config;
    json blocks = json::array();
    for (const auto& b : cfg.conv_blocks)
      blocks.push_back({b.n_filters, b.kernel_len, b.pool_len});
    j["nn"] = {{"input_len", cfg.input_len},
               {"input_channels", cfg.input_channels},
               {"conv_blocks", blocks},
               {"fc_sizes", cfg.fc_sizes},
               {"seed", cfg.seed},
               {"params", encode_doubles(artifact.net_params)}};
  }
  j["checksum"] = payload_checksum(j);
  return j.dump(2) + "\n";
}

ModelArtifact deserialize_model(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "voicing-model")
    throw DataError("model: not a voicing-model container");
  if (j.value("version", -1) != kModelVersion)
    throw DataError("model: unsupported container version " +
                    std::to_string(j.value("version", -1)));
  if (j.value("checksum", "") != payload_checksum(j))
    throw DataError("model: checksum mismatch (corrupted parameter blob?)");

  ModelArtifact artifact;
  const auto family = family_from(j.at("family").get<std::string>());
  if (!family) throw DataError("model: unknown family");
  artifact.family = *family;
  const auto variant = features::variant_from(j.at("variant").get<std::string>());
  if (!variant) throw DataError("model: unknown feature variant");
  artifact.variant = *variant;
  artifact.seed = j.at("metadata").value("seed", std::uint64_t(0));
  artifact.config_hash = j.at("metadata").value("config_hash", "");
  artifact.corpus_id = j.at("metadata").value("corpus_id", "");
  artifact.standardizer.mean = decode_doubles(j.at("standardizer").at("mean"));
  artifact.standardizer.std_dev = decode_doubles(j.at("standardizer").at("std"));
  if (artifact.standardizer.mean.size() != j.at("standardizer").at("dim").get<std::size_t>())
    throw DataError("model: standardizer dimension mismatch");

  if (artifact.family == ModelFamily::kSvm) {
    const auto& js = j.at("svm");
    SvmModel svm;
    svm.gamma = js.at("gamma").get<double>();
    svm.c = js.at("c").get<double>();
    svm.bias = js.at("bias").get<double>();
    svm.alphas = decode_doubles(js.at("alphas"));
    svm.labels = decode_doubles(js.at("labels"));
    const auto flat = decode_doubles(js.at("support_vectors"));
    const auto n_sv = js.at("n_sv").get<std::size_t>();
    const auto dim = js.at("dim").get<std::size_t>();
    if (svm.alphas.size() != n_sv || svm.labels.size() != n_sv || flat.size() != n_sv * dim)
      throw DataError("model: inconsistent svm payload sizes");
    svm.support_vectors.reserve(n_sv);
    for (std::size_t i = 0; i < n_sv; ++i)
      svm.support_vectors.emplace_back(flat.begin() + std::ptrdiff_t(i * dim),
                                       flat.begin() + std::ptrdiff_t((i + 1) * dim));
    artifact.svm = std::move(svm);
  } else {
    const auto& jn = j.at("nn");
    NetworkConfig cfg;
    cfg.input_len = jn.at("input_len").get<int>();
    cfg.input_channels = jn.at("input_channels").get<int>();
    for (const auto& b : jn.at("conv_blocks"))
      cfg.conv_blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>()});
    cfg.fc_sizes = jn.at("fc_sizes").get<std::vector<int>>();
    cfg.seed = jn.at("seed").get<std::uint64_t>();
    artifact.net_params = decode_doubles(jn.at("params"));
    Network::deserialize(cfg, artifact.net_params);  // validates the size
    artifact.net_config = std::move(cfg);
  }
  return artifact;
}

void save_model(const ModelArtifact& artifact, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("model: cannot write " + path.string());
  out << serialize_model(artifact);
}

ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("model: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace voicing::models
