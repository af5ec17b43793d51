#pragma once

#include <filesystem>
#include <optional>

#include "voicing/features.hpp"
#include "voicing/nn.hpp"
#include "voicing/svm.hpp"

// Family-agnostic training: inverse-frequency class weights, seeded
// stratified dev split, patience-based early stopping, and the serializable
// model artifact shared by the SVM, feedforward and CNN families.

namespace voicing::models {

enum class ModelFamily { kSvm, kMlp, kCnn };

std::string to_string(ModelFamily family);
std::optional<ModelFamily> family_from(const std::string& token);

// w_c = N_total / (2 N_c); throws DataError when a class is absent.
std::pair<double, double> class_weights(std::size_t n_voiced, std::size_t n_unvoiced);
std::pair<double, double> class_weights(const std::vector<corpus::Voicing>& labels);

// Seeded stratified split preserving class proportions within one sample.
// Throws DataError when either side of the split would leave a class empty.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};
Split stratified_split(const std::vector<int>& y, double dev_fraction,
                       std::uint64_t seed);

// Stop after `patience` consecutive epochs without a new strict loss minimum.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  // Feed per-epoch dev losses in order; true means stop after this epoch.
  bool observe(int epoch, double dev_loss);
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int bad_epochs_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  int max_epochs = 60;
  int patience = 10;
  double dev_fraction = 0.10;
  int batch_size = 32;
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  // Family default when unset: on for mlp/cnn, off for svm.
  std::optional<bool> class_weighting;
  // SVM hyperparameters; grid search scores C x gamma on the dev split.
  double svm_c = 1.0;
  double svm_gamma = 0.0;  // <= 0 selects 1/(dim*var)
  bool svm_grid_search = false;
};

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_f1 = 0.0;
};

struct Prediction {
  corpus::Voicing label = corpus::Voicing::kUnvoiced;
  double score = 0.0;  // SVM margin or network probability
};

struct ModelArtifact {
  ModelFamily family = ModelFamily::kSvm;
  features::FeatureVariant variant = features::FeatureVariant::kCues;
  features::Standardizer standardizer;

  std::optional<SvmModel> svm;
  std::optional<NetworkConfig> net_config;
  std::vector<double> net_params;

  std::uint64_t seed = 0;
  std::string config_hash;
  std::string corpus_id;

  // Standardizes then dispatches to the stored model. Refuses inputs whose
  // dimension does not match the training variant.
  Prediction predict(std::span<const double> raw) const;
};

struct TrainResult {
  ModelArtifact artifact;
  std::vector<TrainLogRow> log;
};

// Trains one family on a feature set: fits the standardizer, splits off the
// stratified dev fraction, optimizes with early stopping (networks) or SMO
// (SVM, per-grid-candidate log rows), and restores the best-dev parameters.
// Deterministic for a fixed config.
TrainResult train(ModelFamily family, const features::FeatureSet& features,
                  const TrainConfig& config = {});

// Default topologies for the raw-input networks.
NetworkConfig default_cnn_config(features::FeatureVariant variant, std::uint64_t seed);
NetworkConfig default_mlp_config(std::size_t input_dim, std::uint64_t seed);

std::string training_log_csv(const std::vector<TrainLogRow>& log);

// Versioned JSON container with base64 parameter blobs and a checksum.
// Parameters round-trip bit-exactly.
void save_model(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_model(const std::filesystem::path& path);
std::string serialize_model(const ModelArtifact& artifact);
ModelArtifact deserialize_model(const std::string& text);

}  // namespace voicing::models
