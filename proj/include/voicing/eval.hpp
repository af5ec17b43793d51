#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voicing/features.hpp"
#include "voicing/train.hpp"

// Metrics and cross-corpus comparison: voiced-class F1, overall accuracy,
// and the relative error rate increment against the training language.

namespace voicing::eval {

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;  // voiced is the positive class

  std::size_t total() const { return tp + fp + fn + tn; }
};

// Exact counts; throws DataError on length mismatch or empty input.
ConfusionMatrix confusion(const std::vector<corpus::Voicing>& predictions,
                          const std::vector<corpus::Voicing>& labels);

// f1 = 2tp / (2tp + fp + fn), defined 0 when the denominator is 0.
double f1_voiced(const ConfusionMatrix& matrix);
double accuracy(const ConfusionMatrix& matrix);

struct EvalReport {
  std::string corpus_id;
  features::FeatureVariant variant = features::FeatureVariant::kCues;
  models::ModelFamily family = models::ModelFamily::kSvm;
  ConfusionMatrix matrix;
  double f1 = 0.0;
  double accuracy = 0.0;
  double error_rate = 0.0;  // 1 - accuracy
};

EvalReport make_report(std::string corpus_id, features::FeatureVariant variant,
                       models::ModelFamily family, const ConfusionMatrix& matrix);

// (err_other / err_ref - 1) * 100; requires err_ref > 0.
double relative_error_increment(double err_ref, double err_other);

struct CrossLingualReport {
  EvalReport reference;
  std::vector<EvalReport> others;
  // One entry per other corpus; empty when the reference error rate is 0.
  std::vector<std::optional<double>> increments_pct;
};

// All reports must share the feature variant and model family.
CrossLingualReport cross_lingual_report(const EvalReport& reference,
                                        const std::vector<EvalReport>& others);

// `variant,model,corpus,tp,fp,fn,tn,f1,accuracy,error_rate,increment_pct`;
// the reference row leaves increment_pct empty.
std::string report_csv(const CrossLingualReport& report);
CrossLingualReport parse_report_csv(const std::string& text);

std::string report_table(const CrossLingualReport& report);

// Merges several cross-lingual reports into one increment table: one row per
// (variant, model), one column per non-reference corpus.
std::string increment_table(const std::vector<CrossLingualReport>& reports);
std::string increment_table_csv(const std::vector<CrossLingualReport>& reports);

}  // namespace voicing::eval
