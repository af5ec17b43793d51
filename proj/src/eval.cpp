#include "voicing/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace voicing::eval {

ConfusionMatrix confusion(const std::vector<corpus::Voicing>& predictions,
                          const std::vector<corpus::Voicing>& labels) {
  if (predictions.size() != labels.size())
    throw DataError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  if (predictions.empty()) throw DataError("confusion: empty input");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == corpus::Voicing::kVoiced;
    const bool truth = labels[i] == corpus::Voicing::kVoiced;
    if (pred && truth)
      ++m.tp;
    else if (pred && !truth)
      ++m.fp;
    else if (!pred && truth)
      ++m.fn;
    else
      ++m.tn;
  }
  return m;
}

double f1_voiced(const ConfusionMatrix& m) {
  const double denom = double(2 * m.tp + m.fp + m.fn);
  return denom > 0.0 ? 2.0 * double(m.tp) / denom : 0.0;
}

double accuracy(const ConfusionMatrix& m) {
  if (m.total() == 0) throw DataError("accuracy: empty confusion matrix");
  return double(m.tp + m.tn) / double(m.total());
}

EvalReport make_report(std::string corpus_id, features::FeatureVariant variant,
                       models::ModelFamily family, const ConfusionMatrix& matrix) {
  EvalReport report;
  report.corpus_id = std::move(corpus_id);
  report.variant = variant;
  report.family = family;
  report.matrix = matrix;
  report.f1 = f1_voiced(matrix);
  report.accuracy = accuracy(matrix);
  report.error_rate = 1.0 - report.accuracy;
  return report;
}

double relative_error_increment(double err_ref, double err_other) {
  if (!(err_ref > 0.0))
    throw DataError("relative_error_increment: reference error rate must be positive");
  return (err_other / err_ref - 1.0) * 100.0;
}

CrossLingualReport cross_lingual_report(const EvalReport& reference,
                                        const std::vector<EvalReport>& others) {
  CrossLingualReport report;
  report.reference = reference;
  for (const auto& other : others) {
    if (other.variant != reference.variant || other.family != reference.family)
      throw DataError("cross_lingual_report: mixed variants (" +
                      features::to_string(reference.variant) + "/" +
                      models::to_string(reference.family) + " vs " +
                      features::to_string(other.variant) + "/" + models::to_string(other.family) +
                      ")");
    report.others.push_back(other);
    if (reference.error_rate > 0.0)
      report.increments_pct.push_back(
          relative_error_increment(reference.error_rate, other.error_rate));
    else
      report.increments_pct.push_back(std::nullopt);
  }
  return report;
}

namespace {

std::string row_csv(const EvalReport& r, const std::optional<double>& increment) {
  std::string out = features::to_string(r.variant) + "," + models::to_string(r.family) + "," +
                    r.corpus_id + "," + std::to_string(r.matrix.tp) + "," +
                    std::to_string(r.matrix.fp) + "," + std::to_string(r.matrix.fn) + "," +
                    std::to_string(r.matrix.tn) + "," + format_double(r.f1) + "," +
                    format_double(r.accuracy) + "," + format_double(r.error_rate) + ",";
  if (increment) out += format_double(*increment);
  return out + "\n";
}

}  // namespace

std::string report_csv(const CrossLingualReport& report) {
  std::string out = "variant,model,corpus,tp,fp,fn,tn,f1,accuracy,error_rate,increment_pct\n";
  out += row_csv(report.reference, std::nullopt);
  for (std::size_t i = 0; i < report.others.size(); ++i)
    out += row_csv(report.others[i], report.increments_pct[i]);
  return out;
}

CrossLingualReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("variant,model,corpus,", 0) != 0)
    throw DataError("report csv: missing header");
  CrossLingualReport report;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() < 10) throw DataError("report csv: short row `" + line + "`");
    EvalReport r;
    const auto variant = features::variant_from(cells[0]);
    const auto family = models::family_from(cells[1]);
    if (!variant || !family) throw DataError("report csv: bad variant/model in `" + line + "`");
    r.variant = *variant;
    r.family = *family;
    r.corpus_id = cells[2];
    r.matrix.tp = std::stoul(cells[3]);
    r.matrix.fp = std::stoul(cells[4]);
    r.matrix.fn = std::stoul(cells[5]);
    r.matrix.tn = std::stoul(cells[6]);
    r.f1 = std::stod(cells[7]);
    r.accuracy = std::stod(cells[8]);
    r.error_rate = std::stod(cells[9]);
    if (first) {
      report.reference = r;
      first = false;
    } else {
      report.others.push_back(r);
      if (cells.size() >= 11 && !cells[10].empty())
        report.increments_pct.push_back(std::stod(cells[10]));
      else
        report.increments_pct.push_back(std::nullopt);
    }
  }
  if (first) throw DataError("report csv: no rows");
  return report;
}

std::string report_table(const CrossLingualReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-12s %-6s %-12s %8s %8s %8s %12s\n", "variant", "model",
                "corpus", "f1", "acc", "err", "increment%");
  out += buf;
  auto line = [&](const EvalReport& r, const std::optional<double>& inc) {
    char inc_buf[32] = "-";
    if (inc) std::snprintf(inc_buf, sizeof(inc_buf), "%.1f", *inc);
    std::snprintf(buf, sizeof(buf), "%-12s %-6s %-12s %8.4f %8.4f %8.4f %12s\n",
                  features::to_string(r.variant).c_str(), models::to_string(r.family).c_str(),
                  r.corpus_id.c_str(), r.f1, r.accuracy, r.error_rate, inc_buf);
    out += buf;
  };
  line(report.reference, std::nullopt);
  for (std::size_t i = 0; i < report.others.size(); ++i)
    line(report.others[i], report.increments_pct[i]);
  return out;
}

namespace {

std::vector<std::string> other_corpora(const std::vector<CrossLingualReport>& reports) {
  std::vector<std::string> ids;
  for (const auto& report : reports)
    for (const auto& other : report.others)
      if (std::find(ids.begin(), ids.end(), other.corpus_id) == ids.end())
        ids.push_back(other.corpus_id);
  return ids;
}

}  // namespace

std::string increment_table(const std::vector<CrossLingualReport>& reports) {
  const auto corpora = other_corpora(reports);
  char buf[256];
  std::string out;
  std::string header = "relative error rate increment (%)\n";
  std::snprintf(buf, sizeof(buf), "%-24s", "model");
  header += buf;
  for (const auto& id : corpora) {
    std::snprintf(buf, sizeof(buf), " %12s", id.c_str());
    header += buf;
  }
  out += header + "\n";
  for (const auto& report : reports) {
    const std::string name = features::to_string(report.reference.variant) + "+" +
                             models::to_string(report.reference.family);
    std::snprintf(buf, sizeof(buf), "%-24s", name.c_str());
    out += buf;
    for (const auto& id : corpora) {
      std::string cell = "-";
      for (std::size_t i = 0; i < report.others.size(); ++i)
        if (report.others[i].corpus_id == id && report.increments_pct[i]) {
          std::snprintf(buf, sizeof(buf), "%.1f", *report.increments_pct[i]);
          cell = buf;
        }
      std::snprintf(buf, sizeof(buf), " %12s", cell.c_str());
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string increment_table_csv(const std::vector<CrossLingualReport>& reports) {
  const auto corpora = other_corpora(reports);
  std::string out = "variant,model";
  for (const auto& id : corpora) out += "," + id;
  out += "\n";
  for (const auto& report : reports) {
    out += features::to_string(report.reference.variant) + "," +
           models::to_string(report.reference.family);
    for (const auto& id : corpora) {
      out += ",";
      for (std::size_t i = 0; i < report.others.size(); ++i)
        if (report.others[i].corpus_id == id && report.increments_pct[i])
          out += format_double(*report.increments_pct[i]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace voicing::eval
