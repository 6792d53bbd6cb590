#pragma once

// Saliency evaluation: MAE, S-measure, F-measure and E-measure families, and
// the precision/recall and F curves over 256 thresholds t = k/255.

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace nifm {

inline constexpr std::size_t kThresholds = 256;

// Row-major H x W maps. pred in [0,1]; gt strictly binary.
struct EvalPair {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pred;
  std::vector<double> gt;

  EvalPair() = default;
  // Throws DimensionError on size mismatch, DomainError on out-of-range values.
  EvalPair(std::size_t height, std::size_t width, std::vector<double> pred, std::vector<double> gt);

  std::size_t size() const { return pred.size(); }
};

struct MetricReport {
  double mae = 0.0;
  double s_measure = 0.0;
  double f_adp = 0.0;
  double f_mean = 0.0;
  double f_max = 0.0;
  double e_adp = 0.0;
  double e_mean = 0.0;
  double e_max = 0.0;
  std::vector<std::pair<double, double>> pr_curve;  // (precision, recall) per threshold
  std::vector<double> f_curve;

  // Scalars in column order: mae, s_measure, f_adp, f_mean, f_max, e_adp, e_mean, e_max.
  std::array<double, 8> scalars() const;
};

inline const std::array<const char*, 8> kMetricNames{"mae", "s_measure", "f_adp", "f_mean",
                                                     "f_max", "e_adp", "e_mean", "e_max"};

struct FMeasures {
  double f_adp = 0.0;
  double f_mean = 0.0;
  double f_max = 0.0;
  std::vector<std::pair<double, double>> pr_curve;
  std::vector<double> f_curve;
};

struct EMeasures {
  double e_adp = 0.0;
  double e_mean = 0.0;
  double e_max = 0.0;
};

double threshold_at(std::size_t k);
// min(2 * mean(pred), 1)
double adaptive_threshold(const EvalPair& pair);

double mae(const EvalPair& pair);
// Precision, recall or F with a zero denominator count as 0.
FMeasures f_measures(const EvalPair& pair, double beta2 = 0.3);
// Structure measure: alpha * object + (1 - alpha) * region, clamped to [0,1].
double s_measure(const EvalPair& pair, double alpha = 0.5);
EMeasures e_measures(const EvalPair& pair);

MetricReport evaluate(const EvalPair& pair);

// Mean of each scalar and pointwise mean of the curves; the result does not
// depend on input order. Throws DataError on an empty list.
// Fixed CSV number format: 9 significant digits, '.' separator.
std::string csv_number(double v);

MetricReport aggregate(const std::vector<MetricReport>& reports);

// metrics.csv: image,<scalars...> per row, then an AGGREGATE row.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports, const MetricReport& overall);
// pr_curve.csv: threshold,precision,recall; f_curve.csv: threshold,f.
void write_curve_csvs(const std::filesystem::path& dir, const MetricReport& report);

}  // namespace nifm
