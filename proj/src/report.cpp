#include "nifm/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "nifm/error.hpp"

namespace nifm {

FeatureTable export_features(const Model& model, const std::vector<Sample>& samples, std::size_t stage,
                             const IndicatorPolicy& policy, std::size_t batch_size) {
  if (stage < 1 || stage > kEncoderStages) throw ConfigError("feature stage must lie in 1..5");
  if (samples.empty()) throw DataError("feature export needs at least one sample");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");

  NoGradGuard no_grad;
  const auto classes = policy.assign(samples);
  FeatureTable table;
  table.stage = stage;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    std::vector<std::size_t> idx, cls;
    for (std::size_t j = i; j < std::min(samples.size(), i + batch_size); ++j) {
      idx.push_back(j);
      cls.push_back(classes[j]);
    }
    const Batch batch = make_batch(samples, idx, cls);
    const auto enc = encoder_forward(model.encoder(), batch.images, batch.indicators);
    const Tensor pooled = global_average_pool(enc.features[stage - 1]);  // [N, C]
    const std::size_t c = pooled.dim(1);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto row = pooled.data().subspan(j * c, c);
      table.ids.push_back(samples[idx[j]].id);
      table.labels.push_back(samples[idx[j]].class_index);
      table.features.emplace_back(row.begin(), row.end());
    }
  }
  return table;
}

double silhouette_score(const std::vector<std::vector<double>>& features, const std::vector<std::size_t>& labels) {
  const std::size_t n = features.size();
  if (n != labels.size()) throw DimensionError("one label per feature row is required");
  if (n == 0) throw DataError("silhouette of an empty set");
  const std::size_t dim = features[0].size();
  for (const auto& f : features)
    if (f.size() != dim) throw DimensionError("feature rows differ in length");

  std::map<std::size_t, std::size_t> sizes;
  for (auto l : labels) ++sizes[l];
  if (sizes.size() < 2) throw DataError("silhouette needs at least two classes");

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = features[i][k] - features[j][k];
        s += d * d;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<std::size_t, double> sum;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += dist[i * n + j];
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sum)
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feature table", path.string());
  const std::size_t dim = table.features.empty() ? 0 : table.features[0].size();
  out << "id,label,class";
  for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    out << table.ids[i] << ',' << table.labels[i] << ',' << NoiseClassTable::standard().name(table.labels[i]);
    for (double v : table.features[i]) out << ',' << csv_number(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing feature table", path.string());
}

}  // namespace nifm
