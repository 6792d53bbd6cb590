#pragma once

// Stage feature export and a silhouette-style separation score of the pooled
// features grouped by noise class.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "nifm/training.hpp"

namespace nifm {

struct FeatureTable {
  std::size_t stage = 0;
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;             // true noise class of each image
  std::vector<std::vector<double>> features;  // GAP of F_stage, one row per image
};

// Pools F_stage (1..5) for every sample; F1..F4 are the modulated features
// when the model has fusion blocks. `policy` picks the indicators fed in.
FeatureTable export_features(const Model& model, const std::vector<Sample>& samples, std::size_t stage,
                             const IndicatorPolicy& policy = {}, std::size_t batch_size = 8);

// Mean over points of (b - a) / max(a, b), with a the mean distance to the
// other members of the point's class and b the smallest mean distance to
// another class. Singleton classes score 0 and so does 0 / 0.
double silhouette_score(const std::vector<std::vector<double>>& features, const std::vector<std::size_t>& labels);

// Header: id,label,class,f0..f{C-1}.
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);

}  // namespace nifm
