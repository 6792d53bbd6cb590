#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

// Straight double loop over points, recomputing every distance on demand.
inline double naive_silhouette(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y) {
  const std::size_t n = x.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < x[i].size(); ++k) s += (x[i][k] - x[j][k]) * (x[i][k] - x[j][k]);
    return std::sqrt(s);
  };
  std::size_t max_label = 0;
  for (auto l : y) max_label = l > max_label ? l : max_label;

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double same = 0.0;
    std::size_t same_n = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && y[j] == y[i]) {
        same += dist(i, j);
        ++same_n;
      }
    if (same_n == 0) continue;
    const double a = same / static_cast<double>(same_n);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c <= max_label; ++c) {
      if (c == y[i]) continue;
      double other = 0.0;
      std::size_t other_n = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (y[j] == c) {
          other += dist(i, j);
          ++other_n;
        }
      if (other_n > 0 && other / static_cast<double>(other_n) < b) b = other / static_cast<double>(other_n);
    }
    const double m = a > b ? a : b;
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

}  // namespace oracle
