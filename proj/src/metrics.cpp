#include "nifm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nifm/error.hpp"

namespace nifm {

EvalPair::EvalPair(std::size_t h, std::size_t w, std::vector<double> p, std::vector<double> g)
    : height(h), width(w), pred(std::move(p)), gt(std::move(g)) {
  if (h * w == 0) throw DimensionError("evaluation maps must be non-empty");
  if (pred.size() != h * w || gt.size() != h * w) {
    throw DimensionError("evaluation maps must hold " + std::to_string(h * w) + " values, got pred " +
                         std::to_string(pred.size()) + " and gt " + std::to_string(gt.size()));
  }
  for (double v : pred) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("prediction value outside [0,1]");
  }
  for (double v : gt) {
    if (v != 0.0 && v != 1.0) throw DomainError("ground truth must be binary");
  }
}

std::array<double, 8> MetricReport::scalars() const {
  return {mae, s_measure, f_adp, f_mean, f_max, e_adp, e_mean, e_max};
}

namespace {

constexpr double kEps = 2.220446049250313e-16;

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

double f_from(const Confusion& c, double beta2, double* precision = nullptr, double* recall = nullptr) {
  const double p = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
  const double r = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0.0;
  if (precision) *precision = p;
  if (recall) *recall = r;
  const double den = beta2 * p + r;
  return den > 0 ? (1.0 + beta2) * p * r / den : 0.0;
}

// Every pixel in one (gt, binarized) cell shares the same enhanced-alignment
// value, so E only needs the four counts.
double e_from(const Confusion& c) {
  const double n = c.tp + c.fp + c.fn + c.tn;
  if (c.tp + c.fn == 0) return (n - c.fp) / n;  // empty ground truth: enhanced = 1 - B
  if (c.fp + c.tn == 0) return c.tp / n;        // full ground truth: enhanced = B
  const double mg = (c.tp + c.fn) / n, mb = (c.tp + c.fp) / n;
  auto enhanced = [&](double g, double b) {
    const double pg = g - mg, pb = b - mb;
    const double xi = 2.0 * pg * pb / (pg * pg + pb * pb + kEps);
    return (xi + 1.0) * (xi + 1.0) / 4.0;
  };
  return (c.tp * enhanced(1, 1) + c.fp * enhanced(0, 1) + c.fn * enhanced(1, 0) + c.tn * enhanced(0, 0)) / n;
}

Confusion confusion_at(const EvalPair& pair, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    const bool b = pair.pred[i] >= threshold, g = pair.gt[i] > 0.5;
    (g ? (b ? c.tp : c.fn) : (b ? c.fp : c.tn)) += 1;
  }
  return c;
}

// Number of thresholds k/255 that p reaches.
std::size_t levels_reached(double p) {
  auto k = static_cast<std::ptrdiff_t>(std::floor(p * 255.0));
  k = std::clamp<std::ptrdiff_t>(k, 0, 255);
  while (k < 255 && threshold_at(static_cast<std::size_t>(k + 1)) <= p) ++k;
  while (k >= 0 && threshold_at(static_cast<std::size_t>(k)) > p) --k;
  return static_cast<std::size_t>(k + 1);
}

// Confusion counts at every threshold from one histogram pass.
std::vector<Confusion> confusion_curve(const EvalPair& pair) {
  std::array<double, kThresholds + 1> fg{}, bg{};
  for (std::size_t i = 0; i < pair.size(); ++i) (pair.gt[i] > 0.5 ? fg : bg)[levels_reached(pair.pred[i])] += 1;
  const double total_fg = std::accumulate(fg.begin(), fg.end(), 0.0);
  const double total_bg = std::accumulate(bg.begin(), bg.end(), 0.0);
  std::vector<Confusion> curve(kThresholds);
  double fg_above = 0.0, bg_above = 0.0;  // pixels reaching threshold k
  for (std::size_t k = kThresholds; k-- > 0;) {
    fg_above += fg[k + 1];
    bg_above += bg[k + 1];
    curve[k] = {fg_above, bg_above, total_fg - fg_above, total_bg - bg_above};
  }
  return curve;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double object_score(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double x = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - x) * (v - x);
  const double sigma = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const EvalPair& pair) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (pair.gt[i] > 0.5) {
      fg.push_back(pair.pred[i]);
    } else {
      bg.push_back(1.0 - pair.pred[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(pair.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double block_ssim(const EvalPair& pair, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  const std::size_t count = (r1 - r0) * (c1 - c0);
  if (count == 0) return 0.0;
  const double n = static_cast<double>(count);
  double sx = 0.0, sy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      sx += pair.pred[r * pair.width + c];
      sy += pair.gt[r * pair.width + c];
    }
  }
  const double x = sx / n, y = sy / n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = pair.pred[r * pair.width + c] - x, dy = pair.gt[r * pair.width + c] - y;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  vx /= n - 1.0 + kEps;
  vy /= n - 1.0 + kEps;
  cxy /= n - 1.0 + kEps;
  const double a = 4.0 * x * y * cxy;
  const double b = (x * x + y * y) * (vx + vy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const EvalPair& pair) {
  const std::size_t h = pair.height, w = pair.width;
  double total = 0.0, wx = 0.0, wy = 0.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double g = pair.gt[r * w + c];
      total += g;
      wx += g * static_cast<double>(c + 1);
      wy += g * static_cast<double>(r + 1);
    }
  }
  // 1-based centroid, rounded half away from zero; it is the size of the
  // top/left blocks.
  const auto cx = static_cast<std::size_t>(std::round(wx / total));
  const auto cy = static_cast<std::size_t>(std::round(wy / total));
  const double area = static_cast<double>(h * w);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(pair, 0, cy, 0, cx) + w2 * block_ssim(pair, 0, cy, cx, w) +
         w3 * block_ssim(pair, cy, h, 0, cx) + w4 * block_ssim(pair, cy, h, cx, w);
}

// Order-independent mean: sum after sorting.
double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string csv_number(double v) { return fmt(v); }

double threshold_at(std::size_t k) { return static_cast<double>(k) / 255.0; }

double adaptive_threshold(const EvalPair& pair) { return std::min(2.0 * mean_of(pair.pred), 1.0); }

double mae(const EvalPair& pair) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) acc += std::abs(pair.pred[i] - pair.gt[i]);
  return acc / static_cast<double>(pair.size());
}

FMeasures f_measures(const EvalPair& pair, double beta2) {
  FMeasures out;
  out.pr_curve.resize(kThresholds);
  out.f_curve.resize(kThresholds);
  const auto curve = confusion_curve(pair);
  for (std::size_t k = 0; k < kThresholds; ++k) {
    out.f_curve[k] = f_from(curve[k], beta2, &out.pr_curve[k].first, &out.pr_curve[k].second);
  }
  out.f_mean = mean_of(out.f_curve);
  out.f_max = *std::max_element(out.f_curve.begin(), out.f_curve.end());
  out.f_adp = f_from(confusion_at(pair, adaptive_threshold(pair)), beta2);
  return out;
}

double s_measure(const EvalPair& pair, double alpha) {
  double gt_sum = 0.0;
  for (double g : pair.gt) gt_sum += g;
  double q;
  if (gt_sum == 0.0) {
    q = 1.0 - mean_of(pair.pred);
  } else if (gt_sum == static_cast<double>(pair.size())) {
    q = mean_of(pair.pred);
  } else {
    q = alpha * s_object(pair) + (1.0 - alpha) * s_region(pair);
  }
  return std::clamp(q, 0.0, 1.0);
}

EMeasures e_measures(const EvalPair& pair) {
  EMeasures out;
  const auto curve = confusion_curve(pair);
  std::vector<double> e(kThresholds);
  for (std::size_t k = 0; k < kThresholds; ++k) e[k] = e_from(curve[k]);
  out.e_mean = mean_of(e);
  out.e_max = *std::max_element(e.begin(), e.end());
  out.e_adp = e_from(confusion_at(pair, adaptive_threshold(pair)));
  return out;
}

MetricReport evaluate(const EvalPair& pair) {
  MetricReport r;
  r.mae = mae(pair);
  r.s_measure = s_measure(pair);
  FMeasures f = f_measures(pair);
  r.f_adp = f.f_adp;
  r.f_mean = f.f_mean;
  r.f_max = f.f_max;
  r.pr_curve = std::move(f.pr_curve);
  r.f_curve = std::move(f.f_curve);
  const EMeasures e = e_measures(pair);
  r.e_adp = e.e_adp;
  r.e_mean = e.e_mean;
  r.e_max = e.e_max;
  return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw DataError("cannot aggregate an empty list of metric reports");
  auto field = [&](auto get) {
    std::vector<double> v;
    v.reserve(reports.size());
    for (const auto& r : reports) v.push_back(get(r));
    return sorted_mean(std::move(v));
  };
  MetricReport out;
  out.mae = field([](const MetricReport& r) { return r.mae; });
  out.s_measure = field([](const MetricReport& r) { return r.s_measure; });
  out.f_adp = field([](const MetricReport& r) { return r.f_adp; });
  out.f_mean = field([](const MetricReport& r) { return r.f_mean; });
  out.f_max = field([](const MetricReport& r) { return r.f_max; });
  out.e_adp = field([](const MetricReport& r) { return r.e_adp; });
  out.e_mean = field([](const MetricReport& r) { return r.e_mean; });
  out.e_max = field([](const MetricReport& r) { return r.e_max; });
  for (const auto& r : reports) {
    if (r.pr_curve.size() != kThresholds || r.f_curve.size() != kThresholds) {
      throw DataError("metric report curves must have 256 points");
    }
  }
  out.pr_curve.resize(kThresholds);
  out.f_curve.resize(kThresholds);
  for (std::size_t k = 0; k < kThresholds; ++k) {
    out.pr_curve[k].first = field([k](const MetricReport& r) { return r.pr_curve[k].first; });
    out.pr_curve[k].second = field([k](const MetricReport& r) { return r.pr_curve[k].second; });
    out.f_curve[k] = field([k](const MetricReport& r) { return r.f_curve[k]; });
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports, const MetricReport& overall) {
  if (names.size() != reports.size()) throw DataError("one image name per metric report is required");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics table", path.string());
  out << "image";
  for (const char* n : kMetricNames) out << ',' << n;
  out << '\n';
  auto row = [&](const std::string& name, const MetricReport& r) {
    out << name;
    for (double v : r.scalars()) out << ',' << fmt(v);
    out << '\n';
  };
  for (std::size_t i = 0; i < reports.size(); ++i) row(names[i], reports[i]);
  row("AGGREGATE", overall);
  if (!out) throw IoError("failed writing metrics table", path.string());
}

void write_curve_csvs(const std::filesystem::path& dir, const MetricReport& report) {
  std::ofstream pr(dir / "pr_curve.csv"), f(dir / "f_curve.csv");
  if (!pr || !f) throw IoError("cannot write curve tables", dir.string());
  pr << "threshold,precision,recall\n";
  f << "threshold,f\n";
  for (std::size_t k = 0; k < report.f_curve.size(); ++k) {
    pr << fmt(threshold_at(k)) << ',' << fmt(report.pr_curve[k].first) << ',' << fmt(report.pr_curve[k].second) << '\n';
    f << fmt(threshold_at(k)) << ',' << fmt(report.f_curve[k]) << '\n';
  }
  if (!pr || !f) throw IoError("failed writing curve tables", dir.string());
}

}  // namespace nifm
