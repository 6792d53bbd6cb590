#include "nifm/losses.hpp"

#include <cmath>

#include "nifm/error.hpp"

namespace nifm {

void LossConfig::validate() const {
  if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw ConfigError("SSIM constants must be positive");
  if (!(eps_clamp > 0.0) || eps_clamp >= 0.5) throw ConfigError("eps_clamp must lie in (0, 0.5)");
  if (!(iou_eps > 0.0)) throw ConfigError("iou_eps must be positive");
  if (ssim_mode == SsimMode::Windowed && (window_size == 0 || window_size % 2 == 0 || !(window_sigma > 0.0))) {
    throw ConfigError("SSIM window must be odd-sized with positive sigma");
  }
}

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const char* loss) {
  if (pred.rank() != 4) {
    throw DimensionError(std::string(loss) + ": expected [N,C,H,W] maps, got " + shape_str(pred.shape()));
  }
  if (pred.shape() != gt.shape()) {
    throw DimensionError(std::string(loss) + ": prediction " + shape_str(pred.shape()) + " vs ground truth " +
                         shape_str(gt.shape()));
  }
  for (double v : gt.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(loss) + ": ground truth outside [0,1]");
  }
}

const std::vector<std::size_t> kPerSample{1, 2, 3};

Tensor gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = static_cast<double>(size / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  std::vector<double> w(size * size);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) w[i * size + j] = g[i] * g[j] / (total * total);
  }
  return Tensor({1, 1, size, size}, std::move(w));
}

Tensor global_ssim(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
  const Tensor mu_p = mean(pred, kPerSample);
  const Tensor mu_g = mean(gt, kPerSample);
  const Tensor var_p = var(pred, kPerSample);
  const Tensor var_g = var(gt, kPerSample);
  const Tensor cov = mean((pred - mu_p) * (gt - mu_g), kPerSample);
  const Tensor num = (2.0 * mu_p * mu_g + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2);
  const Tensor den = (mu_p * mu_p + mu_g * mu_g + cfg.ssim_c1) * (var_p + var_g + cfg.ssim_c2);
  return num / den;  // [N,1,1,1]
}

// Normalized convolution keeps the windowed moments proper weighted moments
// at the borders (weights renormalized over the in-image support).
Tensor windowed_ssim_map(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
  const std::size_t n = pred.dim(0), c = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
  const Tensor window = gaussian_window(cfg.window_size, cfg.window_sigma);
  const std::size_t pad = cfg.window_size / 2;
  const Tensor p = reshape(pred, {n * c, 1, h, w});
  const Tensor g = reshape(gt, {n * c, 1, h, w});
  const Tensor mass = conv2d(Tensor::full({1, 1, h, w}, 1.0), window, Tensor(), 1, pad);
  auto blur = [&](const Tensor& x) { return conv2d(x, window, Tensor(), 1, pad) / mass; };
  const Tensor mu_p = blur(p);
  const Tensor mu_g = blur(g);
  const Tensor var_p = blur(p * p) - mu_p * mu_p;
  const Tensor var_g = blur(g * g) - mu_g * mu_g;
  const Tensor cov = blur(p * g) - mu_p * mu_g;
  const Tensor num = (2.0 * mu_p * mu_g + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2);
  const Tensor den = (mu_p * mu_p + mu_g * mu_g + cfg.ssim_c1) * (var_p + var_g + cfg.ssim_c2);
  return num / den;
}

}  // namespace

Tensor bce_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
  check_pair(pred, gt, "bce_loss");
  const Tensor p = clamp(pred, cfg.eps_clamp, 1.0 - cfg.eps_clamp);
  return mean_all(mul_scalar(gt * log(p), -1.0) + (gt - 1.0) * log(1.0 - p));
}

Tensor ssim_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
  check_pair(pred, gt, "ssim_loss");
  if (pred.dim(1) * pred.dim(2) * pred.dim(3) < 2) throw DimensionError("ssim_loss needs at least 2 pixels per map");
  if (cfg.ssim_mode == SsimMode::Global) return mean_all(1.0 - global_ssim(pred, gt, cfg));
  return 1.0 - mean_all(windowed_ssim_map(pred, gt, cfg));
}

Tensor iou_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
  check_pair(pred, gt, "iou_loss");
  const Tensor inter = sum(pred * gt, kPerSample);
  const Tensor uni = sum(pred, kPerSample) + sum(gt, kPerSample) - inter;
  return mean_all(1.0 - (inter + cfg.iou_eps) / (uni + cfg.iou_eps));
}

Tensor scale_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
  return bce_loss(pred, gt, cfg) + ssim_loss(pred, gt, cfg) + iou_loss(pred, gt, cfg);
}

Tensor total_loss(const Tensor& main, const std::vector<Tensor>& sides, const Tensor& gt, const LossConfig& cfg) {
  Tensor total = scale_loss(main, gt, cfg);
  for (const auto& side : sides) {
    if (side.rank() != 4 || side.dim(2) == 0 || gt.dim(2) % side.dim(2) != 0) {
      throw DimensionError("side output " + shape_str(side.shape()) + " does not evenly divide " +
                           shape_str(gt.shape()), 2);
    }
    const std::size_t factor = gt.dim(2) / side.dim(2);
    total = total + scale_loss(side, downsample_mask(gt, factor), cfg);
  }
  return total;
}

Tensor downsample_mask(const Tensor& gt, std::size_t factor) {
  if (gt.rank() != 4) throw DimensionError("downsample_mask expects [N,C,H,W], got " + shape_str(gt.shape()));
  if (factor == 0 || gt.dim(2) % factor != 0) throw DimensionError("mask height not divisible by factor", 2);
  if (gt.dim(3) % factor != 0) throw DimensionError("mask width not divisible by factor", 3);
  const std::size_t planes = gt.dim(0) * gt.dim(1), h = gt.dim(2), w = gt.dim(3);
  const std::size_t oh = h / factor, ow = w / factor;
  const auto src = gt.data();
  std::vector<double> out(planes * oh * ow);
  const double area = static_cast<double>(factor * factor);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) acc += src[(p * h + y * factor + dy) * w + x * factor + dx];
        }
        out[(p * oh + y) * ow + x] = acc / area >= 0.5 ? 1.0 : 0.0;
      }
    }
  }
  return Tensor({gt.dim(0), gt.dim(1), oh, ow}, std::move(out));
}

}  // namespace nifm
