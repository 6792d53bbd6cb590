#pragma once

// Composite saliency loss: BCE + SSIM + IoU, summed over the main output and
// any deep-supervision side outputs.

#include <cstddef>
#include <vector>

#include "nifm/tensor.hpp"

namespace nifm {

enum class SsimMode { Global, Windowed };

struct LossConfig {
  double ssim_c1 = 0.012;
  double ssim_c2 = 0.032;
  double eps_clamp = 1e-7;  // BCE clamps predictions to [eps, 1 - eps]
  double iou_eps = 1e-8;
  SsimMode ssim_mode = SsimMode::Global;
  std::size_t window_size = 11;
  double window_sigma = 1.5;

  void validate() const;
};

// All losses take pred and gt of equal shape [N, C, H, W] and return a scalar
// averaged over the batch.

// Mean over pixels of -gt*log(p) + (gt-1)*log(1-p), p = clamp(pred).
Tensor bce_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg = {});

// 1 - SSIM. Global mode uses whole-map mean, population variance and
// covariance; windowed mode averages a Gaussian-windowed SSIM map.
Tensor ssim_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg = {});

// 1 - (sum(gt*p) + eps) / (sum(gt) + sum(p) - sum(gt*p) + eps); both-empty
// maps give 0.
Tensor iou_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg = {});

// bce + ssim + iou on one scale.
Tensor scale_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg = {});

// Sum of scale_loss over the main map and each side map; the ground truth is
// reduced to each side resolution with downsample_mask().
Tensor total_loss(const Tensor& main, const std::vector<Tensor>& sides, const Tensor& gt, const LossConfig& cfg = {});

// Area-average over factor x factor cells, then binarize at >= 0.5.
Tensor downsample_mask(const Tensor& gt, std::size_t factor);

}  // namespace nifm
