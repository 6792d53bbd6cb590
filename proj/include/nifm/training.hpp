#pragma once

// Adam with a step learning-rate schedule, the mini-batch training loop,
// evaluation under different indicator policies, and the variant-vs-baseline
// experiment grid.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nifm/dataset.hpp"
#include "nifm/losses.hpp"
#include "nifm/metrics.hpp"
#include "nifm/model.hpp"

namespace nifm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double base_lr = 0.001;
  double gamma = 0.2;
  std::size_t step_epochs = 40;

  void validate() const;
};

// base_lr * gamma^floor(epoch / step_epochs), epoch counted from 0.
double scheduled_lr(const AdamConfig& cfg, std::size_t epoch);

class OptimState {
 public:
  OptimState(const std::vector<NamedParameter>& params, AdamConfig cfg = {});

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step() const { return step_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  friend void adam_step(const std::vector<NamedParameter>& params, OptimState& state, double lr);
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
};

// Bias-corrected Adam update in place; clears the gradients afterwards.
// Throws GradientError naming the first parameter without a gradient.
void adam_step(const std::vector<NamedParameter>& params, OptimState& state, double lr);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
  ModelSpec model;  // model.seed is replaced by seed
  LossConfig loss;
  AdamConfig adam;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const;
};

struct Batch {
  Tensor images;      // [N, 3, S, S]
  Tensor masks;       // [N, 1, S, S]
  Tensor indicators;  // [N, 9]
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                 const std::vector<std::size_t>& indicator_classes);
Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

// Seeded per-epoch visiting order; every epoch is a permutation of 0..n-1.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::size_t epoch,
                                                    std::uint64_t seed);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;  // final checkpoint manifest
  std::optional<std::filesystem::path> loss_log;    // CSV: epoch,mean_loss,lr
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  std::uint64_t steps = 0;
};

TrainResult train(const TrainConfig& config, const std::vector<Sample>& samples, const TrainOutputs& outputs = {});

// Which indicator each evaluated image receives.
struct IndicatorPolicy {
  enum class Kind { Correct, Fixed, Shuffled };
  Kind kind = Kind::Correct;
  std::size_t fixed_class = 0;
  std::uint64_t seed = 0;

  static IndicatorPolicy parse(const std::string& text, std::uint64_t seed = 0);
  std::string to_string() const;
  std::vector<std::size_t> assign(const std::vector<Sample>& samples) const;
};

// Saliency maps [1, S, S] per sample, computed without gradient tracking.
std::vector<Tensor> predict(const Model& model, const std::vector<Sample>& samples, const IndicatorPolicy& policy,
                            std::size_t batch_size = 8);
std::vector<MetricReport> evaluate_model(const Model& model, const std::vector<Sample>& samples,
                                         const IndicatorPolicy& policy = {});

// ---- experiment grid ----

struct ExperimentConfig {
  TrainConfig train;
  std::vector<NifmVariant> variants{NifmVariant::Default};  // each compared with Disabled
  std::vector<DecoderKind> decoders{DecoderKind::PlainTopDown, DecoderKind::DeepSupervised};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct ExperimentCell {
  NifmVariant variant = NifmVariant::Default;
  DecoderKind decoder = DecoderKind::PlainTopDown;
  std::uint64_t seed = 0;
  MetricReport metrics;  // aggregate over the test set
  std::vector<EpochLog> log;
  double seconds = 0.0;
  Model model;
};

struct ComparisonRow {
  std::string metric;
  double baseline = 0.0;
  double variant = 0.0;
  double delta_pct = 0.0;
};

// Percent change signed so that positive means the variant is better:
// (b - v) / b for MAE, (v - b) / b otherwise.
double delta_pct(const std::string& metric, double baseline, double variant);

// Seed-averaged rows for one decoder and variant against Disabled.
std::vector<ComparisonRow> compare(const std::vector<ExperimentCell>& cells, DecoderKind decoder, NifmVariant variant);
void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows);
void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Trains Disabled plus every requested variant for each decoder and seed.
// Progress lines go to `progress` when non-null.
std::vector<ExperimentCell> run_experiment(const ExperimentConfig& config, const std::vector<Sample>& train_samples,
                                           const std::vector<Sample>& test_samples, std::ostream* progress = nullptr);

}  // namespace nifm
