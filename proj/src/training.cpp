#include "nifm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nifm/error.hpp"
#include "nifm/random.hpp"

namespace nifm {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kPolicyStream = 0x504f4c4943ULL;

void require_positive(std::size_t v, const char* name) {
  if (v == 0) throw ConfigError(std::string(name) + " must be positive");
}

std::filesystem::path intermediate_checkpoint(const std::filesystem::path& final_path, std::size_t epoch) {
  auto p = final_path;
  p.replace_filename(final_path.stem().string() + ".epoch" + std::to_string(epoch) + final_path.extension().string());
  return p;
}

}  // namespace

// ---- Adam ----

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam.eps must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("adam.base_lr must be positive");
  if (!(gamma > 0.0)) throw ConfigError("adam.gamma must be positive");
  require_positive(step_epochs, "adam.step_epochs");
}

double scheduled_lr(const AdamConfig& cfg, std::size_t epoch) {
  return cfg.base_lr * std::pow(cfg.gamma, static_cast<double>(epoch / cfg.step_epochs));
}

OptimState::OptimState(const std::vector<NamedParameter>& params, AdamConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void adam_step(const std::vector<NamedParameter>& params, OptimState& state, double lr) {
  if (params.size() != state.m_.size()) throw GradientError("optimizer state was built for a different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) throw GradientError("parameter '" + params[i].name + "' has no gradient");
    if (params[i].tensor.numel() != state.m_[i].size())
      throw GradientError("optimizer moment size mismatch for '" + params[i].name + "'");
  }

  const AdamConfig& c = state.cfg_;
  const std::uint64_t t = ++state.step_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    const std::span<const double> g = p.grad();
    std::span<double> w = p.mutable_data();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
    p.clear_grad();
  }
}

// ---- training ----

void TrainConfig::validate() const {
  require_positive(epochs, "train.epochs");
  require_positive(batch_size, "train.batch_size");
  require_positive(image_size, "train.image_size");
  if (image_size % 32 != 0) throw ConfigError("train.image_size must be divisible by 32");
  model.encoder.validate();
  require_positive(model.decoder.width, "model.decoder.width");
  loss.validate();
  adam.validate();
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                 const std::vector<std::size_t>& indicator_classes) {
  if (indices.empty()) throw DataError("empty batch");
  if (indicator_classes.size() != indices.size()) throw DataError("one indicator class per batch entry is required");
  const Sample& first = samples.at(indices.front());
  const Shape ishape = first.image.shape(), mshape = first.mask.shape();
  const std::size_t isz = first.image.numel(), msz = first.mask.numel();

  std::vector<double> images, masks;
  images.reserve(indices.size() * isz);
  masks.reserve(indices.size() * msz);
  std::vector<NoiseIndicator> indicators;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const Sample& s = samples.at(indices[j]);
    if (s.image.shape() != ishape || s.mask.shape() != mshape)
      throw DimensionError("sample '" + s.id + "' differs in size from the rest of the batch");
    images.insert(images.end(), s.image.data().begin(), s.image.data().end());
    masks.insert(masks.end(), s.mask.data().begin(), s.mask.data().end());
    indicators.push_back(make_indicator(indicator_classes[j]));
  }
  const std::size_t n = indices.size();
  return Batch{Tensor({n, ishape[0], ishape[1], ishape[2]}, std::move(images)),
               Tensor({n, mshape[0], mshape[1], mshape[2]}, std::move(masks)), indicator_batch(indicators)};
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  std::vector<std::size_t> classes;
  for (std::size_t i : indices) classes.push_back(samples.at(i).class_index);
  return make_batch(samples, indices, classes);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::size_t epoch,
                                                    std::uint64_t seed) {
  require_positive(batch_size, "batch_size");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, kShuffleStream), epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return batches;
}

TrainResult train(const TrainConfig& config, const std::vector<Sample>& samples, const TrainOutputs& outputs) {
  config.validate();
  if (samples.empty()) throw DataError("training set is empty");
  for (const auto& s : samples)
    if (s.image.rank() != 3 || s.image.shape()[1] != config.image_size || s.image.shape()[2] != config.image_size)
      throw DimensionError("sample '" + s.id + "' is not " + std::to_string(config.image_size) + "x" +
                           std::to_string(config.image_size));

  ModelSpec spec = config.model;
  spec.seed = config.seed;
  TrainResult result{Model(spec), {}, 0};
  const auto params = result.model.parameters();
  OptimState state(params, config.adam);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = scheduled_lr(config.adam, epoch);
    double loss_sum = 0.0;
    for (const auto& indices : epoch_batches(samples.size(), config.batch_size, epoch, config.seed)) {
      const Batch batch = make_batch(samples, indices);
      const DecoderOutput out = result.model.forward(batch.images, batch.indicators);
      const Tensor loss = total_loss(out.saliency, out.sides, batch.masks, config.loss);
      backward(loss);
      adam_step(params, state, lr);
      loss_sum += loss[0] * static_cast<double>(indices.size());
      ++result.steps;
    }
    result.log.push_back({epoch + 1, loss_sum / static_cast<double>(samples.size()), lr});

    const bool last = epoch + 1 == config.epochs;
    if (outputs.checkpoint && !last && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)
      save_checkpoint(result.model, intermediate_checkpoint(*outputs.checkpoint, epoch + 1));
  }
  if (outputs.checkpoint) save_checkpoint(result.model, *outputs.checkpoint);
  if (outputs.loss_log) write_loss_log(*outputs.loss_log, result.log);
  return result;
}

// ---- evaluation ----

IndicatorPolicy IndicatorPolicy::parse(const std::string& text, std::uint64_t seed) {
  IndicatorPolicy p;
  p.seed = seed;
  if (text == "correct") {
    p.kind = Kind::Correct;
  } else if (text == "shuffled") {
    p.kind = Kind::Shuffled;
  } else if (text.rfind("fixed:", 0) == 0) {
    p.kind = Kind::Fixed;
    p.fixed_class = NoiseClassTable::standard().index_of(text.substr(6));
  } else {
    throw ConfigError("unknown indicator mode '" + text + "' (expected correct, shuffled or fixed:<Class>)");
  }
  return p;
}

std::string IndicatorPolicy::to_string() const {
  switch (kind) {
    case Kind::Correct:
      return "correct";
    case Kind::Shuffled:
      return "shuffled";
    case Kind::Fixed:
      return "fixed:" + NoiseClassTable::standard().name(fixed_class);
  }
  return "correct";
}

std::vector<std::size_t> IndicatorPolicy::assign(const std::vector<Sample>& samples) const {
  std::vector<std::size_t> classes;
  classes.reserve(samples.size());
  for (const auto& s : samples) classes.push_back(kind == Kind::Fixed ? fixed_class : s.class_index);
  if (kind == Kind::Shuffled) {
    Rng rng(derive_seed(seed, kPolicyStream));
    rng.shuffle(classes.begin(), classes.end());
  }
  return classes;
}

std::vector<Tensor> predict(const Model& model, const std::vector<Sample>& samples, const IndicatorPolicy& policy,
                            std::size_t batch_size) {
  require_positive(batch_size, "batch_size");
  NoGradGuard no_grad;
  const auto classes = policy.assign(samples);
  std::vector<Tensor> maps;
  maps.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    std::vector<std::size_t> idx, cls;
    for (std::size_t j = i; j < std::min(samples.size(), i + batch_size); ++j) {
      idx.push_back(j);
      cls.push_back(classes[j]);
    }
    const Batch batch = make_batch(samples, idx, cls);
    const Tensor sal = model.forward(batch.images, batch.indicators).saliency;
    const Shape& s = sal.shape();
    const std::size_t per = s[1] * s[2] * s[3];
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto first = sal.data().begin() + static_cast<std::ptrdiff_t>(j * per);
      maps.emplace_back(Shape{s[1], s[2], s[3]}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per)));
    }
  }
  return maps;
}

std::vector<MetricReport> evaluate_model(const Model& model, const std::vector<Sample>& samples,
                                         const IndicatorPolicy& policy) {
  if (samples.empty()) throw DataError("evaluation set is empty");
  const auto maps = predict(model, samples, policy);
  std::vector<MetricReport> reports;
  reports.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Shape& s = maps[i].shape();
    if (samples[i].mask.shape() != s)
      throw DimensionError("prediction and mask of '" + samples[i].id + "' differ in size");
    const auto p = maps[i].data(), g = samples[i].mask.data();
    reports.push_back(evaluate(EvalPair(s[1], s[2], {p.begin(), p.end()}, {g.begin(), g.end()})));
  }
  return reports;
}

// ---- experiment ----

double delta_pct(const std::string& metric, double baseline, double variant) {
  if (baseline == 0.0) return baseline == variant ? 0.0 : std::nan("");
  const double d = metric == "mae" ? baseline - variant : variant - baseline;
  return d / baseline * 100.0;
}

std::vector<ComparisonRow> compare(const std::vector<ExperimentCell>& cells, DecoderKind decoder,
                                   NifmVariant variant) {
  std::vector<MetricReport> base, var;
  for (const auto& c : cells) {
    if (c.decoder != decoder) continue;
    if (c.variant == NifmVariant::Disabled) base.push_back(c.metrics);
    if (c.variant == variant) var.push_back(c.metrics);
  }
  if (base.empty() || var.empty())
    throw DataError("comparison of " + to_string(variant) + " on " + to_string(decoder) + " lacks cells");
  const auto b = aggregate(base).scalars(), v = aggregate(var).scalars();
  std::vector<ComparisonRow> rows;
  for (std::size_t k = 0; k < b.size(); ++k)
    rows.push_back({kMetricNames[k], b[k], v[k], delta_pct(kMetricNames[k], b[k], v[k])});
  return rows;
}

void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write comparison table", path.string());
  out << "metric,baseline,variant,delta_pct\n";
  for (const auto& r : rows)
    out << r.metric << ',' << csv_number(r.baseline) << ',' << csv_number(r.variant) << ',' << csv_number(r.delta_pct)
        << '\n';
  if (!out) throw IoError("failed writing comparison table", path.string());
}

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log", path.string());
  out << "epoch,mean_loss,lr\n";
  for (const auto& e : log) out << e.epoch << ',' << csv_number(e.mean_loss) << ',' << csv_number(e.lr) << '\n';
  if (!out) throw IoError("failed writing loss log", path.string());
}

std::vector<ExperimentCell> run_experiment(const ExperimentConfig& config, const std::vector<Sample>& train_samples,
                                           const std::vector<Sample>& test_samples, std::ostream* progress) {
  config.train.validate();
  if (config.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (config.decoders.empty()) throw ConfigError("experiment needs at least one decoder");
  if (test_samples.empty()) throw DataError("test set is empty");

  std::vector<NifmVariant> variants{NifmVariant::Disabled};
  for (auto v : config.variants)
    if (std::find(variants.begin(), variants.end(), v) == variants.end()) variants.push_back(v);

  std::vector<ExperimentCell> cells;
  for (auto decoder : config.decoders) {
    for (auto seed : config.seeds) {
      for (auto variant : variants) {
        TrainConfig tc = config.train;
        tc.seed = seed;
        tc.model.decoder.kind = decoder;
        tc.model.encoder.nifm_variant = variant;
        const auto start = std::chrono::steady_clock::now();
        TrainResult r = train(tc, train_samples);
        const MetricReport metrics = aggregate(evaluate_model(r.model, test_samples));
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (progress)
          *progress << to_string(decoder) << ' ' << to_string(variant) << " seed " << seed
                    << ": final loss " << csv_number(r.log.back().mean_loss) << ", test mae "
                    << csv_number(metrics.mae) << " (" << csv_number(seconds) << " s)" << std::endl;
        cells.push_back({variant, decoder, seed, metrics, std::move(r.log), seconds, std::move(r.model)});
      }
    }
  }
  return cells;
}

}  // namespace nifm
