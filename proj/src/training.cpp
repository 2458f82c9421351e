#include "iag/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "iag/attention.hpp"
#include "iag/error.hpp"
#include "iag/global_classifier.hpp"
#include "iag/model.hpp"
#include "iag/ops.hpp"

namespace iag {

std::size_t TrainConfig::effective_decay_interval() const {
  if (decay_interval > 0) return decay_interval;
  return std::max<std::size_t>(1, max_iters / 100);
}

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(decay_gamma > 0.0 && decay_gamma <= 1.0)) throw InvalidArgument("decay gamma must lie in (0,1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0,1)");
  if (!(clip_norm >= 0.0)) throw InvalidArgument("clip norm must be nonnegative");
  if (min_slice_interval == 0 || min_slice_interval > max_slice_interval)
    throw InvalidArgument("slice interval range must satisfy 1 <= lo <= hi");
}

Tensor overall_loss(const Tensor& global_term, const Tensor& local_term, double beta) {
  if (!local_term.defined()) return global_term;
  const Tensor weighted = scale(local_term, beta);
  return global_term.defined() ? add(global_term, weighted) : weighted;
}

SampleLoss sample_loss(const VolumeSample& sample, const ModelParams& params, std::span<const std::size_t> slices,
                       const LossPaths& paths, const PositiveCounts& counts, double beta, DeviationNorm norm,
                       const FrozenBags* frozen) {
  SampleLoss out;
  const ImageForward fwd = forward_image(sample, params, slices, paths.pooling);

  Tensor global_term;
  if (paths.global) {
    global_term = global_loss(fwd.global_prob, sample.image_label);
    out.global_loss = global_term.item();
  }

  LocalTerms terms;
  if (sample.positive() && sample.has_voxel_labels) {
    const auto mask = sample.mask_slices(slices);
    double labeled = 0.0;
    if (paths.attention) {
      terms.attention = attention_loss(fwd.attention, mask);
      labeled += terms.attention.item();
    }
    if (paths.labeled_local) {
      terms.labeled_local = labeled_instance_loss(instance_prob(fwd.features, params.w_local), mask);
      labeled += terms.labeled_local.item();
    }
    out.labeled_local_loss = labeled;
  } else if (sample.positive() && paths.unlabeled_local) {
    out.unlabeled_branch = true;
    const auto probs = fwd.attention.values();
    auto sep = frozen ? std::optional<Separation>(frozen->separation) : separate_regions(probs, norm);
    if (sep) {
      const Tensor p_fg = bag_prob(bag_feature(fwd.features, sep->foreground), params.w_local);
      const Tensor p_bg = bag_prob(bag_feature(fwd.features, sep->background), params.w_local);
      terms.unlabeled_local = unlabeled_mil_loss(p_fg, p_bg);
      if (paths.fixed_lambda)
        terms.lambda = *paths.fixed_lambda;
      else
        terms.lambda = frozen ? frozen->lambda : adaptive_lambda(probs);
      out.separation = std::move(sep);
      out.lambda = terms.lambda;
      out.unlabeled_local_loss = terms.unlabeled_local.item();
    } else {
      out.separation_skipped = true;
    }
  }

  out.total = overall_loss(global_term, local_loss(terms, counts), beta);
  return out;
}

std::vector<std::size_t> sample_slices(std::size_t depth, std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  if (depth == 0) throw InvalidArgument("sample_slices: depth must be positive");
  const std::size_t k = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  std::vector<std::size_t> out;
  for (std::size_t z = 0; z < depth; z += k) out.push_back(z);
  return out;
}

void sgd_step(ModelParams& params, double lr) {
  for (Tensor* t : params.tensors()) {
    if (!t->has_grad()) throw InvalidArgument("sgd_step: parameter without gradient");
    auto v = t->mutable_values();
    const auto g = t->grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

PositiveCounts count_positives(std::span<const VolumeSample> dataset) {
  PositiveCounts c;
  for (const auto& s : dataset) {
    if (!s.positive()) continue;
    if (s.has_voxel_labels)
      ++c.labeled;
    else
      ++c.unlabeled;
  }
  return c;
}

double clip_factor(const ModelParams& params, double clip_norm) {
  if (clip_norm <= 0.0) return 1.0;
  double sq = 0.0;
  for (const Tensor* t : params.tensors())
    for (double g : t->grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  return norm > clip_norm ? clip_norm / norm : 1.0;
}

TrainState train(std::span<const VolumeSample> dataset, const TrainConfig& config, const ModelParams* init,
                 const IterationCallback& on_iteration) {
  config.validate();
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  const LossPaths paths = apply_variant(config.variant);
  const PositiveCounts counts = count_positives(dataset);
  if ((paths.attention || paths.labeled_local) && counts.labeled == 0)
    throw InvalidArgument("train: the local stream needs at least one voxel-labeled positive");
  for (const auto& s : dataset) s.validate();

  TrainState state;
  state.params = init ? init->clone() : init_params(config.backbone, config.seed);
  state.params.validate();
  // Stream separate from the initialisation stream.
  state.rng.seed(config.seed ^ 0x9e3779b97f4a7c15ULL);
  state.history.reserve(config.max_iters);

  std::vector<std::vector<double>> velocity;
  if (config.momentum > 0.0)
    for (const Tensor* t : state.params.tensors()) velocity.emplace_back(t->size(), 0.0);

  const std::size_t decay_every = config.effective_decay_interval();
  double lr = config.lr;
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

  for (std::size_t it = 0; it < config.max_iters; ++it) {
    const VolumeSample& sample = dataset[pick(state.rng)];
    const auto slices = sample_slices(sample.dims.depth, state.rng, config.min_slice_interval, config.max_slice_interval);

    LossRecord rec;
    rec.iteration = it + 1;
    rec.lr = lr;
    {
      Tape tape;
      for (Tensor* t : state.params.tensors()) tape.watch(*t);
      const SampleLoss loss = sample_loss(sample, state.params, slices, paths, counts, config.beta, config.separation_norm);
      state.unlabeled_branch_count += loss.unlabeled_branch;
      state.skipped_separations += loss.separation_skipped;
      rec.global_loss = loss.global_loss;
      rec.labeled_local_loss = loss.labeled_local_loss;
      rec.unlabeled_local_loss = loss.unlabeled_local_loss;
      if (loss.total.defined()) {
        rec.total = loss.total.item();
        if (!std::isfinite(rec.total))
          throw NumericError("non-finite loss at iteration " + std::to_string(it + 1) + " on sample " + sample.id);
        tape.backward(loss.total);
        const double factor = clip_factor(state.params, config.clip_norm);
        rec.grad_norm_clipped = factor < 1.0;
        if (velocity.empty()) {
          sgd_step(state.params, lr * factor);
        } else {
          auto tensors = state.params.tensors();
          for (std::size_t k = 0; k < tensors.size(); ++k) {
            auto v = tensors[k]->mutable_values();
            const auto g = tensors[k]->grad();
            for (std::size_t i = 0; i < v.size(); ++i) {
              velocity[k][i] = config.momentum * velocity[k][i] + factor * g[i];
              v[i] -= lr * velocity[k][i];
            }
          }
        }
      }
    }

    state.history.push_back(rec);
    state.iteration = it + 1;
    if ((it + 1) % decay_every == 0) lr *= config.decay_gamma;
    if (on_iteration) on_iteration(state);
  }

  for (const Tensor* t : state.params.tensors())
    for (double v : t->values())
      if (!std::isfinite(v)) throw NumericError("training produced non-finite parameters");
  return state;
}

void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,global_loss,labeled_local_loss,unlabeled_local_loss,lr\n";
  out << std::setprecision(17);
  for (const auto& r : history)
    out << r.iteration << ',' << r.global_loss << ',' << r.labeled_local_loss << ',' << r.unlabeled_local_loss << ','
        << r.lr << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

double smoothed_total(const std::vector<LossRecord>& history, std::size_t end, std::size_t window) {
  if (end > history.size() || window == 0 || end < window) throw InvalidArgument("smoothed_total: bad window");
  double acc = 0.0;
  for (std::size_t i = end - window; i < end; ++i) acc += history[i].total;
  return acc / static_cast<double>(window);
}

}  // namespace iag
