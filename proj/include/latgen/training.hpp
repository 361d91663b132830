#pragma once

// Supervised minibatch loop shared by the pretraining routines.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "latgen/nn/layers.hpp"
#include "latgen/nn/optim.hpp"

namespace latgen {

struct PretrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  nn::LrSchedule schedule;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;         // example shuffling
  double stop_at_accuracy = 0.0;  // >0: stop once training accuracy reaches it
  std::function<void(std::size_t epoch, double loss, double accuracy)> on_epoch;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Shuffles example indices each epoch, averages `loss_of(i)` gradients over
/// each batch and applies one Adam step per batch. `accuracy()` runs after
/// every epoch.
template <class LossFn, class AccFn>
std::vector<EpochStats> train_epochs(nn::ParameterSet& params, std::size_t n, const PretrainOptions& opts,
                                     LossFn&& loss_of, AccFn&& accuracy) {
  std::vector<EpochStats> curve;
  if (n == 0 || opts.epochs == 0) return curve;
  nn::Adam adam(params);
  nn::Rng rng(opts.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += batch) {
      const std::size_t end = std::min(n, b + batch);
      params.zero_grad();
      for (std::size_t i = b; i < end; ++i) {
        nn::Tensor loss = loss_of(order[i]);
        total += loss.item();
        nn::scale(loss, 1.0 / static_cast<double>(end - b)).backward();
      }
      if (opts.clip_norm > 0) params.clip_grad_norm(opts.clip_norm);
      adam.step(opts.schedule.rate(adam.steps() + 1, epoch));
    }
    EpochStats s{total / static_cast<double>(n), accuracy()};
    curve.push_back(s);
    if (opts.on_epoch) opts.on_epoch(epoch, s.loss, s.accuracy);
    if (opts.stop_at_accuracy > 0 && s.accuracy >= opts.stop_at_accuracy) break;
  }
  return curve;
}

}  // namespace latgen
