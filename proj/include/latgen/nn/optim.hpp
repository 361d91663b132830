#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/nn/layers.hpp"

namespace latgen::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam bound to one ParameterSet. Moments are kept in the
/// parameter order of the set.
class Adam {
 public:
  explicit Adam(const ParameterSet& params, AdamOptions options = {});

  /// Applies one update with learning rate `lr`, then zeroes the gradients.
  void step(double lr);

  std::uint64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

  nlohmann::json state() const;
  void load_state(const nlohmann::json& state);

 private:
  const ParameterSet* params_;
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// p -= lr * grad for every parameter, then zeroes the gradients.
void sgd_step(const ParameterSet& params, double lr);

enum class ScheduleKind { Constant, Noam, EpochDecay };

/// noam:        base * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
/// epoch-decay: base * decay^epoch
/// constant:    base
struct LrSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double base = 1e-3;
  std::size_t d_model = 512;
  std::size_t warmup = 8000;
  double decay = 0.5;

  double rate(std::size_t step, std::size_t epoch = 0) const;
};

ScheduleKind parse_schedule(const std::string& name);
std::string to_string(ScheduleKind kind);

}  // namespace latgen::nn
