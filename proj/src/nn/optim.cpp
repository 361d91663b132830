#include "latgen/nn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "latgen/error.hpp"

namespace latgen::nn {

Adam::Adam(const ParameterSet& params, AdamOptions options) : params_(&params), options_(options) {
  for (const auto& [name, t] : params.items()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(double lr) {
  const auto& items = params_->items();
  if (items.size() != m_.size()) throw ConfigError("parameter set changed after optimizer creation");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < items.size(); ++p) {
    Tensor t = items[p].second;
    auto& w = t.mutable_values();
    auto& g = t.mutable_grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
      g[i] = 0.0;
    }
  }
}

void sgd_step(const ParameterSet& params, double lr) {
  for (const auto& [name, p] : params.items()) {
    Tensor t = p;
    auto& w = t.mutable_values();
    auto& g = t.mutable_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr * g[i];
      g[i] = 0.0;
    }
  }
}

nlohmann::json Adam::state() const {
  nlohmann::json j;
  j["step"] = step_;
  j["beta1"] = options_.beta1;
  j["beta2"] = options_.beta2;
  j["eps"] = options_.eps;
  j["m"] = m_;
  j["v"] = v_;
  return j;
}

void Adam::load_state(const nlohmann::json& j) {
  auto m = j.at("m").get<std::vector<std::vector<double>>>();
  auto v = j.at("v").get<std::vector<std::vector<double>>>();
  if (m.size() != m_.size() || v.size() != v_.size()) throw ConfigError("optimizer state does not match parameters");
  for (std::size_t p = 0; p < m.size(); ++p)
    if (m[p].size() != m_[p].size() || v[p].size() != v_[p].size())
      throw ConfigError("optimizer moment shape mismatch for " + params_->items()[p].first);
  m_ = std::move(m);
  v_ = std::move(v);
  step_ = j.at("step").get<std::uint64_t>();
  options_.beta1 = j.at("beta1").get<double>();
  options_.beta2 = j.at("beta2").get<double>();
  options_.eps = j.at("eps").get<double>();
}

double LrSchedule::rate(std::size_t step, std::size_t epoch) const {
  switch (kind) {
    case ScheduleKind::Constant:
      return base;
    case ScheduleKind::Noam: {
      const double s = static_cast<double>(std::max<std::size_t>(step, 1));
      const double w = static_cast<double>(warmup);
      return base * std::pow(static_cast<double>(d_model), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
    }
    case ScheduleKind::EpochDecay:
      return base * std::pow(decay, static_cast<double>(epoch));
  }
  return base;
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::Constant;
  if (name == "noam") return ScheduleKind::Noam;
  if (name == "epoch-decay") return ScheduleKind::EpochDecay;
  throw ConfigError("unknown schedule '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::Noam: return "noam";
    case ScheduleKind::EpochDecay: return "epoch-decay";
  }
  return "constant";
}

}  // namespace latgen::nn
