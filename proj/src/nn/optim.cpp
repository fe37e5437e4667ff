#include "dialnav/nn/optim.hpp"

#include <cmath>
#include <utility>

namespace dialnav::nn {

Adam::Adam(ParameterStore& params, AdamConfig cfg) : Adam(std::vector<ParameterStore*>{&params}, cfg) {}

Adam::Adam(std::vector<ParameterStore*> stores, AdamConfig cfg) : stores_(std::move(stores)), cfg_(cfg) {
  for (auto* s : stores_)
    for (const auto& p : *s) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
}

void Adam::step() {
  double sq = 0.0;
  for (auto* s : stores_)
    for (const auto& p : *s)
      for (double g : p.grad.values()) sq += g * g;
  last_norm_ = std::sqrt(sq);
  const double clip = (cfg_.clip_norm > 0 && last_norm_ > cfg_.clip_norm) ? cfg_.clip_norm / last_norm_ : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  std::size_t i = 0;
  for (auto* s : stores_)
    for (auto& p : *s) {
      Matrix& m = m_[i];
      Matrix& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k] * clip;
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
        p.value[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
      }
      p.grad.fill(0.0);
      ++i;
    }
}

}  // namespace dialnav::nn
