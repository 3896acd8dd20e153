#include "difd/harness/optim.hpp"

#include <cmath>

namespace difd::harness {

template <typename T>
AdamW<T>::AdamW(nn::ParamStore<T>& store, AdamWOptions opt) : store_(&store), opt_(opt) {
  if (!(opt.lr > 0)) throw ConfigError("AdamW lr must be > 0");
  for (const auto& e : store.entries()) {
    const std::size_t n = e.trainable ? e.var.value().size() : 0;
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  auto& entries = store_->entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    if (!e.trainable || e.var.grad().empty()) continue;
    auto& p = e.var.mutable_value().values();
    const auto& g = e.var.grad().values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
      double pi = static_cast<double>(p[i]);
      pi -= opt_.lr * opt_.weight_decay * pi;
      pi -= opt_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.eps);
      p[i] = static_cast<T>(pi);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace difd::harness
