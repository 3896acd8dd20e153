#include "difd/harness/batch.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <thread>

namespace difd::harness {

PreparedSet prepare(const std::vector<data::TilePair>& pairs, const RunConfig& cfg) {
  const auto& m = cfg.model;
  PreparedSet set;
  set.c1 = m.c1;
  set.k = m.aerial_size;
  set.s = m.sat_plan.sat_size;
  const bool want_second = m.uses_second();
  const bool from_aerial = m.second_source == model::SecondSource::DownsampledAerial;
  set.c2 = want_second ? m.second_channels() : 0;
  const auto sel = cfg.band_selection();
  for (const auto& raw : pairs) {
    data::TilePair p = data::normalize_pair(raw);
    if (p.aerial.width != set.k || p.aerial.height != set.k) {
      throw ConfigError(p.stem() + ": tile is " + std::to_string(p.aerial.width) + " px, model expects " +
                        std::to_string(set.k));
    }
    if (p.aerial.bands != set.c1) throw ConfigError(p.stem() + ": aerial band count does not match c1");
    set.input1.push_back(p.aerial.f32);
    if (want_second && from_aerial) {
      set.input2.push_back(data::downsample_aerial(p.aerial, set.s).f32);
    } else if (want_second) {
      if (p.sat.width != set.s || p.sat.height != set.s) {
        throw ConfigError(p.stem() + ": satellite crop is " + std::to_string(p.sat.width) + " px, model expects " +
                          std::to_string(set.s));
      }
      set.input2.push_back(data::select_pair_bands(std::move(p), sel).sat.f32);
    }
    set.labels.push_back(data::to_label_map(raw.label, m.num_classes));
    set.stems.push_back(raw.stem());
  }
  return set;
}

Batch make_batch(const PreparedSet& set, const std::vector<std::size_t>& indices, std::size_t workers) {
  if (indices.empty()) throw ConfigError("empty batch");
  Batch b;
  b.n = indices.size();
  b.input1 = Tensor<float>(Shape{b.n, set.c1, set.k, set.k});
  if (set.c2 > 0) b.input2 = Tensor<float>(Shape{b.n, set.c2, set.s, set.s});
  b.labels = LabelMap(b.n, set.k, set.k);
  const std::size_t plane1 = set.c1 * set.k * set.k, plane2 = set.c2 * set.s * set.s, plane_y = set.k * set.k;
  auto copy_one = [&](std::size_t slot) {
    const std::size_t i = indices[slot];
    std::copy(set.input1[i].begin(), set.input1[i].end(), b.input1.data() + slot * plane1);
    if (set.c2 > 0) std::copy(set.input2[i].begin(), set.input2[i].end(), b.input2.data() + slot * plane2);
    std::copy(set.labels[i].data.begin(), set.labels[i].data.end(), b.labels.data.begin() + static_cast<long>(slot * plane_y));
  };
  for (std::size_t slot = 0; slot < b.n; ++slot)
    if (indices[slot] >= set.size()) throw ConfigError("batch index out of range");
  const std::size_t threads = std::min(workers, b.n);
  if (threads <= 1) {
    for (std::size_t slot = 0; slot < b.n; ++slot) copy_one(slot);
  } else {
    // Each slot is written by exactly one worker, so order cannot matter.
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t slot = t; slot < b.n; slot += threads) copy_one(slot);
      });
    for (auto& th : pool) th.join();
  }
  return b;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with an explicit draw so the order is identical across
  // standard library implementations.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(std::min(order.size(), i + batch_size)));
  }
  return out;
}

}  // namespace difd::harness
