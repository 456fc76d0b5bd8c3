#pragma once

// Shared test fixtures built on the library.

#include "mgso/poi.hpp"

#include <random>
#include <vector>

namespace fixture {

/// A fixed 1D posterior with a clear basin around x = 0.1.
inline mgso::GpPosterior fixed_posterior_1d() {
  mgso::Dataset data;
  data.points.resize(4, 1);
  data.points << -0.7, -0.2, 0.1, 0.6;
  data.values.resize(4);
  data.values << 1.2, 0.6, 0.2, 1.0;
  mgso::GpHyperParams hp;
  hp.signal_variance = 1.0;
  hp.noise = 1e-6;
  hp.length_scales = mgso::LengthScales::iso(0.3);
  return mgso::build_posterior(data, hp);
}

/// Draws `count` points from the sampler at T = y_min in batches of `batch`.
inline std::vector<double> draw_poi_samples(const mgso::GpPosterior& post, int count, int batch,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const mgso::ThresholdSet t = mgso::choose_thresholds(post.dataset());
  std::vector<double> out;
  while (static_cast<int>(out.size()) < count) {
    const auto b = mgso::sample_poi(post, t, batch, rng);
    for (const auto& p : b.points) {
      if (static_cast<int>(out.size()) < count) out.push_back(p[0]);
    }
  }
  return out;
}

}  // namespace fixture
