#pragma once

// PoI landscape of a GP fitted to random samples of a 2D benchmark.

#include "mgso/benchmarks.hpp"
#include "mgso/harness/experiment.hpp"
#include "mgso/harness/plot.hpp"
#include "mgso/model_fit.hpp"
#include "mgso/poi.hpp"
#include "mgso/scaling.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

namespace mgso::harness {

struct PoiMapOptions {
  int n_training = 40;
  int grid = 50;
  std::uint64_t seed = 1;
  int instance = 1;
};

struct PoiMap {
  BenchmarkInstance instance;
  ScalingTransform transform;
  Dataset training;  // scaled coordinates
  GpPosterior posterior;
  double threshold;
  std::vector<double> axis;  // grid coordinates, original units
  std::vector<double> values;  // row-major, x2 outer, x1 inner
};

inline PoiMap compute_poi_map(FunctionId f, const PoiMapOptions& opt) {
  if (opt.n_training < 2) throw UsageError("poi map needs at least 2 training points");
  if (opt.grid < 2) throw UsageError("poi map grid must be at least 2");
  const BenchmarkInstance inst = BenchmarkInstance::make(f, 2, opt.instance);
  const BoxBounds box = inst.bounds();
  const ScalingTransform tf(box);
  std::mt19937_64 rng(opt.seed);

  Dataset data;
  data.points.resize(opt.n_training, 2);
  data.values.resize(opt.n_training);
  for (int i = 0; i < opt.n_training; ++i) {
    const Eigen::VectorXd x = mgso::detail::uniform_in_box(box, rng);
    data.points.row(i) = tf.forward(x).transpose();
    data.values[i] = inst.evaluate(x);
  }
  FitConfig fc;
  const GpHyperParams hp = fit_hyperparams(data, fc, rng).params;
  GpPosterior post = build_posterior_with_jitter(data, hp);
  const double threshold = data.values.minCoeff();

  std::vector<double> axis(static_cast<std::size_t>(opt.grid));
  for (int i = 0; i < opt.grid; ++i) {
    axis[static_cast<std::size_t>(i)] =
        box.lower[0] + (box.upper[0] - box.lower[0]) * static_cast<double>(i) / (opt.grid - 1);
  }
  std::vector<double> values;
  values.reserve(axis.size() * axis.size());
  for (double x2 : axis) {
    for (double x1 : axis) {
      const Eigen::Vector2d z = tf.forward(Eigen::Vector2d(x1, x2));
      values.push_back(std::clamp(poi(post, z, threshold), 0.0, 1.0));
    }
  }
  return {inst, tf, std::move(data), std::move(post), threshold, std::move(axis), std::move(values)};
}

inline void write_poi_csv(std::ostream& out, const PoiMap& m) {
  out << "x1,x2,poi\n";
  std::size_t k = 0;
  for (double x2 : m.axis) {
    for (double x1 : m.axis) {
      out << format_double(x1) << ',' << format_double(x2) << ',' << format_double(m.values[k++]) << '\n';
    }
  }
}

/// Heat map: white for PoI 0, dark blue for PoI 1; training points in red.
inline void write_poi_svg(std::ostream& out, const PoiMap& m) {
  const int cell = std::max(2, 500 / static_cast<int>(m.axis.size()));
  const int n = static_cast<int>(m.axis.size());
  const int side = cell * n;
  const int margin = 20;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side + 2 * margin << "\" height=\""
      << side + 2 * margin + 20 << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double p = m.values[static_cast<std::size_t>(j * n + i)];
      const int r = static_cast<int>(std::lround(255.0 * (1.0 - 0.9 * p)));
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - 0.7 * p)));
      // Flip vertically so x2 grows upwards.
      out << "<rect x=\"" << margin + i * cell << "\" y=\"" << margin + (n - 1 - j) * cell
          << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << r << ',' << g
          << ",255)\"/>\n";
    }
  }
  for (Eigen::Index k = 0; k < m.training.size(); ++k) {
    const double u = (m.training.points(k, 0) + 1.0) / 2.0;
    const double v = (m.training.points(k, 1) + 1.0) / 2.0;
    out << "<circle cx=\"" << detail::fmt(margin + u * side) << "\" cy=\""
        << detail::fmt(margin + (1.0 - v) * side) << "\" r=\"3\" fill=\"#d62728\"/>\n";
  }
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << side << "\" height=\"" << side
      << "\" fill=\"none\" stroke=\"#444\"/>\n"
      << "<text x=\"" << margin << "\" y=\"" << side + 2 * margin + 8 << "\">PoI at T = "
      << detail::fmt(m.threshold) << ", " << function_name(m.instance.function()) << " 2D, "
      << m.training.size() << " training points</text>\n</svg>\n";
}

}  // namespace mgso::harness
