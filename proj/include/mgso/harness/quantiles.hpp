#pragma once

// Quartile aggregation of convergence CSVs.

#include "mgso/harness/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgso::harness {

inline constexpr std::string_view kQuartileHeader =
    "algorithm,function,dim,eval_index,n_trials,q1,median,q3";

/// Malformed input or a run that breaks the convergence invariants.
class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear-interpolation quantile of sorted data: h = (n-1) p.
inline double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Quartiles {
  double q1, median, q3;
};

inline Quartiles quartiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75)};
}

/// One run as read back from a convergence CSV.
struct RunTrace {
  std::string run_id;
  std::string algorithm;
  std::string function;
  int dim = 0;
  std::vector<int> eval_index;
  std::vector<double> f_best;
  std::vector<double> f_delta;

  /// f_delta of the best point found within the first `n` evaluations.
  [[nodiscard]] std::optional<double> at(int n) const {
    const auto it = std::upper_bound(eval_index.begin(), eval_index.end(), n);
    if (it == eval_index.begin()) return std::nullopt;
    return f_delta[static_cast<std::size_t>(it - eval_index.begin()) - 1];
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

template <typename T>
T parse_number(const std::string& s, int line, const char* field) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw AggregationError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Reads a convergence CSV and audits every run: eval_index strictly
/// increasing, f_best non-increasing, f_delta non-negative.
inline std::vector<RunTrace> read_runs(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw AggregationError("empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw AggregationError("unexpected header: " + line);

  std::vector<RunTrace> runs;
  std::map<std::string, std::size_t> index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 9) {
      throw AggregationError("line " + std::to_string(lineno) + ": expected 9 fields");
    }
    auto [it, fresh] = index.try_emplace(f[0], runs.size());
    if (fresh) {
      RunTrace r;
      r.run_id = f[0];
      r.algorithm = f[1];
      r.function = f[2];
      r.dim = detail::parse_number<int>(f[3], lineno, "dim");
      runs.push_back(std::move(r));
    }
    RunTrace& r = runs[it->second];
    const int idx = detail::parse_number<int>(f[6], lineno, "eval_index");
    const double best = detail::parse_number<double>(f[7], lineno, "f_best");
    const double delta = detail::parse_number<double>(f[8], lineno, "f_delta");
    const std::string where = "run " + r.run_id + " line " + std::to_string(lineno);
    if (idx < 1) throw AggregationError(where + ": eval_index < 1");
    if (!r.eval_index.empty() && idx <= r.eval_index.back()) {
      throw AggregationError(where + ": eval_index not increasing");
    }
    if (!r.f_best.empty() && best > r.f_best.back()) {
      throw AggregationError(where + ": f_best increased");
    }
    if (delta < 0.0) throw AggregationError(where + ": negative f_delta");
    r.eval_index.push_back(idx);
    r.f_best.push_back(best);
    r.f_delta.push_back(delta);
  }
  return runs;
}

struct QuartileRow {
  std::string algorithm;
  std::string function;
  int dim = 0;
  int eval_index = 0;
  int n_trials = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// 10, 20, 50, 100, ... below `budget`, then `budget` itself.
inline std::vector<int> default_checkpoints(int budget) {
  std::vector<int> out;
  for (long decade = 1; decade < budget; decade *= 10) {
    for (long m : {10L, 20L, 50L}) {
      const long c = decade * m;
      if (c < budget) out.push_back(static_cast<int>(c));
    }
  }
  if (budget > 0) out.push_back(budget);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Groups runs by (algorithm, function, dim), in order of first appearance,
/// and computes quartiles of f_delta at each checkpoint. Runs whose last
/// evaluation precedes a checkpoint contribute their final value. Cells
/// without data are skipped with a line on `warn`.
inline std::vector<QuartileRow> aggregate_quartiles(const std::vector<RunTrace>& runs,
                                                    std::vector<int> checkpoints,
                                                    std::ostream* warn = nullptr) {
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

  struct Group {
    std::string algorithm, function;
    int dim;
    std::vector<const RunTrace*> runs;
  };
  std::vector<Group> groups;
  for (const RunTrace& r : runs) {
    auto g = std::find_if(groups.begin(), groups.end(), [&](const Group& x) {
      return x.algorithm == r.algorithm && x.function == r.function && x.dim == r.dim;
    });
    if (g == groups.end()) {
      groups.push_back({r.algorithm, r.function, r.dim, {}});
      g = groups.end() - 1;
    }
    g->runs.push_back(&r);
  }

  std::vector<QuartileRow> rows;
  for (const Group& g : groups) {
    for (int c : checkpoints) {
      std::vector<double> vals;
      for (const RunTrace* r : g.runs) {
        if (auto v = r->at(c)) vals.push_back(*v);
      }
      if (vals.empty()) {
        if (warn) {
          *warn << "warning: no data for " << g.algorithm << '/' << g.function << "/d" << g.dim
                << " at eval " << c << ", row omitted\n";
        }
        continue;
      }
      const Quartiles q = quartiles(vals);
      rows.push_back({g.algorithm, g.function, g.dim, c, static_cast<int>(vals.size()), q.q1,
                      q.median, q.q3});
    }
  }
  return rows;
}

inline void write_quartiles(std::ostream& out, const std::vector<QuartileRow>& rows) {
  out << kQuartileHeader << '\n';
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.function << ',' << r.dim << ',' << r.eval_index << ','
        << r.n_trials << ',' << format_double(r.q1) << ',' << format_double(r.median) << ','
        << format_double(r.q3) << '\n';
  }
}

inline std::vector<QuartileRow> read_quartiles(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw AggregationError("empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kQuartileHeader) throw AggregationError("unexpected header: " + line);
  std::vector<QuartileRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 8) throw AggregationError("line " + std::to_string(lineno) + ": expected 8 fields");
    QuartileRow r;
    r.algorithm = f[0];
    r.function = f[1];
    r.dim = detail::parse_number<int>(f[2], lineno, "dim");
    r.eval_index = detail::parse_number<int>(f[3], lineno, "eval_index");
    r.n_trials = detail::parse_number<int>(f[4], lineno, "n_trials");
    r.q1 = detail::parse_number<double>(f[5], lineno, "q1");
    r.median = detail::parse_number<double>(f[6], lineno, "median");
    r.q3 = detail::parse_number<double>(f[7], lineno, "q3");
    if (!(r.q1 <= r.median && r.median <= r.q3)) {
      throw AggregationError("line " + std::to_string(lineno) + ": quartiles out of order");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Parses "10,20,50" into checkpoints.
inline std::vector<int> parse_checkpoints(const std::string& s) {
  std::vector<int> out;
  for (const auto& tok : detail::split_csv_line(s)) {
    const std::string t = detail::trim(tok);
    if (t.empty()) continue;
    const int v = detail::parse_number<int>(t, 0, "checkpoint");
    if (v < 1) throw AggregationError("checkpoint must be >= 1: " + t);
    out.push_back(v);
  }
  if (out.empty()) throw AggregationError("no checkpoints given");
  return out;
}

}  // namespace mgso::harness
