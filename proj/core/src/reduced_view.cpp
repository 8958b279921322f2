#include "repdecay/reduced_view.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "repdecay/params.hpp"

namespace repdecay {

std::vector<ReducedState> reduce(const NetworkState& state) {
  const std::uint32_t d = state.d_max();
  std::vector<ReducedState> out(state.n_servers());
  for (ServerId s = 0; s < state.n_servers(); ++s) {
    out[s].counts.resize(d);
    for (std::uint32_t k = 1; k <= d; ++k) {
      out[s].counts[k - 1] = static_cast<std::uint32_t>(state.class_members(s, k).size());
    }
  }
  return out;
}

std::vector<ReducedState> reduce(const TrajectoryStats& stats, std::size_t sample) {
  if (sample >= stats.server_counts.size()) {
    throw std::out_of_range("reduce: trajectory sample without stored server counts");
  }
  const auto& flat = stats.server_counts[sample];
  const std::uint32_t d = stats.d_max;
  std::vector<ReducedState> out(stats.n_servers);
  for (std::uint32_t s = 0; s < stats.n_servers; ++s) {
    out[s].counts.assign(flat.begin() + static_cast<std::ptrdiff_t>(s) * d,
                         flat.begin() + static_cast<std::ptrdiff_t>(s + 1) * d);
  }
  return out;
}

void DiscreteMeasure::add(const LatticePoint& point, double weight) {
  if (point.size() != dim_) throw ValidationError("DiscreteMeasure: point dimension mismatch");
  if (weight == 0.0) return;
  weights_[point] += weight;
}

double DiscreteMeasure::weight(const LatticePoint& point) const {
  const auto it = weights_.find(point);
  return it == weights_.end() ? 0.0 : it->second;
}

double DiscreteMeasure::total() const {
  double acc = 0.0;
  for (const auto& entry : weights_) acc += entry.second;
  return acc;
}

std::string DiscreteMeasure::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [point, w] : weights_) list.push_back({point, w});
  return list.dump();
}

DiscreteMeasure DiscreteMeasure::from_json(const std::string& text) {
  const auto list = nlohmann::json::parse(text);
  if (!list.is_array() || list.empty()) {
    throw ValidationError("measure JSON must be a non-empty array");
  }
  DiscreteMeasure m(list.at(0).at(0).size());
  for (const auto& entry : list) {
    m.add(entry.at(0).get<LatticePoint>(), entry.at(1).get<double>());
  }
  return m;
}

EmpiricalMeasure empirical_measure(std::span<const ReducedState> reduced) {
  const std::size_t dim = reduced.empty() ? 0 : reduced.front().counts.size();
  std::map<LatticePoint, std::size_t> counts;
  for (const auto& r : reduced) {
    if (r.counts.size() != dim) throw ValidationError("empirical_measure: mixed dimensions");
    ++counts[r.counts];
  }
  EmpiricalMeasure out{DiscreteMeasure(dim), reduced.size()};
  const double n = static_cast<double>(reduced.size());
  for (const auto& [point, c] : counts) out.measure.add(point, static_cast<double>(c) / n);
  return out;
}

namespace {

double l1(const LatticePoint& a, const LatticePoint& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    acc += std::fabs(static_cast<double>(a[j]) - static_cast<double>(b[j]));
  }
  return acc;
}

}  // namespace

MeasureDistance measure_distance(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.dim() != b.dim()) throw ValidationError("measure_distance: dimension mismatch");

  struct Entry {
    const LatticePoint* point;
    double diff;
  };
  std::vector<Entry> entries;
  entries.reserve(a.support().size() + b.support().size());
  auto ia = a.support().begin();
  auto ib = b.support().begin();
  while (ia != a.support().end() || ib != b.support().end()) {
    if (ib == b.support().end() || (ia != a.support().end() && ia->first < ib->first)) {
      entries.push_back({&ia->first, ia->second});
      ++ia;
    } else if (ia == a.support().end() || ib->first < ia->first) {
      entries.push_back({&ib->first, -ib->second});
      ++ib;
    } else {
      entries.push_back({&ia->first, ia->second - ib->second});
      ++ia;
      ++ib;
    }
  }

  double l1_mass = 0.0;
  for (const auto& e : entries) l1_mass += std::fabs(e.diff);
  const double tv = 0.5 * l1_mass;

  // Greedy feasible test function: assign f(x) = sign(a-b)(x) in decreasing
  // order of |a-b|, clipped to the interval that keeps f 1-Lipschitz against
  // every value assigned so far. The McShane extension argument guarantees the
  // interval is nonempty. f = sign/2 is also feasible, hence the max with TV.
  std::vector<Entry> order;
  for (const auto& e : entries) {
    if (e.diff != 0.0) order.push_back(e);
  }
  std::stable_sort(order.begin(), order.end(), [](const Entry& x, const Entry& y) {
    return std::fabs(x.diff) > std::fabs(y.diff);
  });
  std::vector<double> values;
  values.reserve(order.size());
  double greedy = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    double lo = -1.0;
    double hi = 1.0;
    for (std::size_t m = 0; m < j; ++m) {
      const double dist = l1(*order[j].point, *order[m].point);
      lo = std::max(lo, values[m] - dist);
      hi = std::min(hi, values[m] + dist);
    }
    const double v = order[j].diff > 0.0 ? hi : lo;
    values.push_back(v);
    greedy += v * order[j].diff;
  }
  return {tv, std::max(tv, greedy)};
}

SharedPairReport shared_pair_diagnostic(const NetworkState& state) {
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  for (FileId f = 0; f < state.file_count(); ++f) {
    const auto hs = state.holders(f);
    for (std::size_t a = 0; a < hs.size(); ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        ServerId x = hs[a].server;
        ServerId y = hs[b].server;
        if (x > y) std::swap(x, y);
        ++counts[(static_cast<std::uint64_t>(x) << 32) | y];
      }
    }
  }
  SharedPairReport report;
  for (const auto& entry : counts) {
    report.max_shared = std::max(report.max_shared, entry.second);
    if (entry.second >= 2) ++report.offending_pairs;
  }
  return report;
}

}  // namespace repdecay
