#include <algorithm>
#include <cmath>

#include "incepto/data.hpp"
#include "incepto/errors.hpp"
#include "incepto/rng.hpp"

namespace incepto::data {

OversamplePlan make_plan(const std::vector<std::size_t>& counts, const std::vector<int>& minority,
                         std::size_t k_neighbors) {
  if (counts.empty()) throw ConfigError("oversampling plan needs class counts");
  OversamplePlan plan;
  plan.class_counts = counts;
  plan.k_neighbors = k_neighbors;
  plan.majority_class = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const std::size_t n_major = counts[static_cast<std::size_t>(plan.majority_class)];
  plan.n_new.assign(counts.size(), 0);
  for (int c : minority) {
    if (c < 0 || static_cast<std::size_t>(c) >= counts.size()) {
      throw ConfigError("minority class " + std::to_string(c) + " is out of range");
    }
    plan.n_new[static_cast<std::size_t>(c)] = n_major - counts[static_cast<std::size_t>(c)];
  }
  return plan;
}

namespace {

// Nearest same-class neighbors in per-channel z-scored space, computed on
// first use of each base sample.
class NeighborIndex {
 public:
  NeighborIndex(const std::vector<const Segment*>& members, const std::vector<double>& mean,
                const std::vector<double>& inv_sd, std::size_t k)
      : members_(members), k_(k), cache_(members.size()) {
    const std::size_t per = members.front()->values.size();
    const std::size_t channels = mean.size();
    const std::size_t len = per / channels;
    scaled_.resize(members.size() * per);
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < len; ++t)
          scaled_[i * per + c * len + t] = (members[i]->values[c * len + t] - mean[c]) * inv_sd[c];
    per_ = per;
  }

  const std::vector<std::size_t>& neighbors(std::size_t i) {
    if (!cache_[i].empty()) return cache_[i];
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(members_.size() - 1);
    const double* a = &scaled_[i * per_];
    for (std::size_t j = 0; j < members_.size(); ++j) {
      if (j == i) continue;
      const double* b = &scaled_[j * per_];
      double d = 0.0;
      for (std::size_t p = 0; p < per_; ++p) d += (a[p] - b[p]) * (a[p] - b[p]);
      dist.emplace_back(d, j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    for (std::size_t n = 0; n < k_; ++n) cache_[i].push_back(dist[n].second);
    return cache_[i];
  }

 private:
  const std::vector<const Segment*>& members_;
  std::size_t k_;
  std::size_t per_ = 0;
  std::vector<double> scaled_;
  std::vector<std::vector<std::size_t>> cache_;
};

}  // namespace

std::vector<Segment> smote(const std::vector<Segment>& segments, const OversamplePlan& plan, std::uint64_t seed,
                           const SmoteOptions& options) {
  const int n_classes = static_cast<int>(plan.n_new.size());
  if (plan.k_neighbors == 0) throw ConfigError("SMOTE k_neighbors must be >= 1");
  if (options.fixed_lambda && !(*options.fixed_lambda >= 0.0 && *options.fixed_lambda <= 1.0)) {
    throw ConfigError("SMOTE lambda must be in [0, 1]");
  }
  std::vector<std::vector<const Segment*>> by_class(static_cast<std::size_t>(n_classes));
  for (const Segment& s : segments) {
    if (s.label < 0 || s.label >= n_classes) throw LabelingError("segment " + s.id + " has label " + std::to_string(s.label));
    by_class[static_cast<std::size_t>(s.label)].push_back(&s);
  }
  std::vector<Segment> out = segments;
  if (std::all_of(plan.n_new.begin(), plan.n_new.end(), [](std::size_t n) { return n == 0; })) return out;

  // per-channel statistics over the whole input pool
  const std::size_t per = segments.front().values.size();
  const std::size_t channels = options.channels;
  if (channels == 0 || per % channels != 0) throw DimensionError("segment size is not a multiple of the channel count");
  std::vector<const Segment*> all;
  for (const Segment& s : segments) all.push_back(&s);
  const ChannelScaler scaler = ChannelScaler::fit(all, channels);
  std::vector<double> inv_sd(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_sd[c] = 1.0 / scaler.stdev[c];

  Rng rng(seed);
  for (int c = 0; c < n_classes; ++c) {
    const std::size_t n_new = plan.n_new[static_cast<std::size_t>(c)];
    if (n_new == 0) continue;
    const auto& members = by_class[static_cast<std::size_t>(c)];
    if (members.size() < 2) {
      throw OversamplingError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                              " sample(s); SMOTE needs at least 2");
    }
    if (plan.k_neighbors >= members.size()) {
      throw ConfigError("SMOTE k_neighbors = " + std::to_string(plan.k_neighbors) + " must be below the size of class " +
                        std::to_string(c) + " (" + std::to_string(members.size()) + ")");
    }
    NeighborIndex index(members, scaler.mean, inv_sd, plan.k_neighbors);
    for (std::size_t n = 0; n < n_new; ++n) {
      const std::size_t i = rng.index(members.size());
      const auto& nbrs = index.neighbors(i);
      const std::size_t j = nbrs[rng.index(nbrs.size())];
      const double lambda = options.fixed_lambda ? *options.fixed_lambda : rng.uniform();
      const Segment& xi = *members[i];
      const Segment& xj = *members[j];
      Segment s;
      s.id = options.id_prefix + "/c" + std::to_string(c) + "/" + std::to_string(n);
      s.label = c;
      s.subject_id = xi.subject_id;
      s.origin = Origin::Synthetic;
      s.parents = std::make_pair(xi.id, xj.id);
      s.lambda = lambda;
      s.values.resize(per);
      // (1-l)a + l b hits both endpoints exactly; the clamp removes rounding
      // excursions outside [min(a,b), max(a,b)] where the exact value lies
      for (std::size_t p = 0; p < per; ++p) {
        const double a = xi.values[p], b = xj.values[p];
        s.values[p] = std::clamp((1.0 - lambda) * a + lambda * b, std::min(a, b), std::max(a, b));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace incepto::data
