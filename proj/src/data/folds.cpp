#include <algorithm>
#include <map>
#include <numeric>

#include "incepto/data.hpp"
#include "incepto/errors.hpp"
#include "incepto/rng.hpp"

namespace incepto::data {

std::vector<FoldSplit> stratified_folds(const std::vector<Segment>& segments, std::size_t k, SplitUnit unit,
                                        std::uint64_t seed, int n_classes) {
  if (k < 2) throw ConfigError("cross-validation needs k >= 2 folds");
  Rng rng(seed);
  std::vector<int> fold_of(segments.size(), -1);  // -1: always train (synthetic)
  const auto nc = static_cast<std::size_t>(n_classes);

  if (unit == SplitUnit::Segment) {
    std::vector<std::vector<std::size_t>> by_class(nc);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const Segment& s = segments[i];
      if (s.origin == Origin::Synthetic) continue;
      if (s.label < 0 || s.label >= n_classes) throw LabelingError("segment " + s.id + " has label " + std::to_string(s.label));
      by_class[static_cast<std::size_t>(s.label)].push_back(i);
    }
    // Deal each class round-robin, continuing where the previous class
    // stopped, so fold sizes differ by at most one overall.
    std::size_t next = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      auto& members = by_class[c];
      if (members.empty()) continue;
      if (members.size() < k) {
        throw SplitError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                         " segments, fewer than k = " + std::to_string(k) + " folds");
      }
      rng.shuffle(members);
      for (std::size_t i : members) {
        fold_of[i] = static_cast<int>(next % k);
        ++next;
      }
    }
  } else {
    // subject -> (label, segment indices) in first-appearance order
    std::vector<std::string> order;
    std::map<std::string, std::pair<int, std::vector<std::size_t>>> subjects;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const Segment& s = segments[i];
      if (s.origin == Origin::Synthetic) continue;
      if (s.label < 0 || s.label >= n_classes) throw LabelingError("segment " + s.id + " has label " + std::to_string(s.label));
      auto [it, inserted] = subjects.try_emplace(s.subject_id, s.label, std::vector<std::size_t>{});
      if (inserted) order.push_back(s.subject_id);
      if (it->second.first != s.label) throw LabelingError("subject " + s.subject_id + " has segments with different labels");
      it->second.second.push_back(i);
    }
    std::vector<std::vector<std::string>> by_class(nc);
    for (const auto& id : order) by_class[static_cast<std::size_t>(subjects[id].first)].push_back(id);
    std::vector<std::size_t> fold_total(k, 0);
    for (std::size_t c = 0; c < nc; ++c) {
      auto& ids = by_class[c];
      if (ids.empty()) continue;
      if (ids.size() < k) {
        throw SplitError("class " + std::to_string(c) + " has " + std::to_string(ids.size()) +
                         " subjects, fewer than k = " + std::to_string(k) + " folds");
      }
      rng.shuffle(ids);
      // largest subjects first; the shuffle decides among equal sizes
      std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
        return subjects[a].second.size() > subjects[b].second.size();
      });
      std::vector<std::size_t> fold_class(k, 0);
      for (const auto& id : ids) {
        std::size_t best = 0;
        for (std::size_t f = 1; f < k; ++f) {
          if (fold_class[f] < fold_class[best] ||
              (fold_class[f] == fold_class[best] && fold_total[f] < fold_total[best])) {
            best = f;
          }
        }
        const auto& members = subjects[id].second;
        fold_class[best] += members.size();
        fold_total[best] += members.size();
        for (std::size_t i : members) fold_of[i] = static_cast<int>(best);
      }
    }
  }

  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    FoldSplit& split = folds[f];
    split.fold_index = f;
    split.class_balance.assign(nc, 0.0);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (fold_of[i] == static_cast<int>(f)) {
        split.val_ids.push_back(segments[i].id);
        split.class_balance[static_cast<std::size_t>(segments[i].label)] += 1.0;
      } else {
        split.train_ids.push_back(segments[i].id);
      }
    }
    if (!split.val_ids.empty()) {
      for (double& b : split.class_balance) b /= static_cast<double>(split.val_ids.size());
    }
  }
  return folds;
}

}  // namespace incepto::data
