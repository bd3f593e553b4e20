#pragma once

// Independent recount of how a resampled environment draws from each class's
// low-confidence pool.

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "glt/ifl.hpp"

namespace glt::oracle {

// ceil(num * n / 10) in integer arithmetic.
inline std::size_t ceil_tenths(std::size_t num, std::size_t n) { return (num * n + 9) / 10; }

struct EnvAudit {
  bool sizes_match = true;
  bool labels_match = true;
  std::size_t classes = 0;
  std::size_t exact = 0;  // classes whose low-pool slot count equals ceil(0.8 n)
  std::string first_mismatch;
};

// Audits env-2 for tail_fraction 0.2 / tail_mass 0.8. The pool is the lowest
// ceil(0.2 n) scores of a class, ties broken by position.
inline EnvAudit audit_env2(const ifl::Environment& env, std::span<const int> y,
                           std::span<const double> scores, int n_classes) {
  EnvAudit a;
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) members[y[i]].push_back(i);
  for (int k = 0; k < n_classes; ++k) {
    const auto& m = members[k];
    if (m.empty()) continue;
    ++a.classes;
    const auto& slots = env.per_class.at(k);
    if (slots.size() != m.size()) a.sizes_match = false;
    for (auto i : slots)
      if (y[i] != k) a.labels_match = false;

    auto ranked = m;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t p, std::size_t q) { return scores[p] < scores[q]; });
    const std::set<std::size_t> pool(ranked.begin(), ranked.begin() + ceil_tenths(2, m.size()));
    std::size_t from_pool = 0;
    for (auto i : slots) from_pool += pool.count(i);
    if (m.size() < 2 || from_pool == ceil_tenths(8, m.size())) {
      ++a.exact;
    } else if (a.first_mismatch.empty()) {
      a.first_mismatch = "class " + std::to_string(k) + " n=" + std::to_string(m.size()) +
                         " pool slots " + std::to_string(from_pool);
    }
  }
  return a;
}

}  // namespace glt::oracle
