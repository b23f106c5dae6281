#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "joem/error.hpp"

namespace joem {

/// Disjoint seen / unseen class sets with a designated background class.
/// Only seen classes appear in training masks; unseen classes are known to
/// the model through their semantic vectors alone.
struct SplitSpec {
  std::set<int> seen;
  std::set<int> unseen;
  int background = 0;

  bool is_seen(int id) const { return seen.count(id) != 0; }
  bool is_unseen(int id) const { return unseen.count(id) != 0; }
  bool in_universe(int id) const { return is_seen(id) || is_unseen(id); }

  /// Sorted seen ids; relation matrices and the CE classifier index by this.
  std::vector<int> seen_ordered() const {
    return std::vector<int>(seen.begin(), seen.end());
  }

  std::vector<int> unseen_ordered() const {
    return std::vector<int>(unseen.begin(), unseen.end());
  }

  std::vector<int> universe_ordered() const {
    std::vector<int> all(seen.begin(), seen.end());
    all.insert(all.end(), unseen.begin(), unseen.end());
    std::sort(all.begin(), all.end());
    return all;
  }

  void validate() const {
    if (seen.empty()) {
      fail(ErrorKind::invalid_input, "SplitSpec: seen set is empty");
    }
    for (int id : unseen) {
      if (seen.count(id)) {
        fail(ErrorKind::invalid_input,
             "SplitSpec: class " + std::to_string(id) + " is both seen and unseen");
      }
    }
    if (!seen.count(background)) {
      fail(ErrorKind::invalid_input,
           "SplitSpec: background class " + std::to_string(background) +
               " must be a seen class");
    }
  }
};

/// Split over a contiguous universe 0..num_classes-1 with the given ids unseen.
inline SplitSpec make_split(int num_classes, const std::vector<int>& unseen_ids,
                            int background = 0) {
  SplitSpec split;
  split.background = background;
  split.unseen.insert(unseen_ids.begin(), unseen_ids.end());
  for (int c = 0; c < num_classes; ++c) {
    if (!split.unseen.count(c)) split.seen.insert(c);
  }
  split.validate();
  return split;
}

}  // namespace joem
