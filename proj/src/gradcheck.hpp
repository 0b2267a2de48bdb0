#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpc {

struct GradCheckItem {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  int checked = 0;
  int skipped = 0;  // unstable probes (kink crossings), excluded
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  bool all_pass() const {
    for (const auto& it : items)
      if (!it.pass) return false;
    return !items.empty();
  }
};

// Central finite-difference verification (h = 1e-5, 64-bit) of every autodiff
// primitive and of the full depth -> mask -> shading chain on an 8x8 field.
GradCheckReport run_gradcheck(uint64_t seed);

}  // namespace dpc
