#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sv {

struct SelfTestLine {
  std::string name;
  bool pass = false;
  std::string detail;  // worst observed deviation, counts
};

struct SelfTestReport {
  std::vector<SelfTestLine> lines;
  bool all_pass = true;
};

// Fast built-in checks: edge-moment identities of the fundamental humps,
// bubble-space dimension counts against the rank of the divergence map, and
// the divergence properties of the w and fan fields on sampled patches.
SelfTestReport run_selftest(std::uint64_t seed = 7);

}  // namespace sv
