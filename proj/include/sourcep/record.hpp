#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sourcep {

/// One dataset row. `label` is 1 for a Ponzi contract, 0 otherwise, and
/// absent for unlabeled records (e.g. freshly fetched sources).
struct ContractRecord {
  std::int64_t idx = 0;
  std::string source;
  std::optional<int> label;

  bool operator==(const ContractRecord&) const = default;
};

}  // namespace sourcep
