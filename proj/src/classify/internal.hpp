#pragma once

#include <span>
#include <vector>

namespace inspectlab::classify::detail {

/// Sorted distinct labels into `classes`; returns each label's column index.
std::vector<int> encode_labels(std::span<const int> y, std::vector<int>& classes);

}  // namespace inspectlab::classify::detail
