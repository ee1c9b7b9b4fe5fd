#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace seasonal {

using Rng = std::mt19937_64;

/// Independent substream seed for a named or numbered sub-task.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace seasonal
