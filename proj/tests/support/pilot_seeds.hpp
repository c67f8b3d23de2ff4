#pragma once

#include <cstddef>
#include <cstdint>

// Design of the score/Wald/LR agreement check. The pilot seeds fix the
// tolerance; the check itself runs on the fresh seeds.
namespace equivalence_seeds {

inline constexpr std::size_t kN = 10000;
inline constexpr std::size_t kGrid = 10;
inline constexpr std::size_t kReps = 100;
inline constexpr std::uint64_t kPilot = 71000;
inline constexpr std::uint64_t kFresh = 83000;

}  // namespace equivalence_seeds
