#pragma once

// Largest score/Wald/LR gap over the pilot replicates, rounded up to a
// multiple of 0.05 (see equivalence_pilot.cpp and data/equivalence_tau.txt).
inline constexpr double kEquivalenceTolerance = 0.30;
