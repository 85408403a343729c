#pragma once

#include "csim/types.hpp"

namespace csim {

// Sentinel: pick ridge = 1e-6 * trace(cov) / D.
inline constexpr double kAutoRidge = -1.0;

// Centers the descriptors and multiplies by the inverse principal square
// root of the sample covariance (normalized by N - 1) plus ridge * I.
// With ridge = 0 a singular covariance is an error advising ridge > 0.
WhitenedSet whiten(const ExemplarSet& set, double ridge = kAutoRidge);

}  // namespace csim
