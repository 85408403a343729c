#pragma once

#include "csim/types.hpp"

namespace csim {

// Number of positive / negative labels per query emitted by the generator
// (clipped on datasets too small to fill both lists).
inline constexpr int kSyntheticLabelsPerSide = 20;

// Builds the synthetic dataset described by `spec`: per video v and frame t
// the latent angle is phase_v + 2*pi*n_cycles*t/frames_per_video, embedded
// through a fixed orthonormal D x 2 matrix as (cos, sin) plus Gaussian noise
// of scale noise_sigma. Ground-truth positives (negatives) of a query are
// the frames with the smallest (largest) circular distance in the latent
// angle; positives always sit strictly closer than negatives. Ids are the
// decimal row indices so every serialization round trip keeps them
// resolvable.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace csim
