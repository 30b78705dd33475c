#pragma once

#include <vector>

#include "csmc/core.hpp"
#include "csmc/denoiser.hpp"
#include "csmc/forward_process.hpp"

namespace csmc {

/// One ancestral move from time t to an earlier time s: draw x̂_0 from the
/// denoiser, then each position from q(x_s | x_t, x̂_0). One denoiser call.
Sequence denoise_jump(const Denoiser& denoiser, const Sequence& xt, int t, int s, Rng& rng);

/// denoise_jump to t-1.
Sequence denoise_step(const Denoiser& denoiser, const Sequence& xt, int t, Rng& rng);

/// Full reverse process from the prior over `length` positions. T denoiser calls.
Sequence generate(const Denoiser& denoiser, int length, Rng& rng);

/// Times t = t_M > ... > t_0 = 0 visited by an M-step reverse from t.
/// Evenly spaced in index (rounded); when t <= M every index is visited.
std::vector<int> reverse_grid(int t, int steps);

/// M-step reverse from x_t, returning only the final clean sequence.
Sequence partial_reverse(const Denoiser& denoiser, const Sequence& xt, int t, int steps, Rng& rng);

}  // namespace csmc
