#include "csmc/reverse_sampler.hpp"

#include <array>
#include <cmath>

namespace csmc {

Sequence denoise_jump(const Denoiser& denoiser, const Sequence& xt, int t, int s, Rng& rng) {
  const TransitionModel& model = denoiser.model();
  if (t < 1 || t > model.num_steps() || s < 0 || s >= t) {
    throw InvalidArgument("denoise jump " + std::to_string(t) + " -> " + std::to_string(s) +
                          " is out of range");
  }
  const Sequence x0 = denoiser.sample_x0(xt, t, rng);
  std::vector<double> probs(static_cast<std::size_t>(model.alphabet_size()));
  Sequence out(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) {
    model.posterior_between(xt[i], x0[i], t, s, probs);
    out[i] = static_cast<Token>(sample_weighted(probs, rng));
  }
  return out;
}

Sequence denoise_step(const Denoiser& denoiser, const Sequence& xt, int t, Rng& rng) {
  return denoise_jump(denoiser, xt, t, t - 1, rng);
}

Sequence generate(const Denoiser& denoiser, int length, Rng& rng) {
  if (length < 1) {
    throw InvalidArgument("generate needs a positive length");
  }
  const TransitionModel& model = denoiser.model();
  Sequence x = model.sample_prior(length, rng);
  for (int t = model.num_steps(); t >= 1; --t) {
    x = denoise_step(denoiser, x, t, rng);
  }
  return x;
}

std::vector<int> reverse_grid(int t, int steps) {
  if (t < 0) {
    throw InvalidArgument("reverse grid needs t >= 0");
  }
  if (steps < 1) {
    throw InvalidArgument("reverse grid needs at least one step");
  }
  std::vector<int> grid;
  if (t <= steps) {
    for (int s = t; s >= 0; --s) grid.push_back(s);
    return grid;
  }
  // t > steps, so consecutive rounded points differ by at least one.
  for (int i = steps; i >= 0; --i) {
    grid.push_back(static_cast<int>(std::lround(static_cast<double>(t) * i / steps)));
  }
  return grid;
}

Sequence partial_reverse(const Denoiser& denoiser, const Sequence& xt, int t, int steps, Rng& rng) {
  if (steps < 1) {
    throw InvalidArgument("partial reverse needs M >= 1");
  }
  if (t == 0) {
    denoiser.model().vocab().check(xt, true);
    return xt;
  }
  const auto grid = reverse_grid(t, steps);
  Sequence x = xt;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    x = denoise_jump(denoiser, x, grid[i], grid[i + 1], rng);
  }
  return x;
}

}  // namespace csmc
