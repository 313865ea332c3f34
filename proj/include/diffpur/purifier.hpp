#pragma once

#include <vector>

#include "diffpur/diffusion.hpp"
#include "diffpur/guidance.hpp"
#include "diffpur/schedule.hpp"
#include "diffpur/tensor.hpp"

namespace diffpur {

struct PurifyConfig {
    int Tc = -1;  // diffusion length per iteration; -1 picks it from the
                  // submersion threshold below
    int M = 1;    // iteration count
    bool guided = false;
    GuidanceConfig guidance;
    int respace_K = 0;  // 0 runs the full schedule
    bool clamp_output = true;
    Sigma2Policy policy = Sigma2Policy::Small;
    // Anchor every iteration's guidance on the original input (the
    // attacked image); switch off to anchor on each iteration's own
    // starting point instead.
    bool anchor_original = true;
    double tc_threshold = 10.0;  // submersion ratio that auto-Tc must reach
};

/// Deterministic substitutions for the purifier's random draws; only
/// tests use these.
struct PurifyHooks {
    bool zero_diffusion_noise = false;  // forward (and anchor) eps = 0
    bool zero_step_noise = false;       // reverse steps return their means
    bool disable_guidance = false;      // guided config runs the unguided path
};

void validate(const PurifyConfig& cfg, const NoiseSchedule& s);

/// Ratio of the noise floor to the largest surviving perturbation at
/// step t: 3 sqrt(1-alpha_bar_t) / (gamma sqrt(alpha_bar_t)). Once this
/// is large the injected noise drowns any in-ball perturbation.
double submersion_ratio(int t, const NoiseSchedule& s, double gamma);

/// Smallest t whose submersion ratio reaches the threshold.
int suggest_tc(const NoiseSchedule& s, double gamma, double threshold = 10.0);

/// The diffusion depth a purification run actually starts from: the
/// configured (or suggested) Tc, lifted to the nearest kept step when
/// respacing is active.
int resolve_start_step(const PurifyConfig& cfg, const NoiseSchedule& s);

/// M rounds of: diffuse the current image to Tc, then run the reverse
/// chain back to a clean image. Clamps to [0,1] at the very end only.
Tensor purify_unguided(const Tensor& x_in, const PurifyConfig& cfg, const Denoiser& d,
                       const NoiseSchedule& s, RandomSource& rng,
                       const PurifyHooks* hooks = nullptr);

/// Same loop with every reverse step guided toward the diffused anchor.
/// Requires cfg.guided. Per-step diagnostics are appended to *diag_out
/// when given.
Tensor purify_guided(const Tensor& x_adv, const PurifyConfig& cfg, const Denoiser& d,
                     const NoiseSchedule& s, RandomSource& rng,
                     const PurifyHooks* hooks = nullptr,
                     std::vector<GuidedStepDiagnostics>* diag_out = nullptr);

/// Dispatch on cfg.guided.
Tensor purify(const Tensor& x_in, const PurifyConfig& cfg, const Denoiser& d,
              const NoiseSchedule& s, RandomSource& rng,
              const PurifyHooks* hooks = nullptr);

}  // namespace diffpur
