#pragma once

#include <vector>

#include "diffpur/errors.hpp"

namespace diffpur {

enum class Sigma2Policy { Small, Large };

/// Diffusion noise schedule over timesteps t = 1..T. Arrays are stored
/// with a sentinel at index 0 (beta[0] = 0, alpha_bar[0] = 1) so that
/// beta[t] really is the 1-indexed beta_t of the usual DDPM notation;
/// never read index 0 as a real step.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;        // size T+1, beta[0] unused sentinel
    std::vector<double> alpha;       // alpha[t] = 1 - beta[t]
    std::vector<double> alpha_bar;   // alpha_bar[0] = 1, cumulative product
    std::vector<double> sigma2_small;  // posterior variances, sigma2_small[1] = 0
    std::vector<double> sigma2_large;  // sigma2_large[t] = beta[t]
};

/// Coefficients for one reverse transition. Built identically for the
/// full schedule and for a respaced one, so the sampling loop does not
/// care which chain it is running.
struct ReverseStep {
    int t = 0;                // original timestep index (for diagnostics)
    double alpha_bar = 0.0;       // at this step
    double alpha_bar_prev = 1.0;  // at the previous kept step (1 before the chain)
    double beta_eff = 0.0;        // 1 - alpha_bar/alpha_bar_prev
    double sigma2_small = 0.0;
    double sigma2_large = 0.0;
};

/// Step-skipping view of a parent schedule: K kept original timesteps
/// (always including 1 and T for K >= 2) with effective betas chosen so
/// the cumulative alpha_bar at each kept step matches the parent.
struct RespacedSchedule {
    int K = 0;
    std::vector<int> kept_steps;       // strictly increasing, size K
    std::vector<double> beta_prime;    // size K, beta_prime[i] for kept_steps[i]
    const NoiseSchedule* parent = nullptr;
};

NoiseSchedule linear_schedule(int T, double beta1, double betaT);

RespacedSchedule respace(const NoiseSchedule& s, int K);

const std::vector<double>& sigma2_policy(const NoiseSchedule& s, Sigma2Policy policy);

/// Reverse chain as a list of transitions ordered from high t to low t
/// (the order the sampler consumes them). start_t bounds the chain: only
/// steps <= start_t are included. For the respaced variant, start_t must
/// be one of the kept steps.
std::vector<ReverseStep> reverse_steps(const NoiseSchedule& s, int start_t);
std::vector<ReverseStep> reverse_steps(const RespacedSchedule& r, int start_t);

/// Smallest kept step >= t (for mapping a requested diffusion depth onto
/// a respaced chain). Throws ConfigError if t exceeds the last kept step.
int nearest_kept_at_or_above(const RespacedSchedule& r, int t);

}  // namespace diffpur
