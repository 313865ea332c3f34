#pragma once

#include <atomic>
#include <vector>

#include "diffpur/schedule.hpp"
#include "diffpur/tensor.hpp"

namespace diffpur {

/// Clean-signal predictor plugged into the reverse chain. alpha_bar is
/// the cumulative signal fraction at the observation's timestep, which
/// is all a marginal-based predictor needs; chain-specific coefficients
/// (full or respaced) are applied by the caller when assembling the
/// transition mean. Implementations must be safe for concurrent
/// read-only use.
struct Denoiser {
    virtual ~Denoiser() = default;
    virtual Tensor predict_x0(const Tensor& xt, double alpha_bar) const = 0;
};

/// Isotropic Gaussian mixture standing in for the data distribution.
struct GaussianMixtureModel {
    std::vector<double> weights;  // positive, sum to 1
    std::vector<Tensor> means;    // one per component, all the same shape
    double var = 0.0;             // shared per-component isotropic variance
};

void validate(const GaussianMixtureModel& g);

struct GmmDiagnostics {
    bool degenerate_fallback = false;
};

/// Exact E[x0 | xt] when the data prior is the given mixture and xt was
/// produced by the closed-form forward process at signal fraction
/// alpha_bar. Responsibilities are computed in log space with
/// max-subtraction; if every component log-likelihood is non-finite the
/// result falls back to the component nearest in scaled-mean distance
/// and the diagnostics flag is set.
Tensor gmm_posterior_mean_x0(const GaussianMixtureModel& g, const Tensor& xt,
                             double alpha_bar, GmmDiagnostics* diag = nullptr);
Tensor gmm_posterior_mean_x0(const GaussianMixtureModel& g, const Tensor& xt,
                             int t, const NoiseSchedule& s,
                             GmmDiagnostics* diag = nullptr);

class GmmDenoiser : public Denoiser {
public:
    explicit GmmDenoiser(GaussianMixtureModel g);

    Tensor predict_x0(const Tensor& xt, double alpha_bar) const override;

    const GaussianMixtureModel& model() const { return gmm_; }
    long degenerate_fallbacks() const { return degenerate_count_.load(); }

private:
    GaussianMixtureModel gmm_;
    mutable std::atomic<long> degenerate_count_{0};
};

/// Forward process, closed form: sqrt(alpha_bar_t) x0 + sqrt(1-alpha_bar_t) eps.
/// The _with_eps variant is the deterministic core; the rng variant draws
/// eps fresh. Throws ConfigError when t is outside [1, T].
Tensor diffuse_to_with_eps(const Tensor& x0, int t, const NoiseSchedule& s,
                           const Tensor& eps);
Tensor diffuse_to(const Tensor& x0, int t, const NoiseSchedule& s, RandomSource& rng);

/// One forward transition x^k = sqrt(1-beta) x^{k-1} + sqrt(beta) eps.
Tensor forward_step(const Tensor& x_prev, double beta, const Tensor& eps);

/// t forward transitions applied in sequence (the incremental definition
/// of the diffusion process; distributionally equal to diffuse_to).
Tensor stepwise_diffuse(const Tensor& x0, int t, const NoiseSchedule& s,
                        RandomSource& rng);

/// Standard mean parameterization: infer the noise estimate
/// eps_hat = (xt - sqrt(alpha_bar) x0hat)/sqrt(1-alpha_bar), then
/// mu = (xt - beta_eff/sqrt(1-alpha_bar) eps_hat)/sqrt(alpha_eff) with
/// alpha_eff = 1 - beta_eff. When alpha_bar_prev == 1 this reduces to
/// x0hat exactly.
Tensor denoiser_mean_from_x0hat(const Tensor& x0hat, const Tensor& xt,
                                const ReverseStep& step);
Tensor denoiser_mean_from_x0hat(const Tensor& x0hat, const Tensor& xt, int t,
                                const NoiseSchedule& s);

/// Transition mean mu(xt) assembled from the denoiser's clean-signal
/// prediction. This is the sigma=0 reverse step.
Tensor reverse_step_mean(const Tensor& xt, const ReverseStep& step,
                         const Denoiser& d);

/// One stochastic reverse transition: N(mu, sigma2 I). Draws nothing
/// when sigma2 is exactly zero (the final small-policy step), so that
/// step stays deterministic.
Tensor reverse_step(const Tensor& xt, const ReverseStep& step, const Denoiser& d,
                    Sigma2Policy policy, RandomSource& rng);
Tensor reverse_step(const Tensor& xt, int t, const Denoiser& d,
                    const NoiseSchedule& s, Sigma2Policy policy, RandomSource& rng);

/// Full generative run: x^T ~ N(0, I), then every reverse transition of
/// the (possibly respaced) chain down to x^0.
Tensor sample(const Denoiser& d, const NoiseSchedule& s, const std::vector<int>& shape,
              Sigma2Policy policy, RandomSource& rng);
Tensor sample(const Denoiser& d, const RespacedSchedule& r, const std::vector<int>& shape,
              Sigma2Policy policy, RandomSource& rng);

}  // namespace diffpur
