#pragma once

#include "diffpur/diffusion.hpp"
#include "diffpur/schedule.hpp"
#include "diffpur/tensor.hpp"

namespace diffpur {

enum class Metric { Mse, Ssim };

/// How the anchor image is diffused to the current step when guiding:
/// a fresh Gaussian draw per reverse step, or one draw frozen for a
/// whole reverse chain.
enum class AdvNoiseMode { Fresh, Frozen };

struct GuidanceConfig {
    Metric metric = Metric::Mse;
    double a = 0.05;             // base guidance scale
    double gamma = 8.0 / 255.0;  // L-inf perturbation bound the scale is tied to
    int ssim_window = 7;
    double ssim_c1 = 1e-4;  // (0.01 * L)^2 with pixel range L = 1
    double ssim_c2 = 9e-4;  // (0.03 * L)^2
    AdvNoiseMode adv_noise = AdvNoiseMode::Fresh;
};

/// Conventional starting point for the base scale; useful when a config
/// file names a metric but leaves the scale unset.
double default_scale_base(Metric metric);

void validate(const GuidanceConfig& cfg);

struct GuidedStepDiagnostics {
    int t = 0;
    double s_t = 0.0;
    double grad_norm = 0.0;   // L2 norm of the distance gradient
    double shift_norm = 0.0;  // L2 norm of the applied mean shift
};

double mse(const Tensor& x, const Tensor& y);

/// Mean structural similarity over valid positions of a sliding uniform
/// window, per channel, with population (co)variances. Input must be
/// {H, W} or {H, W, C}.
double ssim(const Tensor& x, const Tensor& y, const GuidanceConfig& cfg);

/// The distance the guidance descends: MSE itself, or negative SSIM.
double distance(Metric metric, const Tensor& x, const Tensor& y,
                const GuidanceConfig& cfg);

/// Analytic gradient of distance() with respect to x.
Tensor distance_gradient(Metric metric, const Tensor& x, const Tensor& y,
                         const GuidanceConfig& cfg);

/// Time-dependent guidance scale 3 sqrt(1-alpha_bar) / (gamma sqrt(alpha_bar)) * a.
/// Grows as the noise level does, so late (high-t) steps take stronger
/// guidance.
double guidance_scale_from_alpha_bar(double alpha_bar, const GuidanceConfig& cfg);
double guidance_scale(int t, const NoiseSchedule& s, const GuidanceConfig& cfg);

/// Deterministic guided transition mean: the unguided mean minus
/// s_t * sigma2 * grad D(xt, xt_adv), where xt_adv is the already
/// diffused anchor. The sigma2=0 case reduces to the unguided mean.
Tensor guided_mean(const Tensor& xt, const ReverseStep& step, const Denoiser& d,
                   const GuidanceConfig& cfg, const Tensor& xt_adv, double sigma2,
                   GuidedStepDiagnostics* diag = nullptr);

/// One stochastic guided reverse transition. Diffuses x_adv to this
/// step's noise level (drawing eps from rng, or reusing *frozen_adv_eps
/// when provided), shifts the mean, then adds sigma * z. RNG order per
/// call: denoiser-independent anchor noise first, then the step noise.
Tensor guided_reverse_step(const Tensor& xt, const ReverseStep& step, const Denoiser& d,
                           const GuidanceConfig& cfg, const Tensor& x_adv,
                           Sigma2Policy policy, RandomSource& rng,
                           const Tensor* frozen_adv_eps = nullptr,
                           GuidedStepDiagnostics* diag = nullptr);
Tensor guided_reverse_step(const Tensor& xt, int t, const Denoiser& d,
                           const NoiseSchedule& s, const GuidanceConfig& cfg,
                           const Tensor& x_adv, Sigma2Policy policy, RandomSource& rng,
                           GuidedStepDiagnostics* diag = nullptr);

}  // namespace diffpur
