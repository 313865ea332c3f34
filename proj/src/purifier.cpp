#include "diffpur/purifier.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace diffpur {

void validate(const PurifyConfig& cfg, const NoiseSchedule& s) {
    if (cfg.Tc == 0 || cfg.Tc > s.T || cfg.Tc < -1) {
        throw ConfigError("purify Tc must be in [1, T] (or -1 for automatic)");
    }
    if (cfg.M < 1) throw ConfigError("purify needs at least one iteration");
    if (cfg.respace_K < 0 || cfg.respace_K > s.T) {
        throw ConfigError("respace_K must be in [1, T] (or 0 for the full chain)");
    }
    validate(cfg.guidance);
    if (!(cfg.tc_threshold > 0.0)) {
        throw ConfigError("submersion threshold must be positive");
    }
}

double submersion_ratio(int t, const NoiseSchedule& s, double gamma) {
    if (t < 1 || t > s.T) throw ConfigError("submersion ratio needs t in [1, T]");
    if (!(gamma > 0.0) || !(gamma < 1.0)) throw ConfigError("gamma must be in (0, 1)");
    const double bar = s.alpha_bar[t];
    return 3.0 * std::sqrt(1.0 - bar) / (gamma * std::sqrt(bar));
}

int suggest_tc(const NoiseSchedule& s, double gamma, double threshold) {
    for (int t = 1; t <= s.T; ++t) {
        if (submersion_ratio(t, s, gamma) >= threshold) return t;
    }
    throw ConfigError("no step reaches submersion ratio " + std::to_string(threshold));
}

namespace {

int resolved_tc(const PurifyConfig& cfg, const NoiseSchedule& s) {
    return cfg.Tc > 0 ? cfg.Tc
                      : suggest_tc(s, cfg.guidance.gamma, cfg.tc_threshold);
}

struct ChainPlan {
    int start_t = 0;
    std::optional<RespacedSchedule> respaced;
    std::vector<ReverseStep> steps;
};

ChainPlan plan_chain(const PurifyConfig& cfg, const NoiseSchedule& s) {
    ChainPlan plan;
    const int tc = resolved_tc(cfg, s);
    if (cfg.respace_K > 0) {
        plan.respaced = respace(s, cfg.respace_K);
        plan.start_t = nearest_kept_at_or_above(*plan.respaced, tc);
        plan.steps = reverse_steps(*plan.respaced, plan.start_t);
    } else {
        plan.start_t = tc;
        plan.steps = reverse_steps(s, tc);
    }
    return plan;
}

Tensor run_loop(const Tensor& x_in, const PurifyConfig& cfg, const Denoiser& d,
                const NoiseSchedule& s, RandomSource& rng, const PurifyHooks* hooks,
                const Tensor* guide_anchor,
                std::vector<GuidedStepDiagnostics>* diag_out) {
    validate(cfg, s);
    if (!x_in.all_finite()) throw ConfigError("purify input must be finite");

    const bool guide = guide_anchor != nullptr &&
                       !(hooks != nullptr && hooks->disable_guidance);
    const bool zero_fwd = hooks != nullptr && hooks->zero_diffusion_noise;
    const bool zero_step = hooks != nullptr && hooks->zero_step_noise;
    const ChainPlan plan = plan_chain(cfg, s);
    const Tensor zeros(x_in.shape());

    Tensor x = x_in;
    for (int iter = 0; iter < cfg.M; ++iter) {
        const Tensor anchor =
            guide ? (cfg.anchor_original ? *guide_anchor : x) : zeros;

        Tensor eps = zero_fwd ? zeros : gaussian_like(x.shape(), rng);
        x = diffuse_to_with_eps(x, plan.start_t, s, eps);

        std::optional<Tensor> frozen_adv_eps;
        if (guide && cfg.guidance.adv_noise == AdvNoiseMode::Frozen) {
            frozen_adv_eps = zero_fwd ? zeros : gaussian_like(x.shape(), rng);
        }

        for (const ReverseStep& step : plan.steps) {
            const double sigma2 = cfg.policy == Sigma2Policy::Large
                                      ? step.sigma2_large
                                      : step.sigma2_small;
            if (guide) {
                // Anchor diffused to this step's noise level; same draw
                // order as the standalone guided step (anchor noise,
                // then step noise).
                Tensor adv_eps = frozen_adv_eps ? *frozen_adv_eps
                                : zero_fwd      ? zeros
                                                : gaussian_like(x.shape(), rng);
                const double root_bar = std::sqrt(step.alpha_bar);
                const double root_one_minus = std::sqrt(1.0 - step.alpha_bar);
                Tensor xt_adv(x.shape());
                for (int i = 0; i < xt_adv.size(); ++i) {
                    xt_adv[i] = root_bar * anchor[i] + root_one_minus * adv_eps[i];
                }
                GuidedStepDiagnostics diag;
                x = guided_mean(x, step, d, cfg.guidance, xt_adv, sigma2,
                                diag_out != nullptr ? &diag : nullptr);
                if (diag_out != nullptr) diag_out->push_back(diag);
            } else {
                x = reverse_step_mean(x, step, d);
            }
            if (!zero_step && sigma2 > 0.0) {
                const double sigma = std::sqrt(sigma2);
                Tensor z = gaussian_like(x.shape(), rng);
                for (int i = 0; i < x.size(); ++i) x[i] += sigma * z[i];
            }
        }
    }
    return cfg.clamp_output ? clamp01(x) : x;
}

}  // namespace

int resolve_start_step(const PurifyConfig& cfg, const NoiseSchedule& s) {
    validate(cfg, s);
    return plan_chain(cfg, s).start_t;
}

Tensor purify_unguided(const Tensor& x_in, const PurifyConfig& cfg, const Denoiser& d,
                       const NoiseSchedule& s, RandomSource& rng,
                       const PurifyHooks* hooks) {
    return run_loop(x_in, cfg, d, s, rng, hooks, nullptr, nullptr);
}

Tensor purify_guided(const Tensor& x_adv, const PurifyConfig& cfg, const Denoiser& d,
                     const NoiseSchedule& s, RandomSource& rng,
                     const PurifyHooks* hooks,
                     std::vector<GuidedStepDiagnostics>* diag_out) {
    if (!cfg.guided) throw ConfigError("purify_guided needs cfg.guided");
    return run_loop(x_adv, cfg, d, s, rng, hooks, &x_adv, diag_out);
}

Tensor purify(const Tensor& x_in, const PurifyConfig& cfg, const Denoiser& d,
              const NoiseSchedule& s, RandomSource& rng, const PurifyHooks* hooks) {
    return cfg.guided ? purify_guided(x_in, cfg, d, s, rng, hooks)
                      : purify_unguided(x_in, cfg, d, s, rng, hooks);
}

}  // namespace diffpur
