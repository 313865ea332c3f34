#include "diffpur/diffusion.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace diffpur {

void validate(const GaussianMixtureModel& g) {
    if (g.means.empty() || g.weights.size() != g.means.size()) {
        throw ConfigError("mixture needs one weight per mean");
    }
    if (!(g.var > 0.0)) {
        throw ConfigError("mixture variance must be positive");
    }
    double sum = 0.0;
    for (double w : g.weights) {
        if (!(w > 0.0)) throw ConfigError("mixture weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ConfigError("mixture weights must sum to 1");
    }
    for (const Tensor& m : g.means) {
        if (!m.same_shape(g.means.front())) {
            throw ConfigError("mixture means must share one shape");
        }
    }
}

namespace {

void check_timestep(int t, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) {
        throw ConfigError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(s.T) + "]");
    }
}

}  // namespace

Tensor gmm_posterior_mean_x0(const GaussianMixtureModel& g, const Tensor& xt,
                             double alpha_bar, GmmDiagnostics* diag) {
    validate(g);
    if (!xt.same_shape(g.means.front())) {
        throw ShapeError("observation shape does not match mixture means");
    }
    const int K = static_cast<int>(g.means.size());
    const int N = xt.size();
    const double root_bar = std::sqrt(alpha_bar);
    // Marginal of xt under component k is N(sqrt(ab) m_k, s2 I).
    const double s2 = alpha_bar * g.var + (1.0 - alpha_bar);

    // Log responsibilities up to the shared normalizer.
    std::vector<double> log_r(K);
    for (int k = 0; k < K; ++k) {
        double sq = 0.0;
        for (int i = 0; i < N; ++i) {
            const double d = xt[i] - root_bar * g.means[k][i];
            sq += d * d;
        }
        log_r[k] = std::log(g.weights[k]) - 0.5 * sq / s2;
    }
    double max_log = -std::numeric_limits<double>::infinity();
    for (double v : log_r) max_log = std::max(max_log, v);

    std::vector<double> resp(K, 0.0);
    if (std::isfinite(max_log)) {
        double norm = 0.0;
        for (int k = 0; k < K; ++k) {
            resp[k] = std::exp(log_r[k] - max_log);
            norm += resp[k];
        }
        for (int k = 0; k < K; ++k) resp[k] /= norm;
    } else {
        // Every log-likelihood underflowed to -inf (observation absurdly
        // far from all components). Attribute everything to the nearest
        // component in scaled-mean distance.
        int best = 0;
        double best_sq = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            double sq = 0.0;
            for (int i = 0; i < N; ++i) {
                const double d = xt[i] - root_bar * g.means[k][i];
                sq += d * d;
            }
            if (sq < best_sq) {
                best_sq = sq;
                best = k;
            }
        }
        resp[best] = 1.0;
        if (diag != nullptr) diag->degenerate_fallback = true;
    }

    // Per-component Gaussian conditioning mean, then the responsibility
    // mixture of them.
    const double denom = (1.0 - alpha_bar) + alpha_bar * g.var;
    const double coef_x = root_bar * g.var / denom;
    const double coef_m = (1.0 - alpha_bar) / denom;
    Tensor out(xt.shape());
    for (int k = 0; k < K; ++k) {
        if (resp[k] == 0.0) continue;
        for (int i = 0; i < N; ++i) {
            out[i] += resp[k] * (coef_m * g.means[k][i] + coef_x * xt[i]);
        }
    }
    return out;
}

Tensor gmm_posterior_mean_x0(const GaussianMixtureModel& g, const Tensor& xt,
                             int t, const NoiseSchedule& s, GmmDiagnostics* diag) {
    check_timestep(t, s);
    return gmm_posterior_mean_x0(g, xt, s.alpha_bar[t], diag);
}

GmmDenoiser::GmmDenoiser(GaussianMixtureModel g) : gmm_(std::move(g)) {
    validate(gmm_);
}

Tensor GmmDenoiser::predict_x0(const Tensor& xt, double alpha_bar) const {
    GmmDiagnostics diag;
    Tensor out = gmm_posterior_mean_x0(gmm_, xt, alpha_bar, &diag);
    if (diag.degenerate_fallback) degenerate_count_.fetch_add(1);
    return out;
}

Tensor diffuse_to_with_eps(const Tensor& x0, int t, const NoiseSchedule& s,
                           const Tensor& eps) {
    check_timestep(t, s);
    if (!x0.same_shape(eps)) throw ShapeError("noise shape must match input");
    const double a = std::sqrt(s.alpha_bar[t]);
    const double b = std::sqrt(1.0 - s.alpha_bar[t]);
    Tensor out(x0.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

Tensor diffuse_to(const Tensor& x0, int t, const NoiseSchedule& s, RandomSource& rng) {
    check_timestep(t, s);
    Tensor eps = gaussian_like(x0.shape(), rng);
    return diffuse_to_with_eps(x0, t, s, eps);
}

Tensor forward_step(const Tensor& x_prev, double beta, const Tensor& eps) {
    if (!x_prev.same_shape(eps)) throw ShapeError("noise shape must match input");
    const double a = std::sqrt(1.0 - beta);
    const double b = std::sqrt(beta);
    Tensor out(x_prev.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a * x_prev[i] + b * eps[i];
    return out;
}

Tensor stepwise_diffuse(const Tensor& x0, int t, const NoiseSchedule& s,
                        RandomSource& rng) {
    check_timestep(t, s);
    Tensor x = x0;
    for (int k = 1; k <= t; ++k) {
        Tensor eps = gaussian_like(x.shape(), rng);
        x = forward_step(x, s.beta[k], eps);
    }
    return x;
}

Tensor denoiser_mean_from_x0hat(const Tensor& x0hat, const Tensor& xt,
                                const ReverseStep& step) {
    if (!x0hat.same_shape(xt)) throw ShapeError("prediction shape must match input");
    const double root_bar = std::sqrt(step.alpha_bar);
    const double root_one_minus = std::sqrt(1.0 - step.alpha_bar);
    const double alpha_eff = 1.0 - step.beta_eff;
    const double inv_root_alpha = 1.0 / std::sqrt(alpha_eff);
    const double noise_coef = step.beta_eff / root_one_minus;

    Tensor out(xt.shape());
    for (int i = 0; i < out.size(); ++i) {
        const double eps_hat = (xt[i] - root_bar * x0hat[i]) / root_one_minus;
        out[i] = inv_root_alpha * (xt[i] - noise_coef * eps_hat);
    }
    return out;
}

Tensor denoiser_mean_from_x0hat(const Tensor& x0hat, const Tensor& xt, int t,
                                const NoiseSchedule& s) {
    check_timestep(t, s);
    ReverseStep step;
    step.t = t;
    step.alpha_bar = s.alpha_bar[t];
    step.alpha_bar_prev = s.alpha_bar[t - 1];
    step.beta_eff = s.beta[t];
    step.sigma2_small = s.sigma2_small[t];
    step.sigma2_large = s.sigma2_large[t];
    return denoiser_mean_from_x0hat(x0hat, xt, step);
}

Tensor reverse_step_mean(const Tensor& xt, const ReverseStep& step, const Denoiser& d) {
    Tensor x0hat = d.predict_x0(xt, step.alpha_bar);
    if (!x0hat.same_shape(xt)) throw ShapeError("denoiser changed the shape");
    return denoiser_mean_from_x0hat(x0hat, xt, step);
}

Tensor reverse_step(const Tensor& xt, const ReverseStep& step, const Denoiser& d,
                    Sigma2Policy policy, RandomSource& rng) {
    Tensor mean = reverse_step_mean(xt, step, d);
    const double sigma2 =
        policy == Sigma2Policy::Large ? step.sigma2_large : step.sigma2_small;
    if (sigma2 == 0.0) return mean;
    const double sigma = std::sqrt(sigma2);
    Tensor z = gaussian_like(xt.shape(), rng);
    for (int i = 0; i < mean.size(); ++i) mean[i] += sigma * z[i];
    return mean;
}

Tensor reverse_step(const Tensor& xt, int t, const Denoiser& d,
                    const NoiseSchedule& s, Sigma2Policy policy, RandomSource& rng) {
    check_timestep(t, s);
    auto chain = reverse_steps(s, t);
    return reverse_step(xt, chain.front(), d, policy, rng);
}

namespace {

Tensor run_chain(const Tensor& start, const std::vector<ReverseStep>& chain,
                 const Denoiser& d, Sigma2Policy policy, RandomSource& rng) {
    Tensor x = start;
    for (const ReverseStep& step : chain) {
        x = reverse_step(x, step, d, policy, rng);
    }
    return x;
}

}  // namespace

Tensor sample(const Denoiser& d, const NoiseSchedule& s, const std::vector<int>& shape,
              Sigma2Policy policy, RandomSource& rng) {
    Tensor x = gaussian_like(shape, rng);
    return run_chain(x, reverse_steps(s, s.T), d, policy, rng);
}

Tensor sample(const Denoiser& d, const RespacedSchedule& r, const std::vector<int>& shape,
              Sigma2Policy policy, RandomSource& rng) {
    Tensor x = gaussian_like(shape, rng);
    return run_chain(x, reverse_steps(r, r.kept_steps.back()), d, policy, rng);
}

}  // namespace diffpur
