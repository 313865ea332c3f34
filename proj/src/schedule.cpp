#include "diffpur/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace diffpur {

NoiseSchedule linear_schedule(int T, double beta1, double betaT) {
    if (T < 2) {
        throw ConfigError("schedule needs T >= 2, got " + std::to_string(T));
    }
    if (!(beta1 > 0.0) || !(beta1 <= betaT) || !(betaT < 1.0)) {
        throw ConfigError("schedule needs 0 < beta1 <= betaT < 1");
    }

    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    s.sigma2_small.assign(T + 1, 0.0);
    s.sigma2_large.assign(T + 1, 0.0);

    for (int t = 1; t <= T; ++t) {
        s.beta[t] = beta1 + (betaT - beta1) * static_cast<double>(t - 1) / (T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.sigma2_large[t] = s.beta[t];
        // Posterior variance of x^{t-1} given (x^t, x^0); zero at t=1
        // because alpha_bar[0] = 1.
        s.sigma2_small[t] =
            (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
    }
    return s;
}

RespacedSchedule respace(const NoiseSchedule& s, int K) {
    if (K < 1 || K > s.T) {
        throw ConfigError("respace needs 1 <= K <= T, got K=" + std::to_string(K));
    }

    RespacedSchedule r;
    r.K = K;
    r.parent = &s;
    r.kept_steps.reserve(K);
    if (K == 1) {
        r.kept_steps.push_back(s.T);
    } else {
        // Uniform stride from 1 to T inclusive. The stride is >= 1 so the
        // rounded values are strictly increasing.
        for (int i = 0; i < K; ++i) {
            const double pos = 1.0 + static_cast<double>(i) *
                                         static_cast<double>(s.T - 1) / (K - 1);
            r.kept_steps.push_back(static_cast<int>(std::lround(pos)));
        }
    }

    r.beta_prime.reserve(K);
    double prev_bar = 1.0;
    for (int i = 0; i < K; ++i) {
        const double bar = s.alpha_bar[r.kept_steps[i]];
        r.beta_prime.push_back(1.0 - bar / prev_bar);
        prev_bar = bar;
    }
    return r;
}

const std::vector<double>& sigma2_policy(const NoiseSchedule& s, Sigma2Policy policy) {
    return policy == Sigma2Policy::Large ? s.sigma2_large : s.sigma2_small;
}

std::vector<ReverseStep> reverse_steps(const NoiseSchedule& s, int start_t) {
    if (start_t < 1 || start_t > s.T) {
        throw ConfigError("reverse chain start must be in [1, T]");
    }
    std::vector<ReverseStep> chain;
    chain.reserve(start_t);
    for (int t = start_t; t >= 1; --t) {
        ReverseStep step;
        step.t = t;
        step.alpha_bar = s.alpha_bar[t];
        step.alpha_bar_prev = s.alpha_bar[t - 1];
        step.beta_eff = s.beta[t];
        step.sigma2_small = s.sigma2_small[t];
        step.sigma2_large = s.sigma2_large[t];
        chain.push_back(step);
    }
    return chain;
}

std::vector<ReverseStep> reverse_steps(const RespacedSchedule& r, int start_t) {
    const auto& kept = r.kept_steps;
    const auto it = std::find(kept.begin(), kept.end(), start_t);
    if (it == kept.end()) {
        throw ConfigError("reverse chain start " + std::to_string(start_t) +
                          " is not a kept step of the respaced schedule");
    }
    const int start_idx = static_cast<int>(it - kept.begin());

    std::vector<ReverseStep> chain;
    chain.reserve(start_idx + 1);
    const NoiseSchedule& s = *r.parent;
    for (int i = start_idx; i >= 0; --i) {
        ReverseStep step;
        step.t = kept[i];
        step.alpha_bar = s.alpha_bar[kept[i]];
        step.alpha_bar_prev = i > 0 ? s.alpha_bar[kept[i - 1]] : 1.0;
        step.beta_eff = r.beta_prime[i];
        step.sigma2_large = step.beta_eff;
        step.sigma2_small = (1.0 - step.alpha_bar_prev) /
                            (1.0 - step.alpha_bar) * step.beta_eff;
        chain.push_back(step);
    }
    return chain;
}

int nearest_kept_at_or_above(const RespacedSchedule& r, int t) {
    for (int kept : r.kept_steps) {
        if (kept >= t) return kept;
    }
    throw ConfigError("no kept step at or above t=" + std::to_string(t));
}

}  // namespace diffpur
