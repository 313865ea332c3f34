#include "diffpur/guidance.hpp"

#include <cmath>
#include <string>

namespace diffpur {

double default_scale_base(Metric metric) {
    return metric == Metric::Ssim ? 0.5 : 0.05;
}

void validate(const GuidanceConfig& cfg) {
    if (!(cfg.a > 0.0)) throw ConfigError("guidance scale base must be positive");
    if (!(cfg.gamma > 0.0) || !(cfg.gamma < 1.0)) {
        throw ConfigError("gamma must be in (0, 1)");
    }
    if (cfg.ssim_window < 1 || cfg.ssim_window % 2 == 0) {
        throw ConfigError("ssim window must be odd and positive");
    }
    if (!(cfg.ssim_c1 > 0.0) || !(cfg.ssim_c2 > 0.0)) {
        throw ConfigError("ssim constants must be positive");
    }
}

double mse(const Tensor& x, const Tensor& y) {
    if (!x.same_shape(y)) throw ShapeError("mse needs equal shapes");
    double sum = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sum += d * d;
    }
    return sum / x.size();
}

namespace {

struct ImageDims {
    int h = 0, w = 0, c = 0;
};

ImageDims image_dims(const Tensor& x) {
    const auto& shape = x.shape();
    if (shape.size() == 2) return {shape[0], shape[1], 1};
    if (shape.size() == 3) return {shape[0], shape[1], shape[2]};
    throw ShapeError("ssim needs an {H, W} or {H, W, C} image");
}

struct WindowStats {
    double mux = 0.0, muy = 0.0, varx = 0.0, vary = 0.0, cov = 0.0;
};

// Population statistics over one window; (i0, j0) is the top-left
// corner, ch the channel.
WindowStats window_stats(const Tensor& x, const Tensor& y, const ImageDims& dims,
                         int i0, int j0, int ch, int win) {
    WindowStats st;
    const int n = win * win;
    for (int di = 0; di < win; ++di) {
        for (int dj = 0; dj < win; ++dj) {
            const int idx = ((i0 + di) * dims.w + (j0 + dj)) * dims.c + ch;
            st.mux += x[idx];
            st.muy += y[idx];
        }
    }
    st.mux /= n;
    st.muy /= n;
    for (int di = 0; di < win; ++di) {
        for (int dj = 0; dj < win; ++dj) {
            const int idx = ((i0 + di) * dims.w + (j0 + dj)) * dims.c + ch;
            const double dx = x[idx] - st.mux;
            const double dy = y[idx] - st.muy;
            st.varx += dx * dx;
            st.vary += dy * dy;
            st.cov += dx * dy;
        }
    }
    st.varx /= n;
    st.vary /= n;
    st.cov /= n;
    return st;
}

void check_ssim_inputs(const Tensor& x, const Tensor& y, const GuidanceConfig& cfg,
                       const ImageDims& dims) {
    validate(cfg);
    if (!x.same_shape(y)) throw ShapeError("ssim needs equal shapes");
    if (cfg.ssim_window > dims.h || cfg.ssim_window > dims.w) {
        throw ConfigError("ssim window " + std::to_string(cfg.ssim_window) +
                          " does not fit a " + std::to_string(dims.h) + "x" +
                          std::to_string(dims.w) + " image");
    }
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, const GuidanceConfig& cfg) {
    const ImageDims dims = image_dims(x);
    check_ssim_inputs(x, y, cfg, dims);
    const int win = cfg.ssim_window;
    const int rows = dims.h - win + 1;
    const int cols = dims.w - win + 1;

    double total = 0.0;
    for (int ch = 0; ch < dims.c; ++ch) {
        for (int i0 = 0; i0 < rows; ++i0) {
            for (int j0 = 0; j0 < cols; ++j0) {
                const WindowStats st = window_stats(x, y, dims, i0, j0, ch, win);
                const double a1 = 2.0 * st.mux * st.muy + cfg.ssim_c1;
                const double a2 = 2.0 * st.cov + cfg.ssim_c2;
                const double b1 = st.mux * st.mux + st.muy * st.muy + cfg.ssim_c1;
                const double b2 = st.varx + st.vary + cfg.ssim_c2;
                total += (a1 * a2) / (b1 * b2);
            }
        }
    }
    return total / (static_cast<double>(rows) * cols * dims.c);
}

double distance(Metric metric, const Tensor& x, const Tensor& y,
                const GuidanceConfig& cfg) {
    return metric == Metric::Mse ? mse(x, y) : -ssim(x, y, cfg);
}

Tensor distance_gradient(Metric metric, const Tensor& x, const Tensor& y,
                         const GuidanceConfig& cfg) {
    if (!x.same_shape(y)) throw ShapeError("gradient needs equal shapes");

    if (metric == Metric::Mse) {
        const double scale = 2.0 / x.size();
        Tensor grad(x.shape());
        for (int i = 0; i < x.size(); ++i) grad[i] = scale * (x[i] - y[i]);
        return grad;
    }

    // Gradient of -ssim: differentiate each window's index by the
    // quotient rule and scatter into the pixels of that window.
    const ImageDims dims = image_dims(x);
    check_ssim_inputs(x, y, cfg, dims);
    const int win = cfg.ssim_window;
    const int n = win * win;
    const int rows = dims.h - win + 1;
    const int cols = dims.w - win + 1;
    const double windows = static_cast<double>(rows) * cols * dims.c;

    Tensor grad(x.shape());
    for (int ch = 0; ch < dims.c; ++ch) {
        for (int i0 = 0; i0 < rows; ++i0) {
            for (int j0 = 0; j0 < cols; ++j0) {
                const WindowStats st = window_stats(x, y, dims, i0, j0, ch, win);
                const double a1 = 2.0 * st.mux * st.muy + cfg.ssim_c1;
                const double a2 = 2.0 * st.cov + cfg.ssim_c2;
                const double b1 = st.mux * st.mux + st.muy * st.muy + cfg.ssim_c1;
                const double b2 = st.varx + st.vary + cfg.ssim_c2;
                const double denom = b1 * b2;

                for (int di = 0; di < win; ++di) {
                    for (int dj = 0; dj < win; ++dj) {
                        const int idx =
                            ((i0 + di) * dims.w + (j0 + dj)) * dims.c + ch;
                        // d mu_x/dx = 1/n, d var_x/dx = 2(x - mu_x)/n,
                        // d cov/dx = (y - mu_y)/n.
                        const double da1 = 2.0 * st.muy / n;
                        const double da2 = 2.0 * (y[idx] - st.muy) / n;
                        const double db1 = 2.0 * st.mux / n;
                        const double db2 = 2.0 * (x[idx] - st.mux) / n;
                        const double ds =
                            (da1 * a2 + a1 * da2) / denom -
                            a1 * a2 * (db1 * b2 + b1 * db2) / (denom * denom);
                        grad[idx] -= ds / windows;
                    }
                }
            }
        }
    }
    return grad;
}

double guidance_scale_from_alpha_bar(double alpha_bar, const GuidanceConfig& cfg) {
    validate(cfg);
    if (!(alpha_bar > 0.0) || !(alpha_bar < 1.0)) {
        throw ConfigError("guidance scale needs alpha_bar in (0, 1)");
    }
    // Grouped so the square roots cancel exactly at alpha_bar = 1/2 and
    // the quotient 3/gamma is rounded once: the scale there is 3/gamma
    // to the last bit, which downstream checks rely on.
    return (3.0 / cfg.gamma) * (std::sqrt(1.0 - alpha_bar) / std::sqrt(alpha_bar)) *
           cfg.a;
}

double guidance_scale(int t, const NoiseSchedule& s, const GuidanceConfig& cfg) {
    if (t < 1 || t > s.T) throw ConfigError("guidance scale needs t in [1, T]");
    return guidance_scale_from_alpha_bar(s.alpha_bar[t], cfg);
}

Tensor guided_mean(const Tensor& xt, const ReverseStep& step, const Denoiser& d,
                   const GuidanceConfig& cfg, const Tensor& xt_adv, double sigma2,
                   GuidedStepDiagnostics* diag) {
    Tensor mean = reverse_step_mean(xt, step, d);
    const double s_t = guidance_scale_from_alpha_bar(step.alpha_bar, cfg);
    Tensor grad = distance_gradient(cfg.metric, xt, xt_adv, cfg);
    const double shift = s_t * sigma2;
    for (int i = 0; i < mean.size(); ++i) mean[i] -= shift * grad[i];

    if (diag != nullptr) {
        diag->t = step.t;
        diag->s_t = s_t;
        diag->grad_norm = l2_distance(grad, Tensor(grad.shape()));
        diag->shift_norm = shift * diag->grad_norm;
    }
    return mean;
}

Tensor guided_reverse_step(const Tensor& xt, const ReverseStep& step, const Denoiser& d,
                           const GuidanceConfig& cfg, const Tensor& x_adv,
                           Sigma2Policy policy, RandomSource& rng,
                           const Tensor* frozen_adv_eps, GuidedStepDiagnostics* diag) {
    if (!xt.same_shape(x_adv)) throw ShapeError("anchor shape must match input");

    const double root_bar = std::sqrt(step.alpha_bar);
    const double root_one_minus = std::sqrt(1.0 - step.alpha_bar);
    Tensor adv_eps = frozen_adv_eps != nullptr ? *frozen_adv_eps
                                               : gaussian_like(xt.shape(), rng);
    if (!adv_eps.same_shape(xt)) throw ShapeError("frozen noise shape must match input");
    Tensor xt_adv(xt.shape());
    for (int i = 0; i < xt_adv.size(); ++i) {
        xt_adv[i] = root_bar * x_adv[i] + root_one_minus * adv_eps[i];
    }

    const double sigma2 =
        policy == Sigma2Policy::Large ? step.sigma2_large : step.sigma2_small;
    Tensor mean = guided_mean(xt, step, d, cfg, xt_adv, sigma2, diag);
    if (sigma2 == 0.0) return mean;
    const double sigma = std::sqrt(sigma2);
    Tensor z = gaussian_like(xt.shape(), rng);
    for (int i = 0; i < mean.size(); ++i) mean[i] += sigma * z[i];
    return mean;
}

Tensor guided_reverse_step(const Tensor& xt, int t, const Denoiser& d,
                           const NoiseSchedule& s, const GuidanceConfig& cfg,
                           const Tensor& x_adv, Sigma2Policy policy, RandomSource& rng,
                           GuidedStepDiagnostics* diag) {
    if (t < 1 || t > s.T) throw ConfigError("guided step needs t in [1, T]");
    auto chain = reverse_steps(s, t);
    return guided_reverse_step(xt, chain.front(), d, cfg, x_adv, policy, rng, nullptr,
                               diag);
}

}  // namespace diffpur
