#include "diffpur/attacks.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "diffpur/errors.hpp"

namespace diffpur {

namespace {

double sign_of(double v) {
    if (v > 0.0) return 1.0;
    if (v < 0.0) return -1.0;
    return 0.0;
}

void signed_step_inplace(Tensor& x, const Tensor& grad, double step) {
    for (int i = 0; i < x.size(); ++i) x[i] += step * sign_of(grad[i]);
}

Tensor random_start_point(const Tensor& x, double gamma, RandomSource& rng) {
    Tensor out = x;
    for (int i = 0; i < out.size(); ++i)
        out[i] += gamma * (2.0 * rng.uniform() - 1.0);
    return clamp01(project_linf(x, out, gamma));
}

}  // namespace

void validate(const AttackConfig& cfg) {
    if (!(cfg.gamma >= 0.0) || cfg.gamma >= 1.0)
        throw ConfigError("attack gamma must lie in [0, 1)");
    if (cfg.steps < 1) throw ConfigError("attack needs at least one step");
    if (cfg.eot_samples < 1) throw ConfigError("eot_samples must be at least 1");
    if (cfg.spsa_queries < 2) throw ConfigError("spsa needs at least 2 queries per step");
    if (!(cfg.spsa_perturb > 0.0)) throw ConfigError("spsa_perturb must be positive");
}

double resolved_step_size(const AttackConfig& cfg) {
    return cfg.step_size > 0.0 ? cfg.step_size : cfg.gamma / 4.0;
}

Tensor project_linf(const Tensor& x_center, const Tensor& x, double gamma) {
    if (!x_center.same_shape(x)) throw ShapeError("project_linf: shape mismatch");
    if (!(gamma >= 0.0)) throw ConfigError("project_linf: negative radius");
    Tensor out = x;
    for (int i = 0; i < out.size(); ++i) {
        const double lo = x_center[i] - gamma;
        const double hi = x_center[i] + gamma;
        if (out[i] < lo) out[i] = lo;
        if (out[i] > hi) out[i] = hi;
    }
    return out;
}

void check_attack_output(const Tensor& x, const Tensor& x_adv, double gamma) {
    if (!x.same_shape(x_adv)) throw std::logic_error("attack output changed shape");
    const double slack = gamma + 1e-12;
    for (int i = 0; i < x.size(); ++i) {
        if (!(std::abs(x_adv[i] - x[i]) <= slack))
            throw std::logic_error("attack output left the perturbation ball");
        if (!(x_adv[i] >= 0.0 && x_adv[i] <= 1.0))
            throw std::logic_error("attack output left the pixel range");
    }
}

int draw_target_excluding(int num_classes, int y, RandomSource& rng) {
    if (num_classes < 2) throw ConfigError("targeted attack needs at least 2 classes");
    if (y < 0 || y >= num_classes) throw ConfigError("label out of range");
    int r = static_cast<int>(rng.uniform() * (num_classes - 1));
    if (r >= num_classes - 1) r = num_classes - 2;  // guard the u == 1-ulp edge
    return r >= y ? r + 1 : r;
}

Tensor rademacher_like(const std::vector<int>& shape, RandomSource& rng) {
    Tensor out(shape);
    for (int i = 0; i < out.size(); ++i)
        out[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return out;
}

Tensor pgd(const Classifier& model, const Tensor& x, int y, const AttackConfig& cfg,
           RandomSource& rng) {
    validate(cfg);
    const double step = resolved_step_size(cfg);
    int loss_label = y;
    double direction = 1.0;
    if (cfg.targeted) {
        loss_label = draw_target_excluding(num_classes(model), y, rng);
        direction = -1.0;
    }
    Tensor xp = cfg.random_start ? random_start_point(x, cfg.gamma, rng) : x;
    for (int s = 0; s < cfg.steps; ++s) {
        const Tensor grad = loss_and_input_grad(model, xp, loss_label).grad_x;
        signed_step_inplace(xp, grad, direction * step);
        xp = clamp01(project_linf(x, xp, cfg.gamma));
    }
    check_attack_output(x, xp, cfg.gamma);
    return xp;
}

Tensor bpda_eot(const Classifier& model, const PurifyFn& purifier, const Tensor& x,
                int y, const AttackConfig& cfg, RandomSource& rng) {
    validate(cfg);
    const double step = resolved_step_size(cfg);
    int loss_label = y;
    double direction = 1.0;
    if (cfg.targeted) {
        loss_label = draw_target_excluding(num_classes(model), y, rng);
        direction = -1.0;
    }
    Tensor xp = cfg.random_start ? random_start_point(x, cfg.gamma, rng) : x;
    for (int s = 0; s < cfg.steps; ++s) {
        Tensor grad_sum(x.shape());
        for (int j = 0; j < cfg.eot_samples; ++j) {
            RandomSource sub(rng.next_u64());
            const Tensor purified = purifier(xp, sub);
            if (!purified.same_shape(xp))
                throw ShapeError("purifier changed the image shape");
            const Tensor g = loss_and_input_grad(model, purified, loss_label).grad_x;
            for (int i = 0; i < grad_sum.size(); ++i) grad_sum[i] += g[i];
        }
        const double inv = 1.0 / static_cast<double>(cfg.eot_samples);
        for (int i = 0; i < grad_sum.size(); ++i) grad_sum[i] *= inv;
        signed_step_inplace(xp, grad_sum, direction * step);
        xp = clamp01(project_linf(x, xp, cfg.gamma));
    }
    check_attack_output(x, xp, cfg.gamma);
    return xp;
}

Tensor spsa_gradient_estimate(const BlackBoxLoss& loss, const Tensor& x, int pairs,
                              double r, RandomSource& rng) {
    if (pairs < 1) throw ConfigError("spsa estimate needs at least one probe pair");
    if (!(r > 0.0)) throw ConfigError("spsa probe radius must be positive");
    Tensor estimate(x.shape());
    for (int p = 0; p < pairs; ++p) {
        const Tensor u = rademacher_like(x.shape(), rng);
        Tensor plus = x;
        Tensor minus = x;
        for (int i = 0; i < x.size(); ++i) {
            plus[i] += r * u[i];
            minus[i] -= r * u[i];
        }
        const double coef = (loss(plus) - loss(minus)) / (2.0 * r);
        for (int i = 0; i < estimate.size(); ++i) estimate[i] += coef * u[i];
    }
    const double inv = 1.0 / static_cast<double>(pairs);
    for (int i = 0; i < estimate.size(); ++i) estimate[i] *= inv;
    return estimate;
}

Tensor spsa_ascend(const BlackBoxLoss& loss, const Tensor& x, const AttackConfig& cfg,
                   RandomSource& rng) {
    validate(cfg);
    const double step = resolved_step_size(cfg);
    const int pairs = cfg.spsa_queries / 2;
    Tensor xp = cfg.random_start ? random_start_point(x, cfg.gamma, rng) : x;
    for (int s = 0; s < cfg.steps; ++s) {
        const Tensor grad = spsa_gradient_estimate(loss, xp, pairs, cfg.spsa_perturb, rng);
        signed_step_inplace(xp, grad, step);
        xp = clamp01(project_linf(x, xp, cfg.gamma));
    }
    check_attack_output(x, xp, cfg.gamma);
    return xp;
}

namespace {

Tensor spsa_impl(const Classifier& model, const PurifyFn* pipeline, const Tensor& x,
                 int y, const AttackConfig& cfg, RandomSource& rng) {
    validate(cfg);
    int loss_label = y;
    double direction = 1.0;
    if (cfg.targeted) {
        loss_label = draw_target_excluding(num_classes(model), y, rng);
        direction = -1.0;
    }
    // Pipeline randomness is re-seeded per query from a stream that is
    // drawn once here, keeping the probe directions independent of how
    // many draws a purifier consumes.
    RandomSource query_rng = rng.substream(0x5053417175657279ULL);
    BlackBoxLoss loss = [&, direction](const Tensor& point) {
        if (pipeline == nullptr)
            return direction * loss_and_input_grad(model, point, loss_label).loss;
        RandomSource sub(query_rng.next_u64());
        const Tensor cleaned = (*pipeline)(point, sub);
        return direction * loss_and_input_grad(model, cleaned, loss_label).loss;
    };
    return spsa_ascend(loss, x, cfg, rng);
}

}  // namespace

Tensor spsa(const Classifier& model, const Tensor& x, int y, const AttackConfig& cfg,
            RandomSource& rng) {
    return spsa_impl(model, nullptr, x, y, cfg, rng);
}

Tensor spsa(const Classifier& model, const PurifyFn& pipeline, const Tensor& x, int y,
            const AttackConfig& cfg, RandomSource& rng) {
    return spsa_impl(model, &pipeline, x, y, cfg, rng);
}

}  // namespace diffpur
