#include "doctest.h"

#include <cmath>
#include <vector>

#include "diffpur/guidance.hpp"

using diffpur::ConfigError;
using diffpur::GaussianMixtureModel;
using diffpur::GmmDenoiser;
using diffpur::GuidanceConfig;
using diffpur::GuidedStepDiagnostics;
using diffpur::Metric;
using diffpur::NoiseSchedule;
using diffpur::RandomSource;
using diffpur::ShapeError;
using diffpur::Sigma2Policy;
using diffpur::Tensor;

namespace {

Tensor random_image(int h, int w, RandomSource& rng) {
    Tensor img({h, w});
    for (int i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    return img;
}

// Scale-normalized worst-case gradient error: largest entry deviation
// relative to the largest finite-difference magnitude.
double max_relative_grad_error(const Tensor& analytic, const Tensor& fd) {
    double worst = 0.0;
    double scale = 0.0;
    for (int i = 0; i < fd.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - fd[i]));
        scale = std::max(scale, std::abs(fd[i]));
    }
    return worst / scale;
}

template <typename F>
Tensor central_differences(const Tensor& x, double h, F f) {
    Tensor grad(x.shape());
    Tensor probe = x;
    for (int i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace

TEST_CASE("guidance config validation") {
    GuidanceConfig cfg;
    CHECK_NOTHROW(diffpur::validate(cfg));

    GuidanceConfig bad = cfg;
    bad.a = 0.0;
    CHECK_THROWS_AS(diffpur::validate(bad), ConfigError);
    bad = cfg;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(diffpur::validate(bad), ConfigError);
    bad = cfg;
    bad.ssim_window = 6;
    CHECK_THROWS_AS(diffpur::validate(bad), ConfigError);

    CHECK(diffpur::default_scale_base(Metric::Mse) == 0.05);
    CHECK(diffpur::default_scale_base(Metric::Ssim) == 0.5);
}

TEST_CASE("mse follows its definition") {
    Tensor a({2}, {0.0, 0.0});
    Tensor b({2}, {1.0, 1.0});
    CHECK(diffpur::mse(a, a) == 0.0);
    CHECK(diffpur::mse(a, b) == 1.0);
    CHECK_THROWS_AS(diffpur::mse(a, Tensor({3})), ShapeError);

    RandomSource rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = diffpur::gaussian_like({6, 5}, rng);
        Tensor y = diffpur::gaussian_like({6, 5}, rng);
        long double acc = 0.0L;
        for (int i = 0; i < x.size(); ++i) {
            const long double d = static_cast<long double>(x[i]) - y[i];
            acc += d * d;
        }
        const double oracle = static_cast<double>(acc / x.size());
        CHECK(std::abs(diffpur::mse(x, y) - oracle) < 1e-14);
    }
}

TEST_CASE("ssim is one for identical images") {
    GuidanceConfig cfg;
    RandomSource rng(7);
    Tensor x = random_image(9, 9, rng);
    CHECK(diffpur::ssim(x, x, cfg) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim on constant images matches the closed formula") {
    GuidanceConfig cfg;
    const double c1 = 0.3, c2 = 0.6;
    Tensor x = Tensor::full({8, 8}, c1);
    Tensor y = Tensor::full({8, 8}, c2);
    // Variance terms vanish, so the covariance factor cancels and the
    // index reduces to the luminance term alone.
    const double expected =
        (2.0 * c1 * c2 + cfg.ssim_c1) / (c1 * c1 + c2 * c2 + cfg.ssim_c1);
    CHECK(diffpur::ssim(x, y, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim is symmetric and near one under tiny noise") {
    GuidanceConfig cfg;
    RandomSource rng(11);
    Tensor x = random_image(9, 9, rng);
    Tensor y = x;
    for (int i = 0; i < y.size(); ++i) y[i] += 1e-3 * rng.normal();

    const double forward = diffpur::ssim(x, y, cfg);
    const double backward = diffpur::ssim(y, x, cfg);
    CHECK(std::abs(forward - backward) < 1e-12);
    CHECK(forward > 0.99);
    CHECK(forward < 1.0);
}

TEST_CASE("ssim handles channels and rejects bad windows") {
    GuidanceConfig cfg;
    RandomSource rng(13);
    Tensor x({9, 9, 2});
    Tensor y({9, 9, 2});
    for (int i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform();
        y[i] = rng.uniform();
    }
    CHECK(diffpur::ssim(x, y, cfg) == doctest::Approx(diffpur::ssim(y, x, cfg)));

    Tensor small({5, 5});
    CHECK_THROWS_AS(diffpur::ssim(small, small, cfg), ConfigError);
    Tensor flat({25});
    CHECK_THROWS_AS(diffpur::ssim(flat, flat, cfg), ShapeError);
}

TEST_CASE("mse gradient is 2(x-y)/N") {
    GuidanceConfig cfg;
    Tensor x({2, 2}, {0.1, 0.5, 0.9, 0.2});
    Tensor y({2, 2}, {0.0, 0.5, 1.0, 0.6});
    Tensor g = diffpur::distance_gradient(Metric::Mse, x, y, cfg);
    for (int i = 0; i < 4; ++i) {
        CHECK(g[i] == doctest::Approx(2.0 * (x[i] - y[i]) / 4.0).epsilon(1e-14));
    }
    Tensor zero = diffpur::distance_gradient(Metric::Mse, x, x, cfg);
    for (int i = 0; i < 4; ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("mse gradient matches central differences") {
    GuidanceConfig cfg;
    RandomSource rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_image(5, 5, rng);
        Tensor y = random_image(5, 5, rng);
        Tensor g = diffpur::distance_gradient(Metric::Mse, x, y, cfg);
        Tensor fd = central_differences(
            x, 1e-5, [&](const Tensor& p) { return diffpur::mse(p, y); });
        CHECK(max_relative_grad_error(g, fd) < 1e-4);
    }
}

TEST_CASE("ssim gradient matches central differences") {
    GuidanceConfig cfg;
    cfg.metric = Metric::Ssim;
    RandomSource rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_image(9, 9, rng);
        Tensor y = random_image(9, 9, rng);
        Tensor g = diffpur::distance_gradient(Metric::Ssim, x, y, cfg);
        Tensor fd = central_differences(x, 1e-5, [&](const Tensor& p) {
            return -diffpur::ssim(p, y, cfg);
        });
        CHECK(max_relative_grad_error(g, fd) < 1e-4);
    }
}

TEST_CASE("guidance scale has the advertised closed form") {
    GuidanceConfig cfg;
    cfg.a = 1.0;
    cfg.gamma = 8.0 / 255.0;
    // At alpha_bar = 1/2 the square roots cancel: exactly 3 / gamma.
    CHECK(diffpur::guidance_scale_from_alpha_bar(0.5, cfg) == 95.625);

    GuidanceConfig doubled = cfg;
    doubled.a = 2.0;
    for (double ab : {0.9, 0.5, 0.1}) {
        CHECK(diffpur::guidance_scale_from_alpha_bar(ab, doubled) ==
              doctest::Approx(2.0 * diffpur::guidance_scale_from_alpha_bar(ab, cfg))
                  .epsilon(1e-12));
    }
}

TEST_CASE("guidance scale increases strictly along the schedule") {
    NoiseSchedule s = diffpur::linear_schedule(1000, 1e-4, 2e-2);
    GuidanceConfig cfg;
    double prev = 0.0;
    for (int t = 1; t <= 1000; ++t) {
        const double st = diffpur::guidance_scale(t, s, cfg);
        CHECK(st > prev);
        prev = st;
    }
}

namespace {

GaussianMixtureModel grid_mixture() {
    GaussianMixtureModel g;
    g.weights = {0.5, 0.5};
    g.means = {Tensor::full({3, 3}, 0.3), Tensor::full({3, 3}, 0.7)};
    g.var = 0.01;
    return g;
}

}  // namespace

TEST_CASE("guided mean equals the hand formula under mse") {
    NoiseSchedule s = diffpur::linear_schedule(1000, 1e-4, 2e-2);
    GmmDenoiser d(grid_mixture());
    GuidanceConfig cfg;
    cfg.a = 0.05;

    const int t = 300;
    auto chain = diffpur::reverse_steps(s, t);
    RandomSource rng(23);
    Tensor xt = diffpur::gaussian_like({3, 3}, rng);
    Tensor xt_adv = diffpur::gaussian_like({3, 3}, rng);
    const double sigma2 = s.sigma2_large[t];

    GuidedStepDiagnostics diag;
    Tensor guided = diffpur::guided_mean(xt, chain.front(), d, cfg, xt_adv, sigma2, &diag);
    Tensor unguided = diffpur::reverse_step_mean(xt, chain.front(), d);
    const double s_t = diffpur::guidance_scale(t, s, cfg);
    for (int i = 0; i < guided.size(); ++i) {
        const double shift = s_t * sigma2 * 2.0 * (xt[i] - xt_adv[i]) / xt.size();
        CHECK(guided[i] == doctest::Approx(unguided[i] - shift).epsilon(1e-12));
    }

    CHECK(diag.t == t);
    CHECK(diag.s_t == doctest::Approx(s_t));
    CHECK(diag.grad_norm > 0.0);
    CHECK(diag.shift_norm == doctest::Approx(s_t * sigma2 * diag.grad_norm));
}

TEST_CASE("guidance vanishes when the anchor coincides with the state") {
    NoiseSchedule s = diffpur::linear_schedule(1000, 1e-4, 2e-2);
    GmmDenoiser d(grid_mixture());
    GuidanceConfig cfg;
    const int t = 500;
    auto chain = diffpur::reverse_steps(s, t);
    RandomSource rng(29);
    Tensor xt = diffpur::gaussian_like({3, 3}, rng);

    Tensor guided = diffpur::guided_mean(xt, chain.front(), d, cfg, xt, s.sigma2_large[t]);
    Tensor unguided = diffpur::reverse_step_mean(xt, chain.front(), d);
    for (int i = 0; i < guided.size(); ++i) {
        CHECK(guided[i] == doctest::Approx(unguided[i]).epsilon(1e-14));
    }

    // Zero sigma2 also reduces to the unguided mean, whatever the anchor.
    Tensor anchor = diffpur::gaussian_like({3, 3}, rng);
    Tensor no_shift = diffpur::guided_mean(xt, chain.front(), d, cfg, anchor, 0.0);
    for (int i = 0; i < no_shift.size(); ++i) {
        CHECK(no_shift[i] == doctest::Approx(unguided[i]).epsilon(1e-14));
    }
}

TEST_CASE("guided step is reproducible and honors frozen anchor noise") {
    NoiseSchedule s = diffpur::linear_schedule(1000, 1e-4, 2e-2);
    GmmDenoiser d(grid_mixture());
    GuidanceConfig cfg;
    const int t = 400;
    auto chain = diffpur::reverse_steps(s, t);
    RandomSource rng_x(31);
    Tensor xt = diffpur::gaussian_like({3, 3}, rng_x);
    Tensor x_adv = Tensor::full({3, 3}, 0.4);

    RandomSource a(55);
    RandomSource b(55);
    Tensor out_a =
        diffpur::guided_reverse_step(xt, chain.front(), d, cfg, x_adv,
                                     Sigma2Policy::Large, a);
    Tensor out_b =
        diffpur::guided_reverse_step(xt, chain.front(), d, cfg, x_adv,
                                     Sigma2Policy::Large, b);
    for (int i = 0; i < out_a.size(); ++i) CHECK(out_a[i] == out_b[i]);

    // With the anchor noise frozen to zero, the anchor diffuses to
    // sqrt(alpha_bar) x_adv and the result matches the deterministic
    // mean plus the step noise drawn first from the stream.
    Tensor zero_eps({3, 3});
    RandomSource c(55);
    Tensor out_frozen = diffpur::guided_reverse_step(
        xt, chain.front(), d, cfg, x_adv, Sigma2Policy::Large, c, &zero_eps);
    Tensor xt_adv = std::sqrt(s.alpha_bar[t]) * x_adv;
    Tensor mean =
        diffpur::guided_mean(xt, chain.front(), d, cfg, xt_adv, s.sigma2_large[t]);
    RandomSource c_replay(55);
    Tensor z = diffpur::gaussian_like({3, 3}, c_replay);
    for (int i = 0; i < out_frozen.size(); ++i) {
        CHECK(out_frozen[i] ==
              doctest::Approx(mean[i] + std::sqrt(s.sigma2_large[t]) * z[i])
                  .epsilon(1e-12));
    }
}

TEST_CASE("guidance pulls the step toward the anchor's trajectory") {
    NoiseSchedule s = diffpur::linear_schedule(1000, 1e-4, 2e-2);
    GmmDenoiser d(grid_mixture());
    GuidanceConfig cfg;
    cfg.a = 1.0;

    const int t = 300;
    auto chain = diffpur::reverse_steps(s, t);
    Tensor x0 = Tensor::full({3, 3}, 0.7);
    Tensor target = std::sqrt(s.alpha_bar[t - 1]) * x0;

    RandomSource rng(41);
    double guided_total = 0.0;
    double unguided_total = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Tensor xt = diffpur::diffuse_to(x0, t, s, rng);
        Tensor guided = diffpur::guided_reverse_step(xt, chain.front(), d, cfg, x0,
                                                     Sigma2Policy::Large, rng);
        Tensor unguided =
            diffpur::reverse_step(xt, chain.front(), d, Sigma2Policy::Large, rng);
        guided_total += diffpur::l2_distance(guided, target);
        unguided_total += diffpur::l2_distance(unguided, target);
    }
    CHECK(guided_total < unguided_total);
}
