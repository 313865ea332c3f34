#pragma once

#include <functional>

#include "diffpur/classifier.hpp"
#include "diffpur/tensor.hpp"

namespace diffpur {

enum class AttackKind { None, Pgd, BpdaEot, Spsa };

struct AttackConfig {
    AttackKind kind = AttackKind::Pgd;
    double gamma = 8.0 / 255.0;
    int steps = 40;
    double step_size = 0.0;  // <= 0 resolves to gamma / 4
    bool targeted = false;
    bool random_start = false;
    int eot_samples = 1;     // purifier randomizations averaged per step
    int spsa_queries = 1280;  // loss evaluations per step (paired)
    double spsa_perturb = 0.01;
};

void validate(const AttackConfig& cfg);

double resolved_step_size(const AttackConfig& cfg);

/// Elementwise clip of x into the L-inf ball of radius gamma around
/// x_center.
Tensor project_linf(const Tensor& x_center, const Tensor& x, double gamma);

/// Throws std::logic_error unless x_adv is inside the gamma ball around
/// x and inside [0,1]; every attack runs this on its own output.
void check_attack_output(const Tensor& x, const Tensor& x_adv, double gamma);

/// Uniform random class different from y. Consumes exactly one uniform:
/// index = floor(u * (K-1)), bumped past y.
int draw_target_excluding(int num_classes, int y, RandomSource& rng);

/// Entries are +1 or -1, one uniform each.
Tensor rademacher_like(const std::vector<int>& shape, RandomSource& rng);

/// Projected gradient descent in the L-inf ball: sign-of-gradient steps
/// ascending the loss (untargeted), or descending toward a random
/// non-true class (targeted; the target is drawn before any other rng
/// use). Output is projected and clamped every step.
Tensor pgd(const Classifier& model, const Tensor& x, int y, const AttackConfig& cfg,
           RandomSource& rng);

/// The purifier as the attacker sees it: input image plus a private
/// randomness source for one purification run.
using PurifyFn = std::function<Tensor(const Tensor&, RandomSource&)>;

/// PGD through a non-differentiable preprocessor: the loss gradient is
/// taken at the purified point and applied straight through to the
/// current iterate. Per step the gradient is averaged over eot_samples
/// purifier runs, each seeded by one next_u64() draw from rng (in
/// sample order), so a test can replay the exact randomizations.
Tensor bpda_eot(const Classifier& model, const PurifyFn& purifier, const Tensor& x,
                int y, const AttackConfig& cfg, RandomSource& rng);

using BlackBoxLoss = std::function<double(const Tensor&)>;

/// One simultaneous-perturbation gradient estimate at x: average over
/// `pairs` antithetic Rademacher probes of [L(x+ru) - L(x-ru)]/(2r) u.
Tensor spsa_gradient_estimate(const BlackBoxLoss& loss, const Tensor& x, int pairs,
                              double r, RandomSource& rng);

/// Gradient-free ascent of an arbitrary loss within the ball; uses at
/// most cfg.spsa_queries loss evaluations per step.
Tensor spsa_ascend(const BlackBoxLoss& loss, const Tensor& x, const AttackConfig& cfg,
                   RandomSource& rng);

/// SPSA against a classifier (optionally through a purifier baked into
/// `pipeline`); targeted handling mirrors pgd.
Tensor spsa(const Classifier& model, const Tensor& x, int y, const AttackConfig& cfg,
            RandomSource& rng);
Tensor spsa(const Classifier& model, const PurifyFn& pipeline, const Tensor& x, int y,
            const AttackConfig& cfg, RandomSource& rng);

}  // namespace diffpur
