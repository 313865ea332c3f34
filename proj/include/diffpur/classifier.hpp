#pragma once

#include <string>
#include <variant>
#include <vector>

#include "diffpur/diffusion.hpp"
#include "diffpur/tensor.hpp"

namespace diffpur {

/// Multinomial logistic regression: logits = W x + b.
struct SoftmaxLinear {
    int input_dim = 0;
    int num_classes = 0;
    std::vector<double> W;  // [num_classes x input_dim], row-major
    std::vector<double> b;  // [num_classes]
};

/// One-hidden-layer network with tanh activation:
/// logits = W2 tanh(W1 x + b1) + b2.
struct Mlp1 {
    int input_dim = 0;
    int hidden_dim = 0;
    int num_classes = 0;
    std::vector<double> W1, b1;
    std::vector<double> W2, b2;
};

using Classifier = std::variant<SoftmaxLinear, Mlp1>;

SoftmaxLinear make_softmax_linear(int input_dim, int num_classes, double init_scale,
                                  RandomSource& rng);
Mlp1 make_mlp1(int input_dim, int hidden_dim, int num_classes, double init_scale,
               RandomSource& rng);

int input_dim(const Classifier& m);
int num_classes(const Classifier& m);

std::vector<double> forward(const Classifier& m, const Tensor& x);
std::vector<double> softmax(const std::vector<double>& logits);
int predict(const Classifier& m, const Tensor& x);

struct LossGrad {
    double loss = 0.0;
    Tensor grad_x;
};

/// Cross-entropy against label y and its exact gradient with respect to
/// the input pixels (manual backprop).
LossGrad loss_and_input_grad(const Classifier& m, const Tensor& x, int y);

struct DatasetMeta {
    int num_classes = 0;
    int H = 0, W = 0, C = 0;
    int per_class = 0;
    double contrast = 0.0;
    double var = 0.0;
    std::uint64_t seed = 0;
};

struct LabeledDataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    DatasetMeta meta;
};

struct TrainHistory {
    std::vector<double> epoch_loss;
};

/// Minibatch gradient descent on cross-entropy; deterministic given the
/// rng. Returns per-epoch mean loss.
TrainHistory train(Classifier& m, const LabeledDataset& data, int epochs, double lr,
                   int batch_size, RandomSource& rng);

double accuracy(const Classifier& m, const LabeledDataset& data);

///// Per-class mean image: a distinct two-level block pattern around mid
/// gray, 0.5 + contrast * sign. The first four classes use the coarsest
/// grid (constant, two stripe directions, checkerboard); further
/// classes repeat the non-constant patterns at doubled frequency.
Tensor class_mean_image(int k, int H, int W, int C, double contrast);

struct GeneratedData {
    LabeledDataset data;
    GaussianMixtureModel mixture;  // the prior the analytic denoiser should use
};

/// Images for class k are N(m_k, var I) draws clamped to [0,1]; the
/// returned mixture holds the same means and variance with uniform
/// weights, so the classifier's data and the diffusion prior agree.
GeneratedData make_gmm_image_dataset(int num_classes, int H, int W, int C,
                                     int per_class, double contrast, double var,
                                     RandomSource& rng);

}  // namespace diffpur
