#include "diffpur/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffpur {

SoftmaxLinear make_softmax_linear(int input_dim, int num_classes, double init_scale,
                                  RandomSource& rng) {
    if (input_dim < 1 || num_classes < 2) {
        throw ConfigError("classifier needs input_dim >= 1 and num_classes >= 2");
    }
    SoftmaxLinear m;
    m.input_dim = input_dim;
    m.num_classes = num_classes;
    m.W.resize(static_cast<std::size_t>(num_classes) * input_dim);
    m.b.assign(num_classes, 0.0);
    for (double& w : m.W) w = init_scale * rng.normal();
    return m;
}

Mlp1 make_mlp1(int input_dim, int hidden_dim, int num_classes, double init_scale,
               RandomSource& rng) {
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 2) {
        throw ConfigError("mlp needs positive layer sizes and num_classes >= 2");
    }
    Mlp1 m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.num_classes = num_classes;
    m.W1.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
    m.b1.assign(hidden_dim, 0.0);
    m.W2.resize(static_cast<std::size_t>(num_classes) * hidden_dim);
    m.b2.assign(num_classes, 0.0);
    for (double& w : m.W1) w = init_scale * rng.normal();
    for (double& w : m.W2) w = init_scale * rng.normal();
    return m;
}

int input_dim(const Classifier& m) {
    return std::visit([](const auto& v) { return v.input_dim; }, m);
}

int num_classes(const Classifier& m) {
    return std::visit([](const auto& v) { return v.num_classes; }, m);
}

namespace {

void check_input(const Classifier& m, const Tensor& x) {
    if (x.size() != input_dim(m)) {
        throw ShapeError("classifier expects " + std::to_string(input_dim(m)) +
                         " inputs, got " + std::to_string(x.size()));
    }
}

std::vector<double> linear_forward(const SoftmaxLinear& m, const Tensor& x) {
    std::vector<double> logits(m.b);
    for (int c = 0; c < m.num_classes; ++c) {
        const double* row = &m.W[static_cast<std::size_t>(c) * m.input_dim];
        double acc = 0.0;
        for (int i = 0; i < m.input_dim; ++i) acc += row[i] * x[i];
        logits[c] += acc;
    }
    return logits;
}

std::vector<double> mlp_hidden(const Mlp1& m, const Tensor& x) {
    std::vector<double> h(m.b1);
    for (int j = 0; j < m.hidden_dim; ++j) {
        const double* row = &m.W1[static_cast<std::size_t>(j) * m.input_dim];
        double acc = 0.0;
        for (int i = 0; i < m.input_dim; ++i) acc += row[i] * x[i];
        h[j] = std::tanh(h[j] + acc);
    }
    return h;
}

std::vector<double> mlp_forward(const Mlp1& m, const Tensor& x) {
    const std::vector<double> h = mlp_hidden(m, x);
    std::vector<double> logits(m.b2);
    for (int c = 0; c < m.num_classes; ++c) {
        const double* row = &m.W2[static_cast<std::size_t>(c) * m.hidden_dim];
        double acc = 0.0;
        for (int j = 0; j < m.hidden_dim; ++j) acc += row[j] * h[j];
        logits[c] += acc;
    }
    return logits;
}

void check_label(const Classifier& m, int y) {
    if (y < 0 || y >= num_classes(m)) {
        throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes(m)) + ")");
    }
}

}  // namespace

std::vector<double> forward(const Classifier& m, const Tensor& x) {
    check_input(m, x);
    if (const auto* lin = std::get_if<SoftmaxLinear>(&m)) return linear_forward(*lin, x);
    return mlp_forward(std::get<Mlp1>(m), x);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double norm = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - top);
        norm += p[c];
    }
    for (double& v : p) v /= norm;
    return p;
}

int predict(const Classifier& m, const Tensor& x) {
    const std::vector<double> logits = forward(m, x);
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                            logits.begin());
}

namespace {

double cross_entropy(const std::vector<double>& logits, int y,
                     std::vector<double>* probs_out) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (double v : logits) norm += std::exp(v - top);
    const double log_norm = top + std::log(norm);
    if (probs_out != nullptr) {
        probs_out->resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) {
            (*probs_out)[c] = std::exp(logits[c] - log_norm);
        }
    }
    return log_norm - logits[static_cast<std::size_t>(y)];
}

struct ParamGrads {
    // Laid out exactly like the owning model's parameter vectors.
    std::vector<double> gW, gb, gW2, gb2;
};

double backprop(const SoftmaxLinear& m, const Tensor& x, int y, Tensor* grad_x,
                ParamGrads* grads) {
    std::vector<double> p;
    const double loss = cross_entropy(linear_forward(m, x), y, &p);
    p[static_cast<std::size_t>(y)] -= 1.0;  // now dL/dlogits

    if (grad_x != nullptr) {
        *grad_x = Tensor(x.shape());
        for (int c = 0; c < m.num_classes; ++c) {
            const double* row = &m.W[static_cast<std::size_t>(c) * m.input_dim];
            for (int i = 0; i < m.input_dim; ++i) (*grad_x)[i] += p[c] * row[i];
        }
    }
    if (grads != nullptr) {
        grads->gW.assign(m.W.size(), 0.0);
        grads->gb.assign(m.b.size(), 0.0);
        for (int c = 0; c < m.num_classes; ++c) {
            double* row = &grads->gW[static_cast<std::size_t>(c) * m.input_dim];
            for (int i = 0; i < m.input_dim; ++i) row[i] = p[c] * x[i];
            grads->gb[c] = p[c];
        }
    }
    return loss;
}

double backprop(const Mlp1& m, const Tensor& x, int y, Tensor* grad_x,
                ParamGrads* grads) {
    const std::vector<double> h = mlp_hidden(m, x);
    std::vector<double> logits(m.b2);
    for (int c = 0; c < m.num_classes; ++c) {
        const double* row = &m.W2[static_cast<std::size_t>(c) * m.hidden_dim];
        for (int j = 0; j < m.hidden_dim; ++j) logits[c] += row[j] * h[j];
    }
    std::vector<double> p;
    const double loss = cross_entropy(logits, y, &p);
    p[static_cast<std::size_t>(y)] -= 1.0;

    // dL/dz1 through the output layer and the tanh.
    std::vector<double> dz1(m.hidden_dim, 0.0);
    for (int c = 0; c < m.num_classes; ++c) {
        const double* row = &m.W2[static_cast<std::size_t>(c) * m.hidden_dim];
        for (int j = 0; j < m.hidden_dim; ++j) dz1[j] += p[c] * row[j];
    }
    for (int j = 0; j < m.hidden_dim; ++j) dz1[j] *= 1.0 - h[j] * h[j];

    if (grad_x != nullptr) {
        *grad_x = Tensor(x.shape());
        for (int j = 0; j < m.hidden_dim; ++j) {
            const double* row = &m.W1[static_cast<std::size_t>(j) * m.input_dim];
            for (int i = 0; i < m.input_dim; ++i) (*grad_x)[i] += dz1[j] * row[i];
        }
    }
    if (grads != nullptr) {
        grads->gW.assign(m.W1.size(), 0.0);
        grads->gb.assign(m.b1.size(), 0.0);
        grads->gW2.assign(m.W2.size(), 0.0);
        grads->gb2.assign(m.b2.size(), 0.0);
        for (int c = 0; c < m.num_classes; ++c) {
            double* row = &grads->gW2[static_cast<std::size_t>(c) * m.hidden_dim];
            for (int j = 0; j < m.hidden_dim; ++j) row[j] = p[c] * h[j];
            grads->gb2[c] = p[c];
        }
        for (int j = 0; j < m.hidden_dim; ++j) {
            double* row = &grads->gW[static_cast<std::size_t>(j) * m.input_dim];
            for (int i = 0; i < m.input_dim; ++i) row[i] = dz1[j] * x[i];
            grads->gb[j] = dz1[j];
        }
    }
    return loss;
}

double backprop_any(const Classifier& m, const Tensor& x, int y, Tensor* grad_x,
                    ParamGrads* grads) {
    if (const auto* lin = std::get_if<SoftmaxLinear>(&m)) {
        return backprop(*lin, x, y, grad_x, grads);
    }
    return backprop(std::get<Mlp1>(m), x, y, grad_x, grads);
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

void apply_update(Classifier& m, const ParamGrads& g, double step) {
    if (auto* lin = std::get_if<SoftmaxLinear>(&m)) {
        axpy(lin->W, g.gW, -step);
        axpy(lin->b, g.gb, -step);
    } else {
        auto& mlp = std::get<Mlp1>(m);
        axpy(mlp.W1, g.gW, -step);
        axpy(mlp.b1, g.gb, -step);
        axpy(mlp.W2, g.gW2, -step);
        axpy(mlp.b2, g.gb2, -step);
    }
}

void accumulate(ParamGrads& total, const ParamGrads& one) {
    auto add = [](std::vector<double>& dst, const std::vector<double>& src) {
        if (dst.empty()) {
            dst = src;
        } else {
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
        }
    };
    add(total.gW, one.gW);
    add(total.gb, one.gb);
    add(total.gW2, one.gW2);
    add(total.gb2, one.gb2);
}

}  // namespace

LossGrad loss_and_input_grad(const Classifier& m, const Tensor& x, int y) {
    check_input(m, x);
    check_label(m, y);
    LossGrad out;
    out.loss = backprop_any(m, x, y, &out.grad_x, nullptr);
    return out;
}

TrainHistory train(Classifier& m, const LabeledDataset& data, int epochs, double lr,
                   int batch_size, RandomSource& rng) {
    const int n = static_cast<int>(data.images.size());
    if (n == 0) throw ConfigError("training needs a non-empty dataset");
    if (data.labels.size() != data.images.size()) {
        throw ConfigError("dataset images and labels differ in length");
    }
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    for (int i = 0; i < n; ++i) {
        check_input(m, data.images[i]);
        check_label(m, data.labels[i]);
    }

    TrainHistory history;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform() * (i + 1));
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        for (int begin = 0; begin < n; begin += batch_size) {
            const int end = std::min(begin + batch_size, n);
            ParamGrads total;
            for (int idx = begin; idx < end; ++idx) {
                ParamGrads one;
                epoch_loss += backprop_any(m, data.images[order[idx]],
                                           data.labels[order[idx]], nullptr, &one);
                accumulate(total, one);
            }
            apply_update(m, total, lr / (end - begin));
        }
        history.epoch_loss.push_back(epoch_loss / n);
    }
    return history;
}

double accuracy(const Classifier& m, const LabeledDataset& data) {
    if (data.images.empty()) throw ConfigError("accuracy needs a non-empty dataset");
    int hits = 0;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        if (predict(m, data.images[i]) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / data.images.size();
}

Tensor class_mean_image(int k, int H, int W, int C, double contrast) {
    if (k < 0) throw ConfigError("class index must be non-negative");
    if (H < 1 || W < 1 || C < 1) throw ConfigError("image extents must be positive");
    if (!(contrast > 0.0) || contrast > 0.5) {
        throw ConfigError("contrast must be in (0, 0.5] to keep means in range");
    }

    // Pattern family: (row_bit, col_bit) block characters over a grid
    // with `splits` cells per side. Classes 0-3 use splits=2; later
    // classes cycle the three non-constant characters, doubling splits.
    int row_bit = 0, col_bit = 0, splits = 2;
    if (k >= 1 && k <= 3) {
        row_bit = k & 1;
        col_bit = (k >> 1) & 1;
    } else if (k >= 4) {
        static const int chars[3][2] = {{1, 0}, {0, 1}, {1, 1}};
        const int idx = k - 4;
        row_bit = chars[idx % 3][0];
        col_bit = chars[idx % 3][1];
        splits = 4 << (idx / 3);
    }
    if (splits > H || splits > W) {
        throw ConfigError("class " + std::to_string(k) +
                          " needs a pattern grid finer than the image");
    }

    Tensor mean({H, W, C});
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            const int row_block = i * splits / H;
            const int col_block = j * splits / W;
            const int parity = (row_bit * row_block + col_bit * col_block) % 2;
            const double value = 0.5 + (parity == 0 ? contrast : -contrast);
            for (int c = 0; c < C; ++c) mean[(i * W + j) * C + c] = value;
        }
    }
    return mean;
}

GeneratedData make_gmm_image_dataset(int num_classes, int H, int W, int C,
                                     int per_class, double contrast, double var,
                                     RandomSource& rng) {
    if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
    if (per_class < 1) throw ConfigError("dataset needs at least one image per class");
    if (!(var > 0.0)) throw ConfigError("dataset variance must be positive");

    GeneratedData out;
    out.mixture.var = var;
    out.mixture.weights.assign(num_classes, 1.0 / num_classes);
    for (int k = 0; k < num_classes; ++k) {
        out.mixture.means.push_back(class_mean_image(k, H, W, C, contrast));
    }
    validate(out.mixture);

    out.data.meta = {num_classes, H, W, C, per_class, contrast, var, rng.seed()};
    const double sd = std::sqrt(var);
    for (int k = 0; k < num_classes; ++k) {
        for (int i = 0; i < per_class; ++i) {
            Tensor img = out.mixture.means[k];
            for (int px = 0; px < img.size(); ++px) img[px] += sd * rng.normal();
            out.data.images.push_back(clamp01(img));
            out.data.labels.push_back(k);
        }
    }
    return out;
}

}  // namespace diffpur
