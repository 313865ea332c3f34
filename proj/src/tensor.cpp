#include "diffpur/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace diffpur {

int checked_volume(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must be non-empty");
    }
    long long volume = 1;
    for (int extent : shape) {
        if (extent < 1) {
            throw ShapeError("tensor extents must be >= 1, got " + std::to_string(extent));
        }
        volume *= extent;
        if (volume > (1LL << 31)) {
            throw ShapeError("tensor too large");
        }
    }
    return static_cast<int>(volume);
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(checked_volume(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_volume(shape_) != static_cast<int>(data_.size())) {
        throw ShapeError("data length does not match shape volume");
    }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("tensor shapes differ");
    }
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b);
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b);
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor clamp01(const Tensor& x) {
    Tensor out = x;
    for (int i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(out[i], 0.0, 1.0);
    }
    return out;
}

double linf_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b);
    double worst = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

double l2_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b);
    double sum = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed) {
    // xoshiro256++ state expanded from the 64-bit seed via splitmix64,
    // the initialization its authors recommend.
    std::uint64_t x = seed;
    for (auto& word : state_) {
        word = splitmix64(x);
    }
}

std::uint64_t RandomSource::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RandomSource::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomSource::normal() {
    // Box-Muller, cosine branch only. u1 is mapped to (0, 1] so the log
    // never sees zero.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomSource RandomSource::substream(std::uint64_t index) const {
    std::uint64_t h = index;
    const std::uint64_t hashed = splitmix64(h);
    std::uint64_t m = seed_ ^ hashed;
    return RandomSource(splitmix64(m));
}

Tensor gaussian_like(const std::vector<int>& shape, RandomSource& rng) {
    Tensor out(shape);
    for (int i = 0; i < out.size(); ++i) {
        out[i] = rng.normal();
    }
    return out;
}

}  // namespace diffpur
