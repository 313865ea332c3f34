#pragma once

#include <cstdint>
#include <vector>

#include "diffpur/errors.hpp"

namespace diffpur {

/// Dense row-major tensor of 64-bit reals. Canonical image shape is
/// {H, W, C}; most of the pipeline only cares about the flat view.
/// Copies are independent values, so a Tensor can be shared read-only
/// across threads once constructed.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor full(std::vector<int> shape, double value);

    const std::vector<int>& shape() const { return shape_; }
    int size() const { return static_cast<int>(data_.size()); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

int checked_volume(const std::vector<int>& shape);  // throws ShapeError on bad extents

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

Tensor clamp01(const Tensor& x);
double linf_distance(const Tensor& a, const Tensor& b);
double l2_distance(const Tensor& a, const Tensor& b);

/// Deterministic seeded random source: xoshiro256++ for the uniform
/// stream, Box-Muller on top of it for standard normals. One normal
/// consumes exactly two uniforms, so the stream position is a pure
/// function of the draw count.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();  // [0, 1), 53-bit resolution
    double normal();   // standard normal

    /// Independent stream derived from (seed, index); the derivation rule
    /// is fixed (splitmix64 of seed XOR hashed index) so parallel work
    /// stays bit-reproducible.
    RandomSource substream(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t state_[4] = {0, 0, 0, 0};
};

Tensor gaussian_like(const std::vector<int>& shape, RandomSource& rng);

}  // namespace diffpur
