#pragma once

// Scalar and array primitives shared by all layers: the scaled tanh
// activation, strided valid convolution, leaky integration, grouped softmax,
// KL loss, and the population-code transform between analog values and
// softmax group distributions. All arithmetic is in double; everything here
// is a pure function of its inputs.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vmdnn/errors.hpp"

namespace vmdnn {

inline constexpr double kActivationGain = 1.7159;
inline constexpr double kActivationSlope = 2.0 / 3.0;
inline constexpr double kKlFloor = 1e-10;  // applied inside the log only

/// 3-D array of feature maps: values laid out [map][row][col].
struct FeatureMapStack {
    int maps = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    FeatureMapStack() = default;
    FeatureMapStack(int m, int h, int w, double fill = 0.0)
        : maps(m), height(h), width(w),
          values(static_cast<std::size_t>(m) * h * w, fill) {
        if (m <= 0 || h <= 0 || w <= 0)
            throw ConfigError("FeatureMapStack dimensions must be positive");
    }

    double& at(int m, int y, int x) {
        return values[(static_cast<std::size_t>(m) * height + y) * width + x];
    }
    double at(int m, int y, int x) const {
        return values[(static_cast<std::size_t>(m) * height + y) * width + x];
    }
    std::size_t size() const { return values.size(); }
    bool same_shape(const FeatureMapStack& o) const {
        return maps == o.maps && height == o.height && width == o.width;
    }
};

/// Convolution kernels for one layer: weights [out][in][kh][kw] plus one
/// bias per output map. `biases` may be empty for layers whose bias is
/// carried elsewhere.
struct KernelBank {
    int out_maps = 0;
    int in_maps = 0;
    int kh = 0;
    int kw = 0;
    int stride = 1;  // the sampling factor: shift of the kernel per output step
    std::vector<double> weights;
    std::vector<double> biases;

    KernelBank() = default;
    KernelBank(int out, int in, int kh_, int kw_, int stride_, bool with_bias = true)
        : out_maps(out), in_maps(in), kh(kh_), kw(kw_), stride(stride_),
          weights(static_cast<std::size_t>(out) * in * kh_ * kw_, 0.0),
          biases(with_bias ? static_cast<std::size_t>(out) : 0, 0.0) {
        if (out <= 0 || in <= 0 || kh_ <= 0 || kw_ <= 0 || stride_ < 1)
            throw ConfigError("KernelBank dimensions must be positive, stride >= 1");
    }

    double& w(int m, int j, int a, int b) {
        return weights[((static_cast<std::size_t>(m) * in_maps + j) * kh + a) * kw + b];
    }
    double w(int m, int j, int a, int b) const {
        return weights[((static_cast<std::size_t>(m) * in_maps + j) * kh + a) * kw + b];
    }
};

/// Output length of a valid strided convolution along one axis.
inline int conv_out_len(int in, int k, int stride) {
    if (k > in) return 0;
    return (in - k) / stride + 1;
}

/// Layout of the softmax output layer: `group_count` independent groups of
/// `group_size` neurons, each group encoding one analog value on [lo, hi].
struct SoftmaxGroupSpec {
    int group_count = 0;
    int group_size = 0;
    std::vector<std::pair<double, double>> ranges;  // per-group [lo, hi]
    double sigma = 0.05;  // population-code width, as a fraction of the range

    int total() const { return group_count * group_size; }

    /// i-th reference point of group g, uniformly spaced over [lo, hi].
    double ref_point(int g, int i) const {
        const auto [lo, hi] = ranges[g];
        return lo + (hi - lo) * static_cast<double>(i) / (group_size - 1);
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        if (group_count <= 0) v.push_back("group_count must be positive");
        if (group_size <= 1) v.push_back("group_size must be >= 2");
        if (static_cast<int>(ranges.size()) != group_count)
            v.push_back("ranges must have one [lo,hi] per group");
        for (std::size_t g = 0; g < ranges.size(); ++g)
            if (!(ranges[g].first < ranges[g].second))
                v.push_back("group " + std::to_string(g) + ": lo must be < hi");
        if (!(sigma > 0.0)) v.push_back("sigma must be positive");
        return v;
    }
};

/// A concatenation of per-group probability vectors (each group sums to 1).
using OutputVector = std::vector<double>;

inline bool is_valid_output(const OutputVector& y, const SoftmaxGroupSpec& spec,
                            double tol = 1e-9) {
    if (static_cast<int>(y.size()) != spec.total()) return false;
    for (int g = 0; g < spec.group_count; ++g) {
        double sum = 0.0;
        for (int i = 0; i < spec.group_size; ++i) {
            double v = y[static_cast<std::size_t>(g) * spec.group_size + i];
            if (!(v > 0.0 && v < 1.0 + tol)) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

/// 1.7159 * tanh(2u/3): odd, strictly increasing, bounded by +-1.7159.
inline double scaled_tanh(double u) {
    if (!std::isfinite(u)) throw std::domain_error("scaled_tanh: non-finite input");
    return kActivationGain * std::tanh(kActivationSlope * u);
}

/// Derivative of scaled_tanh; positive everywhere, maximum at u = 0.
inline double scaled_tanh_prime(double u) {
    if (!std::isfinite(u)) throw std::domain_error("scaled_tanh_prime: non-finite input");
    double th = std::tanh(kActivationSlope * u);
    return kActivationGain * kActivationSlope * (1.0 - th * th);
}

/// (1 - 1/tau) * u_prev + (1/tau) * drive. tau = 1 discards history exactly.
inline double leaky_update(double u_prev, double drive, double tau) {
    if (!(tau >= 1.0)) throw ConfigError("leaky_update: tau must be >= 1");
    return (1.0 - 1.0 / tau) * u_prev + (1.0 / tau) * drive;
}

/// Valid cross-correlation with stride, writing into a preallocated output.
/// out[m](y,x) = sum_j sum_{a,b} K[m][j][a][b] * in[j](y*s+a, x*s+b) + B[m].
inline void conv_valid_into(const FeatureMapStack& input, const KernelBank& bank,
                            FeatureMapStack& out) {
    if (input.maps != bank.in_maps)
        throw ConfigError("conv_valid: input maps (" + std::to_string(input.maps) +
                          ") != kernel in_maps (" + std::to_string(bank.in_maps) + ")");
    const int oh = conv_out_len(input.height, bank.kh, bank.stride);
    const int ow = conv_out_len(input.width, bank.kw, bank.stride);
    if (oh <= 0 || ow <= 0)
        throw ConfigError("conv_valid: kernel does not fit inside input");
    if (out.maps != bank.out_maps || out.height != oh || out.width != ow)
        out = FeatureMapStack(bank.out_maps, oh, ow);

    const int s = bank.stride;
    for (int m = 0; m < bank.out_maps; ++m) {
        const double bias = bank.biases.empty() ? 0.0 : bank.biases[m];
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = bias;
                for (int j = 0; j < input.maps; ++j) {
                    const double* in_base = &input.values[(static_cast<std::size_t>(j) *
                                                           input.height + y * s) * input.width + x * s];
                    const double* w_base =
                        &bank.weights[((static_cast<std::size_t>(m) * bank.in_maps + j) *
                                       bank.kh) * bank.kw];
                    for (int a = 0; a < bank.kh; ++a) {
                        const double* in_row = in_base + static_cast<std::size_t>(a) * input.width;
                        const double* w_row = w_base + static_cast<std::size_t>(a) * bank.kw;
                        for (int b = 0; b < bank.kw; ++b) acc += w_row[b] * in_row[b];
                    }
                }
                out.at(m, y, x) = acc;
            }
        }
    }
}

inline FeatureMapStack conv_valid(const FeatureMapStack& input, const KernelBank& bank) {
    FeatureMapStack out;
    conv_valid_into(input, bank, out);
    return out;
}

/// Softmax normalized within each group independently.
inline OutputVector grouped_softmax(std::span<const double> u, const SoftmaxGroupSpec& spec) {
    if (static_cast<int>(u.size()) != spec.total())
        throw ConfigError("grouped_softmax: input length " + std::to_string(u.size()) +
                          " != " + std::to_string(spec.total()));
    OutputVector y(u.size());
    for (int g = 0; g < spec.group_count; ++g) {
        const std::size_t base = static_cast<std::size_t>(g) * spec.group_size;
        double umax = u[base];
        for (int i = 1; i < spec.group_size; ++i) umax = std::max(umax, u[base + i]);
        double sum = 0.0;
        for (int i = 0; i < spec.group_size; ++i) {
            y[base + i] = std::exp(u[base + i] - umax);
            sum += y[base + i];
        }
        for (int i = 0; i < spec.group_size; ++i) y[base + i] /= sum;
    }
    return y;
}

/// Kullback-Leibler divergence sum_i t_i log(t_i / y_i), with 0 log 0 = 0 and
/// y floored at kKlFloor inside the log so the result stays finite.
inline double kl_loss(const OutputVector& target, const OutputVector& output) {
    if (target.size() != output.size())
        throw ConfigError("kl_loss: length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] > 0.0)
            loss += target[i] * std::log(target[i] / std::max(output[i], kKlFloor));
    }
    return loss;
}

/// Gaussian population code of one analog value per group: mass
/// exp(-(v - r_i)^2 / (2 sigma^2 R^2)) over uniformly spaced reference
/// points, normalized per group. Out-of-range values are clamped; `clamped`,
/// when given, reports whether any clamping happened.
inline OutputVector encode_analog(std::span<const double> values, const SoftmaxGroupSpec& spec,
                                  bool* clamped = nullptr) {
    if (static_cast<int>(values.size()) != spec.group_count)
        throw ConfigError("encode_analog: expected one value per group");
    if (clamped) *clamped = false;
    OutputVector y(static_cast<std::size_t>(spec.total()));
    for (int g = 0; g < spec.group_count; ++g) {
        const auto [lo, hi] = spec.ranges[g];
        double v = values[g];
        if (v < lo || v > hi) {
            v = std::min(std::max(v, lo), hi);
            if (clamped) *clamped = true;
        }
        const double denom = 2.0 * spec.sigma * spec.sigma * (hi - lo) * (hi - lo);
        const std::size_t base = static_cast<std::size_t>(g) * spec.group_size;
        double sum = 0.0;
        for (int i = 0; i < spec.group_size; ++i) {
            double d = v - spec.ref_point(g, i);
            y[base + i] = std::exp(-d * d / denom);
            sum += y[base + i];
        }
        for (int i = 0; i < spec.group_size; ++i) y[base + i] /= sum;
    }
    return y;
}

/// Expectation over the reference points: one analog value per group.
inline std::vector<double> decode_analog(const OutputVector& y, const SoftmaxGroupSpec& spec) {
    if (static_cast<int>(y.size()) != spec.total())
        throw ConfigError("decode_analog: length mismatch");
    std::vector<double> out(static_cast<std::size_t>(spec.group_count));
    for (int g = 0; g < spec.group_count; ++g) {
        const std::size_t base = static_cast<std::size_t>(g) * spec.group_size;
        double v = 0.0;
        for (int i = 0; i < spec.group_size; ++i) v += y[base + i] * spec.ref_point(g, i);
        out[g] = v;
    }
    return out;
}

}  // namespace vmdnn
