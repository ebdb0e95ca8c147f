#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tcvads/matrix.hpp"
#include "tcvads/rng.hpp"

namespace tcvads {

// Channel-major image tensor (ch x h x w), row-major within a channel.
struct Tensor3 {
    size_t ch = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(size_t c, size_t hh, size_t ww, double fill = 0.0)
        : ch(c), h(hh), w(ww), data(c * hh * ww, fill) {}

    double& at(size_t c, size_t y, size_t x) { return data[(c * h + y) * w + x]; }
    const double& at(size_t c, size_t y, size_t x) const { return data[(c * h + y) * w + x]; }
    size_t size() const { return ch * h * w; }
};

// One conv + transposed-conv pair with ReLU after each, stride 1 and same
// padding, so every intermediate keeps the input's spatial size. W_C maps
// in_ch -> mid_ch, W_D maps mid_ch -> out_ch with the transposed-conv weight
// layout (input channels first).
struct ConvDeconvBlock {
    size_t in_ch = 1, mid_ch = 1, out_ch = 1, k = 1;
    std::vector<double> w_c;  // [mid][in][k][k]
    std::vector<double> b_c;  // [mid]
    std::vector<double> w_d;  // [mid][out][k][k]
    std::vector<double> b_d;  // [out]

    static ConvDeconvBlock make(size_t in_ch, size_t mid_ch, size_t out_ch, size_t k);
    static ConvDeconvBlock seeded(size_t in_ch, size_t mid_ch, size_t out_ch, size_t k, Rng& rng,
                                  double scale = 0.5);

    double& wc(size_t m, size_t i, size_t dy, size_t dx) {
        return w_c[((m * in_ch + i) * k + dy) * k + dx];
    }
    const double& wc(size_t m, size_t i, size_t dy, size_t dx) const {
        return w_c[((m * in_ch + i) * k + dy) * k + dx];
    }
    double& wd(size_t m, size_t o, size_t dy, size_t dx) {
        return w_d[((m * out_ch + o) * k + dy) * k + dx];
    }
    const double& wd(size_t m, size_t o, size_t dy, size_t dx) const {
        return w_d[((m * out_ch + o) * k + dy) * k + dx];
    }

    double w_d_sq_frobenius() const;
    void validate() const;
};

struct BlockForwardResult {
    Tensor3 pre_c, f_c;  // conv pre-activation and ReLU output
    Tensor3 pre_a, f_a;  // deconv pre-activation and ReLU output
};

Tensor3 conv_forward(const ConvDeconvBlock& block, const Tensor3& frame);
BlockForwardResult block_forward(const ConvDeconvBlock& block, const Tensor3& frame);

// Exact gradient of sum(F_A[output_channel]) w.r.t. every input value.
Tensor3 block_input_gradient(const ConvDeconvBlock& block, const Tensor3& frame,
                             size_t output_channel);

struct SaliencyMap {
    size_t rows = 0, cols = 0;
    std::vector<double> values;  // row-major, >= 0
    size_t frame_index = 0;
};

// Per-pixel magnitude (L2 over input channels) of block_input_gradient.
SaliencyMap saliency(const ConvDeconvBlock& block, const Tensor3& frame, size_t output_channel,
                     size_t frame_index = 0);

// First line "<rows>,<cols>", then one comma-separated line per pixel row.
void export_saliency_csv(const SaliencyMap& map, const std::string& path);

// Squared Frobenius norms of the full Jacobians d(F_A)/d(frame) and
// d(F_C)/d(frame), accumulated one output element at a time.
struct FrobeniusGap {
    double g_a = 0.0;
    double g_c = 0.0;
};
FrobeniusGap frobenius_gap(const ConvDeconvBlock& block, const Tensor3& frame);

// Row t is the channel-wise spatial mean of block_forward(frames[t]).F_A.
Matrix extract_features(const ConvDeconvBlock& block, const std::vector<Tensor3>& frames);

}  // namespace tcvads
