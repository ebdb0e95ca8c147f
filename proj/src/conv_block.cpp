#include "tcvads/conv_block.hpp"

#include <cmath>
#include <fstream>

#include "tcvads/errors.hpp"

namespace tcvads {

namespace {

void check_frame(const ConvDeconvBlock& block, const Tensor3& frame) {
    if (frame.ch != block.in_ch)
        throw validation_error("conv block: frame has " + std::to_string(frame.ch) +
                               " channels, block expects " + std::to_string(block.in_ch));
    if (frame.h == 0 || frame.w == 0) throw validation_error("conv block: empty frame");
}

}  // namespace

ConvDeconvBlock ConvDeconvBlock::make(size_t in_ch, size_t mid_ch, size_t out_ch, size_t k) {
    ConvDeconvBlock b;
    b.in_ch = in_ch;
    b.mid_ch = mid_ch;
    b.out_ch = out_ch;
    b.k = k;
    b.w_c.assign(mid_ch * in_ch * k * k, 0.0);
    b.b_c.assign(mid_ch, 0.0);
    b.w_d.assign(mid_ch * out_ch * k * k, 0.0);
    b.b_d.assign(out_ch, 0.0);
    b.validate();
    return b;
}

ConvDeconvBlock ConvDeconvBlock::seeded(size_t in_ch, size_t mid_ch, size_t out_ch, size_t k,
                                        Rng& rng, double scale) {
    ConvDeconvBlock b = make(in_ch, mid_ch, out_ch, k);
    for (double& w : b.w_c) w = rng.normal(0.0, scale);
    for (double& w : b.w_d) w = rng.normal(0.0, scale);
    for (double& w : b.b_c) w = rng.normal(0.0, scale);
    for (double& w : b.b_d) w = rng.normal(0.0, scale);
    return b;
}

double ConvDeconvBlock::w_d_sq_frobenius() const {
    double acc = 0.0;
    for (double w : w_d) acc += w * w;
    return acc;
}

void ConvDeconvBlock::validate() const {
    if (in_ch == 0 || mid_ch == 0 || out_ch == 0)
        throw validation_error("conv block: zero channel count");
    if (k == 0 || k % 2 == 0)
        throw validation_error("conv block: kernel size must be odd, got " + std::to_string(k));
    if (w_c.size() != mid_ch * in_ch * k * k || w_d.size() != mid_ch * out_ch * k * k ||
        b_c.size() != mid_ch || b_d.size() != out_ch)
        throw validation_error("conv block: weight buffer sizes inconsistent with dims");
    check_finite(w_c, "conv block w_c");
    check_finite(w_d, "conv block w_d");
    check_finite(b_c, "conv block b_c");
    check_finite(b_d, "conv block b_d");
}

namespace {

// pre[m,y,x] = b_c[m] + sum_i sum_taps w_c[m,i,dy,dx] * frame[i, y+dy-p, x+dx-p]
Tensor3 conv_pre(const ConvDeconvBlock& b, const Tensor3& frame) {
    size_t p = b.k / 2;
    Tensor3 pre(b.mid_ch, frame.h, frame.w);
    for (size_t m = 0; m < b.mid_ch; ++m)
        for (size_t y = 0; y < frame.h; ++y)
            for (size_t x = 0; x < frame.w; ++x) {
                double acc = b.b_c[m];
                for (size_t i = 0; i < b.in_ch; ++i)
                    for (size_t dy = 0; dy < b.k; ++dy) {
                        long yy = static_cast<long>(y + dy) - static_cast<long>(p);
                        if (yy < 0 || yy >= static_cast<long>(frame.h)) continue;
                        for (size_t dx = 0; dx < b.k; ++dx) {
                            long xx = static_cast<long>(x + dx) - static_cast<long>(p);
                            if (xx < 0 || xx >= static_cast<long>(frame.w)) continue;
                            acc += b.wc(m, i, dy, dx) *
                                   frame.at(i, static_cast<size_t>(yy), static_cast<size_t>(xx));
                        }
                    }
                pre.at(m, y, x) = acc;
            }
    return pre;
}

// pre[o,y,x] = b_d[o] + sum_m sum_taps w_d[m,o,dy,dx] * f_c[m, y-dy+p, x-dx+p]
Tensor3 deconv_pre(const ConvDeconvBlock& b, const Tensor3& f_c) {
    size_t p = b.k / 2;
    Tensor3 pre(b.out_ch, f_c.h, f_c.w);
    for (size_t o = 0; o < b.out_ch; ++o)
        for (size_t y = 0; y < f_c.h; ++y)
            for (size_t x = 0; x < f_c.w; ++x) {
                double acc = b.b_d[o];
                for (size_t m = 0; m < b.mid_ch; ++m)
                    for (size_t dy = 0; dy < b.k; ++dy) {
                        long yy = static_cast<long>(y) - static_cast<long>(dy) +
                                  static_cast<long>(p);
                        if (yy < 0 || yy >= static_cast<long>(f_c.h)) continue;
                        for (size_t dx = 0; dx < b.k; ++dx) {
                            long xx = static_cast<long>(x) - static_cast<long>(dx) +
                                      static_cast<long>(p);
                            if (xx < 0 || xx >= static_cast<long>(f_c.w)) continue;
                            acc += b.wd(m, o, dy, dx) *
                                   f_c.at(m, static_cast<size_t>(yy), static_cast<size_t>(xx));
                        }
                    }
                pre.at(o, y, x) = acc;
            }
    return pre;
}

Tensor3 relu(const Tensor3& t) {
    Tensor3 out = t;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

// Transposes deconv_pre: scatters d(pre_a) back onto f_c through w_d, gated
// by the ReLU mask of pre_a.
Tensor3 deconv_backward(const ConvDeconvBlock& b, const Tensor3& pre_a, const Tensor3& d_pre_a) {
    size_t p = b.k / 2;
    Tensor3 d_fc(b.mid_ch, pre_a.h, pre_a.w);
    for (size_t o = 0; o < b.out_ch; ++o)
        for (size_t y = 0; y < pre_a.h; ++y)
            for (size_t x = 0; x < pre_a.w; ++x) {
                double g = d_pre_a.at(o, y, x);
                if (g == 0.0 || pre_a.at(o, y, x) <= 0.0) continue;
                for (size_t m = 0; m < b.mid_ch; ++m)
                    for (size_t dy = 0; dy < b.k; ++dy) {
                        long yy = static_cast<long>(y) - static_cast<long>(dy) +
                                  static_cast<long>(p);
                        if (yy < 0 || yy >= static_cast<long>(pre_a.h)) continue;
                        for (size_t dx = 0; dx < b.k; ++dx) {
                            long xx = static_cast<long>(x) - static_cast<long>(dx) +
                                      static_cast<long>(p);
                            if (xx < 0 || xx >= static_cast<long>(pre_a.w)) continue;
                            d_fc.at(m, static_cast<size_t>(yy), static_cast<size_t>(xx)) +=
                                g * b.wd(m, o, dy, dx);
                        }
                    }
            }
    return d_fc;
}

// Transposes conv_pre: scatters d(pre_c) back onto the frame through w_c,
// gated by the ReLU mask of pre_c.
Tensor3 conv_backward(const ConvDeconvBlock& b, const Tensor3& pre_c, const Tensor3& d_fc,
                      size_t in_h, size_t in_w) {
    size_t p = b.k / 2;
    Tensor3 d_in(b.in_ch, in_h, in_w);
    for (size_t m = 0; m < b.mid_ch; ++m)
        for (size_t y = 0; y < in_h; ++y)
            for (size_t x = 0; x < in_w; ++x) {
                double g = d_fc.at(m, y, x);
                if (g == 0.0 || pre_c.at(m, y, x) <= 0.0) continue;
                for (size_t i = 0; i < b.in_ch; ++i)
                    for (size_t dy = 0; dy < b.k; ++dy) {
                        long yy = static_cast<long>(y + dy) - static_cast<long>(p);
                        if (yy < 0 || yy >= static_cast<long>(in_h)) continue;
                        for (size_t dx = 0; dx < b.k; ++dx) {
                            long xx = static_cast<long>(x + dx) - static_cast<long>(p);
                            if (xx < 0 || xx >= static_cast<long>(in_w)) continue;
                            d_in.at(i, static_cast<size_t>(yy), static_cast<size_t>(xx)) +=
                                g * b.wc(m, i, dy, dx);
                        }
                    }
            }
    return d_in;
}

}  // namespace

Tensor3 conv_forward(const ConvDeconvBlock& block, const Tensor3& frame) {
    block.validate();
    check_frame(block, frame);
    return relu(conv_pre(block, frame));
}

BlockForwardResult block_forward(const ConvDeconvBlock& block, const Tensor3& frame) {
    block.validate();
    check_frame(block, frame);
    BlockForwardResult r;
    r.pre_c = conv_pre(block, frame);
    r.f_c = relu(r.pre_c);
    r.pre_a = deconv_pre(block, r.f_c);
    r.f_a = relu(r.pre_a);
    return r;
}

Tensor3 block_input_gradient(const ConvDeconvBlock& block, const Tensor3& frame,
                             size_t output_channel) {
    if (output_channel >= block.out_ch)
        throw validation_error("saliency: output channel " + std::to_string(output_channel) +
                               " out of range [0, " + std::to_string(block.out_ch) + ")");
    BlockForwardResult r = block_forward(block, frame);
    Tensor3 seed(block.out_ch, frame.h, frame.w);
    for (size_t y = 0; y < frame.h; ++y)
        for (size_t x = 0; x < frame.w; ++x) seed.at(output_channel, y, x) = 1.0;
    Tensor3 d_fc = deconv_backward(block, r.pre_a, seed);
    return conv_backward(block, r.pre_c, d_fc, frame.h, frame.w);
}

SaliencyMap saliency(const ConvDeconvBlock& block, const Tensor3& frame, size_t output_channel,
                     size_t frame_index) {
    Tensor3 g = block_input_gradient(block, frame, output_channel);
    SaliencyMap map;
    map.rows = frame.h;
    map.cols = frame.w;
    map.frame_index = frame_index;
    map.values.assign(frame.h * frame.w, 0.0);
    for (size_t y = 0; y < frame.h; ++y)
        for (size_t x = 0; x < frame.w; ++x) {
            double acc = 0.0;
            for (size_t i = 0; i < frame.ch; ++i) acc += g.at(i, y, x) * g.at(i, y, x);
            map.values[y * frame.w + x] = std::sqrt(acc);
        }
    return map;
}

void export_saliency_csv(const SaliencyMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out << map.rows << "," << map.cols << "\n";
    char buf[64];
    for (size_t y = 0; y < map.rows; ++y) {
        for (size_t x = 0; x < map.cols; ++x) {
            std::snprintf(buf, sizeof(buf), "%.17g", map.values[y * map.cols + x]);
            out << (x ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw validation_error("write failed: " + path);
}

FrobeniusGap frobenius_gap(const ConvDeconvBlock& block, const Tensor3& frame) {
    block.validate();
    check_frame(block, frame);
    BlockForwardResult r = block_forward(block, frame);
    FrobeniusGap gap;

    // One backward pass per F_C element.
    for (size_t m = 0; m < block.mid_ch; ++m)
        for (size_t y = 0; y < frame.h; ++y)
            for (size_t x = 0; x < frame.w; ++x) {
                if (r.pre_c.at(m, y, x) <= 0.0) continue;
                Tensor3 seed(block.mid_ch, frame.h, frame.w);
                seed.at(m, y, x) = 1.0;
                Tensor3 d_in = conv_backward(block, r.pre_c, seed, frame.h, frame.w);
                for (double v : d_in.data) gap.g_c += v * v;
            }

    // One backward pass per F_A element.
    for (size_t o = 0; o < block.out_ch; ++o)
        for (size_t y = 0; y < frame.h; ++y)
            for (size_t x = 0; x < frame.w; ++x) {
                if (r.pre_a.at(o, y, x) <= 0.0) continue;
                Tensor3 seed(block.out_ch, frame.h, frame.w);
                seed.at(o, y, x) = 1.0;
                Tensor3 d_fc = deconv_backward(block, r.pre_a, seed);
                Tensor3 d_in = conv_backward(block, r.pre_c, d_fc, frame.h, frame.w);
                for (double v : d_in.data) gap.g_a += v * v;
            }
    return gap;
}

Matrix extract_features(const ConvDeconvBlock& block, const std::vector<Tensor3>& frames) {
    if (frames.empty()) throw validation_error("extract_features: empty frame sequence");
    Matrix out(frames.size(), block.out_ch);
    for (size_t t = 0; t < frames.size(); ++t) {
        if (frames[t].h != frames[0].h || frames[t].w != frames[0].w)
            throw validation_error("extract_features: frames have non-uniform shape");
        BlockForwardResult r = block_forward(block, frames[t]);
        double denom = static_cast<double>(frames[t].h * frames[t].w);
        for (size_t o = 0; o < block.out_ch; ++o) {
            double acc = 0.0;
            for (size_t y = 0; y < frames[t].h; ++y)
                for (size_t x = 0; x < frames[t].w; ++x) acc += r.f_a.at(o, y, x);
            out.at(t, o) = acc / denom;
        }
    }
    return out;
}

}  // namespace tcvads
