#include "msens/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "msens/error.hpp"
#include "msens/loss.hpp"

namespace msens {

namespace {

constexpr int kConvKernel = 3;
constexpr int kConvPad = 1;

std::string at_layer(std::size_t i) {
    return "layer " + std::to_string(i) + ": ";
}

bool needs_projection(const LayerSpec& spec, std::size_t in_channels) {
    return spec.stride != 1 || in_channels != static_cast<std::size_t>(spec.units);
}

std::size_t conv_out(std::size_t in, int k, int stride, int pad) {
    return (in + 2 * static_cast<std::size_t>(pad) - static_cast<std::size_t>(k)) / static_cast<std::size_t>(stride) + 1;
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2D: return "conv2d";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::ReLU: return "relu";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::Dense: return "dense";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::ResidualBlock: return "residual";
        case LayerKind::Softmax: return "softmax";
    }
    return "unknown";
}

LayerKind layer_kind_from_name(const std::string& name) {
    for (auto k : {LayerKind::Conv2D, LayerKind::MaxPool, LayerKind::ReLU, LayerKind::GlobalAvgPool, LayerKind::Dense,
                   LayerKind::Dropout, LayerKind::ResidualBlock, LayerKind::Softmax})
        if (name == layer_kind_name(k)) return k;
    throw InvalidArgument("unknown layer kind \"" + name + "\"");
}

bool LayerSpec::has_params() const {
    return kind == LayerKind::Conv2D || kind == LayerKind::Dense || kind == LayerKind::ResidualBlock;
}

std::vector<Shape> ModelSpec::infer_shapes() const {
    if (input_shape.size() != 3 || shape_size(input_shape) == 0)
        throw InvalidArgument("model input shape must be (channels, height, width) with positive extents");
    std::vector<Shape> shapes;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::Conv2D:
            case LayerKind::ResidualBlock:
                if (cur.size() != 3) throw InvalidArgument(at_layer(i) + "expects a C x H x W input, got " + shape_str(cur));
                if (l.units < 1) throw InvalidArgument(at_layer(i) + "needs at least one output channel");
                if (l.stride != 1 && l.stride != 2) throw InvalidArgument(at_layer(i) + "stride must be 1 or 2");
                cur = {static_cast<std::size_t>(l.units), conv_out(cur[1], kConvKernel, l.stride, kConvPad),
                       conv_out(cur[2], kConvKernel, l.stride, kConvPad)};
                break;
            case LayerKind::MaxPool:
                if (cur.size() != 3) throw InvalidArgument(at_layer(i) + "expects a C x H x W input, got " + shape_str(cur));
                if (cur[1] % 2 != 0 || cur[2] % 2 != 0)
                    throw InvalidArgument(at_layer(i) + "max pool needs even height and width, got " + shape_str(cur));
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            case LayerKind::GlobalAvgPool:
                if (cur.size() != 3) throw InvalidArgument(at_layer(i) + "expects a C x H x W input, got " + shape_str(cur));
                cur = {cur[0]};
                break;
            case LayerKind::Dense:
                if (l.units < 1) throw InvalidArgument(at_layer(i) + "dense layer needs at least one unit");
                cur = {static_cast<std::size_t>(l.units)};
                break;
            case LayerKind::Dropout:
                if (!(l.rate >= 0.0 && l.rate < 1.0)) throw InvalidArgument(at_layer(i) + "dropout rate must lie in [0, 1)");
                break;
            case LayerKind::Softmax:
                if (cur.size() != 1) throw InvalidArgument(at_layer(i) + "softmax expects a vector, got " + shape_str(cur));
                break;
            case LayerKind::ReLU:
                break;
        }
        shapes.push_back(cur);
    }
    const std::size_t n = layers.size();
    if (n < 2 || layers[n - 1].kind != LayerKind::Softmax || layers[n - 2].kind != LayerKind::Dense ||
        layers[n - 2].units != 2)
        throw InvalidArgument("model must end with Dense(2) followed by Softmax");
    return shapes;
}

int ModelSpec::weighted_depth() const {
    int depth = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv2D || l.kind == LayerKind::Dense) depth += 1;
        if (l.kind == LayerKind::ResidualBlock) depth += 2;
    }
    return depth;
}

std::vector<LayerSpec> toy_residual_layers(int stem_channels, std::vector<int> stage_channels, double dropout_rate) {
    std::vector<LayerSpec> layers{LayerSpec::conv(stem_channels), LayerSpec::relu()};
    for (int c : stage_channels) {
        layers.push_back(LayerSpec::residual(c, 2));
        layers.push_back(LayerSpec::relu());
    }
    layers.push_back(LayerSpec::global_avg_pool());
    layers.push_back(LayerSpec::dropout(dropout_rate));
    layers.push_back(LayerSpec::dense(2));
    layers.push_back(LayerSpec::softmax());
    return layers;
}

std::vector<LayerSpec> deep_residual_layers(int weighted_depth, int base_channels, double dropout_rate) {
    // stem conv + 2 per block + dense head
    const int blocks = (weighted_depth - 2) / 2;
    if (weighted_depth < 4 || (weighted_depth - 2) % 2 != 0)
        throw InvalidArgument("deep_residual_layers: weighted depth must be even and at least 4");
    std::vector<LayerSpec> layers{LayerSpec::conv(base_channels, 2), LayerSpec::relu(), LayerSpec::maxpool()};
    for (int b = 0; b < blocks; ++b) {
        const int stage = std::min(3, b * 4 / blocks);
        const bool stage_entry = b > 0 && std::min(3, (b - 1) * 4 / blocks) != stage;
        layers.push_back(LayerSpec::residual(base_channels << stage, stage_entry ? 2 : 1));
        layers.push_back(LayerSpec::relu());
    }
    layers.push_back(LayerSpec::global_avg_pool());
    layers.push_back(LayerSpec::dropout(dropout_rate));
    layers.push_back(LayerSpec::dense(2));
    layers.push_back(LayerSpec::softmax());
    return layers;
}

ModelSpec make_model_spec(const std::vector<LayerSpec>& layers, int input_size) {
    if (input_size < 1) throw InvalidArgument("input size must be positive");
    ModelSpec spec{{1, static_cast<std::size_t>(input_size), static_cast<std::size_t>(input_size)}, layers};
    spec.validate();
    return spec;
}

// ---- parameters ---------------------------------------------------------------

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto& l : z.layers)
        for (auto& t : l.tensors) t.fill(0.0);
    return z;
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        for (const auto& t : l.tensors) n += t.size();
    return n;
}

void ModelParams::set_all_trainable(bool trainable) {
    for (auto& l : layers) l.trainable = trainable;
}

void ModelParams::set_trainable_from(std::size_t first) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].trainable = i >= first;
}

void ModelParams::add(const ModelParams& other) {
    if (other.layers.size() != layers.size()) throw InvalidArgument("parameter sets differ in layer count");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& a = layers[i].tensors;
        const auto& b = other.layers[i].tensors;
        if (a.size() != b.size()) throw InvalidArgument("parameter sets differ at " + at_layer(i));
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (a[k].shape != b[k].shape) throw InvalidArgument("parameter shapes differ at " + at_layer(i));
            for (std::size_t j = 0; j < a[k].size(); ++j) a[k][j] += b[k][j];
        }
    }
}

void ModelParams::scale(double factor) {
    for (auto& l : layers)
        for (auto& t : l.tensors)
            for (auto& v : t.data) v *= factor;
}

bool ModelParams::all_finite() const {
    for (const auto& l : layers)
        for (const auto& t : l.tensors)
            if (!t.all_finite()) return false;
    return true;
}

ModelParams zero_params(const ModelSpec& spec) {
    const auto shapes = spec.infer_shapes();
    ModelParams params;
    Shape in = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams lp;
        const std::size_t out = static_cast<std::size_t>(l.units);
        const std::size_t k = kConvKernel;
        switch (l.kind) {
            case LayerKind::Conv2D:
                lp.tensors = {Tensor({out, in[0], k, k}), Tensor({out})};
                break;
            case LayerKind::ResidualBlock:
                lp.tensors = {Tensor({out, in[0], k, k}), Tensor({out}), Tensor({out, out, k, k}), Tensor({out})};
                if (needs_projection(l, in[0])) {
                    lp.tensors.push_back(Tensor({out, in[0], 1, 1}));
                    lp.tensors.push_back(Tensor({out}));
                }
                break;
            case LayerKind::Dense:
                lp.tensors = {Tensor({out, shape_size(in)}), Tensor({out})};
                break;
            default:
                break;
        }
        params.layers.push_back(std::move(lp));
        in = shapes[i];
    }
    return params;
}

ModelParams init_params(const ModelSpec& spec, Rng& rng) {
    ModelParams params = zero_params(spec);
    for (auto& lp : params.layers) {
        // weights sit at even positions, biases (left at zero) at odd ones
        for (std::size_t k = 0; k < lp.tensors.size(); k += 2) {
            Tensor& w = lp.tensors[k];
            const std::size_t fan_in = w.size() / w.dim(0);
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : w.data) v = stddev * rng.normal();
        }
    }
    return params;
}

// ---- kernels ------------------------------------------------------------------

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& weights, int stride, int pad) {
    if (input.rank() != 3) throw InvalidArgument("conv2d: input must be C x H x W, got " + shape_str(input.shape));
    if (weights.rank() != 4 || weights.dim(1) != input.dim(0) || weights.dim(2) != weights.dim(3))
        throw InvalidArgument("conv2d: weights " + shape_str(weights.shape) + " incompatible with input " +
                              shape_str(input.shape));
    if (stride < 1 || pad < 0) throw InvalidArgument("conv2d: stride must be >= 1 and pad >= 0");
    const auto k = weights.dim(2);
    if (input.dim(1) + 2 * static_cast<std::size_t>(pad) < k || input.dim(2) + 2 * static_cast<std::size_t>(pad) < k)
        throw InvalidArgument("conv2d: kernel larger than padded input");
}

// Output columns x with 0 <= x*stride + j - pad < width.
std::pair<long, long> valid_columns(long out_w, long width, long j, long stride, long pad) {
    long lo = 0;
    while (lo < out_w && lo * stride + j - pad < 0) ++lo;
    long hi = out_w;
    while (hi > lo && (hi - 1) * stride + j - pad >= width) --hi;
    return {lo, hi};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int pad) {
    check_conv_shapes(input, weights, stride, pad);
    const long C = static_cast<long>(input.dim(0)), H = static_cast<long>(input.dim(1)), W = static_cast<long>(input.dim(2));
    const long O = static_cast<long>(weights.dim(0)), K = static_cast<long>(weights.dim(2));
    if (bias.size() != static_cast<std::size_t>(O)) throw InvalidArgument("conv2d: bias length must equal output channels");
    const long OH = static_cast<long>(conv_out(H, static_cast<int>(K), stride, pad));
    const long OW = static_cast<long>(conv_out(W, static_cast<int>(K), stride, pad));
    Tensor out({static_cast<std::size_t>(O), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
    const double* in = input.data.data();
    const double* wt = weights.data.data();
    double* dst = out.data.data();
    for (long o = 0; o < O; ++o) {
        double* out_o = dst + o * OH * OW;
        std::fill(out_o, out_o + OH * OW, bias[static_cast<std::size_t>(o)]);
        for (long c = 0; c < C; ++c) {
            const double* in_c = in + c * H * W;
            for (long i = 0; i < K; ++i) {
                for (long j = 0; j < K; ++j) {
                    const double w = wt[((o * C + c) * K + i) * K + j];
                    const auto [x_lo, x_hi] = valid_columns(OW, W, j, stride, pad);
                    for (long y = 0; y < OH; ++y) {
                        const long iy = y * stride + i - pad;
                        if (iy < 0 || iy >= H) continue;
                        const double* in_row = in_c + iy * W + (j - pad);
                        double* out_row = out_o + y * OW;
                        if (stride == 1) {
                            for (long x = x_lo; x < x_hi; ++x) out_row[x] += w * in_row[x];
                        } else {
                            for (long x = x_lo; x < x_hi; ++x) out_row[x] += w * in_row[x * stride];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out, int stride, int pad,
                       Tensor& grad_weights, Tensor& grad_bias) {
    check_conv_shapes(input, weights, stride, pad);
    const long C = static_cast<long>(input.dim(0)), H = static_cast<long>(input.dim(1)), W = static_cast<long>(input.dim(2));
    const long O = static_cast<long>(weights.dim(0)), K = static_cast<long>(weights.dim(2));
    const long OH = static_cast<long>(conv_out(H, static_cast<int>(K), stride, pad));
    const long OW = static_cast<long>(conv_out(W, static_cast<int>(K), stride, pad));
    if (grad_out.shape != Shape{static_cast<std::size_t>(O), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)})
        throw InvalidArgument("conv2d_backward: gradient shape " + shape_str(grad_out.shape) + " mismatch");
    if (grad_weights.shape != weights.shape || grad_bias.size() != static_cast<std::size_t>(O))
        throw InvalidArgument("conv2d_backward: gradient accumulators have wrong shape");
    Tensor grad_in(input.shape);
    const double* in = input.data.data();
    const double* wt = weights.data.data();
    const double* g = grad_out.data.data();
    double* gin = grad_in.data.data();
    double* gw = grad_weights.data.data();
    for (long o = 0; o < O; ++o) {
        const double* g_o = g + o * OH * OW;
        double bsum = 0.0;
        for (long p = 0; p < OH * OW; ++p) bsum += g_o[p];
        grad_bias[static_cast<std::size_t>(o)] += bsum;
        for (long c = 0; c < C; ++c) {
            const double* in_c = in + c * H * W;
            double* gin_c = gin + c * H * W;
            for (long i = 0; i < K; ++i) {
                for (long j = 0; j < K; ++j) {
                    const long widx = ((o * C + c) * K + i) * K + j;
                    const double w = wt[widx];
                    const auto [x_lo, x_hi] = valid_columns(OW, W, j, stride, pad);
                    double wsum = 0.0;
                    for (long y = 0; y < OH; ++y) {
                        const long iy = y * stride + i - pad;
                        if (iy < 0 || iy >= H) continue;
                        const long off = iy * W + (j - pad);
                        const double* in_row = in_c + off;
                        double* gin_row = gin_c + off;
                        const double* g_row = g_o + y * OW;
                        if (stride == 1) {
                            // four independent partial sums break the add dependency chain
                            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                            long x = x_lo;
                            for (; x + 3 < x_hi; x += 4) {
                                s0 += g_row[x] * in_row[x];
                                s1 += g_row[x + 1] * in_row[x + 1];
                                s2 += g_row[x + 2] * in_row[x + 2];
                                s3 += g_row[x + 3] * in_row[x + 3];
                            }
                            for (; x < x_hi; ++x) s0 += g_row[x] * in_row[x];
                            wsum += (s0 + s1) + (s2 + s3);
                            for (x = x_lo; x < x_hi; ++x) gin_row[x] += w * g_row[x];
                        } else {
                            for (long x = x_lo; x < x_hi; ++x) {
                                wsum += g_row[x] * in_row[x * stride];
                                gin_row[x * stride] += w * g_row[x];
                            }
                        }
                    }
                    gw[widx] += wsum;
                }
            }
        }
    }
    return grad_in;
}

Tensor maxpool2d(const Tensor& input, std::vector<std::size_t>* argmax) {
    if (input.rank() != 3) throw InvalidArgument("maxpool2d: input must be C x H x W");
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    if (H % 2 != 0 || W % 2 != 0)
        throw InvalidArgument("maxpool2d: height and width must be even, got " + shape_str(input.shape));
    Tensor out({C, H / 2, W / 2});
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t k = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H / 2; ++y) {
            for (std::size_t x = 0; x < W / 2; ++x, ++k) {
                std::size_t best = (c * H + 2 * y) * W + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (c * H + 2 * y + dy) * W + 2 * x + dx;
                        if (input[idx] > input[best]) best = idx;
                    }
                out[k] = input[best];
                if (argmax) (*argmax)[k] = best;
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor global_avg_pool(const Tensor& t) {
    if (t.rank() != 3) throw InvalidArgument("global_avg_pool: input must be C x H x W");
    const std::size_t C = t.dim(0), HW = t.dim(1) * t.dim(2);
    Tensor out({C});
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < HW; ++p) s += t[c * HW + p];
        out[c] = s / static_cast<double>(HW);
    }
    return out;
}

std::vector<double> softmax(const std::vector<double>& v) {
    if (v.empty()) throw InvalidArgument("softmax: empty input");
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument("softmax: non-finite input");
    const double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) sum += (out[i] = std::exp(v[i] - m));
    for (auto& x : out) x /= sum;
    return out;
}

Tensor dropout(const Tensor& v, double rate, Rng& rng, Mode mode, Tensor* mask) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout: rate must lie in [0, 1)");
    if (mode == Mode::Infer || rate == 0.0) {
        if (mask) *mask = Tensor(v.shape, 1.0);
        return v;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor m(v.shape);
    Tensor out(v.shape);
    for (std::size_t i = 0; i < v.size(); ++i) {
        m[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
        out[i] = v[i] * m[i];
    }
    if (mask) *mask = std::move(m);
    return out;
}

// ---- layers -------------------------------------------------------------------

Tensor layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& input, Mode mode, Rng& rng,
                     LayerCache& cache) {
    cache.input = input;
    Tensor out;
    switch (spec.kind) {
        case LayerKind::Conv2D:
            out = conv2d(input, params.tensors.at(0), params.tensors.at(1), spec.stride, kConvPad);
            break;
        case LayerKind::ResidualBlock: {
            cache.hidden_pre = conv2d(input, params.tensors.at(0), params.tensors.at(1), spec.stride, kConvPad);
            cache.hidden = relu(cache.hidden_pre);
            out = conv2d(cache.hidden, params.tensors.at(2), params.tensors.at(3), 1, kConvPad);
            if (params.tensors.size() == 6) {
                const Tensor skip = conv2d(input, params.tensors[4], params.tensors[5], spec.stride, 0);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += skip[i];
            } else {
                if (input.shape != out.shape)
                    throw InvalidArgument("residual block: identity skip shape " + shape_str(input.shape) +
                                          " differs from main path " + shape_str(out.shape));
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += input[i];
            }
            break;
        }
        case LayerKind::MaxPool:
            out = maxpool2d(input, &cache.argmax);
            break;
        case LayerKind::ReLU:
            out = relu(input);
            break;
        case LayerKind::GlobalAvgPool:
            out = global_avg_pool(input);
            break;
        case LayerKind::Dense: {
            const Tensor& w = params.tensors.at(0);
            const Tensor& b = params.tensors.at(1);
            const std::size_t units = w.dim(0), n = w.dim(1);
            if (input.size() != n)
                throw InvalidArgument("dense: input length " + std::to_string(input.size()) + " != " + std::to_string(n));
            out = Tensor({units});
            for (std::size_t u = 0; u < units; ++u) {
                double s = b[u];
                for (std::size_t k = 0; k < n; ++k) s += w[u * n + k] * input[k];
                out[u] = s;
            }
            break;
        }
        case LayerKind::Dropout:
            out = dropout(input, spec.rate, rng, mode, &cache.mask);
            break;
        case LayerKind::Softmax:
            if (input.rank() != 1) throw InvalidArgument("softmax layer expects a vector");
            out = Tensor(input.shape, softmax(input.data));
            break;
    }
    cache.output = out;
    return out;
}

Tensor layer_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache, const Tensor& grad_out,
                      LayerParams& grads, bool accumulate_params) {
    const Tensor& input = cache.input;
    switch (spec.kind) {
        case LayerKind::Conv2D: {
            Tensor gw(params.tensors[0].shape), gb(params.tensors[1].shape);
            Tensor gin = conv2d_backward(input, params.tensors[0], grad_out, spec.stride, kConvPad, gw, gb);
            if (accumulate_params) {
                for (std::size_t i = 0; i < gw.size(); ++i) grads.tensors[0][i] += gw[i];
                for (std::size_t i = 0; i < gb.size(); ++i) grads.tensors[1][i] += gb[i];
            }
            return gin;
        }
        case LayerKind::ResidualBlock: {
            std::vector<Tensor> local;
            for (const auto& t : params.tensors) local.emplace_back(t.shape);
            Tensor g_hidden = conv2d_backward(cache.hidden, params.tensors[2], grad_out, 1, kConvPad, local[2], local[3]);
            for (std::size_t i = 0; i < g_hidden.size(); ++i)
                if (cache.hidden_pre[i] <= 0.0) g_hidden[i] = 0.0;
            Tensor gin = conv2d_backward(input, params.tensors[0], g_hidden, spec.stride, kConvPad, local[0], local[1]);
            if (params.tensors.size() == 6) {
                const Tensor gskip =
                    conv2d_backward(input, params.tensors[4], grad_out, spec.stride, 0, local[4], local[5]);
                for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gskip[i];
            } else {
                for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += grad_out[i];
            }
            if (accumulate_params)
                for (std::size_t k = 0; k < local.size(); ++k)
                    for (std::size_t i = 0; i < local[k].size(); ++i) grads.tensors[k][i] += local[k][i];
            return gin;
        }
        case LayerKind::MaxPool: {
            Tensor gin(input.shape);
            for (std::size_t k = 0; k < grad_out.size(); ++k) gin[cache.argmax[k]] += grad_out[k];
            return gin;
        }
        case LayerKind::ReLU: {
            Tensor gin = grad_out;
            for (std::size_t i = 0; i < gin.size(); ++i)
                if (input[i] <= 0.0) gin[i] = 0.0;
            return gin;
        }
        case LayerKind::GlobalAvgPool: {
            Tensor gin(input.shape);
            const std::size_t C = input.dim(0), HW = input.dim(1) * input.dim(2);
            for (std::size_t c = 0; c < C; ++c) {
                const double g = grad_out[c] / static_cast<double>(HW);
                for (std::size_t p = 0; p < HW; ++p) gin[c * HW + p] = g;
            }
            return gin;
        }
        case LayerKind::Dense: {
            const Tensor& w = params.tensors[0];
            const std::size_t units = w.dim(0), n = w.dim(1);
            Tensor gin(input.shape);
            for (std::size_t u = 0; u < units; ++u) {
                const double g = grad_out[u];
                for (std::size_t k = 0; k < n; ++k) gin[k] += w[u * n + k] * g;
                if (accumulate_params) {
                    for (std::size_t k = 0; k < n; ++k) grads.tensors[0][u * n + k] += g * input[k];
                    grads.tensors[1][u] += g;
                }
            }
            return gin;
        }
        case LayerKind::Dropout: {
            Tensor gin = grad_out;
            for (std::size_t i = 0; i < gin.size(); ++i) gin[i] *= cache.mask[i];
            return gin;
        }
        case LayerKind::Softmax: {
            const Tensor& p = cache.output;
            double dot = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) dot += grad_out[i] * p[i];
            Tensor gin(p.shape);
            for (std::size_t i = 0; i < p.size(); ++i) gin[i] = p[i] * grad_out[i] - p[i] * dot;
            return gin;
        }
    }
    return {};
}

// ---- models -------------------------------------------------------------------

ForwardResult model_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& input, Mode mode, Rng& rng) {
    if (input.shape != spec.input_shape)
        throw InvalidArgument("model input shape " + shape_str(input.shape) + " differs from spec " +
                              shape_str(spec.input_shape));
    if (params.layers.size() != spec.layers.size())
        throw InvalidArgument("parameter layer count does not match the model spec");
    ForwardResult result;
    result.caches.resize(spec.layers.size());
    Tensor cur = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        try {
            cur = layer_forward(spec.layers[i], params.layers[i], cur, mode, rng, result.caches[i]);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(at_layer(i) + e.what());
        }
    }
    if (cur.rank() != 1 || cur.size() != 2) throw InvalidArgument("model output must be a length-2 vector");
    result.probabilities = cur.data;
    return result;
}

std::vector<double> model_predict(const ModelSpec& spec, const ModelParams& params, const Tensor& input) {
    Rng unused(0);
    ForwardResult r = model_forward(spec, params, input, Mode::Infer, unused);
    return r.probabilities;
}

LossAndGrads example_backward(const ModelSpec& spec, const ModelParams& params, const Example& example, Mode mode,
                              Rng& rng) {
    if (example.label != 0 && example.label != 1) throw InvalidArgument("labels must be 0 or 1");
    ForwardResult fwd = model_forward(spec, params, example.input, mode, rng);
    LossAndGrads result;
    result.mean_loss = cross_entropy(fwd.probabilities, example.label);
    result.grads = params.zeros_like();

    // Nothing below the lowest trainable layer needs a gradient.
    std::size_t lowest = spec.layers.size();
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].has_params() && params.layers[i].trainable) {
            lowest = i;
            break;
        }
    if (lowest == spec.layers.size()) return result;

    const double p = fwd.probabilities[static_cast<std::size_t>(example.label)];
    Tensor grad({2});
    if (p >= kProbabilityFloor) grad[static_cast<std::size_t>(example.label)] = -1.0 / p;
    for (std::size_t i = spec.layers.size(); i-- > lowest;) {
        const bool acc = params.layers[i].trainable;
        grad = layer_backward(spec.layers[i], params.layers[i], fwd.caches[i], grad, result.grads.layers[i], acc);
    }
    return result;
}

LossAndGrads model_backward(const ModelSpec& spec, const ModelParams& params, const std::vector<Example>& batch,
                            Mode mode, std::uint64_t dropout_seed, int threads) {
    if (batch.empty()) throw InvalidArgument("model_backward: empty batch");
    std::vector<LossAndGrads> parts(batch.size());
    auto work = [&](std::size_t i) {
        Rng rng(derive_seed(dropout_seed, "dropout", i));
        parts[i] = example_backward(spec, params, batch[i], mode, rng);
    };
    const std::size_t nthreads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, batch.size());
    if (nthreads == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    } else {
        std::vector<std::exception_ptr> errors(nthreads);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < batch.size(); i += nthreads) work(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    LossAndGrads total;
    total.grads = std::move(parts[0].grads);
    double loss = parts[0].mean_loss;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        total.grads.add(parts[i].grads);
        loss += parts[i].mean_loss;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    total.grads.scale(inv);
    total.mean_loss = loss * inv;
    return total;
}

Tensor image_to_tensor(const GrayImage& img) {
    Tensor t({1, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    const double inv = 1.0 / img.max_value;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i] * inv;
    return t;
}

}  // namespace msens
