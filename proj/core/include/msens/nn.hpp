#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "msens/imageio.hpp"
#include "msens/random.hpp"
#include "msens/tensor.hpp"

namespace msens {

enum class LayerKind { Conv2D, MaxPool, ReLU, GlobalAvgPool, Dense, Dropout, ResidualBlock, Softmax };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

/// One layer of a sequential model.
///
/// Conv2D is 3x3 with same-padding; `units` is its output channel count.
/// ResidualBlock is conv3x3(stride) -> ReLU -> conv3x3 added to a skip path;
/// the skip is the identity unless the stride or channel count changes, in
/// which case it is a 1x1 projection with the same stride. No activation is
/// applied after the addition.
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int units = 0;
    int stride = 1;
    double rate = 0.0;

    static LayerSpec conv(int out_channels, int stride = 1) { return {LayerKind::Conv2D, out_channels, stride, 0}; }
    static LayerSpec maxpool() { return {LayerKind::MaxPool, 0, 2, 0}; }
    static LayerSpec relu() { return {LayerKind::ReLU, 0, 1, 0}; }
    static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool, 0, 1, 0}; }
    static LayerSpec dense(int units) { return {LayerKind::Dense, units, 1, 0}; }
    static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 1, rate}; }
    static LayerSpec residual(int out_channels, int stride = 1) {
        return {LayerKind::ResidualBlock, out_channels, stride, 0};
    }
    static LayerSpec softmax() { return {LayerKind::Softmax, 0, 1, 0}; }

    bool has_params() const;
    bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
    Shape input_shape;  // (channels, height, width)
    std::vector<LayerSpec> layers;

    /// Output shape of every layer, in order. Throws InvalidArgument naming the
    /// offending layer index when shapes are incompatible, and when the model
    /// does not end in Dense(2) followed by Softmax.
    std::vector<Shape> infer_shapes() const;
    void validate() const { (void)infer_shapes(); }

    /// Number of convolution and dense layers on the main path (skip
    /// projections excluded), the usual depth count for residual networks.
    int weighted_depth() const;

    bool operator==(const ModelSpec&) const = default;
};

/// Layer list of the desk-scale default: stem conv, three stride-2 residual
/// stages, global average pool, dropout, Dense(2), Softmax.
std::vector<LayerSpec> toy_residual_layers(int stem_channels = 8, std::vector<int> stage_channels = {8, 16, 32},
                                           double dropout_rate = 0.5);

/// Residual layer list with the given weighted depth (e.g. 50), built from
/// basic blocks in four stages.
std::vector<LayerSpec> deep_residual_layers(int weighted_depth, int base_channels = 64, double dropout_rate = 0.5);

/// Single-channel square input of the given size.
ModelSpec make_model_spec(const std::vector<LayerSpec>& layers, int input_size);

struct LayerParams {
    std::vector<Tensor> tensors;
    bool trainable = true;

    bool operator==(const LayerParams&) const = default;
};

struct ModelParams {
    std::vector<LayerParams> layers;

    /// Same shapes and flags, all values zero.
    ModelParams zeros_like() const;
    std::size_t scalar_count() const;
    void set_all_trainable(bool trainable);
    /// Layers with index >= first become trainable, the rest frozen.
    void set_trainable_from(std::size_t first);
    void add(const ModelParams& other);
    void scale(double factor);
    bool all_finite() const;

    bool operator==(const ModelParams&) const = default;
};

/// Shapes of every parameter tensor for spec (all zero).
ModelParams zero_params(const ModelSpec& spec);

/// He (fan-in) normal initialisation for conv and dense weights, zero biases.
ModelParams init_params(const ModelSpec& spec, Rng& rng);

enum class Mode { Train, Infer };

// ---- kernels ----------------------------------------------------------------

/// Cross-correlation of a C x H x W input with O x C x k x k weights.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int pad);

/// Accumulates weight and bias gradients; returns the input gradient.
Tensor conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out, int stride, int pad,
                       Tensor& grad_weights, Tensor& grad_bias);

/// 2x2 / stride 2 max pool. argmax receives the flat input index of each
/// output's winner (first in row-major order on ties).
Tensor maxpool2d(const Tensor& input, std::vector<std::size_t>* argmax = nullptr);

Tensor relu(const Tensor& t);
Tensor global_avg_pool(const Tensor& t);
std::vector<double> softmax(const std::vector<double>& v);

/// Inverted dropout. In training mode each unit is zeroed with probability
/// rate (one Bernoulli draw per unit, in order) and survivors scaled by
/// 1 / (1 - rate). Identity in inference mode or when rate is 0.
Tensor dropout(const Tensor& v, double rate, Rng& rng, Mode mode, Tensor* mask = nullptr);

// ---- layers and models ------------------------------------------------------

struct LayerCache {
    Tensor input;
    Tensor output;
    Tensor mask;                       // dropout
    std::vector<std::size_t> argmax;   // maxpool
    Tensor hidden_pre;                 // residual: first conv output
    Tensor hidden;                     // residual: after ReLU
};

Tensor layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& input, Mode mode, Rng& rng,
                     LayerCache& cache);

/// Returns the input gradient. When accumulate_params is set, parameter
/// gradients are added into grads.
Tensor layer_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                      const Tensor& grad_out, LayerParams& grads, bool accumulate_params = true);

struct ForwardResult {
    std::vector<double> probabilities;
    std::vector<LayerCache> caches;
};

ForwardResult model_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& input, Mode mode,
                            Rng& rng);

/// Inference-mode probabilities.
std::vector<double> model_predict(const ModelSpec& spec, const ModelParams& params, const Tensor& input);

struct Example {
    Tensor input;
    int label = 0;
};

struct LossAndGrads {
    double mean_loss = 0.0;
    ModelParams grads;
};

/// Loss and parameter gradient for a single example; dropout masks come from
/// rng. Gradients are not divided by any batch size.
LossAndGrads example_backward(const ModelSpec& spec, const ModelParams& params, const Example& example, Mode mode,
                              Rng& rng);

/// Mean cross-entropy over the batch and its exact gradient with respect to
/// every trainable parameter (zero for frozen layers). Example i draws its
/// dropout mask from Rng(derive_seed(dropout_seed, "dropout", i)); per-example
/// gradients are summed in batch order, so threads > 1 gives identical results.
LossAndGrads model_backward(const ModelSpec& spec, const ModelParams& params, const std::vector<Example>& batch,
                            Mode mode = Mode::Train, std::uint64_t dropout_seed = 0, int threads = 1);

/// Single-channel input tensor with pixels scaled to [0, 1].
Tensor image_to_tensor(const GrayImage& img);

// ---- weight files -----------------------------------------------------------

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

void write_weights(std::ostream& out, const ModelSpec& spec, const ModelParams& params);
std::pair<ModelSpec, ModelParams> read_weights(std::istream& in);
void save_weights(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params);
std::pair<ModelSpec, ModelParams> load_weights(const std::filesystem::path& path);

}  // namespace msens
