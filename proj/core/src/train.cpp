#include "msens/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "msens/error.hpp"

namespace msens {

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw InvalidArgument("train: lr0 must be positive");
    if (!(decay >= 0.0)) throw InvalidArgument("train: decay must be non-negative");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("train: rho must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw InvalidArgument("train: epsilon must be positive");
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be at least 1");
    if (patience < 1) throw InvalidArgument("train: patience must be at least 1");
    if (max_epochs < 1) throw InvalidArgument("train: max_epochs must be at least 1");
    if (phase1_epochs < 0) throw InvalidArgument("train: phase1_epochs must be non-negative");
    if (threads < 1) throw InvalidArgument("train: threads must be at least 1");
}

RmsState RmsState::for_params(const ModelParams& params) {
    RmsState s;
    s.mean_sq = params.zeros_like();
    return s;
}

double learning_rate(const TrainConfig& config, std::uint64_t t) {
    return config.lr0 / (1.0 + config.decay * static_cast<double>(t));
}

void rmsprop_step(ModelParams& params, const ModelParams& grads, RmsState& state, const TrainConfig& config) {
    if (params.layers.size() != grads.layers.size() || params.layers.size() != state.mean_sq.layers.size())
        throw InvalidArgument("rmsprop_step: parameter, gradient and state layer counts differ");
    const double lr = learning_rate(config, config.decay_per_epoch ? state.epoch : state.step);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& layer = params.layers[i];
        const auto& g = grads.layers[i].tensors;
        auto& e = state.mean_sq.layers[i].tensors;
        if (layer.tensors.size() != g.size() || layer.tensors.size() != e.size())
            throw InvalidArgument("rmsprop_step: tensor count mismatch at layer " + std::to_string(i));
        for (std::size_t k = 0; k < layer.tensors.size(); ++k)
            if (layer.tensors[k].shape != g[k].shape || layer.tensors[k].shape != e[k].shape)
                throw InvalidArgument("rmsprop_step: shape mismatch at layer " + std::to_string(i));
        if (!layer.trainable) continue;
        for (std::size_t k = 0; k < layer.tensors.size(); ++k) {
            auto& theta = layer.tensors[k].data;
            auto& ms = e[k].data;
            const auto& gk = g[k].data;
            for (std::size_t j = 0; j < theta.size(); ++j) {
                ms[j] = config.rho * ms[j] + (1.0 - config.rho) * gk[j] * gk[j];
                theta[j] -= lr * gk[j] / (std::sqrt(ms[j]) + config.epsilon);
            }
        }
    }
    ++state.step;
}

void History::record(const EpochRecord& r) {
    epochs.push_back(r);
    if (epochs.size() == 1 || r.val_loss < epochs[best_epoch].val_loss) best_epoch = epochs.size() - 1;
}

StopDecision early_stop(const History& history, int patience) {
    if (history.epochs.empty()) return StopDecision::Continue;
    // Every epoch after the earliest minimum failed to improve on it.
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.epochs.size(); ++i)
        if (history.epochs[i].val_loss < history.epochs[best].val_loss) best = i;
    const std::size_t since = history.epochs.size() - 1 - best;
    return since >= static_cast<std::size_t>(patience) ? StopDecision::Stop : StopDecision::Continue;
}

ImageSet load_image_set(const std::vector<ManifestEntry>& entries, const std::filesystem::path& root) {
    ImageSet set;
    for (const auto& e : entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = root / p;
        set.images.push_back(load_image(p));
        set.labels.push_back(e.label);
    }
    return set;
}

std::vector<Tensor> prepare_inputs(const ModelSpec& spec, const std::vector<GrayImage>& images) {
    const int h = static_cast<int>(spec.input_shape.at(1));
    const int w = static_cast<int>(spec.input_shape.at(2));
    std::vector<Tensor> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(image_to_tensor(resize_bilinear(img, w, h)));
    return out;
}

double evaluate_loss(const ModelSpec& spec, const ModelParams& params, const std::vector<Tensor>& inputs,
                     const std::vector<int>& labels) {
    if (inputs.empty()) throw InvalidArgument("evaluate_loss: empty input set");
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) total += cross_entropy(model_predict(spec, params, inputs[i]), labels[i]);
    return total / static_cast<double>(inputs.size());
}

namespace {

std::size_t default_head_start(const ModelSpec& spec) {
    for (std::size_t i = spec.layers.size(); i-- > 0;)
        if (spec.layers[i].kind == LayerKind::GlobalAvgPool) return i + 1;
    return 0;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const ModelParams& init, const ImageSet& train, const ImageSet& validation,
              const TrainConfig& config, const AugmentConfig& augment_config, std::uint64_t seed,
              const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    augment_config.validate();
    spec.validate();
    if (train.size() == 0) throw InvalidArgument("fit: empty training set");
    if (validation.size() == 0) throw InvalidArgument("fit: empty validation set");
    if (train.labels.size() != train.size() || validation.labels.size() != validation.size())
        throw InvalidArgument("fit: image and label counts differ");

    const auto start = std::chrono::steady_clock::now();
    const int in_h = static_cast<int>(spec.input_shape[1]);
    const int in_w = static_cast<int>(spec.input_shape[2]);
    const std::size_t head_start =
        config.head_start >= 0 ? static_cast<std::size_t>(config.head_start) : default_head_start(spec);

    const std::vector<Tensor> val_inputs = prepare_inputs(spec, validation.images);
    Rng shuffle_rng(derive_seed(seed, "shuffle"));
    Rng augment_rng(derive_seed(seed, "augment"));
    const std::uint64_t dropout_root = derive_seed(seed, "dropout");

    FitResult result;
    ModelParams params = init;
    RmsState state = RmsState::for_params(params);
    ModelParams best_params = params;
    RmsState best_state = state;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const int phase = epoch < config.phase1_epochs ? 1 : 2;
        if (phase == 1) params.set_trainable_from(head_start);
        else params.set_all_trainable(true);
        state.epoch = static_cast<std::uint64_t>(epoch);
        const double epoch_lr = learning_rate(config, config.decay_per_epoch ? state.epoch : state.step);

        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            std::vector<Example> batch;
            batch.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t idx = order[k];
                const AugmentParams ap = sample_params(augment_rng, augment_config);
                const GrayImage augmented = apply(train.images[idx], ap);
                batch.push_back({image_to_tensor(resize_bilinear(augmented, in_w, in_h)), train.labels[idx]});
            }
            LossAndGrads lg = model_backward(spec, params, batch, Mode::Train, derive_seed(dropout_root, "step", state.step),
                                             config.threads);
            if (!std::isfinite(lg.mean_loss) || !lg.grads.all_finite())
                throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index + 1));
            rmsprop_step(params, lg.grads, state, config);
            loss_sum += lg.mean_loss * static_cast<double>(batch.size());
            ++batch_index;
        }

        EpochRecord rec;
        rec.phase = phase;
        rec.lr = epoch_lr;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_loss = evaluate_loss(spec, params, val_inputs, validation.labels);
        if (!std::isfinite(rec.val_loss))
            throw Error("non-finite validation loss at epoch " + std::to_string(epoch + 1));
        result.history.record(rec);
        if (result.history.best_epoch == result.history.epochs.size() - 1) {
            best_params = params;
            best_state = state;
        }

        if (on_epoch) {
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            on_epoch({epoch + 1, phase, epoch_lr, rec.train_loss, rec.val_loss, elapsed});
        }

        const int phase2_epochs = epoch + 1 - config.phase1_epochs;
        if (phase2_epochs >= config.patience && early_stop(result.history, config.patience) == StopDecision::Stop) {
            result.history.stopped_early = true;
            break;
        }
    }

    result.params = std::move(best_params);
    result.optimizer = std::move(best_state);
    return result;
}

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'S', 'E', 'N', 'S', 'C', 'K', '\0'};

void put_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = in.get();
        if (c == EOF) throw FormatError("checkpoint truncated");
        v |= static_cast<std::uint64_t>(c & 0xff) << (8 * i);
    }
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params,
                     const RmsState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    write_weights(out, spec, params);
    out.write(kCheckpointMagic, 8);
    put_u64(out, state.step);
    put_u64(out, state.epoch);
    write_weights(out, spec, state.mean_sq);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("checkpoint not found: " + path.string());
    Checkpoint ck;
    std::tie(ck.spec, ck.params) = read_weights(in);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw FormatError("checkpoint lacks optimizer state block");
    ck.state.step = get_u64(in);
    ck.state.epoch = get_u64(in);
    auto [spec2, mean_sq] = read_weights(in);
    if (!(spec2 == ck.spec)) throw FormatError("checkpoint optimizer state was written for a different model");
    ck.state.mean_sq = std::move(mean_sq);
    return ck;
}

}  // namespace msens
