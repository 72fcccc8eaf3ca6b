#include "msens/ensemble.hpp"

#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "json_io.hpp"
#include "msens/error.hpp"

namespace fs = std::filesystem;

namespace msens {

void EnsembleSpec::validate() const {
    if (branch_sizes.empty()) throw InvalidArgument("ensemble needs at least one branch");
    for (std::size_t i = 0; i < branch_sizes.size(); ++i) {
        if (branch_sizes[i] < 1) throw InvalidArgument("branch sizes must be positive");
        if (i > 0 && branch_sizes[i] >= branch_sizes[i - 1])
            throw InvalidArgument("branch sizes must be strictly decreasing");
    }
    for (std::size_t i = 0; i < branch_sizes.size(); ++i) (void)branch_spec(i);
}

ModelSpec EnsembleSpec::branch_spec(std::size_t b) const {
    try {
        return make_model_spec(layers, branch_sizes.at(b));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument("branch " + std::to_string(b) + " (size " + std::to_string(branch_sizes.at(b)) +
                              "): " + e.what());
    }
}

std::uint64_t branch_seed(std::uint64_t run_seed, std::size_t b) {
    return derive_seed(run_seed, "branch", b);
}

Branch train_branch(const std::vector<LayerSpec>& layers, int input_size, const ImageSet& train,
                    const ImageSet& validation, const TrainConfig& train_config, const AugmentConfig& augment_config,
                    std::uint64_t seed, const std::function<void(const EpochLog&)>& on_epoch) {
    Branch branch;
    branch.input_size = input_size;
    branch.seed = seed;
    branch.spec = make_model_spec(layers, input_size);
    Rng init_rng(derive_seed(seed, "init"));
    const ModelParams init = init_params(branch.spec, init_rng);
    FitResult fr = fit(branch.spec, init, train, validation, train_config, augment_config, seed, on_epoch);
    branch.params = std::move(fr.params);
    branch.history = std::move(fr.history);
    return branch;
}

EnsembleModel train_ensemble(const ImageSet& train, const ImageSet& validation, const EnsembleSpec& espec,
                             const TrainConfig& train_config, const AugmentConfig& augment_config,
                             std::uint64_t run_seed, bool parallel,
                             const std::function<void(std::size_t, const EpochLog&)>& on_epoch) {
    espec.validate();
    const std::size_t n = espec.branch_sizes.size();
    EnsembleModel model;
    model.branches.resize(n);
    auto run = [&](std::size_t b) {
        try {
            std::function<void(const EpochLog&)> cb;
            if (on_epoch) cb = [&, b](const EpochLog& log) { on_epoch(b, log); };
            model.branches[b] = train_branch(espec.layers, espec.branch_sizes[b], train, validation, train_config,
                                             augment_config, branch_seed(run_seed, b), cb);
        } catch (const std::exception& e) {
            throw Error("branch " + std::to_string(b) + ": " + e.what());
        }
    };
    if (!parallel || n == 1) {
        for (std::size_t b = 0; b < n; ++b) run(b);
        return model;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> workers;
    for (std::size_t b = 0; b < n; ++b)
        workers.emplace_back([&, b] {
            try {
                run(b);
            } catch (...) {
                errors[b] = std::current_exception();
            }
        });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return model;
}

Prediction average_predictions(std::vector<std::vector<double>> per_branch) {
    if (per_branch.empty()) throw InvalidArgument("average_predictions: no branches");
    Prediction p;
    p.averaged.assign(per_branch.front().size(), 0.0);
    for (const auto& v : per_branch) {
        if (v.size() != p.averaged.size()) throw InvalidArgument("average_predictions: branch outputs differ in length");
        for (std::size_t i = 0; i < v.size(); ++i) p.averaged[i] += v[i];
    }
    for (auto& x : p.averaged) x /= static_cast<double>(per_branch.size());
    p.per_branch = std::move(per_branch);
    p.score = p.averaged.size() > 1 ? p.averaged[1] : 0.0;
    return p;
}

Prediction predict(const EnsembleModel& model, const GrayImage& img) {
    img.validate();
    std::vector<std::vector<double>> outs;
    for (const auto& b : model.branches) {
        const auto input = image_to_tensor(resize_bilinear(img, b.input_size, b.input_size));
        outs.push_back(model_predict(b.spec, b.params, input));
    }
    return average_predictions(std::move(outs));
}

int classify(const Prediction& pred, double cutoff) {
    if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw InvalidArgument("classify: cutoff must lie in [0, 1]");
    return pred.score >= cutoff ? 1 : 0;
}

namespace {

Json history_to_json(const History& h) {
    Json epochs = Json::array();
    for (const auto& e : h.epochs)
        epochs.push_back({{"phase", e.phase}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    return {{"epochs", epochs}, {"best_epoch", h.best_epoch + 1}, {"stopped_early", h.stopped_early}};
}

History history_from_json(const Json& j) {
    History h;
    for (const auto& e : j.at("epochs"))
        h.epochs.push_back({e.at("train_loss").get<double>(), e.at("val_loss").get<double>(), e.at("phase").get<int>(),
                            e.at("lr").get<double>()});
    h.best_epoch = j.at("best_epoch").get<std::size_t>() - 1;
    h.stopped_early = j.at("stopped_early").get<bool>();
    return h;
}

}  // namespace

void save_bundle(const EnsembleModel& model, const fs::path& dir, const std::string& metrics_json) {
    fs::create_directories(dir);
    Json doc;
    doc["format"] = "msens-ensemble-bundle";
    doc["version"] = 1;
    doc["cutoff"] = model.cutoff;
    doc["branches"] = Json::array();
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
        const auto& br = model.branches[b];
        const std::string file = "branch_" + std::to_string(b) + ".msw";
        save_weights(dir / file, br.spec, br.params);
        doc["branches"].push_back({{"input_size", br.input_size},
                                   {"seed", br.seed},
                                   {"weights", file},
                                   {"history", history_to_json(br.history)}});
    }
    doc["metrics"] = Json::parse(metrics_json);
    std::ofstream out(dir / "bundle.json", std::ios::binary);
    if (!out) throw Error("cannot write bundle manifest in " + dir.string());
    out << doc.dump(2) << '\n';
}

EnsembleModel load_bundle(const fs::path& dir) {
    const fs::path manifest = dir / "bundle.json";
    if (!fs::exists(manifest)) throw MissingArtifact("ensemble bundle not found: " + manifest.string());
    std::ifstream in(manifest);
    EnsembleModel model;
    try {
        const Json doc = Json::parse(in);
        model.cutoff = doc.at("cutoff").get<double>();
        for (const auto& b : doc.at("branches")) {
            Branch br;
            br.input_size = b.at("input_size").get<int>();
            br.seed = b.at("seed").get<std::uint64_t>();
            std::tie(br.spec, br.params) = load_weights(dir / b.at("weights").get<std::string>());
            if (br.spec.input_shape != Shape{1, static_cast<std::size_t>(br.input_size), static_cast<std::size_t>(br.input_size)})
                throw FormatError("branch weight file does not match its declared input size");
            br.history = history_from_json(b.at("history"));
            model.branches.push_back(std::move(br));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    if (model.branches.empty()) throw FormatError(manifest.string() + ": bundle has no branches");
    return model;
}

}  // namespace msens
