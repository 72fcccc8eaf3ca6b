#include "msens/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "json_io.hpp"
#include "msens/error.hpp"
#include "msens/metrics.hpp"

namespace fs = std::filesystem;

namespace msens {

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingArtifact("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::ostream& log_of(const StageContext& ctx) {
    static std::ostringstream sink;
    if (ctx.log) return *ctx.log;
    sink.str({});
    return sink;
}

void write_provenance(const fs::path& dir, const std::string& stage, std::uint64_t config_hash, std::uint64_t seed,
                      const std::vector<fs::path>& inputs, const StageContext& ctx) {
    Json doc;
    doc["stage"] = stage;
    doc["version"] = ctx.version;
    doc["config_hash"] = hex64(config_hash);
    doc["seed"] = seed;
    Json in = Json::object();
    for (const auto& p : inputs) in[p.filename().generic_string()] = hex64(fnv1a64(read_text(p)));
    doc["inputs"] = in;
    write_text(dir / ("provenance_" + stage + ".json"), doc.dump(2) + "\n");
}

// ---- configuration --------------------------------------------------------------

Json synth_to_json(const SynthConfig& c) {
    return Json{{"n_negative", c.n_negative},
                {"n_positive", c.n_positive},
                {"image_size", c.image_size},
                {"blob_radius_range", {c.blob_radius_min, c.blob_radius_max}},
                {"blob_contrast", c.blob_contrast},
                {"noise_sigma", c.noise_sigma},
                {"texture_scales", c.texture_scales},
                {"texture_amplitude", c.texture_amplitude},
                {"base_level", c.base_level}};
}

SynthConfig synth_from_json(const Json& j) {
    SynthConfig c;
    read_optional(j, "n_negative", c.n_negative);
    read_optional(j, "n_positive", c.n_positive);
    read_optional(j, "image_size", c.image_size);
    if (j.contains("blob_radius_range")) {
        const auto r = j.at("blob_radius_range").get<std::vector<double>>();
        if (r.size() != 2) throw InvalidArgument("synth.blob_radius_range must have two entries");
        c.blob_radius_min = r[0];
        c.blob_radius_max = r[1];
    }
    read_optional(j, "blob_contrast", c.blob_contrast);
    read_optional(j, "noise_sigma", c.noise_sigma);
    read_optional(j, "texture_scales", c.texture_scales);
    read_optional(j, "texture_amplitude", c.texture_amplitude);
    read_optional(j, "base_level", c.base_level);
    c.validate();
    return c;
}

Json train_to_json(const TrainConfig& c) {
    return Json{{"lr0", c.lr0},
                {"decay", c.decay},
                {"rho", c.rho},
                {"epsilon", c.epsilon},
                {"batch_size", c.batch_size},
                {"patience", c.patience},
                {"max_epochs", c.max_epochs},
                {"phase1_epochs", c.phase1_epochs},
                {"decay_per_epoch", c.decay_per_epoch},
                {"head_start", c.head_start},
                {"threads", c.threads}};
}

TrainConfig train_from_json(const Json& j) {
    TrainConfig c;
    read_optional(j, "lr0", c.lr0);
    read_optional(j, "decay", c.decay);
    read_optional(j, "rho", c.rho);
    read_optional(j, "epsilon", c.epsilon);
    read_optional(j, "batch_size", c.batch_size);
    read_optional(j, "patience", c.patience);
    read_optional(j, "max_epochs", c.max_epochs);
    read_optional(j, "phase1_epochs", c.phase1_epochs);
    read_optional(j, "decay_per_epoch", c.decay_per_epoch);
    read_optional(j, "head_start", c.head_start);
    read_optional(j, "threads", c.threads);
    c.validate();
    return c;
}

std::vector<LayerSpec> architecture_from_json(const Json& j) {
    if (j.is_array()) return layers_from_json(j);
    std::string preset = "toy";
    Json opts = Json::object();
    if (j.is_string()) preset = j.get<std::string>();
    else if (j.is_object()) {
        opts = j;
        read_optional(j, "preset", preset);
    } else throw InvalidArgument("ensemble.architecture must be a preset name, object or layer list");

    double rate = 0.5;
    read_optional(opts, "dropout", rate);
    if (preset == "toy") {
        int stem = 8;
        std::vector<int> stages{8, 16, 32};
        read_optional(opts, "stem_channels", stem);
        read_optional(opts, "stage_channels", stages);
        return toy_residual_layers(stem, stages, rate);
    }
    if (preset == "deep") {
        int depth = 50, base = 64;
        read_optional(opts, "depth", depth);
        read_optional(opts, "base_channels", base);
        return deep_residual_layers(depth, base, rate);
    }
    throw InvalidArgument("unknown architecture preset \"" + preset + "\"");
}

void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("override \"" + assignment + "\" is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    Json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw InvalidArgument("override \"" + assignment + "\" has an empty key segment");
        if (!node->is_object()) *node = Json::object();
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return (base / p).lexically_normal();
}

}  // namespace

void PipelineConfig::validate() const {
    synth.validate();
    augment.validate();
    train.validate();
    ensemble.validate();
}

std::string PipelineConfig::to_json() const {
    Json j;
    j["seed"] = seed;
    j["synth"] = synth_to_json(synth);
    j["augment"] = msens::to_json(augment);
    j["train"] = train_to_json(train);
    j["ensemble"] = {{"branch_sizes", ensemble.branch_sizes}, {"architecture", layers_to_json(ensemble.layers)}};
    j["cutoff_set"] = cutoff_set == CutoffSet::Validation ? "validation" : "test";
    return j.dump();
}

std::uint64_t PipelineConfig::hash() const {
    return fnv1a64(to_json());
}

CutoffSet cutoff_set_from_name(const std::string& name) {
    if (name == "validation") return CutoffSet::Validation;
    if (name == "test") return CutoffSet::Test;
    throw InvalidArgument("cutoff set must be \"validation\" or \"test\", got \"" + name + "\"");
}

PipelineConfig parse_pipeline_config(const std::string& json_text, const fs::path& base_dir,
                                     const std::vector<std::string>& overrides) {
    Json doc;
    try {
        doc = json_text.empty() ? Json::object() : Json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);

    PipelineConfig c;
    try {
        read_optional(doc, "seed", c.seed);
        std::string out = "run", data, split, cutoff = "validation";
        read_optional(doc, "output_dir", out);
        read_optional(doc, "data_dir", data);
        read_optional(doc, "split_dir", split);
        read_optional(doc, "cutoff_set", cutoff);
        read_optional(doc, "parallel_branches", c.parallel_branches);
        c.output_dir = resolve(base_dir, out);
        c.data_dir = data.empty() ? c.output_dir / "data" : resolve(base_dir, data);
        c.split_dir = split.empty() ? c.data_dir / "split" : resolve(base_dir, split);
        c.cutoff_set = cutoff_set_from_name(cutoff);
        if (doc.contains("synth")) c.synth = synth_from_json(doc.at("synth"));
        if (doc.contains("augment")) c.augment = augment_config_from(doc.at("augment"));
        if (doc.contains("train")) c.train = train_from_json(doc.at("train"));
        if (doc.contains("ensemble")) {
            const Json& e = doc.at("ensemble");
            read_optional(e, "branch_sizes", c.ensemble.branch_sizes);
            if (e.contains("architecture")) c.ensemble.layers = architecture_from_json(e.at("architecture"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path, const std::vector<std::string>& overrides) {
    if (!fs::exists(path)) throw MissingArtifact("config file not found: " + path.string());
    return parse_pipeline_config(read_text(path), path.parent_path(), overrides);
}

// ---- stages ---------------------------------------------------------------------

void run_synth(const PipelineConfig& config, std::uint64_t seed, const fs::path& out_dir, const StageContext& ctx) {
    const fs::path dir = out_dir.empty() ? config.data_dir : out_dir;
    const SynthDataset data = generate(config.synth, seed);
    write_dataset(data, dir);
    write_provenance(dir, "synth", config.hash(), seed, {}, ctx);
    log_of(ctx) << "synth: wrote " << data.images.size() << " images to " << dir.string() << '\n';
}

void run_split(const fs::path& manifest, std::uint64_t seed, const fs::path& out_dir, const StageContext& ctx) {
    if (!fs::exists(manifest)) throw MissingArtifact("manifest not found: " + manifest.string());
    const auto entries = load_manifest(manifest);
    const DatasetSplit split = split_dataset(entries, seed);
    const fs::path dir = out_dir.empty() ? manifest.parent_path() / "split" : out_dir;
    save_split(split, manifest.parent_path(), dir);
    write_provenance(dir, "split", 0, seed, {manifest}, ctx);
    log_of(ctx) << "split: train " << split.train.size() << ", validation " << split.validation.size() << ", test "
                << split.test.size() << " -> " << dir.string() << '\n';
}

namespace {

std::vector<ScoredSample> samples_of(const std::vector<Prediction>& preds, const std::vector<int>& labels, int branch) {
    std::vector<ScoredSample> out;
    out.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double s = branch < 0 ? preds[i].score : preds[i].per_branch[static_cast<std::size_t>(branch)][1];
        out.push_back({s, labels[i]});
    }
    return out;
}

std::vector<Prediction> predict_all(const EnsembleModel& model, const ImageSet& set) {
    std::vector<Prediction> preds;
    preds.reserve(set.size());
    for (const auto& img : set.images) preds.push_back(predict(model, img));
    return preds;
}

std::string model_name(const EnsembleModel& model, int branch) {
    return branch < 0 ? "Ensemble" : "Model " + std::to_string(model.branches[static_cast<std::size_t>(branch)].input_size);
}

std::string file_tag(const EnsembleModel& model, int branch) {
    return branch < 0 ? "ensemble" : "model_" + std::to_string(model.branches[static_cast<std::size_t>(branch)].input_size);
}

}  // namespace

void run_train(const PipelineConfig& config, bool parallel_branches, const StageContext& ctx) {
    config.validate();
    const DatasetSplit split = load_split(config.split_dir);
    if (split.train.empty() || split.validation.empty())
        throw InvalidArgument("train: split has an empty train or validation subset");
    const ImageSet train = load_image_set(split.train, config.split_dir);
    const ImageSet validation = load_image_set(split.validation, config.split_dir);

    fs::create_directories(config.output_dir);
    std::ofstream train_log(config.output_dir / "train.log", std::ios::binary);
    std::ostream& log = log_of(ctx);
    const auto start = std::chrono::steady_clock::now();
    std::mutex log_mutex;
    auto on_epoch = [&](std::size_t b, const EpochLog& e) {
        std::ostringstream line;
        line << "branch " << b << " size " << config.ensemble.branch_sizes[b] << " epoch " << e.epoch << " phase "
             << e.phase << " lr " << std::setprecision(6) << e.lr << " train_loss " << e.train_loss << " val_loss "
             << e.val_loss << " elapsed " << std::fixed << std::setprecision(2) << e.elapsed_seconds << "s\n";
        std::lock_guard lock(log_mutex);
        train_log << line.str();
        log << line.str();
    };
    const bool parallel = parallel_branches || config.parallel_branches;
    EnsembleModel model = train_ensemble(train, validation, config.ensemble, config.train, config.augment, config.seed,
                                         parallel, on_epoch);

    // Cutoff and metrics snapshot on the validation set.
    const auto preds = predict_all(model, validation);
    Json metrics;
    metrics["set"] = "validation";
    for (int b = -1; b < static_cast<int>(model.branches.size()); ++b) {
        const auto samples = samples_of(preds, validation.labels, b);
        const RocCurve curve = roc_curve(samples);
        const Cutoff cut = choose_cutoff(curve);
        if (b < 0) model.cutoff = std::clamp(cut.threshold, 0.0, 1.0);
        metrics[model_name(model, b)] = {{"auc", auc(curve)}, {"cutoff", cut.threshold}, {"sp", cut.sp}, {"se", cut.se}};
    }
    const fs::path bundle = config.output_dir / "bundle";
    save_bundle(model, bundle, metrics.dump());

    Json summary;
    summary["seed"] = config.seed;
    summary["config_hash"] = hex64(config.hash());
    summary["cutoff"] = model.cutoff;
    summary["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    summary["branches"] = Json::array();
    for (const auto& br : model.branches)
        summary["branches"].push_back({{"input_size", br.input_size},
                                       {"epochs", br.history.epochs.size()},
                                       {"best_epoch", br.history.best_epoch + 1},
                                       {"stopped_early", br.history.stopped_early},
                                       {"best_val_loss", br.history.epochs[br.history.best_epoch].val_loss}});
    write_text(config.output_dir / "run_summary.json", summary.dump(2) + "\n");
    write_provenance(config.output_dir, "train", config.hash(), config.seed,
                     {config.split_dir / "train.csv", config.split_dir / "validation.csv"}, ctx);
    log << "train: bundle written to " << bundle.string() << " (cutoff " << model.cutoff << ")\n";
}

std::vector<EvalRow> run_eval(const fs::path& bundle, const fs::path& split_dir, CutoffSet cutoff_set,
                              const fs::path& out_dir, const StageContext& ctx) {
    if (!fs::exists(bundle / "bundle.json"))
        throw MissingArtifact("missing artifact: ensemble bundle " + (bundle / "bundle.json").string() +
                              " (run train first)");
    const EnsembleModel model = load_bundle(bundle);
    const DatasetSplit split = load_split(split_dir);
    const ImageSet test = load_image_set(split.test, split_dir);
    const ImageSet validation = load_image_set(split.validation, split_dir);
    const auto test_preds = predict_all(model, test);
    const auto val_preds = cutoff_set == CutoffSet::Validation ? predict_all(model, validation) : test_preds;
    const auto& cut_labels = cutoff_set == CutoffSet::Validation ? validation.labels : test.labels;

    fs::create_directories(out_dir);
    std::vector<EvalRow> rows;
    std::vector<ReportRow> report_rows;
    Json cutoffs = Json::object();
    for (int b = -1; b < static_cast<int>(model.branches.size()); ++b) {
        const Cutoff cut = choose_cutoff(roc_curve(samples_of(val_preds, cut_labels, b)));
        const auto test_samples = samples_of(test_preds, test.labels, b);
        const RocCurve curve = roc_curve(test_samples);
        const SpSeAcc m = sp_se_acc(confusion_at(test_samples, cut.threshold));
        EvalRow row{model_name(model, b), cut.threshold, auc(curve), m.sp, m.se, m.acc};
        rows.push_back(row);
        report_rows.push_back({row.model, row.auc, row.sp, row.se, row.acc});
        cutoffs[row.model] = cut.threshold;
        write_text(out_dir / ("roc_" + file_tag(model, b) + ".txt"), roc_to_text(curve));
    }
    const RenderedReport rep = render_report(report_rows);
    Json results = Json::parse(rep.json);
    results["cutoff_set"] = cutoff_set == CutoffSet::Validation ? "validation" : "test";
    results["cutoffs"] = cutoffs;
    results["test_size"] = test.size();
    write_text(out_dir / "results.json", results.dump(2) + "\n");
    write_text(out_dir / "report.txt", rep.text);
    write_provenance(out_dir, "eval", 0, split.seed,
                     {bundle / "bundle.json", split_dir / "validation.csv", split_dir / "test.csv"}, ctx);
    log_of(ctx) << rep.text;
    return rows;
}

std::vector<ImagePrediction> run_predict(const fs::path& bundle, const std::vector<fs::path>& images) {
    if (!fs::exists(bundle / "bundle.json"))
        throw MissingArtifact("missing artifact: ensemble bundle " + (bundle / "bundle.json").string());
    const EnsembleModel model = load_bundle(bundle);
    std::vector<ImagePrediction> out;
    for (const auto& p : images) {
        const Prediction pred = predict(model, load_image(p));
        out.push_back({p.string(), pred.score, classify(pred, model.cutoff)});
    }
    return out;
}

std::string run_report(const fs::path& results) {
    if (!fs::exists(results)) throw MissingArtifact("results file not found: " + results.string());
    return render_report(report_rows_from_json(read_text(results))).text;
}

fs::path run_augment_preview(const fs::path& image, const AugmentConfig& config, std::uint64_t seed) {
    const GrayImage img = load_image(image);
    Rng rng(derive_seed(seed, "augment-preview"));
    const GrayImage out = apply(img, sample_params(rng, config));
    const fs::path target = image.parent_path() / (image.stem().string() + "_aug.pgm");
    save_image(out, target);
    return target;
}

}  // namespace msens
