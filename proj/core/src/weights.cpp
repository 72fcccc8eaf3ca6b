// ModelSpec JSON and the binary weight-file container.
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json_io.hpp"
#include "msens/error.hpp"
#include "msens/nn.hpp"

namespace msens {

Json to_json(const LayerSpec& l) {
    Json j;
    j["type"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Conv2D:
        case LayerKind::ResidualBlock:
            j["out_channels"] = l.units;
            j["stride"] = l.stride;
            break;
        case LayerKind::Dense:
            j["units"] = l.units;
            break;
        case LayerKind::Dropout:
            j["rate"] = l.rate;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("type")) throw InvalidArgument("layer description needs a \"type\"");
    LayerSpec l;
    l.kind = layer_kind_from_name(j.at("type").get<std::string>());
    switch (l.kind) {
        case LayerKind::Conv2D:
        case LayerKind::ResidualBlock:
            read_optional(j, "out_channels", l.units);
            read_optional(j, "stride", l.stride);
            break;
        case LayerKind::Dense:
            read_optional(j, "units", l.units);
            break;
        case LayerKind::Dropout:
            read_optional(j, "rate", l.rate);
            break;
        case LayerKind::MaxPool:
            l.stride = 2;
            break;
        default:
            break;
    }
    return l;
}

Json layers_to_json(const std::vector<LayerSpec>& layers) {
    Json arr = Json::array();
    for (const auto& l : layers) arr.push_back(to_json(l));
    return arr;
}

std::vector<LayerSpec> layers_from_json(const Json& j) {
    if (!j.is_array()) throw InvalidArgument("layer list must be a JSON array");
    std::vector<LayerSpec> layers;
    for (const auto& e : j) layers.push_back(layer_from_json(e));
    return layers;
}

Json to_json(const ModelSpec& spec) {
    Json j;
    j["input_shape"] = spec.input_shape;
    j["layers"] = layers_to_json(spec.layers);
    return j;
}

ModelSpec model_spec_from(const Json& j) {
    ModelSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.layers = layers_from_json(j.at("layers"));
    spec.validate();
    return spec;
}

std::string model_spec_to_json(const ModelSpec& spec) {
    return to_json(spec).dump();
}

ModelSpec model_spec_from_json(const std::string& text) {
    try {
        return model_spec_from(Json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model spec JSON: ") + e.what());
    }
}

Json to_json(const AugmentConfig& c) {
    return Json{{"rescale_min", c.rescale_min},
                {"rescale_max", c.rescale_max},
                {"max_crop_frac", c.max_crop_frac},
                {"flip_prob", c.flip_prob},
                {"shift_frac", c.shift_frac}};
}

AugmentConfig augment_config_from(const Json& j, AugmentConfig c) {
    read_optional(j, "rescale_min", c.rescale_min);
    read_optional(j, "rescale_max", c.rescale_max);
    read_optional(j, "max_crop_frac", c.max_crop_frac);
    read_optional(j, "flip_prob", c.flip_prob);
    read_optional(j, "shift_frac", c.shift_frac);
    c.validate();
    return c;
}

// ---- binary container ---------------------------------------------------------
//
// All integers little-endian.
//   magic      8 bytes  "MSENSWT\0"
//   version    u32      1
//   spec_len   u64      byte length of the ModelSpec JSON that follows
//   spec       spec_len bytes of UTF-8 JSON
//   n_layers   u32
//   per layer: trainable u8, n_tensors u32,
//              per tensor: rank u32, dims u64[rank], values f64[prod(dims)]

namespace {

constexpr char kMagic[8] = {'M', 'S', 'E', 'N', 'S', 'W', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

std::uint64_t get_uint(std::istream& in, int bytes) {
    char b[8];
    if (!in.read(b, bytes)) throw FormatError("weight file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

}  // namespace

void write_weights(std::ostream& out, const ModelSpec& spec, const ModelParams& params) {
    if (params.layers.size() != spec.layers.size()) throw InvalidArgument("parameters do not match the model spec");
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    const std::string text = model_spec_to_json(spec);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& layer : params.layers) {
        out.put(layer.trainable ? 1 : 0);
        put_u32(out, static_cast<std::uint32_t>(layer.tensors.size()));
        for (const auto& t : layer.tensors) {
            put_u32(out, static_cast<std::uint32_t>(t.rank()));
            for (auto d : t.shape) put_u64(out, d);
            for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) throw Error("failed writing weight data");
}

std::pair<ModelSpec, ModelParams> read_weights(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a weight file (bad magic)");
    const auto version = get_uint(in, 4);
    if (version != kVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
    const auto len = get_uint(in, 8);
    if (len > (1u << 26)) throw FormatError("weight file spec block too large");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("weight file truncated");
    ModelSpec spec = model_spec_from_json(text);

    ModelParams params;
    const auto n_layers = get_uint(in, 4);
    if (n_layers != spec.layers.size()) throw FormatError("weight file layer count does not match its spec");
    const ModelParams expected = zero_params(spec);
    for (std::uint64_t i = 0; i < n_layers; ++i) {
        LayerParams layer;
        layer.trainable = get_uint(in, 1) != 0;
        const auto n_tensors = get_uint(in, 4);
        if (n_tensors != expected.layers[i].tensors.size())
            throw FormatError("weight file tensor count mismatch at layer " + std::to_string(i));
        for (std::uint64_t k = 0; k < n_tensors; ++k) {
            const auto rank = get_uint(in, 4);
            Shape shape;
            for (std::uint64_t r = 0; r < rank && r < 8; ++r) shape.push_back(get_uint(in, 8));
            if (shape != expected.layers[i].tensors[k].shape)
                throw FormatError("weight file tensor shape mismatch at layer " + std::to_string(i));
            Tensor t(shape);
            for (auto& v : t.data) v = std::bit_cast<double>(get_uint(in, 8));
            layer.tensors.push_back(std::move(t));
        }
        params.layers.push_back(std::move(layer));
    }
    return {std::move(spec), std::move(params)};
}

void save_weights(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write weight file: " + path.string());
    write_weights(out, spec, params);
}

std::pair<ModelSpec, ModelParams> load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("weight file not found: " + path.string());
    return read_weights(in);
}

}  // namespace msens
