#include "msens/imageio.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "msens/error.hpp"
#include "msens/random.hpp"

namespace fs = std::filesystem;

namespace msens {

GrayImage::GrayImage(int w, int h, int maxval, std::uint16_t fill)
    : width(w), height(h), max_value(maxval),
      pixels(static_cast<std::size_t>(std::max(w, 0)) * static_cast<std::size_t>(std::max(h, 0)), fill) {}

void GrayImage::validate() const {
    if (width < 1 || height < 1)
        throw InvalidArgument("image dimensions must be positive");
    if (max_value < 1 || max_value > 65535)
        throw InvalidArgument("image max_value must lie in [1, 65535]");
    if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw InvalidArgument("image pixel count does not match width*height");
    for (auto p : pixels)
        if (p > max_value) throw InvalidArgument("pixel exceeds max_value");
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    // Returns false at end of input.
    bool next_uint(long long& value) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) return false;
        if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
            throw FormatError("PGM: unexpected character in numeric field");
        value = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000LL) throw FormatError("PGM: numeric field too large");
            ++pos_;
        }
        return true;
    }

    long long require_uint(const char* what) {
        long long v = 0;
        if (!next_uint(v)) throw FormatError(std::string("PGM: missing ") + what);
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

GrayImage parse_pgm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5'))
        throw FormatError("PGM: bad magic number (expected P2 or P5)");
    const bool binary = bytes[1] == '5';
    HeaderReader reader(bytes);
    reader.advance(2);
    const long long w = reader.require_uint("width");
    const long long h = reader.require_uint("height");
    const long long maxval = reader.require_uint("max value");
    if (w < 1 || h < 1) throw FormatError("PGM: dimensions must be positive");
    if (maxval < 1 || maxval > 65535) throw FormatError("PGM: max value must lie in [1, 65535]");

    GrayImage img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(maxval));
    const std::size_t count = img.pixels.size();

    if (binary) {
        std::size_t pos = reader.pos();
        if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
            throw FormatError("PGM: missing separator before binary payload");
        ++pos;
        const std::size_t bpp = maxval > 255 ? 2 : 1;
        if (bytes.size() - pos != count * bpp)
            throw FormatError("PGM: payload size " + std::to_string(bytes.size() - pos) +
                              " does not match header (" + std::to_string(count * bpp) + " bytes)");
        for (std::size_t i = 0; i < count; ++i) {
            unsigned v;
            if (bpp == 1) {
                v = static_cast<unsigned char>(bytes[pos + i]);
            } else {
                v = (static_cast<unsigned>(static_cast<unsigned char>(bytes[pos + 2 * i])) << 8) |
                    static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
            }
            if (v > static_cast<unsigned>(maxval))
                throw FormatError("PGM: pixel " + std::to_string(i) + " exceeds max value");
            img.pixels[i] = static_cast<std::uint16_t>(v);
        }
    } else {
        std::size_t i = 0;
        long long v = 0;
        while (reader.next_uint(v)) {
            if (i >= count)
                throw FormatError("PGM: more pixel values than width*height = " + std::to_string(count));
            if (v > maxval) throw FormatError("PGM: pixel " + std::to_string(i) + " exceeds max value");
            img.pixels[i++] = static_cast<std::uint16_t>(v);
        }
        if (i != count)
            throw FormatError("PGM: found " + std::to_string(i) + " pixel values, header declares " +
                              std::to_string(count));
    }
    return img;
}

GrayImage load_image(const fs::path& path) {
    if (!fs::exists(path)) throw Error("image file not found: " + path.string());
    try {
        return parse_pgm(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string encode_pgm(const GrayImage& img, PgmEncoding encoding) {
    img.validate();
    std::ostringstream out;
    out << (encoding == PgmEncoding::Ascii ? "P2" : "P5") << '\n'
        << img.width << ' ' << img.height << '\n'
        << img.max_value << '\n';
    if (encoding == PgmEncoding::Ascii) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                if (x) out << ' ';
                out << img.at(x, y);
            }
            out << '\n';
        }
    } else {
        const bool wide = img.max_value > 255;
        for (auto p : img.pixels) {
            if (wide) out.put(static_cast<char>(p >> 8));
            out.put(static_cast<char>(p & 0xff));
        }
    }
    return out.str();
}

void save_image(const GrayImage& img, const fs::path& path, PgmEncoding encoding) {
    const std::string bytes = encode_pgm(img, encoding);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write image: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    std::vector<ManifestEntry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0)
            throw FormatError("manifest line " + std::to_string(lineno) + ": expected \"path,label\"");
        std::string label = line.substr(comma + 1);
        label.erase(0, label.find_first_not_of(" \t"));
        label.erase(label.find_last_not_of(" \t") + 1);
        if (label != "0" && label != "1")
            throw FormatError("manifest line " + std::to_string(lineno) + ": label must be 0 or 1, got \"" +
                              label + "\"");
        entries.push_back({line.substr(0, comma), label == "1" ? 1 : 0});
    }
    return entries;
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
    try {
        return parse_manifest(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path.string());
    for (const auto& e : entries) out << e.path << ',' << e.label << '\n';
}

SplitSizes split_sizes(std::size_t n) {
    SplitSizes s;
    s.test = n / 5;
    s.validation = (n - s.test) / 5;
    s.train = n - s.test - s.validation;
    return s;
}

namespace {

// Class-0 counts for (test, validation); class 1 receives the complement.
// Floors both fractional targets, then rounds one up when their fractional
// parts sum past 1, keeping the train remainder within one item as well.
std::array<std::size_t, 2> class0_counts(std::size_t n0, std::size_t n, const SplitSizes& sizes) {
    const double p = static_cast<double>(n0) / static_cast<double>(n);
    const double t_target = static_cast<double>(sizes.test) * p;
    const double v_target = static_cast<double>(sizes.validation) * p;
    auto t = static_cast<std::size_t>(std::floor(t_target));
    auto v = static_cast<std::size_t>(std::floor(v_target));
    const double ft = t_target - static_cast<double>(t);
    const double fv = v_target - static_cast<double>(v);
    if (ft + fv > 1.0) {
        if (ft >= fv) ++t;
        else ++v;
    }
    return {t, v};
}

}  // namespace

DatasetSplit split_dataset(const std::vector<ManifestEntry>& entries, std::uint64_t seed, bool stratify) {
    const std::size_t n = entries.size();
    if (n < 5) throw InvalidArgument("split_dataset needs at least 5 entries, got " + std::to_string(n));
    const SplitSizes sizes = split_sizes(n);
    Rng rng(seed);

    // which[i] = 0 test, 1 validation, 2 train
    std::vector<int> which(n, 2);
    if (stratify) {
        std::array<std::vector<std::size_t>, 2> by_class;
        for (std::size_t i = 0; i < n; ++i) by_class[entries[i].label].push_back(i);
        for (int c = 0; c < 2; ++c)
            if (by_class[c].empty())
                throw InvalidArgument("stratified split: class " + std::to_string(c) + " has no members");
        const auto [t0, v0] = class0_counts(by_class[0].size(), n, sizes);
        const std::array<std::size_t, 2> t{t0, sizes.test - t0};
        const std::array<std::size_t, 2> v{v0, sizes.validation - v0};
        for (int c = 0; c < 2; ++c) {
            auto& idx = by_class[c];
            rng.shuffle(std::span<std::size_t>(idx));
            for (std::size_t k = 0; k < idx.size(); ++k)
                which[idx[k]] = k < t[c] ? 0 : (k < t[c] + v[c] ? 1 : 2);
        }
    } else {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(std::span<std::size_t>(idx));
        for (std::size_t k = 0; k < n; ++k)
            which[idx[k]] = k < sizes.test ? 0 : (k < sizes.test + sizes.validation ? 1 : 2);
    }

    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = which[i] == 0 ? split.test : (which[i] == 1 ? split.validation : split.train);
        dst.push_back(entries[i]);
    }
    return split;
}

void save_split(const DatasetSplit& split, const fs::path& source_root, const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path target = fs::weakly_canonical(dir);
    const fs::path root = fs::weakly_canonical(source_root.empty() ? fs::path(".") : source_root);
    auto relocate = [&](std::vector<ManifestEntry> list) {
        for (auto& e : list) {
            fs::path p(e.path);
            if (p.is_relative()) p = root / p;
            e.path = fs::weakly_canonical(p).lexically_relative(target).generic_string();
        }
        return list;
    };
    save_manifest(relocate(split.train), dir / "train.csv");
    save_manifest(relocate(split.validation), dir / "validation.csv");
    save_manifest(relocate(split.test), dir / "test.csv");

    auto count = [](const std::vector<ManifestEntry>& v, int label) {
        return std::count_if(v.begin(), v.end(), [&](const ManifestEntry& e) { return e.label == label; });
    };
    std::ofstream side(dir / "split.txt", std::ios::binary);
    side << "seed " << split.seed << '\n';
    for (auto [name, list] : {std::pair{"train", &split.train}, std::pair{"validation", &split.validation},
                              std::pair{"test", &split.test}}) {
        side << name << ' ' << list->size() << " normal " << count(*list, 0) << " pneumothorax "
             << count(*list, 1) << '\n';
    }
}

DatasetSplit load_split(const fs::path& dir) {
    for (const char* name : {"train.csv", "validation.csv", "test.csv", "split.txt"})
        if (!fs::exists(dir / name)) throw MissingArtifact("split directory lacks " + (dir / name).string());
    DatasetSplit split;
    split.train = load_manifest(dir / "train.csv");
    split.validation = load_manifest(dir / "validation.csv");
    split.test = load_manifest(dir / "test.csv");
    std::ifstream side(dir / "split.txt");
    std::string key;
    if (!(side >> key >> split.seed) || key != "seed") throw FormatError("split.txt: missing seed line");
    return split;
}

}  // namespace msens
