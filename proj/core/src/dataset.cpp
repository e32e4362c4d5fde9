#include "promptforge/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "promptforge/errors.hpp"
#include "promptforge/rng.hpp"

namespace promptforge {

namespace fs = std::filesystem;

namespace {

struct Pattern {
    std::size_t colour;
    std::size_t shape;
};

constexpr std::array<std::array<double, 3>, 8> kHues{{
    {220, 40, 40},
    {40, 200, 60},
    {50, 70, 230},
    {230, 210, 40},
    {40, 210, 210},
    {210, 50, 200},
    {240, 140, 30},
    {130, 60, 200},
}};

constexpr std::array<Pattern, kSyntheticPatterns> kPatterns{{
    {0, 0}, {1, 1}, {2, 2}, {3, 3}, {0, 1}, {1, 2}, {2, 3}, {3, 0},
    {4, 0}, {5, 1}, {6, 2}, {7, 3}, {4, 3}, {5, 0}, {6, 1}, {7, 2},
}};

constexpr int kRadius = 7;
constexpr int kJitter = 6;
constexpr double kNoise = 20.0;
constexpr double kColourJitter = 15.0;

bool in_shape(std::size_t shape, int dx, int dy) {
    const int d2 = dx * dx + dy * dy;
    switch (shape) {
        case 0:  // disc
            return d2 <= kRadius * kRadius;
        case 1:  // cross
            return (std::abs(dx) <= 1 && std::abs(dy) <= kRadius) ||
                   (std::abs(dy) <= 1 && std::abs(dx) <= kRadius);
        case 2:  // square
            return std::abs(dx) <= kRadius - 1 && std::abs(dy) <= kRadius - 1;
        default:  // ring
            return d2 <= kRadius * kRadius && d2 >= (kRadius - 3) * (kRadius - 3);
    }
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v), 0.0, 255.0));
}

void paint(Image& img, const Pattern& p, int cx, int cy, const std::array<double, 3>& colour) {
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            if (!in_shape(p.shape, static_cast<int>(x) - cx, static_cast<int>(y) - cy)) continue;
            for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = to_byte(colour[c]);
        }
    }
}

Image blank(std::size_t size) {
    Image img;
    img.height = img.width = size;
    img.channels = 3;
    img.pixels.assign(size * size * 3, 128);
    return img;
}

void skip_space_and_comments(std::istream& in) {
    while (true) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (ch != EOF && std::isspace(ch)) {
            in.get();
        } else {
            return;
        }
    }
}

std::size_t read_header_number(std::istream& in, const fs::path& path) {
    skip_space_and_comments(in);
    long long v = -1;
    if (!(in >> v) || v <= 0) throw FormatError("bad P6 header in " + path.string());
    return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::size_t> Dataset::indices_of(std::size_t label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label == label) out.push_back(i);
    }
    return out;
}

void Dataset::validate() const {
    for (const auto& s : samples) {
        if (s.label >= class_names.size()) {
            throw DataError("sample label " + std::to_string(s.label) + " out of range for " +
                            std::to_string(class_names.size()) + " classes");
        }
        const auto& first = samples.front().image;
        if (s.image.height != first.height || s.image.width != first.width ||
            s.image.channels != first.channels) {
            throw DataError("dataset images have mixed dimensions");
        }
    }
}

const std::vector<std::string>& synthetic_colours() {
    static const std::vector<std::string> names{"red",  "green",   "blue",   "yellow",
                                                "cyan", "magenta", "orange", "purple"};
    return names;
}

const std::vector<std::string>& synthetic_shapes() {
    static const std::vector<std::string> names{"disc", "cross", "square", "ring"};
    return names;
}

const std::vector<std::string>& synthetic_class_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& p : kPatterns) {
            out.push_back(synthetic_colours()[p.colour] + " " + synthetic_shapes()[p.shape]);
        }
        return out;
    }();
    return names;
}

Image render_canonical(std::size_t pattern, int cx, int cy) {
    if (pattern >= kSyntheticPatterns) throw IndexError("no synthetic pattern " + std::to_string(pattern));
    Image img = blank(kSyntheticSize);
    paint(img, kPatterns[pattern], cx, cy, kHues[kPatterns[pattern].colour]);
    return img;
}

Dataset generate_synthetic(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
    if (classes < 2 || classes > kSyntheticPatterns) {
        throw ConfigError("synthetic datasets support 2.." + std::to_string(kSyntheticPatterns) +
                          " classes, got " + std::to_string(classes));
    }
    Dataset ds;
    ds.class_names.assign(synthetic_class_names().begin(),
                          synthetic_class_names().begin() + static_cast<long>(classes));
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const int cx = 16 + static_cast<int>(rng.integer(-kJitter, kJitter));
            const int cy = 16 + static_cast<int>(rng.integer(-kJitter, kJitter));
            Image img = blank(kSyntheticSize);
            for (auto& px : img.pixels) px = to_byte(rng.uniform(128.0 - kNoise, 128.0 + kNoise));
            std::array<double, 3> colour = kHues[kPatterns[c].colour];
            for (auto& ch : colour) ch += kColourJitter * rng.normal();
            paint(img, kPatterns[c], cx, cy, colour);
            ds.samples.push_back({std::move(img), c});
        }
    }
    return ds;
}

Image read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw FormatError("not a binary P6 pixmap: " + path.string());
    Image img;
    img.width = read_header_number(in, path);
    img.height = read_header_number(in, path);
    const std::size_t maxval = read_header_number(in, path);
    if (maxval != 255) throw FormatError("unsupported maxval in " + path.string());
    in.get();  // single whitespace before the raster
    img.channels = 3;
    img.pixels.resize(img.width * img.height * 3);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw FormatError("truncated raster in " + path.string());
    }
    return img;
}

void write_ppm(const Image& image, const fs::path& path) {
    if (image.channels != 3) throw FormatError("P6 output needs three channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_directory(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw IoError("not a directory: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    Dataset ds;
    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
        ds.class_names.push_back(class_dirs[label].filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
            if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            Image img = read_ppm(file);
            if (!ds.samples.empty()) {
                const auto& first = ds.samples.front().image;
                if (img.width != first.width || img.height != first.height) {
                    throw FormatError("image " + file.string() + " is " + std::to_string(img.width) + "x" +
                                      std::to_string(img.height) + ", expected " +
                                      std::to_string(first.width) + "x" + std::to_string(first.height));
                }
            }
            ds.samples.push_back({std::move(img), label});
        }
    }
    return ds;
}

void write_directory(const Dataset& ds, const fs::path& root) {
    ds.validate();
    std::vector<std::size_t> counters(ds.num_classes(), 0);
    for (std::size_t c = 0; c < ds.num_classes(); ++c) {
        std::error_code ec;
        fs::create_directories(root / ds.class_names[c], ec);
        if (ec) throw IoError("cannot create " + (root / ds.class_names[c]).string());
    }
    for (const auto& s : ds.samples) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.ppm", counters[s.label]++);
        write_ppm(s.image, root / ds.class_names[s.label] / name);
    }
}

}  // namespace promptforge
