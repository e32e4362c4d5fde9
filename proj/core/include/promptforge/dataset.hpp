#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace promptforge {

/// 8-bit image stored row-major as height x width x channels.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

struct Sample {
    Image image;
    std::size_t label = 0;
    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return class_names.size(); }
    /// Indices of samples whose label is `label`, in dataset order.
    std::vector<std::size_t> indices_of(std::size_t label) const;
    /// Throws DataError if a label is out of range or image sizes differ.
    void validate() const;
    bool operator==(const Dataset&) const = default;
};

/// Number of distinct shipped synthetic patterns.
inline constexpr std::size_t kSyntheticPatterns = 16;
inline constexpr std::size_t kSyntheticSize = 32;

/// Colour and shape vocabulary of the synthetic patterns.
const std::vector<std::string>& synthetic_colours();
const std::vector<std::string>& synthetic_shapes();
/// "<colour> <shape>" names of the shipped patterns, in class order.
const std::vector<std::string>& synthetic_class_names();

/// Renders pattern `pattern` with its shape centred at (cx, cy) on a flat
/// mid-grey background, without colour jitter.
Image render_canonical(std::size_t pattern, int cx = 16, int cy = 16);

/// Each class is a coloured shape at a jittered position on a noise
/// background. Throws ConfigError unless 2 <= classes <= 16.
Dataset generate_synthetic(std::size_t classes, std::size_t per_class, std::uint64_t seed);

/// Binary P6 pixmap I/O (maxval 255, three channels).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

/// Loads root/<class_name>/<image>.ppm. Classes are the sorted
/// subdirectory names; images within a class are taken in path order.
Dataset load_directory(const std::filesystem::path& root);
/// Writes the layout read by load_directory. Files are named 00000.ppm, ...
void write_directory(const Dataset& ds, const std::filesystem::path& root);

}  // namespace promptforge
