#ifndef RANKEDCL_AUGMENT_HPP
#define RANKEDCL_AUGMENT_HPP

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rankedcl/rng.hpp"

namespace rankedcl {

/// RGB image with interleaved channels in row-major pixel order.
struct RasterImage {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  Eigen::ArrayXd pixels;

  RasterImage() = default;
  RasterImage(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), pixels(Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(h * w * kChannels), fill)) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[static_cast<Eigen::Index>((y * width + x) * kChannels + c)];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[static_cast<Eigen::Index>((y * width + x) * kChannels + c)];
  }
  bool empty() const { return height == 0 || width == 0; }
  bool operator==(const RasterImage& o) const {
    return height == o.height && width == o.width && (pixels == o.pixels).all();
  }
};

using ChannelStats = std::array<double, 3>;

struct JitterStrengths {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
};

/// Parameters of the two-view augmentation chain.
struct AugmentConfig {
  std::size_t out_size = 32;
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double flip_prob = 0.5;
  JitterStrengths jitter;
  double grayscale_prob = 0.2;
  ChannelStats mean{0.5, 0.5, 0.5};
  ChannelStats std{0.25, 0.25, 0.25};

  /// Throws ValidationError on out-of-range fields.
  void validate() const;
};

AugmentConfig augment_config_from_json(const nlohmann::json& j);
nlohmann::json augment_config_to_json(const AugmentConfig& cfg);

/// (in - mean) / std per channel.
RasterImage normalize(const RasterImage& img, const ChannelStats& mean, const ChannelStats& std);

/// Bilinear resample with half-pixel centers and edge clamping.
RasterImage resize_bilinear(const RasterImage& img, std::size_t out_h, std::size_t out_w);

/// Copies the h×w window whose top-left corner is (top, left).
RasterImage crop(const RasterImage& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

/// Samples area fraction in [scale_min, scale_max] and aspect ratio in [3/4, 4/3],
/// crops, then resizes to out_size × out_size. Falls back to a center crop after 10 misses.
RasterImage random_resized_crop(const RasterImage& img, double scale_min, double scale_max, std::size_t out_size,
                                Rng& rng);

RasterImage horizontal_flip(const RasterImage& img);
RasterImage horizontal_flip(const RasterImage& img, double p, Rng& rng);

/// Brightness, contrast and saturation factors drawn from [1-s, 1+s], applied in that order, clamped to [0,1].
RasterImage color_jitter(const RasterImage& img, const JitterStrengths& s, Rng& rng);

/// Luma (0.299, 0.587, 0.114) replicated to three channels.
RasterImage to_grayscale(const RasterImage& img);

/// crop → flip → jitter → maybe-grayscale → normalize, each stage on its own stream.
RasterImage augment_view(const RasterImage& img, const AugmentConfig& cfg, const Rng& rng);

/// Two independent views of one input: the anchor and its guaranteed positive.
std::pair<RasterImage, RasterImage> two_crop(const RasterImage& img, const AugmentConfig& cfg, const Rng& rng);

/// Deterministic evaluation transform: resize to out_size and normalize.
RasterImage eval_view(const RasterImage& img, const AugmentConfig& cfg);

/// Per-channel mean and population standard deviation over all pixels of all images.
std::pair<ChannelStats, ChannelStats> channel_stats(const std::vector<RasterImage>& images);

// Binary PPM (P6, maxval 255).
RasterImage read_ppm(const std::string& path);
void write_ppm(const RasterImage& img, const std::string& path);

// {"height": h, "width": w, "channels": 3, "data": [interleaved floats]}
nlohmann::json image_to_json(const RasterImage& img);
RasterImage image_from_json(const nlohmann::json& j);

}  // namespace rankedcl

#endif  // RANKEDCL_AUGMENT_HPP
