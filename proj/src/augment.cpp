#include "rankedcl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rankedcl/errors.hpp"

namespace rankedcl {
namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

// Stage stream keys inside one view.
enum Stage : std::uint64_t { kCropStage = 1, kFlipStage = 2, kJitterStage = 3, kGrayStage = 4 };

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double luma(const RasterImage& img, std::size_t y, std::size_t x) {
  return kLuma[0] * img.at(y, x, 0) + kLuma[1] * img.at(y, x, 1) + kLuma[2] * img.at(y, x, 2);
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("augment: ") + name + " must be in [0,1]");
}

ChannelStats stats_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(std::string("augment: ") + name + " needs 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void AugmentConfig::validate() const {
  if (out_size == 0) throw ValidationError("augment: out_size must be positive");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw ValidationError("augment: crop_scale must satisfy 0 < min <= max <= 1");
  }
  check_probability(flip_prob, "flip_prob");
  check_probability(grayscale_prob, "grayscale_prob");
  for (double s : {jitter.brightness, jitter.contrast, jitter.saturation}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("augment: jitter strengths must be >= 0");
  }
  for (double s : std) {
    if (!(s > 0.0)) throw ValidationError("augment: std must be positive");
  }
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw ValidationError("augment: block must be an object");
  try {
    if (j.contains("out_size")) cfg.out_size = j["out_size"].get<std::size_t>();
    if (j.contains("crop_scale")) {
      const auto& cs = j["crop_scale"];
      if (!cs.is_array() || cs.size() != 2) throw ValidationError("augment: crop_scale needs [min, max]");
      cfg.crop_scale_min = cs[0].get<double>();
      cfg.crop_scale_max = cs[1].get<double>();
    }
    if (j.contains("flip_prob")) cfg.flip_prob = j["flip_prob"].get<double>();
    if (j.contains("brightness")) cfg.jitter.brightness = j["brightness"].get<double>();
    if (j.contains("contrast")) cfg.jitter.contrast = j["contrast"].get<double>();
    if (j.contains("saturation")) cfg.jitter.saturation = j["saturation"].get<double>();
    if (j.contains("grayscale_prob")) cfg.grayscale_prob = j["grayscale_prob"].get<double>();
    if (j.contains("mean")) cfg.mean = stats_from_json(j["mean"], "mean");
    if (j.contains("std")) cfg.std = stats_from_json(j["std"], "std");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("augment: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json augment_config_to_json(const AugmentConfig& cfg) {
  return {{"out_size", cfg.out_size},
          {"crop_scale", {cfg.crop_scale_min, cfg.crop_scale_max}},
          {"flip_prob", cfg.flip_prob},
          {"brightness", cfg.jitter.brightness},
          {"contrast", cfg.jitter.contrast},
          {"saturation", cfg.jitter.saturation},
          {"grayscale_prob", cfg.grayscale_prob},
          {"mean", cfg.mean},
          {"std", cfg.std}};
}

RasterImage normalize(const RasterImage& img, const ChannelStats& mean, const ChannelStats& std) {
  for (double s : std) {
    if (!(s > 0.0)) throw ValidationError("normalize: std must be positive per channel");
  }
  RasterImage out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < RasterImage::kChannels; ++c) out.at(y, x, c) = (img.at(y, x, c) - mean[c]) / std[c];
  return out;
}

RasterImage resize_bilinear(const RasterImage& img, std::size_t out_h, std::size_t out_w) {
  if (img.empty()) throw ValidationError("resize: empty image");
  RasterImage out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const auto max_y = static_cast<double>(img.height - 1);
  const auto max_x = static_cast<double>(img.width - 1);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < RasterImage::kChannels; ++c) {
        const double top = std::lerp(img.at(y0, x0, c), img.at(y0, x1, c), wx);
        const double bottom = std::lerp(img.at(y1, x0, c), img.at(y1, x1, c), wx);
        out.at(oy, ox, c) = std::lerp(top, bottom, wy);
      }
    }
  }
  return out;
}

RasterImage crop(const RasterImage& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > img.height || left + w > img.width || h == 0 || w == 0) {
    throw ValidationError("crop: window outside image");
  }
  RasterImage out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < RasterImage::kChannels; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
  return out;
}

RasterImage random_resized_crop(const RasterImage& img, double scale_min, double scale_max, std::size_t out_size,
                                Rng& rng) {
  if (img.empty()) throw ValidationError("random_resized_crop: empty image");
  const auto height = static_cast<double>(img.height);
  const auto width = static_cast<double>(img.width);
  const double area = height * width;
  const double log_lo = std::log(3.0 / 4.0);
  const double log_hi = std::log(4.0 / 3.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(scale_min, scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<long>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<long>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= static_cast<long>(img.width) && h <= static_cast<long>(img.height)) {
      const std::size_t top = rng.uniform_index(img.height - static_cast<std::size_t>(h) + 1);
      const std::size_t left = rng.uniform_index(img.width - static_cast<std::size_t>(w) + 1);
      return resize_bilinear(crop(img, top, left, static_cast<std::size_t>(h), static_cast<std::size_t>(w)), out_size,
                             out_size);
    }
  }
  // Center crop clamped to the allowed aspect range.
  std::size_t w = img.width, h = img.height;
  const double in_ratio = width / height;
  if (in_ratio < 3.0 / 4.0) {
    h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(width / (3.0 / 4.0))));
  } else if (in_ratio > 4.0 / 3.0) {
    w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(height * (4.0 / 3.0))));
  }
  h = std::min(h, img.height);
  w = std::min(w, img.width);
  return resize_bilinear(crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w), out_size, out_size);
}

RasterImage horizontal_flip(const RasterImage& img) {
  RasterImage out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < RasterImage::kChannels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

RasterImage horizontal_flip(const RasterImage& img, double p, Rng& rng) {
  return rng.bernoulli(p) ? horizontal_flip(img) : img;
}

RasterImage color_jitter(const RasterImage& img, const JitterStrengths& s, Rng& rng) {
  auto factor = [&rng](double strength) { return rng.uniform(std::max(0.0, 1.0 - strength), 1.0 + strength); };
  const double brightness = factor(s.brightness);
  const double contrast = factor(s.contrast);
  const double saturation = factor(s.saturation);

  RasterImage out = img;
  for (Eigen::Index k = 0; k < out.pixels.size(); ++k) out.pixels[k] = clamp01(std::lerp(0.0, out.pixels[k], brightness));

  double gray_mean = 0.0;
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) gray_mean += luma(out, y, x);
  gray_mean /= static_cast<double>(std::max<std::size_t>(1, out.height * out.width));
  for (Eigen::Index k = 0; k < out.pixels.size(); ++k) out.pixels[k] = clamp01(std::lerp(gray_mean, out.pixels[k], contrast));

  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const double g = luma(out, y, x);
      for (std::size_t c = 0; c < RasterImage::kChannels; ++c) out.at(y, x, c) = clamp01(std::lerp(g, out.at(y, x, c), saturation));
    }
  }
  return out;
}

RasterImage to_grayscale(const RasterImage& img) {
  RasterImage out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double g = clamp01(luma(img, y, x));
      for (std::size_t c = 0; c < RasterImage::kChannels; ++c) out.at(y, x, c) = g;
    }
  }
  return out;
}

RasterImage augment_view(const RasterImage& img, const AugmentConfig& cfg, const Rng& rng) {
  Rng crop_rng = rng.split(kCropStage);
  Rng flip_rng = rng.split(kFlipStage);
  Rng jitter_rng = rng.split(kJitterStage);
  Rng gray_rng = rng.split(kGrayStage);
  RasterImage v = random_resized_crop(img, cfg.crop_scale_min, cfg.crop_scale_max, cfg.out_size, crop_rng);
  v = horizontal_flip(v, cfg.flip_prob, flip_rng);
  v = color_jitter(v, cfg.jitter, jitter_rng);
  if (gray_rng.bernoulli(cfg.grayscale_prob)) v = to_grayscale(v);
  return normalize(v, cfg.mean, cfg.std);
}

std::pair<RasterImage, RasterImage> two_crop(const RasterImage& img, const AugmentConfig& cfg, const Rng& rng) {
  cfg.validate();
  return {augment_view(img, cfg, rng.split(0)), augment_view(img, cfg, rng.split(1))};
}

RasterImage eval_view(const RasterImage& img, const AugmentConfig& cfg) {
  return normalize(resize_bilinear(img, cfg.out_size, cfg.out_size), cfg.mean, cfg.std);
}

std::pair<ChannelStats, ChannelStats> channel_stats(const std::vector<RasterImage>& images) {
  ChannelStats sum{0, 0, 0}, sq{0, 0, 0};
  double count = 0;
  for (const auto& img : images) {
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          sum[c] += img.at(y, x, c);
          sq[c] += img.at(y, x, c) * img.at(y, x, c);
        }
    count += static_cast<double>(img.height * img.width);
  }
  if (count == 0) throw DegenerateInputError("channel_stats: no pixels");
  ChannelStats mean{}, std{};
  for (std::size_t c = 0; c < 3; ++c) {
    mean[c] = sum[c] / count;
    std[c] = std::sqrt(std::max(0.0, sq[c] / count - mean[c] * mean[c]));
    if (std[c] < 1e-6) std[c] = 1.0;  // constant channel: leave scale alone
  }
  return {mean, std};
}

RasterImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("ppm: cannot open '" + path + "'");
  auto token = [&in, &path]() {
    std::string t;
    while (in >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return t;
    }
    throw ValidationError("ppm: truncated header in '" + path + "'");
  };
  if (token() != "P6") throw ValidationError("ppm: '" + path + "' is not binary P6");
  const auto w = std::stoul(token());
  const auto h = std::stoul(token());
  const auto maxval = std::stoul(token());
  if (maxval != 255) throw ValidationError("ppm: only maxval 255 is supported");
  in.get();  // single whitespace before the raster
  RasterImage img(h, w);
  std::string raw(h * w * 3, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw ValidationError("ppm: truncated raster in '" + path + "'");
  for (std::size_t k = 0; k < raw.size(); ++k) img.pixels[static_cast<Eigen::Index>(k)] = static_cast<unsigned char>(raw[k]) / 255.0;
  return img;
}

void write_ppm(const RasterImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("ppm: cannot write '" + path + "'");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (Eigen::Index k = 0; k < img.pixels.size(); ++k) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamp01(img.pixels[k]) * 255.0))));
  }
}

nlohmann::json image_to_json(const RasterImage& img) {
  return {{"height", img.height},
          {"width", img.width},
          {"channels", RasterImage::kChannels},
          {"data", std::vector<double>(img.pixels.begin(), img.pixels.end())}};
}

RasterImage image_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("height") || !j.contains("width") || !j.contains("data")) {
    throw ValidationError("image json: expected height, width, data");
  }
  if (j.contains("channels") && j["channels"] != 3) throw ValidationError("image json: channels must be 3");
  const auto h = j["height"].get<std::size_t>();
  const auto w = j["width"].get<std::size_t>();
  const auto& data = j["data"];
  if (!data.is_array() || data.size() != h * w * 3) throw ValidationError("image json: data length must be height*width*3");
  RasterImage img(h, w);
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!data[k].is_number()) throw ValidationError("image json: data[" + std::to_string(k) + "] is not a number");
    img.pixels[static_cast<Eigen::Index>(k)] = data[k].get<double>();
  }
  return img;
}

}  // namespace rankedcl
