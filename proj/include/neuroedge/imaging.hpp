// Image ingestion and preprocessing: PGM/PPM decoding, grayscale conversion,
// bilinear resizing to the 48x48 network input, Sobel edge maps, stratified
// train/test splits, and a parametric synthetic corpus for desk-scale runs.
//
// Images are Tensor<double> in rows x cols x channels layout with values in
// [0, 1].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neuroedge/rng.hpp"
#include "neuroedge/tensor.hpp"

namespace neuroedge {

using Image = Tensor<double>;

inline constexpr std::size_t image_size = 48;
inline constexpr std::size_t num_classes = 7;

// Alphabetical, which is also the label index order.
inline const std::array<std::string, num_classes>& class_names() {
  static const std::array<std::string, num_classes> names{
      "anger", "contempt", "disgust", "fear", "happiness", "sadness", "surprise"};
  return names;
}

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Accepts the canonical names plus a few common directory spellings.
inline std::optional<std::size_t> class_index(const std::string& dir_name) {
  std::string n = dir_name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::map<std::string, std::string> aliases{
      {"angry", "anger"}, {"disgusted", "disgust"}, {"fearful", "fear"}, {"happy", "happiness"},
      {"sad", "sadness"}, {"surprised", "surprise"}};
  if (auto it = aliases.find(n); it != aliases.end()) n = it->second;
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == n) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pixel transforms

inline Image to_grayscale(const Image& rgb) {
  if (rgb.rank() != 3) throw ShapeError("to_grayscale: expected rows x cols x channels");
  if (rgb.dim(2) == 1) return rgb;
  if (rgb.dim(2) != 3) {
    throw ShapeError("to_grayscale: expected 3 channels, got " + std::to_string(rgb.dim(2)));
  }
  Image out({rgb.dim(0), rgb.dim(1), 1});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
  }
  return out;
}

// Bilinear interpolation with pixel-center alignment: output pixel (y, x)
// samples the source at ((y + 0.5) * H / h - 0.5, ...), clamped to the edges.
inline Image resize_bilinear(const Image& in, std::size_t out_h, std::size_t out_w) {
  if (in.rank() != 3) throw ShapeError("resize_bilinear: expected rows x cols x channels");
  const std::size_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  if (h < 2 || w < 2) {
    throw ShapeError("resize_bilinear: source extents must be >= 2, got " + shape_to_string(in.shape()));
  }
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: target extents must be positive");
  if (out_h == h && out_w == w) return in;

  auto axis = [](std::size_t dst, std::size_t src_n, std::size_t dst_n) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) /
                   static_cast<double>(dst_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    const auto i0 = std::min(static_cast<std::size_t>(s), src_n - 2);
    return std::pair{i0, s - static_cast<double>(i0)};
  };
  Image out({out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, fy] = axis(y, h, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, fx] = axis(x, w, out_w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = in.at(y0, x0, ch), b = in.at(y0, x0 + 1, ch);
        const double d = in.at(y0 + 1, x0, ch), e = in.at(y0 + 1, x0 + 1, ch);
        const double top = a + (b - a) * fx, bottom = d + (e - d) * fx;
        out.at(y, x, ch) = top + (bottom - top) * fy;
      }
    }
  }
  return out;
}

inline void clamp_unit(Image& img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
}

// Sobel gradient magnitude with replicate borders, divided by the image
// maximum, then values below `threshold` set to exactly zero.
inline Image edge_detect(const Image& in, double threshold = 0.1) {
  if (in.rank() != 3 || in.dim(2) != 1) throw ShapeError("edge_detect: expected a single-channel image");
  const long h = static_cast<long>(in.dim(0)), w = static_cast<long>(in.dim(1));
  auto px = [&](long y, long x) {
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return in[static_cast<std::size_t>(y * w + x)];
  };
  Image mag(in.shape());
  double peak = 0.0;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag[static_cast<std::size_t>(y * w + x)] = m;
      peak = std::max(peak, m);
    }
  }
  for (double& v : mag.data()) {
    v = peak > 0.0 ? v / peak : 0.0;
    if (v < threshold) v = 0.0;
  }
  return mag;
}

struct PreprocessConfig {
  std::size_t size = image_size;
  bool edges = false;
  double threshold = 0.1;
};

// Grayscale, resize and clamp. Idempotent on its own output.
inline Image normalize_image(const Image& in, std::size_t size = image_size) {
  Image g = to_grayscale(in);
  if (g.dim(0) != size || g.dim(1) != size) g = resize_bilinear(g, size, size);
  clamp_unit(g);
  return g;
}

inline Image preprocess(const Image& in, const PreprocessConfig& cfg = {}) {
  Image g = normalize_image(in, cfg.size);
  return cfg.edges ? edge_detect(g, cfg.threshold) : g;
}

inline double zero_fraction(const Image& img) {
  const auto zeros = std::count(img.data().begin(), img.data().end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(img.size());
}

// ---------------------------------------------------------------------------
// Netpbm codecs

namespace detail {

struct PnmCursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw DataError("netpbm: expected a number at byte " + std::to_string(pos));
    }
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1u << 24) throw DataError("netpbm: header value too large");
    }
    return v;
  }
};

inline Image decode_pnm(const std::vector<std::uint8_t>& bytes, char kind) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) {
    throw DataError(std::string("netpbm: missing P") + kind + " magic");
  }
  PnmCursor cur{bytes, 2};
  const std::size_t w = cur.number(), h = cur.number(), maxval = cur.number();
  if (w == 0 || h == 0) throw DataError("netpbm: zero extent");
  if (maxval == 0 || maxval > 65535) throw DataError("netpbm: maxval out of range");
  if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos])) {
    throw DataError("netpbm: missing whitespace before raster");
  }
  ++cur.pos;
  const std::size_t channels = kind == '6' ? 3 : 1;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  const std::size_t need = w * h * channels * bps;
  if (bytes.size() - cur.pos < need) throw DataError("netpbm: raster truncated");
  Image img({h, w, channels});
  const std::uint8_t* p = bytes.data() + cur.pos;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::size_t v = bps == 1 ? p[i] : (static_cast<std::size_t>(p[2 * i]) << 8) | p[2 * i + 1];
    img[i] = std::min(1.0, static_cast<double>(v) / static_cast<double>(maxval));
  }
  return img;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline Image decode_pgm(const std::vector<std::uint8_t>& bytes) { return detail::decode_pnm(bytes, '5'); }
inline Image decode_ppm(const std::vector<std::uint8_t>& bytes) { return detail::decode_pnm(bytes, '6'); }

inline std::vector<std::uint8_t> encode_pgm(const Image& img) {
  if (img.rank() != 3 || img.dim(2) != 1) throw ShapeError("encode_pgm: expected a single-channel image");
  const std::string head = "P5\n" + std::to_string(img.dim(1)) + " " + std::to_string(img.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (double v : img.data()) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.rank() != 3 || img.dim(2) != 3) throw ShapeError("encode_ppm: expected a 3-channel image");
  const std::string head = "P6\n" + std::to_string(img.dim(1)) + " " + std::to_string(img.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (double v : img.data()) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Maps lower-case file extensions (".pgm") to decoders. Other formats can be
// registered by callers without touching the ingestion code.
class DecoderRegistry {
 public:
  using Decoder = std::function<Image(const std::vector<std::uint8_t>&)>;

  static DecoderRegistry with_defaults() {
    DecoderRegistry r;
    r.add(".pgm", decode_pgm);
    r.add(".ppm", decode_ppm);
    return r;
  }

  void add(std::string ext, Decoder d) { decoders_[lower(std::move(ext))] = std::move(d); }

  const Decoder* find(const std::filesystem::path& path) const {
    auto it = decoders_.find(lower(path.extension().string()));
    return it == decoders_.end() ? nullptr : &it->second;
  }

 private:
  static std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  }
  std::map<std::string, Decoder> decoders_;
};

// ---------------------------------------------------------------------------
// Datasets

struct ImageSample {
  Image pixels;  // 48 x 48 x 1 in [0, 1]
  std::size_t label = 0;
  std::string source_id;
};

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct Dataset {
  std::vector<ImageSample> samples;
  Split split = Split::train;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct SplitConfig {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct IngestResult {
  Dataset train;
  Dataset test;
  std::vector<SkippedFile> skipped;
};

// Stratified split: within each label, samples are shuffled with a per-label
// stream of the seed and the first round(n * test_fraction) go to test.
// Input order must already be deterministic (ingestion sorts file names).
inline std::pair<Dataset, Dataset> stratified_split(std::vector<ImageSample> samples,
                                                    const SplitConfig& cfg) {
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction <= 1.0)) {
    throw DataError("test_fraction must lie in [0, 1]");
  }
  Dataset train{{}, Split::train}, test{{}, Split::test};
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < samples.size(); ++i) by_label[samples[i].label].push_back(i);
  for (auto& [label, idx] : by_label) {
    Xoshiro256 rng(derive_seed(cfg.seed, label));
    shuffle(std::span<std::size_t>(idx), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * cfg.test_fraction));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      (k < n_test ? test : train).samples.push_back(std::move(samples[idx[k]]));
    }
  }
  return {std::move(train), std::move(test)};
}

// Reads <root>/<class>/<file> images. Unknown class directories are an
// error; files without a registered decoder or that fail to decode are
// skipped and listed in the result.
inline IngestResult ingest(const std::filesystem::path& root, const SplitConfig& split,
                           const PreprocessConfig& prep = {},
                           const DecoderRegistry& decoders = DecoderRegistry::with_defaults()) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("no class directories under " + root.string());

  IngestResult result;
  std::vector<ImageSample> samples;
  for (const auto& dir : class_dirs) {
    const auto label = class_index(dir.filename().string());
    if (!label) throw DataError("unknown class directory '" + dir.filename().string() + "'");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto* decode = decoders.find(f);
      if (!decode) {
        result.skipped.push_back({f.string(), "no decoder for extension"});
        continue;
      }
      try {
        Image img = (*decode)(detail::read_bytes(f));
        samples.push_back({preprocess(img, prep), *label,
                           class_names()[*label] + "/" + f.filename().string()});
      } catch (const std::exception& e) {
        result.skipped.push_back({f.string(), e.what()});
      }
    }
  }
  auto [train, test] = stratified_split(std::move(samples), split);
  result.train = std::move(train);
  result.test = std::move(test);
  return result;
}

inline void write_split_manifest(std::ostream& out, const Dataset& train, const Dataset& test) {
  out << "source_id,split,label\n";
  for (const Dataset* d : {&train, &test}) {
    for (const auto& s : d->samples) out << s.source_id << ',' << to_string(d->split) << ',' << s.label << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus
//
// Seven parametric pattern classes on a mid-gray, lightly noisy background:
// horizontal bar, vertical bar, diagonal bar, anti-diagonal bar, upward arc,
// downward arc and a round blob. Position, size, thickness and contrast are
// jittered per sample.

namespace detail {

inline double smooth_step(double d, double half_width) {
  // 1 inside, 0 outside, one-pixel linear transition.
  return std::clamp(half_width + 0.5 - d, 0.0, 1.0);
}

inline Image synthetic_pattern(std::size_t label, Xoshiro256& rng) {
  constexpr double n = image_size;
  const double bg = rng.uniform(0.35, 0.55);
  const double contrast = rng.uniform(0.35, 0.45) * (rng.below(2) ? 1.0 : -1.0);
  const double cx = n / 2 + rng.uniform(-5, 5), cy = n / 2 + rng.uniform(-5, 5);
  const double half = rng.uniform(1.5, 3.0);
  const double len = rng.uniform(13, 19);
  const double radius = rng.uniform(9, 14);
  Image img({image_size, image_size, 1});
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
      double m = 0.0;
      auto bar = [&](double ux, double uy) {
        // Distance to a segment through the center along (ux, uy).
        const double along = dx * ux + dy * uy, across = -dx * uy + dy * ux;
        return std::abs(along) <= len ? smooth_step(std::abs(across), half) : 0.0;
      };
      switch (label) {
        case 0: m = bar(1, 0); break;
        case 1: m = bar(0, 1); break;
        case 2: m = bar(std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2); break;
        case 3: m = bar(std::numbers::sqrt2 / 2, -std::numbers::sqrt2 / 2); break;
        case 4:
        case 5: {
          // Half ring: upper half for class 4, lower half for class 5.
          const double ry = label == 4 ? dy + radius / 2 : dy - radius / 2;
          const bool side = label == 4 ? ry <= 0 : ry >= 0;
          const double r = std::sqrt(dx * dx + ry * ry);
          m = side ? smooth_step(std::abs(r - radius), half) : 0.0;
          break;
        }
        default: m = smooth_step(std::sqrt(dx * dx + dy * dy), radius * 0.7); break;
      }
      img.at(y, x, 0) = std::clamp(bg + contrast * m + rng.normal(0.0, 0.008), 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace detail

inline Dataset make_synthetic_dataset(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class == 0) throw DataError("n_per_class must be >= 1");
  Dataset d;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t label = 0; label < num_classes; ++label) {
      Xoshiro256 rng(derive_seed(seed, i * num_classes + label));
      d.samples.push_back({detail::synthetic_pattern(label, rng), label,
                           "synthetic/" + class_names()[label] + "_" + std::to_string(i)});
    }
  }
  return d;
}

// Writes a dataset as <root>/<class>/<id>.pgm so it can be re-ingested.
inline void write_dataset(const Dataset& d, const std::filesystem::path& root) {
  for (const auto& s : d.samples) {
    const auto dir = root / class_names()[s.label];
    std::filesystem::create_directories(dir);
    std::string stem = s.source_id.substr(s.source_id.find('/') + 1);
    write_file(dir / (stem + ".pgm"), encode_pgm(s.pixels));
  }
}

inline Dataset with_edges(Dataset d, double threshold = 0.1) {
  for (auto& s : d.samples) s.pixels = edge_detect(s.pixels, threshold);
  return d;
}

}  // namespace neuroedge
