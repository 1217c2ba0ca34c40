// .smod model container.
//
//   offset 0   4 bytes  magic "SMOD"
//   offset 4   uint32   format version (little-endian), currently 1
//   offset 8   uint64   header length N in bytes (little-endian)
//   offset 16  N bytes  UTF-8 JSON header: flavor, input shape, layer list
//   offset 16+N         float64 little-endian parameters, layer by layer in
//                       declaration order: kernel (or weights) then bias
//
// Parameter lengths are implied by the shapes in the header, so the file must
// end exactly after the last parameter.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "neuroedge/model_ir.hpp"

namespace neuroedge {

inline constexpr std::uint32_t smod_version = 1;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class VersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline nlohmann::json layer_header(const Layer& layer) {
  nlohmann::json j;
  j["name"] = layer.name;
  j["in_shape"] = layer.in_shape;
  j["out_shape"] = layer.out_shape;
  std::visit(overloaded{
                 [&](const Conv2D& c) {
                   j["type"] = "conv2d";
                   j["kernel_shape"] = c.conv.kernel.shape();
                   j["stride"] = c.conv.stride;
                   j["padding"] = c.conv.padding == Padding::same ? "same" : "valid";
                   j["off_chip"] = c.off_chip;
                 },
                 [&](const Dense& d) {
                   j["type"] = "dense";
                   j["weights_shape"] = d.dense.weights.shape();
                 },
                 [&](const ReLU&) { j["type"] = "relu"; },
                 [&](const Tanh&) { j["type"] = "tanh"; },
                 [&](const SpikingActivation& s) {
                   j["type"] = "spiking";
                   j["gain"] = s.gain;
                   j["amplitude"] = s.amplitude;
                   j["v_threshold"] = s.v_threshold;
                   j["reset"] = s.reset == ResetMode::subtract ? "subtract" : "zero";
                   j["dt"] = s.dt;
                   j["max_rate"] = s.max_rate;
                   j["tau_rc"] = s.tau_rc;
                 },
                 [&](const Pool& p) {
                   j["type"] = "pool";
                   j["kind"] = p.kind == PoolKind::max ? "max" : "average";
                   j["size"] = p.size;
                   j["stride"] = p.stride;
                 },
                 [&](const Flatten&) { j["type"] = "flatten"; },
                 [&](const Softmax&) { j["type"] = "softmax"; }},
             layer.op);
  return j;
}

inline void put_f64s(std::vector<std::uint8_t>& out, std::span<const double> values) {
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const LayerGraph& graph) {
  nlohmann::json header;
  header["format"] = "smod";
  header["version"] = smod_version;
  header["flavor"] = to_string(graph.flavor);
  header["dtype"] = "f64";
  header["input_shape"] = graph.input_shape;
  header["layers"] = nlohmann::json::array();
  for (const auto& l : graph.layers) header["layers"].push_back(detail::layer_header(l));
  const std::string text = header.dump();

  std::vector<std::uint8_t> out{'S', 'M', 'O', 'D'};
  detail::put_u32(out, smod_version);
  detail::put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& l : graph.layers) {
    if (const auto* c = std::get_if<Conv2D>(&l.op)) {
      detail::put_f64s(out, c->conv.kernel.data());
      detail::put_f64s(out, c->conv.bias);
    } else if (const auto* d = std::get_if<Dense>(&l.op)) {
      detail::put_f64s(out, d->dense.weights.data());
      detail::put_f64s(out, d->dense.bias);
    }
  }
  return out;
}

namespace detail {

class SmodReader {
 public:
  SmodReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  LayerGraph read() {
    need(16, "file shorter than the 16-byte preamble");
    if (std::memcmp(bytes_.data(), "SMOD", 4) != 0) throw ParseError("bad magic, expected SMOD", 0);
    const auto version = static_cast<std::uint32_t>(get_le(bytes_.data() + 4, 4));
    if (version != smod_version) {
      throw VersionError("unsupported .smod version " + std::to_string(version) + " (expected " +
                         std::to_string(smod_version) + ")", 4);
    }
    const std::uint64_t header_len = get_le(bytes_.data() + 8, 8);
    pos_ = 16;
    if (header_len > bytes_.size() - pos_) throw ParseError("header runs past end of file", pos_);
    const std::string text(reinterpret_cast<const char*>(bytes_.data() + pos_), header_len);
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON header: ") + e.what(), pos_ + e.byte - 1);
    }
    const std::size_t header_start = pos_;
    pos_ += header_len;

    LayerGraph graph;
    try {
      if (header.at("format") != "smod") throw ParseError("header format is not smod", header_start);
      if (header.at("version") != smod_version) {
        throw VersionError("header version disagrees with preamble", header_start);
      }
      if (header.at("dtype") != "f64") throw ParseError("unsupported dtype", header_start);
      const std::string flavor = header.at("flavor");
      if (flavor != "ann" && flavor != "snn") throw ParseError("unknown flavor " + flavor, header_start);
      graph.flavor = flavor == "ann" ? Flavor::ann : Flavor::snn;
      graph.input_shape = header.at("input_shape").get<Shape>();
      check_shape(graph.input_shape);
      for (const auto& jl : header.at("layers")) {
        graph.layers.push_back(read_layer(jl, header_start));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid header field: ") + e.what(), header_start);
    } catch (const ShapeError& e) {
      throw ParseError(std::string("invalid shape in header: ") + e.what(), header_start);
    }

    if (pos_ != bytes_.size()) {
      throw ParseError(std::to_string(bytes_.size() - pos_) + " trailing bytes after parameters", pos_);
    }
    try {
      std::vector<Layer> declared = graph.layers;
      graph.recompute_shapes();
      for (std::size_t i = 0; i < declared.size(); ++i) {
        if (declared[i].in_shape != graph.layers[i].in_shape ||
            declared[i].out_shape != graph.layers[i].out_shape) {
          throw ParseError("layer " + std::to_string(i) + " shapes do not chain", header_start);
        }
      }
    } catch (const ShapeError& e) {
      throw ParseError(std::string("layer shapes inconsistent: ") + e.what(), header_start);
    }
    return graph;
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() < pos_ + n) throw ParseError(what, bytes_.size());
  }

  void read_f64s(std::span<double> dst, const std::string& what) {
    need(dst.size() * 8, "truncated parameters for " + what);
    for (double& v : dst) {
      v = std::bit_cast<double>(get_le(bytes_.data() + pos_, 8));
      pos_ += 8;
    }
  }

  Layer read_layer(const nlohmann::json& j, std::size_t header_start) {
    Layer layer;
    layer.name = j.at("name").get<std::string>();
    layer.in_shape = j.at("in_shape").get<Shape>();
    layer.out_shape = j.at("out_shape").get<Shape>();
    const std::string type = j.at("type");
    if (type == "conv2d") {
      Conv2D c;
      const Shape ks = j.at("kernel_shape").get<Shape>();
      if (ks.size() != 4) throw ParseError("conv kernel_shape must have 4 extents", header_start);
      c.conv.kernel = Tensor<double>(ks);
      c.conv.bias.assign(ks[3], 0.0);
      c.conv.stride = j.at("stride").get<std::size_t>();
      if (c.conv.stride == 0) throw ParseError("conv stride must be positive", header_start);
      const std::string pad = j.at("padding");
      if (pad != "same" && pad != "valid") throw ParseError("unknown padding " + pad, header_start);
      c.conv.padding = pad == "same" ? Padding::same : Padding::valid;
      c.off_chip = j.value("off_chip", false);
      read_f64s(c.conv.kernel.data(), layer.name);
      read_f64s(c.conv.bias, layer.name);
      layer.op = std::move(c);
    } else if (type == "dense") {
      Dense d;
      const Shape ws = j.at("weights_shape").get<Shape>();
      if (ws.size() != 2) throw ParseError("dense weights_shape must have 2 extents", header_start);
      d.dense.weights = Tensor<double>(ws);
      d.dense.bias.assign(ws[1], 0.0);
      read_f64s(d.dense.weights.data(), layer.name);
      read_f64s(d.dense.bias, layer.name);
      layer.op = std::move(d);
    } else if (type == "relu") {
      layer.op = ReLU{};
    } else if (type == "tanh") {
      layer.op = Tanh{};
    } else if (type == "spiking") {
      SpikingActivation s;
      s.gain = j.at("gain");
      s.amplitude = j.at("amplitude");
      s.v_threshold = j.value("v_threshold", 1.0);
      const std::string reset = j.value("reset", std::string("subtract"));
      if (reset != "subtract" && reset != "zero") throw ParseError("unknown reset " + reset, header_start);
      s.reset = reset == "subtract" ? ResetMode::subtract : ResetMode::zero;
      s.dt = j.at("dt");
      s.max_rate = j.value("max_rate", 0.0);
      s.tau_rc = j.value("tau_rc", 0.0);
      layer.op = s;
    } else if (type == "pool") {
      Pool p;
      const std::string kind = j.at("kind");
      if (kind != "max" && kind != "average") throw ParseError("unknown pool kind " + kind, header_start);
      p.kind = kind == "max" ? PoolKind::max : PoolKind::average;
      p.size = j.at("size");
      p.stride = j.at("stride");
      if (p.size == 0 || p.stride == 0) throw ParseError("pool size and stride must be positive", header_start);
      layer.op = p;
    } else if (type == "flatten") {
      layer.op = Flatten{};
    } else if (type == "softmax") {
      layer.op = Softmax{};
    } else {
      throw ParseError("unknown layer type '" + type + "'", header_start);
    }
    return layer;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline LayerGraph deserialize(std::span<const std::uint8_t> bytes) {
  return detail::SmodReader(bytes).read();
}

inline void save_model(const LayerGraph& graph, const std::filesystem::path& path) {
  const auto bytes = serialize(graph);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline LayerGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace neuroedge
