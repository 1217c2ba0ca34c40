// Partitioning of on-chip layers into rows x cols x channels blocks and
// allocation of blocks to the cores of a many-core neuromorphic chip.

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroedge/model_ir.hpp"

namespace neuroedge {

class MappingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BlockShape {
  std::size_t rows = 1, cols = 1, channels = 1;
  std::size_t neurons() const { return rows * cols * channels; }
  friend bool operator==(const BlockShape&, const BlockShape&) = default;
};

// A block placed inside its layer: origin plus extent.
struct Region {
  std::size_t row = 0, col = 0, channel = 0;
  BlockShape shape;
  std::size_t neurons() const { return shape.neurons(); }
  friend bool operator==(const Region&, const Region&) = default;
};

enum class PartitionPolicy {
  // Fewest blocks over all balanced row/column/channel splits; ties go to
  // fewer spatial splits (channels split first), then fewer row splits.
  min_blocks,
  // Literal channel-then-rows greedy: as many whole channels per block as a
  // full plane allows, then rows, then columns.
  channel_then_rows,
};

inline const char* to_string(PartitionPolicy p) {
  return p == PartitionPolicy::min_blocks ? "min_blocks" : "channel_then_rows";
}

struct ChipConfig {
  std::size_t cores_per_chip = 128;
  std::size_t neurons_per_core = 1024;
  PartitionPolicy policy = PartitionPolicy::min_blocks;
  bool pack_dense = false;  // first-fit-decreasing packing of several blocks per core

  void validate() const {
    if (cores_per_chip == 0 || neurons_per_core == 0) throw MappingError("chip capacity must be positive");
  }
};

namespace detail {

// Sizes of n near-equal chunks covering `extent`, larger chunks first.
inline std::vector<std::size_t> balanced_chunks(std::size_t extent, std::size_t n) {
  std::vector<std::size_t> out(n, extent / n);
  for (std::size_t i = 0; i < extent % n; ++i) ++out[i];
  return out;
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

struct Split {
  std::size_t rows = 1, cols = 1, channels = 1;  // chunk counts per dimension
  std::size_t blocks() const { return rows * cols * channels; }
};

inline std::vector<Region> regions_from(const BlockShape& layer, const Split& s) {
  std::vector<Region> out;
  out.reserve(s.blocks());
  const auto rs = balanced_chunks(layer.rows, s.rows);
  const auto cs = balanced_chunks(layer.cols, s.cols);
  const auto hs = balanced_chunks(layer.channels, s.channels);
  std::size_t r0 = 0;
  for (std::size_t r : rs) {
    std::size_t c0 = 0;
    for (std::size_t c : cs) {
      std::size_t h0 = 0;
      for (std::size_t h : hs) {
        out.push_back({r0, c0, h0, {r, c, h}});
        h0 += h;
      }
      c0 += c;
    }
    r0 += r;
  }
  return out;
}

inline Split min_blocks_split(const BlockShape& layer, std::size_t cap) {
  Split best;
  std::size_t best_blocks = std::numeric_limits<std::size_t>::max();
  for (std::size_t nch = 1; nch <= layer.channels; ++nch) {
    const std::size_t ch = ceil_div(layer.channels, nch);
    if (nch > 1 && ceil_div(layer.channels, nch - 1) == ch) continue;  // same chunk size, more blocks
    for (std::size_t nr = 1; nr <= layer.rows; ++nr) {
      const std::size_t r = ceil_div(layer.rows, nr);
      if (nr > 1 && ceil_div(layer.rows, nr - 1) == r) continue;
      if (r * ch > cap) continue;
      const std::size_t max_cols = cap / (r * ch);
      const std::size_t nc = ceil_div(layer.cols, std::min(max_cols, layer.cols));
      const Split s{nr, nc, nch};
      const std::size_t blocks = s.blocks();
      const auto spatial = [](const Split& x) { return x.rows * x.cols; };
      if (blocks < best_blocks ||
          (blocks == best_blocks && (spatial(s) < spatial(best) ||
                                     (spatial(s) == spatial(best) && s.rows < best.rows)))) {
        best = s;
        best_blocks = blocks;
      }
    }
  }
  return best;
}

inline Split channel_then_rows_split(const BlockShape& layer, std::size_t cap) {
  const std::size_t plane = layer.rows * layer.cols;
  if (plane <= cap) {
    const std::size_t per = std::min(layer.channels, cap / plane);
    return {1, 1, ceil_div(layer.channels, per)};
  }
  if (layer.cols <= cap) {
    return {ceil_div(layer.rows, cap / layer.cols), 1, layer.channels};
  }
  return {layer.rows, ceil_div(layer.cols, cap), layer.channels};
}

}  // namespace detail

// Tiles a rows x cols x channels layer into disjoint blocks of at most
// `capacity` neurons that cover it exactly.
inline std::vector<Region> partition_layer(const BlockShape& layer, PartitionPolicy policy,
                                           std::size_t capacity = 1024) {
  if (layer.rows == 0 || layer.cols == 0 || layer.channels == 0) {
    throw MappingError("layer extents must be positive");
  }
  if (capacity == 0) throw MappingError("block capacity must be positive");
  const auto split = policy == PartitionPolicy::min_blocks ? detail::min_blocks_split(layer, capacity)
                                                           : detail::channel_then_rows_split(layer, capacity);
  return detail::regions_from(layer, split);
}

struct MappedLayer {
  std::string name;
  BlockShape shape;
  std::vector<Region> blocks;
  std::size_t neurons() const { return shape.neurons(); }
};

struct Assignment {
  std::size_t layer = 0;
  std::size_t block = 0;
  std::size_t core = 0;  // global core index; chip = core / cores_per_chip
};

struct CoreMap {
  ChipConfig chip;
  std::vector<MappedLayer> layers;
  std::vector<Assignment> assignments;
  std::vector<std::size_t> core_neurons;  // fill per used core
  std::vector<std::string> warnings;

  std::size_t cores_used() const { return core_neurons.size(); }
  std::size_t chips_used() const {
    return cores_used() == 0 ? 0 : detail::ceil_div(cores_used(), chip.cores_per_chip);
  }
  bool single_chip() const { return chips_used() <= 1; }
  std::size_t total_neurons() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.neurons();
    return n;
  }
};

// On-chip layers of a graph: every spiking population except the off-chip
// encoder, plus a trailing non-spiking dense readout. Dense layers are
// 1 x 1 x units.
inline std::vector<std::pair<std::string, BlockShape>> onchip_layers(const LayerGraph& g) {
  std::vector<std::pair<std::string, BlockShape>> out;
  auto shape_of = [](const Shape& s) {
    if (s.size() == 3) return BlockShape{s[0], s[1], s[2]};
    return BlockShape{1, 1, shape_product(s)};
  };
  bool after_encoder = false;
  std::size_t trailing_dense = g.layers.size();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    if (const auto* c = std::get_if<Conv2D>(&l.op)) {
      after_encoder = c->off_chip;
      trailing_dense = g.layers.size();
    } else if (std::holds_alternative<SpikingActivation>(l.op) || std::holds_alternative<ReLU>(l.op)) {
      if (!after_encoder) out.emplace_back(l.name, shape_of(l.out_shape));
      after_encoder = false;
      trailing_dense = g.layers.size();
    } else if (std::holds_alternative<Dense>(l.op)) {
      trailing_dense = i;
    }
  }
  if (trailing_dense < g.layers.size()) {
    const Layer& l = g.layers[trailing_dense];
    out.emplace_back(l.name, shape_of(l.out_shape));
  }
  return out;
}

namespace detail {

inline void allocate(CoreMap& m) {
  const std::size_t cap = m.chip.neurons_per_core;
  struct Item {
    std::size_t layer, block, size;
  };
  std::vector<Item> items;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    for (std::size_t b = 0; b < m.layers[li].blocks.size(); ++b) {
      items.push_back({li, b, m.layers[li].blocks[b].neurons()});
    }
  }
  if (!m.chip.pack_dense) {
    for (const auto& it : items) {
      m.assignments.push_back({it.layer, it.block, m.core_neurons.size()});
      m.core_neurons.push_back(it.size);
    }
    return;
  }
  // First-fit decreasing; stable so equal-size blocks keep layer order.
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.size > b.size; });
  for (const auto& it : items) {
    std::size_t core = 0;
    while (core < m.core_neurons.size() && m.core_neurons[core] + it.size > cap) ++core;
    if (core == m.core_neurons.size()) m.core_neurons.push_back(0);
    m.core_neurons[core] += it.size;
    m.assignments.push_back({it.layer, it.block, core});
  }
  std::sort(m.assignments.begin(), m.assignments.end(), [](const Assignment& a, const Assignment& b) {
    return a.layer != b.layer ? a.layer < b.layer : a.block < b.block;
  });
}

}  // namespace detail

inline CoreMap map_layers(const std::vector<std::pair<std::string, BlockShape>>& layers, const ChipConfig& chip = {}) {
  chip.validate();
  CoreMap m;
  m.chip = chip;
  for (const auto& [name, shape] : layers) {
    m.layers.push_back({name, shape, partition_layer(shape, chip.policy, chip.neurons_per_core)});
  }
  detail::allocate(m);
  if (m.chips_used() > 1) {
    m.warnings.push_back("network needs " + std::to_string(m.cores_used()) + " cores; spans " +
                         std::to_string(m.chips_used()) + " chips of " + std::to_string(chip.cores_per_chip) +
                         " cores");
  }
  return m;
}

inline CoreMap map_network(const LayerGraph& graph, const ChipConfig& chip = {}) {
  return map_layers(onchip_layers(graph), chip);
}

inline nlohmann::ordered_json to_json(const CoreMap& m) {
  nlohmann::ordered_json j;
  j["policy"] = to_string(m.chip.policy);
  j["packing"] = m.chip.pack_dense ? "first_fit_decreasing" : "one_block_per_core";
  j["cores_per_chip"] = m.chip.cores_per_chip;
  j["neurons_per_core"] = m.chip.neurons_per_core;
  j["cores_used"] = m.cores_used();
  j["chips_used"] = m.chips_used();
  j["total_neurons"] = m.total_neurons();
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : m.layers) {
    nlohmann::ordered_json lj;
    lj["name"] = l.name;
    lj["shape"] = {l.shape.rows, l.shape.cols, l.shape.channels};
    lj["blocks"] = nlohmann::ordered_json::array();
    for (const auto& r : l.blocks) {
      lj["blocks"].push_back({{"origin", {r.row, r.col, r.channel}},
                              {"shape", {r.shape.rows, r.shape.cols, r.shape.channels}}});
    }
    j["layers"].push_back(std::move(lj));
  }
  j["assignments"] = nlohmann::ordered_json::array();
  for (const auto& a : m.assignments) j["assignments"].push_back({a.layer, a.block, a.core});
  j["warnings"] = m.warnings;
  return j;
}

// Per-core fill: core,chip,neurons,fill,blocks.
inline void write_core_csv(std::ostream& out, const CoreMap& m) {
  std::vector<std::size_t> blocks(m.cores_used(), 0);
  for (const auto& a : m.assignments) ++blocks[a.core];
  out << "core,chip,neurons,fill,blocks\n";
  for (std::size_t c = 0; c < m.cores_used(); ++c) {
    const double fill = static_cast<double>(m.core_neurons[c]) / static_cast<double>(m.chip.neurons_per_core);
    out << c << ',' << c / m.chip.cores_per_chip << ',' << m.core_neurons[c] << ',' << fill << ','
        << blocks[c] << '\n';
  }
}

// Per-layer summary: layer,rows,cols,channels,neurons,blocks,largest_block.
inline void write_layer_csv(std::ostream& out, const CoreMap& m) {
  out << "layer,rows,cols,channels,neurons,blocks,largest_block\n";
  for (const auto& l : m.layers) {
    std::size_t largest = 0;
    for (const auto& r : l.blocks) largest = std::max(largest, r.neurons());
    out << l.name << ',' << l.shape.rows << ',' << l.shape.cols << ',' << l.shape.channels << ','
        << l.neurons() << ',' << l.blocks.size() << ',' << largest << '\n';
  }
}

// Aligned text summary for terminals and reports.
inline void write_map_summary(std::ostream& out, const CoreMap& m) {
  out << "policy " << to_string(m.chip.policy) << ", "
      << (m.chip.pack_dense ? "first-fit-decreasing packing" : "one block per core") << '\n';
  std::size_t width = 5;
  for (const auto& l : m.layers) width = std::max(width, l.name.size());
  for (const auto& l : m.layers) {
    out << "  " << l.name << std::string(width - l.name.size() + 2, ' ') << l.shape.rows << 'x' << l.shape.cols
        << 'x' << l.shape.channels << "  " << l.blocks.size() << (l.blocks.size() == 1 ? " block\n" : " blocks\n");
  }
  out << "neurons on chip: " << m.total_neurons() << '\n';
  out << "cores used: " << m.cores_used() << " of " << m.chip.cores_per_chip << " per chip\n";
  out << "chips used: " << m.chips_used() << (m.single_chip() ? " (fits on a single chip)\n" : "\n");
  for (const auto& w : m.warnings) out << "warning: " << w << '\n';
}

}  // namespace neuroedge
