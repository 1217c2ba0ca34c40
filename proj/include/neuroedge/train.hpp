// Mini-batch SGD with momentum and softmax cross-entropy loss.
//
// A batch is split into a fixed number of chunks; each chunk accumulates its
// samples in order and chunks are reduced in index order, so results do not
// depend on how many threads ran the chunks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "neuroedge/model_ir.hpp"
#include "neuroedge/network.hpp"
#include "neuroedge/rng.hpp"

namespace neuroedge {

struct Example {
  Tensor<double> input;
  std::size_t label = 0;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 16;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::size_t chunks = 4;   // reduction partitions per batch; part of the result
  std::size_t threads = 0;  // 0 = hardware concurrency; does not affect results
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // training accuracy measured during the epoch
};

struct TrainResult {
  LayerGraph graph;
  std::vector<EpochStats> history;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

namespace detail {

struct ChunkResult {
  Gradients grads;
  double loss = 0.0;
  std::size_t correct = 0;
};

inline void run_chunk(const LayerGraph& graph, std::span<const Example> data,
                      std::span<const std::size_t> indices, ChunkResult& out) {
  const std::size_t stop = logits_end(graph);
  out.grads.clear();
  out.loss = 0.0;
  out.correct = 0;
  for (const std::size_t idx : indices) {
    const Example& ex = data[idx];
    ForwardTrace trace = forward_trace(graph, ex.input, stop);
    const auto& z = trace.values.back().storage();
    out.loss += cross_entropy_loss<double>(z, ex.label);
    if (argmax(z) == ex.label) ++out.correct;
    auto dz = cross_entropy_grad<double>(z, ex.label);
    backward(graph, trace, Tensor<double>(trace.values.back().shape(), std::move(dz)), out.grads);
  }
}

inline void check_dataset(const LayerGraph& graph, std::span<const Example> data) {
  if (data.empty()) throw TrainingError("training dataset is empty");
  const std::size_t classes = shape_product(graph.layers.at(logits_end(graph) - 1).out_shape);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label >= classes) {
      throw TrainingError("sample " + std::to_string(i) + " has label " +
                          std::to_string(data[i].label) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
  }
}

}  // namespace detail

inline TrainResult train(LayerGraph graph, std::span<const Example> data, const TrainConfig& config) {
  if (graph.layers.empty()) throw TrainingError("cannot train an empty graph");
  detail::check_dataset(graph, data);
  if (config.batch == 0) throw TrainingError("batch size must be positive");

  TrainResult result;
  const std::size_t chunks = std::max<std::size_t>(1, config.chunks);
  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, chunks);

  Gradients velocity = Gradients::zeros_like(graph);
  std::vector<detail::ChunkResult> partial(chunks);
  for (auto& p : partial) p.grads = Gradients::zeros_like(graph);

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Xoshiro256 rng(derive_seed(config.seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);

    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t count = std::min(config.batch, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, count);
      auto chunk_span = [&](std::size_t c) {
        const std::size_t lo = count * c / chunks, hi = count * (c + 1) / chunks;
        return batch.subspan(lo, hi - lo);
      };
      if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) detail::run_chunk(graph, data, chunk_span(c), partial[c]);
      } else {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t) {
          workers.emplace_back([&, t] {
            for (std::size_t c = t; c < chunks; c += threads) {
              detail::run_chunk(graph, data, chunk_span(c), partial[c]);
            }
          });
        }
      }

      double batch_loss = 0.0;
      for (std::size_t c = 0; c < chunks; ++c) {
        batch_loss += partial[c].loss;
        epoch_correct += partial[c].correct;
        if (c > 0) partial[0].grads.add(partial[c].grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training diverged: non-finite loss in epoch " +
                              std::to_string(epoch + 1) + " at sample offset " + std::to_string(start));
      }
      epoch_loss += batch_loss;

      const double scale = 1.0 / static_cast<double>(count);
      for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        // The off-chip encoder is a fixed transform, not a trainable layer.
        if (const auto* c = std::get_if<Conv2D>(&graph.layers[i].op); c && c->off_chip) continue;
        auto params = params_of(graph.layers[i]);
        if (!params) continue;
        const auto& g = partial[0].grads.layers[i];
        auto& v = velocity.layers[i];
        const std::size_t nw = params->weights.size();
        for (std::size_t j = 0; j < g.size(); ++j) {
          v[j] = config.momentum * v[j] - config.lr * (g[j] * scale);
          double& p = j < nw ? params->weights[j] : params->bias[j - nw];
          p += v[j];
          if (!std::isfinite(p)) {
            throw DivergenceError("training diverged: non-finite parameter in layer " +
                                  std::to_string(i) + " during epoch " + std::to_string(epoch + 1));
          }
        }
      }
    }
    result.history.push_back(EpochStats{epoch + 1, epoch_loss / static_cast<double>(data.size()),
                                        static_cast<double>(epoch_correct) /
                                            static_cast<double>(data.size())});
  }
  result.graph = std::move(graph);
  return result;
}

inline double accuracy(const LayerGraph& graph, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (predict(graph, ex.input) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace neuroedge
