#pragma once

// Message-passing graph encoders, mean readout, the Euclidean and hyperbolic
// encoding paths, and the sigmoid MLP predictor.

#include <cctype>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dsgc/autodiff.hpp"
#include "dsgc/errors.hpp"
#include "dsgc/graph.hpp"
#include "dsgc/poincare.hpp"

namespace dsgc {

using ad::Matrix;
using ad::SparseMatrix;
using ad::Tensor;

enum class EncoderKind { gcn, graphsage, gat, gin };

inline constexpr EncoderKind kAllEncoderKinds[] = {EncoderKind::gcn, EncoderKind::graphsage,
                                                   EncoderKind::gat, EncoderKind::gin};

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::gcn: return "GCN";
    case EncoderKind::graphsage: return "GraphSAGE";
    case EncoderKind::gat: return "GAT";
    case EncoderKind::gin: return "GIN";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(std::string_view name) {
  std::string s(name);
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (s == "gcn") return EncoderKind::gcn;
  if (s == "graphsage" || s == "sage") return EncoderKind::graphsage;
  if (s == "gat") return EncoderKind::gat;
  if (s == "gin") return EncoderKind::gin;
  throw ContractError("unknown encoder kind '" + std::string(name) + "' (valid: GCN, GraphSAGE, GAT, GIN)");
}

/// Hyperbolic-path layer style. `euclidean` runs the ordinary encoder and maps
/// its readout into the ball; `mobius` runs node-wise Mobius linear layers with
/// GCN-normalized aggregation in the tangent space.
enum class HyperbolicLayers { euclidean, mobius };

inline constexpr double kGatSlope = 0.2;

// ---------------------------------------------------------------------------
// Propagation operators

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline SparseMatrix gcn_operator(const Graph& g) {
  const std::size_t n = g.num_nodes();
  SparseMatrix op{n, n, {0}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double di = static_cast<double>(g.degree(i) + 1);
    bool self_done = false;
    auto push = [&](std::size_t j) {
      op.col.push_back(j);
      op.val.push_back(1.0 / std::sqrt(di * static_cast<double>(g.degree(j) + 1)));
    };
    for (std::size_t j : g.neighbors(i)) {
      if (!self_done && j > i) {
        push(i);
        self_done = true;
      }
      push(j);
    }
    if (!self_done) push(i);
    op.row_ptr.push_back(op.col.size());
  }
  return op;
}

/// Row-normalized adjacency (mean over neighbors); isolated rows are empty.
inline SparseMatrix mean_neighbor_operator(const Graph& g) {
  const std::size_t n = g.num_nodes();
  SparseMatrix op{n, n, {0}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = g.degree(i) ? 1.0 / static_cast<double>(g.degree(i)) : 0.0;
    for (std::size_t j : g.neighbors(i)) {
      op.col.push_back(j);
      op.val.push_back(inv);
    }
    op.row_ptr.push_back(op.col.size());
  }
  return op;
}

/// A + (1 + eps) I.
inline SparseMatrix sum_with_self_operator(const Graph& g, double eps = 0.0) {
  const std::size_t n = g.num_nodes();
  SparseMatrix op{n, n, {0}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    bool self_done = false;
    for (std::size_t j : g.neighbors(i)) {
      if (!self_done && j > i) {
        op.col.push_back(i);
        op.val.push_back(1.0 + eps);
        self_done = true;
      }
      op.col.push_back(j);
      op.val.push_back(1.0);
    }
    if (!self_done) {
      op.col.push_back(i);
      op.val.push_back(1.0 + eps);
    }
    op.row_ptr.push_back(op.col.size());
  }
  return op;
}

// ---------------------------------------------------------------------------
// Parameters

inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(fan_in, fan_out);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

/// Trainable tensors of one encoder layer. Layout per kind:
///   GCN:       W (in x out), b (1 x out)
///   GraphSAGE: W (2in x out), b
///   GAT:       W (in x out), a_src (out x 1), a_dst (out x 1), b
///   GIN:       W1 (in x out), b1, W2 (out x out), b2
struct LayerParams {
  std::vector<Tensor> tensors;
};

inline LayerParams make_layer_params(EncoderKind kind, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  auto weight = [&](std::size_t r, std::size_t c) { return Tensor::parameter(glorot_uniform(r, c, rng)); };
  auto bias = [&](std::size_t c) { return Tensor::parameter(Matrix(1, c)); };
  switch (kind) {
    case EncoderKind::gcn: return {{weight(in, out), bias(out)}};
    case EncoderKind::graphsage: return {{weight(2 * in, out), bias(out)}};
    case EncoderKind::gat: return {{weight(in, out), weight(out, 1), weight(out, 1), bias(out)}};
    case EncoderKind::gin: return {{weight(in, out), bias(out), weight(out, out), bias(out)}};
  }
  throw ContractError("unknown encoder kind");
}

/// One message-passing layer (pre-activation output).
inline Tensor encoder_layer(EncoderKind kind, const Tensor& h, const Graph& g, const LayerParams& p) {
  if (h.rows() != g.num_nodes())
    throw ShapeError("encoder_layer: " + std::to_string(h.rows()) + " feature rows for " +
                     std::to_string(g.num_nodes()) + " nodes");
  const auto& t = p.tensors;
  auto expect = [&](std::size_t count, std::size_t in_rows) {
    if (t.size() != count) throw ContractError("encoder_layer: wrong parameter count for " + to_string(kind));
    if (t[0].rows() != in_rows)
      throw ShapeError("encoder_layer: " + to_string(kind) + " weight " + t[0].value().shape_string() +
                       " does not accept width " + std::to_string(h.cols()));
  };
  switch (kind) {
    case EncoderKind::gcn: {
      expect(2, h.cols());
      return ad::add(ad::spmm(gcn_operator(g), ad::matmul(h, t[0])), t[1]);
    }
    case EncoderKind::graphsage: {
      expect(2, 2 * h.cols());
      const Tensor agg = ad::spmm(mean_neighbor_operator(g), h);
      return ad::add(ad::matmul(ad::concat_cols(h, agg), t[0]), t[1]);
    }
    case EncoderKind::gat: {
      expect(4, h.cols());
      const Tensor z = ad::matmul(h, t[0]);
      const Tensor src = ad::matmul(z, t[1]);
      const Tensor dst = ad::matmul(z, t[2]);
      const SparseMatrix pattern = sum_with_self_operator(g);
      return ad::add(ad::edge_softmax_aggregate(z, src, dst, pattern, kGatSlope), t[3]);
    }
    case EncoderKind::gin: {
      expect(4, h.cols());
      const Tensor agg = ad::spmm(sum_with_self_operator(g), h);
      const Tensor hidden = ad::relu(ad::add(ad::matmul(agg, t[0]), t[1]));
      return ad::add(ad::matmul(hidden, t[2]), t[3]);
    }
  }
  throw ContractError("unknown encoder kind");
}

/// (n x d) node embeddings -> (1 x d) column mean.
inline Tensor readout_mean(const Tensor& node_embeddings) { return ad::mean_rows(node_embeddings); }

enum class Space { euclidean, hyperbolic };

struct GraphEmbedding {
  Tensor coords;  // 1 x d
  Space space = Space::euclidean;
};

/// Multi-layer encoder of a fixed kind; relu between layers.
class GraphEncoder {
public:
  GraphEncoder(EncoderKind kind, std::size_t in_width, std::size_t hidden, std::size_t layers,
               std::mt19937_64& rng, HyperbolicLayers style = HyperbolicLayers::euclidean)
      : kind_(kind), in_width_(in_width), hidden_(hidden), style_(style) {
    if (layers < 1) throw ContractError("GraphEncoder: at least one layer required");
    if (in_width == 0 || hidden == 0) throw ContractError("GraphEncoder: widths must be positive");
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = l == 0 ? in_width : hidden;
      if (style_ == HyperbolicLayers::euclidean) {
        layers_.push_back(make_layer_params(kind, in, hidden, rng));
      } else {
        // Mobius layers use W as (out x in), as in W (x) u.
        layers_.push_back({{Tensor::parameter(glorot_uniform(hidden, in, rng)), Tensor::parameter(Matrix(1, hidden))}});
      }
    }
  }

  EncoderKind kind() const noexcept { return kind_; }
  HyperbolicLayers style() const noexcept { return style_; }
  std::size_t input_width() const noexcept { return in_width_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  const std::vector<LayerParams>& layers() const noexcept { return layers_; }
  std::vector<LayerParams>& layers() noexcept { return layers_; }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : layers_) out.insert(out.end(), l.tensors.begin(), l.tensors.end());
    return out;
  }

  /// Euclidean node embeddings after all layers.
  Tensor node_embeddings(const Graph& g) const {
    require_style(HyperbolicLayers::euclidean, "node_embeddings");
    check_input(g);
    Tensor h = Tensor::constant(g.features());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = encoder_layer(kind_, h, g, layers_[l]);
      if (l + 1 < layers_.size()) h = ad::relu(h);
    }
    return h;
  }

  /// Mobius-layer forward pass; returns ball points per node.
  Tensor ball_node_embeddings(const Graph& g, const poincare::PoincareBall& ball) const {
    require_style(HyperbolicLayers::mobius, "ball_node_embeddings");
    check_input(g);
    const SparseMatrix agg = gcn_operator(g);
    Tensor x = poincare::exp_map_origin(Tensor::constant(g.features()), ball);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto act = l + 1 < layers_.size() ? poincare::Activation::relu : poincare::Activation::tanh;
      x = poincare::hyperbolic_activation(x, layers_[l].tensors[0], layers_[l].tensors[1], act, ball);
      x = poincare::exp_map_origin(ad::spmm(agg, poincare::log_map_origin(x, ball)), ball);
    }
    return x;
  }

private:
  void check_input(const Graph& g) const {
    if (g.num_nodes() == 0) throw ContractError("GraphEncoder: empty graph");
    if (g.feature_width() != in_width_)
      throw ShapeError("GraphEncoder: graph features have width " + std::to_string(g.feature_width()) +
                       ", encoder expects " + std::to_string(in_width_));
  }
  void require_style(HyperbolicLayers s, const char* op) const {
    if (style_ != s) throw ContractError(std::string("GraphEncoder::") + op + ": wrong layer style");
  }

  EncoderKind kind_;
  std::size_t in_width_;
  std::size_t hidden_;
  HyperbolicLayers style_;
  std::vector<LayerParams> layers_;
};

/// H^E = readout(g_E(G)).
inline GraphEmbedding encode_euclidean(const Graph& g, const GraphEncoder& enc) {
  return {readout_mean(enc.node_embeddings(g)), Space::euclidean};
}

/// H^H = exp_o(g_H(G)).
inline GraphEmbedding encode_hyperbolic(const Graph& g, const GraphEncoder& enc, const poincare::PoincareBall& ball) {
  if (enc.style() == HyperbolicLayers::mobius) {
    const Tensor tangent = poincare::log_map_origin(enc.ball_node_embeddings(g, ball), ball);
    return {poincare::exp_map_origin(readout_mean(tangent), ball), Space::hyperbolic};
  }
  return {poincare::exp_map_origin(readout_mean(enc.node_embeddings(g)), ball), Space::hyperbolic};
}

/// Two-layer MLP d -> d -> K with relu in between; sigmoid is applied by predict().
class Predictor {
public:
  Predictor(std::size_t in, std::size_t classes, std::mt19937_64& rng)
      : w1_(Tensor::parameter(glorot_uniform(in, in, rng))),
        b1_(Tensor::parameter(Matrix(1, in))),
        w2_(Tensor::parameter(glorot_uniform(in, classes, rng))),
        b2_(Tensor::parameter(Matrix(1, classes))) {
    if (classes == 0) throw ContractError("Predictor: zero classes");
  }

  std::size_t num_classes() const { return w2_.cols(); }
  std::vector<Tensor> parameters() const { return {w1_, b1_, w2_, b2_}; }
  Tensor& w1() { return w1_; }
  Tensor& b1() { return b1_; }
  Tensor& w2() { return w2_; }
  Tensor& b2() { return b2_; }

  /// Pre-sigmoid scores (1 x K).
  Tensor logits(const GraphEmbedding& h) const {
    if (h.space != Space::euclidean) throw ContractError("Predictor: expects a Euclidean embedding");
    if (h.coords.cols() != w1_.rows())
      throw ShapeError("Predictor: embedding width " + std::to_string(h.coords.cols()) + ", expected " +
                       std::to_string(w1_.rows()));
    const Tensor hidden = ad::relu(ad::add(ad::matmul(h.coords, w1_), b1_));
    return ad::add(ad::matmul(hidden, w2_), b2_);
  }

private:
  Tensor w1_, b1_, w2_, b2_;
};

/// p = sigmoid(P(h)), one independent probability per class.
inline Tensor predict(const GraphEmbedding& h, const Predictor& pred) { return ad::sigmoid(pred.logits(h)); }

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace dsgc
