#pragma once

// Dual-space contrastive objective and the single-batch training step.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsgc/autodiff.hpp"
#include "dsgc/encoders.hpp"
#include "dsgc/errors.hpp"
#include "dsgc/graph.hpp"
#include "dsgc/optim.hpp"
#include "dsgc/poincare.hpp"
#include "dsgc/samplers.hpp"

namespace dsgc {

struct LossConfig {
  double temperature = 1.0;
  double lambda_u = 1.0;
  double omega = 0.01;
};

inline void validate(const LossConfig& cfg) {
  if (!(cfg.temperature > 0.0)) throw ContractError("LossConfig: temperature must be positive");
  if (!(cfg.lambda_u >= 0.0)) throw ContractError("LossConfig: lambda_u must be nonnegative");
  if (!(cfg.omega >= 0.0)) throw ContractError("LossConfig: omega must be nonnegative");
}

/// H^{E->H} = exp_o(H^E).
inline GraphEmbedding to_hyperbolic(const GraphEmbedding& h, const poincare::PoincareBall& ball) {
  if (h.space != Space::euclidean) throw ContractError("to_hyperbolic: embedding is already hyperbolic");
  return {poincare::exp_map_origin(h.coords, ball), Space::hyperbolic};
}

namespace detail {
inline void require_hyperbolic(const char* op, std::initializer_list<const GraphEmbedding*> es) {
  for (const auto* e : es)
    if (e->space != Space::hyperbolic) throw ContractError(std::string(op) + ": expects hyperbolic embeddings");
}
}  // namespace detail

/// -log softmax_0 over the row [positive, negatives...] / tau, evaluated as
/// logsumexp([0, (negatives - positive) / tau]) so that equal scores give
/// exactly log(m + 1) even at the similarity cap. `positive` is (r x 1),
/// `negatives` is (r x m); returns (r x 1).
inline Tensor info_nce_from_scores(const Tensor& positive, const Tensor& negatives, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("info_nce: temperature must be positive");
  if (positive.cols() != 1 || positive.rows() != negatives.rows())
    throw ShapeError("info_nce: positive " + positive.value().shape_string() + " vs negatives " +
                     negatives.value().shape_string());
  if (negatives.cols() == 0) throw ContractError("info_nce: at least one negative required");
  const Tensor gaps = ad::scale(ad::sub(negatives, positive), 1.0 / temperature);
  return ad::logsumexp_rows(ad::concat_cols(Tensor::constant(Matrix(positive.rows(), 1)), gaps));
}

inline double info_nce_from_scores(double positive, std::span<const double> negatives, double temperature) {
  return info_nce_from_scores(Tensor::scalar(positive),
                              Tensor::constant(Matrix::row_vector(negatives)), temperature)
      .item();
}

/// Labeled-graph term: positive sim(H^H_l, H^{E->H}_l) against negatives
/// sim(H^{E->H}_l, H^H_{u,i}) for every unlabeled graph in the batch.
inline Tensor info_nce_labeled(const GraphEmbedding& hl_h, const GraphEmbedding& hl_eh,
                               const GraphEmbedding& hu_h, const LossConfig& cfg,
                               const poincare::PoincareBall& ball) {
  detail::require_hyperbolic("info_nce_labeled", {&hl_h, &hl_eh, &hu_h});
  if (hu_h.coords.rows() == 0) throw ContractError("info_nce_labeled: N = 0");
  const Tensor pos = poincare::geodesic_similarity(hl_h.coords, hl_eh.coords, ball);
  const Tensor neg = ad::transpose(poincare::geodesic_similarity(hl_eh.coords, hu_h.coords, ball));
  return info_nce_from_scores(pos, neg, cfg.temperature);
}

/// Unlabeled-graph terms, one row per unlabeled graph i: positive
/// sim(H^H_{u,i}, H^{E->H}_{u,i}) against the single negative sim(H^H_l, H^{E->H}_{u,i}).
/// Returned unscaled; total_objective applies lambda_u / N.
inline Tensor info_nce_unlabeled(const GraphEmbedding& hu_h, const GraphEmbedding& hu_eh,
                                 const GraphEmbedding& hl_h, const LossConfig& cfg,
                                 const poincare::PoincareBall& ball) {
  detail::require_hyperbolic("info_nce_unlabeled", {&hu_h, &hu_eh, &hl_h});
  if (hu_h.coords.rows() != hu_eh.coords.rows())
    throw ShapeError("info_nce_unlabeled: view row counts differ");
  const Tensor pos = poincare::geodesic_similarity(hu_h.coords, hu_eh.coords, ball);
  const Tensor neg = poincare::geodesic_similarity(hl_h.coords, hu_eh.coords, ball);
  return info_nce_from_scores(pos, neg, cfg.temperature);
}

/// Summed binary cross-entropy of per-class probabilities against a one-hot target.
inline Tensor supervised_loss(const Tensor& p, int label) {
  if (p.rows() != 1 || label < 0 || static_cast<std::size_t>(label) >= p.cols())
    throw ContractError("supervised_loss: label " + std::to_string(label) + " out of range for " +
                        p.value().shape_string());
  Matrix target(1, p.cols());
  target(0, static_cast<std::size_t>(label)) = 1.0;
  const Tensor y = Tensor::constant(target);
  const Tensor one = Tensor::scalar(1.0);
  const Tensor terms = ad::add(ad::mul(y, ad::log(p)), ad::mul(ad::sub(one, y), ad::log(ad::sub(one, p))));
  return ad::neg(ad::sum(terms));
}

/// Same quantity as supervised_loss(sigmoid(z), label), computed from logits so
/// saturated probabilities stay finite: sum_k softplus(z_k) - z_label.
inline Tensor supervised_loss_from_logits(const Tensor& logits, int label) {
  if (logits.rows() != 1 || label < 0 || static_cast<std::size_t>(label) >= logits.cols())
    throw ContractError("supervised_loss: label " + std::to_string(label) + " out of range for " +
                        logits.value().shape_string());
  Matrix target(1, logits.cols());
  target(0, static_cast<std::size_t>(label)) = 1.0;
  return ad::sub(ad::sum(ad::softplus(logits)), ad::sum(ad::mul(Tensor::constant(target), logits)));
}

struct BatchLosses {
  Tensor supervised;               // 1 x 1
  Tensor labeled_nce;              // 1 x 1
  Tensor unlabeled_nce;            // N x 1, unscaled
};

/// L = L_sup + omega * (L_l + lambda_u / N * sum_i L_u,i).
inline Tensor contrastive_objective(const BatchLosses& l, const LossConfig& cfg) {
  const std::size_t n = l.unlabeled_nce.rows();
  if (n == 0) throw ContractError("contrastive_objective: N = 0");
  return ad::add(l.labeled_nce, ad::scale(ad::sum(l.unlabeled_nce), cfg.lambda_u / static_cast<double>(n)));
}

inline Tensor total_objective(const BatchLosses& l, const LossConfig& cfg) {
  return ad::add(l.supervised, ad::scale(contrastive_objective(l, cfg), cfg.omega));
}

// ---------------------------------------------------------------------------
// Model and training step

struct ModelConfig {
  EncoderKind euclidean = EncoderKind::gcn;
  EncoderKind hyperbolic = EncoderKind::gin;
  std::size_t layers = 3;
  std::size_t hidden = 16;
  std::size_t input_width = 65;
  std::size_t classes = 2;
  double curvature = 1.0;
  HyperbolicLayers hyperbolic_layers = HyperbolicLayers::euclidean;
};

/// Euclidean encoder g_E, hyperbolic encoder g_H and predictor P.
class DsgcModel {
public:
  DsgcModel(const ModelConfig& cfg, std::uint64_t seed)
      : DsgcModel(cfg, std::make_unique<std::mt19937_64>(seed)) {}

  const poincare::PoincareBall& ball() const noexcept { return ball_; }
  const GraphEncoder& euclidean_encoder() const noexcept { return euclid_; }
  const GraphEncoder& hyperbolic_encoder() const noexcept { return hyper_; }
  const Predictor& predictor() const noexcept { return predictor_; }
  GraphEncoder& euclidean_encoder() noexcept { return euclid_; }
  GraphEncoder& hyperbolic_encoder() noexcept { return hyper_; }
  Predictor& predictor() noexcept { return predictor_; }

  std::vector<Tensor> parameters() const {
    auto out = euclid_.parameters();
    for (const auto& t : hyper_.parameters()) out.push_back(t);
    for (const auto& t : predictor_.parameters()) out.push_back(t);
    return out;
  }

  /// Class probabilities for a whole (unsampled) graph through g_E and P.
  std::vector<double> predict_proba(const Graph& g) const {
    const Tensor p = predict(encode_euclidean(g, euclid_), predictor_);
    const auto r = p.value().row(0);
    return {r.begin(), r.end()};
  }

private:
  DsgcModel(const ModelConfig& cfg, std::unique_ptr<std::mt19937_64> rng)
      : ball_(cfg.curvature),
        euclid_(cfg.euclidean, cfg.input_width, cfg.hidden, cfg.layers, *rng),
        hyper_(cfg.hyperbolic, cfg.input_width, cfg.hidden, cfg.layers, *rng, cfg.hyperbolic_layers),
        predictor_(cfg.hidden, cfg.classes, *rng) {}

  poincare::PoincareBall ball_;
  GraphEncoder euclid_;
  GraphEncoder hyper_;
  Predictor predictor_;
};

struct BatchItem {
  const Graph* graph = nullptr;
  std::uint64_t sample_seed = 0;
};

/// One labeled graph with its label plus N >= 1 unlabeled graphs.
struct Batch {
  BatchItem labeled;
  int label = 0;
  std::vector<BatchItem> unlabeled;
};

struct ViewConfig {
  double alpha_h = 0.8;  // community-expansion view, hyperbolic encoder
  double alpha_e = 0.8;  // diffusion view, Euclidean encoder
};

struct StepMetrics {
  double total = 0.0;
  double supervised = 0.0;
  double contrastive = 0.0;
  std::vector<double> probabilities;
  bool correct = false;
  bool finite = true;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct DualViews {
  GraphEmbedding euclid;  // H^E  (1 x d)
  GraphEmbedding hyper;   // H^H  (1 x d)
};

inline DualViews encode_views(const DsgcModel& model, const BatchItem& item, const ViewConfig& views) {
  const SampledGraph sg_e = diffusion_sample(*item.graph, {views.alpha_e, splitmix64(item.sample_seed ^ 0x45ULL)});
  const SampledGraph sg_h =
      community_expansion_sample(*item.graph, {views.alpha_h, splitmix64(item.sample_seed ^ 0x48ULL)});
  return {encode_euclidean(sg_e.graph, model.euclidean_encoder()),
          encode_hyperbolic(sg_h.graph, model.hyperbolic_encoder(), model.ball())};
}

inline GraphEmbedding stack(std::span<const GraphEmbedding> es, Space space) {
  std::vector<Tensor> rows;
  rows.reserve(es.size());
  for (const auto& e : es) rows.push_back(e.coords);
  return {ad::concat_rows(rows), space};
}

/// Forward pass of the full objective for one batch.
struct BatchForward {
  BatchLosses losses;
  Tensor total;
  Tensor probabilities;
};

inline BatchForward forward_batch(const DsgcModel& model, const Batch& batch, const LossConfig& cfg,
                                  const ViewConfig& views) {
  if (batch.unlabeled.empty()) throw ContractError("train_step: batch has no unlabeled graphs");
  if (batch.labeled.graph == nullptr) throw ContractError("train_step: batch has no labeled graph");
  const auto& ball = model.ball();
  const DualViews lab = encode_views(model, batch.labeled, views);
  std::vector<GraphEmbedding> u_h, u_eh;
  for (const auto& item : batch.unlabeled) {
    const DualViews v = encode_views(model, item, views);
    u_h.push_back(v.hyper);
    u_eh.push_back(to_hyperbolic(v.euclid, ball));
  }
  const GraphEmbedding hl_eh = to_hyperbolic(lab.euclid, ball);
  const GraphEmbedding hu_h = stack(u_h, Space::hyperbolic);
  const GraphEmbedding hu_eh = stack(u_eh, Space::hyperbolic);

  BatchForward out;
  const Tensor logits = model.predictor().logits(lab.euclid);
  out.probabilities = ad::sigmoid(logits);
  out.losses.supervised = supervised_loss_from_logits(logits, batch.label);
  out.losses.labeled_nce = info_nce_labeled(lab.hyper, hl_eh, hu_h, cfg, ball);
  out.losses.unlabeled_nce = info_nce_unlabeled(hu_h, hu_eh, lab.hyper, cfg, ball);
  out.total = total_objective(out.losses, cfg);
  return out;
}

/// Samples both views of every graph, evaluates the objective, backpropagates
/// and takes one optimizer step. The step is skipped when the loss or any
/// gradient is non-finite; metrics.finite reports that case. Overflowed
/// parameters make the geometry reject its inputs, which counts as the same.
inline StepMetrics train_step(DsgcModel& model, const Batch& batch, const LossConfig& cfg, const ViewConfig& views,
                              ad::Adam& optimizer) {
  validate(cfg);
  optimizer.zero_grad();
  StepMetrics m;
  std::optional<BatchForward> forward;
  try {
    forward.emplace(forward_batch(model, batch, cfg, views));
  } catch (const DomainError&) {
    m.total = std::numeric_limits<double>::quiet_NaN();
    m.finite = false;
    return m;
  }
  const BatchForward& fw = *forward;
  m.total = fw.total.item();
  m.supervised = fw.losses.supervised.item();
  m.contrastive = contrastive_objective(fw.losses, cfg).item();
  const auto p = fw.probabilities.value().row(0);
  m.probabilities.assign(p.begin(), p.end());
  m.correct = static_cast<int>(argmax(m.probabilities)) == batch.label;
  m.finite = std::isfinite(m.total);
  if (!m.finite) return m;
  ad::backward(fw.total);
  for (const auto& t : optimizer.params())
    if (!t.grad().all_finite()) {
      m.finite = false;
      return m;
    }
  optimizer.step();
  return m;
}

}  // namespace dsgc
