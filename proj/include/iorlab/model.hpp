#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iorlab/common.hpp"
#include "iorlab/text.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// A small differentiable text classifier:
//
//   pooled = mean_k E[id_k]                      (mean bag of embeddings)
//   hidden = tanh(W1' pooled + b1)
//   logits = W2' hidden + b2
//
// All gradients are derived by hand; the finite-difference oracle in the test
// suite checks every tensor.
// ---------------------------------------------------------------------------

struct ModelDims {
  int vocab = 0;    // V
  int embed = 16;   // d
  int hidden = 32;  // h
  int classes = 2;  // C
};

struct ModelParams {
  ModelDims dims;
  Mat E;   // V x d
  Mat W1;  // d x h
  Vec b1;  // h
  Mat W2;  // h x C
  Vec b2;  // C
};

struct ForwardTrace {
  std::vector<int> ids;
  std::vector<Vec> token_embs;  // L x d, after any perturbation
  Vec pooled;                   // d
  Vec pre_hidden;               // h
  Vec hidden;                   // h
  Vec logits;                   // C
};

struct Gradients {
  Mat E;
  Mat W1;
  Vec b1;
  Mat W2;
  Vec b2;
  std::vector<Vec> token_embs;  // dL/dh_k, one d-vector per input position
};

struct PredictionOutput {
  int predicted = 0;   // argmax of raw logits; independent of temperature
  Vec probs;           // softmax at the requested temperature
  double confidence = 0.0;  // probs[predicted]
};

enum class GradTransformMode { kNone, kClip, kNormalize };

struct GradTransform {
  GradTransformMode mode = GradTransformMode::kNone;
  double clip_threshold = 1.0;  // tau; used when mode == kClip

  static GradTransform none() { return {GradTransformMode::kNone, 1.0}; }
  static GradTransform clip(double tau) { return {GradTransformMode::kClip, tau}; }
  static GradTransform normalize() { return {GradTransformMode::kNormalize, 1.0}; }
};

// ---------------------------------------------------------------------------

inline ModelParams init_params(int vocab, int embed, int hidden, int classes,
                               std::uint64_t seed) {
  if (vocab < 1 || embed < 1 || hidden < 1 || classes < 1) {
    throw InvalidDims("all model dimensions must be >= 1");
  }
  ModelParams p;
  p.dims = {vocab, embed, hidden, classes};
  p.E = Mat(vocab, embed);
  p.W1 = Mat(embed, hidden);
  p.b1.assign(hidden, 0.0);
  p.W2 = Mat(hidden, classes);
  p.b2.assign(classes, 0.0);

  Rng rng(seed);
  for (double& x : p.E.a) x = rng.uniform(-0.1, 0.1);
  for (double& x : p.W1.a) x = rng.uniform(-0.1, 0.1);
  for (double& x : p.W2.a) x = rng.uniform(-0.1, 0.1);
  return p;
}

// Forward pass with explicit token embeddings (used by embedding-space
// attacks). `embs` must have one d-vector per id.
inline ForwardTrace forward_embedded(const ModelParams& p, std::vector<int> ids,
                                     std::vector<Vec> embs) {
  const ModelDims& d = p.dims;
  ForwardTrace t;
  t.ids = std::move(ids);
  t.token_embs = std::move(embs);
  const std::size_t len = t.token_embs.size();
  if (len == 0) throw EmptyInput();

  t.pooled.assign(d.embed, 0.0);
  for (const Vec& e : t.token_embs) axpy(1.0, e, t.pooled);
  for (double& x : t.pooled) x /= static_cast<double>(len);

  t.pre_hidden.assign(d.hidden, 0.0);
  for (int j = 0; j < d.hidden; ++j) {
    double s = p.b1[j];
    for (int i = 0; i < d.embed; ++i) s += p.W1(i, j) * t.pooled[i];
    t.pre_hidden[j] = s;
  }
  t.hidden.resize(d.hidden);
  for (int j = 0; j < d.hidden; ++j) t.hidden[j] = std::tanh(t.pre_hidden[j]);

  t.logits.assign(d.classes, 0.0);
  for (int c = 0; c < d.classes; ++c) {
    double s = p.b2[c];
    for (int j = 0; j < d.hidden; ++j) s += p.W2(j, c) * t.hidden[j];
    t.logits[c] = s;
  }
  return t;
}

inline ForwardTrace forward(const ModelParams& p, const std::vector<int>& ids) {
  if (ids.empty()) throw EmptyInput();
  std::vector<Vec> embs;
  embs.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= p.dims.vocab) throw IdOutOfRange(id, p.dims.vocab);
    Vec e(p.dims.embed);
    for (int i = 0; i < p.dims.embed; ++i) e[i] = p.E(id, i);
    embs.push_back(std::move(e));
  }
  return forward_embedded(p, ids, std::move(embs));
}

// Temperature-scaled softmax, max-subtracted so T = 0.01 regimes stay finite.
inline Vec softmax_t(const Vec& logits, double temperature) {
  if (!(temperature > 0.0)) throw NonPositiveTemperature(temperature);
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp((logits[c] - m) / temperature);
    sum += p[c];
  }
  for (double& x : p) x /= sum;
  return p;
}

// Predicted class comes from the raw logits (lowest index wins ties), so it
// is invariant to the temperature by construction.
inline int argmax_class(const Vec& logits) {
  int best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = static_cast<int>(c);
  }
  return best;
}

inline PredictionOutput predict_logits(const Vec& logits, double temperature) {
  PredictionOutput out;
  out.predicted = argmax_class(logits);
  out.probs = softmax_t(logits, temperature);
  out.confidence = out.probs[out.predicted];
  return out;
}

inline PredictionOutput predict(const ModelParams& p, const std::vector<int>& ids,
                                double temperature) {
  return predict_logits(forward(p, ids).logits, temperature);
}

inline double cross_entropy_t(const Vec& logits, int label, double temperature) {
  if (!(temperature > 0.0)) throw NonPositiveTemperature(temperature);
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw LabelOutOfRange(label, static_cast<int>(logits.size()));
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp((l - m) / temperature);
  return std::log(sum) - (logits[label] - m) / temperature;
}

// Analytic gradients of cross_entropy_t(trace.logits, label, T) with respect
// to every parameter tensor and every token embedding.
inline Gradients backward(const ModelParams& p, const ForwardTrace& t, int label,
                          double temperature) {
  const ModelDims& d = p.dims;
  if (label < 0 || label >= d.classes) throw LabelOutOfRange(label, d.classes);

  Gradients g;
  g.E = Mat(d.vocab, d.embed);
  g.W1 = Mat(d.embed, d.hidden);
  g.b1.assign(d.hidden, 0.0);
  g.W2 = Mat(d.hidden, d.classes);
  g.b2.assign(d.classes, 0.0);

  // logit layer: dL/dl = (softmax_t - onehot) / T
  Vec probs = softmax_t(t.logits, temperature);
  Vec dlogits(d.classes);
  for (int c = 0; c < d.classes; ++c) {
    dlogits[c] = (probs[c] - (c == label ? 1.0 : 0.0)) / temperature;
  }

  for (int j = 0; j < d.hidden; ++j) {
    for (int c = 0; c < d.classes; ++c) g.W2(j, c) = t.hidden[j] * dlogits[c];
  }
  g.b2 = dlogits;

  Vec dhidden(d.hidden, 0.0);
  for (int j = 0; j < d.hidden; ++j) {
    double s = 0.0;
    for (int c = 0; c < d.classes; ++c) s += p.W2(j, c) * dlogits[c];
    dhidden[j] = s;
  }
  Vec dpre(d.hidden);
  for (int j = 0; j < d.hidden; ++j) {
    dpre[j] = dhidden[j] * (1.0 - t.hidden[j] * t.hidden[j]);
  }

  for (int i = 0; i < d.embed; ++i) {
    for (int j = 0; j < d.hidden; ++j) g.W1(i, j) = t.pooled[i] * dpre[j];
  }
  g.b1 = dpre;

  Vec dpooled(d.embed, 0.0);
  for (int i = 0; i < d.embed; ++i) {
    double s = 0.0;
    for (int j = 0; j < d.hidden; ++j) s += p.W1(i, j) * dpre[j];
    dpooled[i] = s;
  }

  // mean pooling divides each token's contribution by the sequence length
  const double inv_len = 1.0 / static_cast<double>(t.token_embs.size());
  Vec dtoken(d.embed);
  for (int i = 0; i < d.embed; ++i) dtoken[i] = dpooled[i] * inv_len;
  g.token_embs.assign(t.token_embs.size(), dtoken);
  for (int id : t.ids) {
    for (int i = 0; i < d.embed; ++i) g.E(id, i) += dtoken[i];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Gradient transforms over the global parameter-gradient norm (token-level
// input gradients are not part of the update and are left untouched).
// ---------------------------------------------------------------------------

inline double global_grad_norm(const Gradients& g) {
  double s = 0.0;
  for (double x : g.E.a) s += x * x;
  for (double x : g.W1.a) s += x * x;
  for (double x : g.b1) s += x * x;
  for (double x : g.W2.a) s += x * x;
  for (double x : g.b2) s += x * x;
  return std::sqrt(s);
}

inline void scale_gradients(Gradients& g, double factor) {
  for (double& x : g.E.a) x *= factor;
  for (double& x : g.W1.a) x *= factor;
  for (double& x : g.b1) x *= factor;
  for (double& x : g.W2.a) x *= factor;
  for (double& x : g.b2) x *= factor;
}

inline Gradients apply_grad_transform(Gradients g, const GradTransform& t) {
  switch (t.mode) {
    case GradTransformMode::kNone:
      break;
    case GradTransformMode::kNormalize: {
      const double n = global_grad_norm(g);
      if (n >= 1e-12) scale_gradients(g, 1.0 / n);
      break;
    }
    case GradTransformMode::kClip: {
      const double n = global_grad_norm(g);
      if (n > t.clip_threshold) scale_gradients(g, t.clip_threshold / n);
      break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Per-example logit range (max logit - min logit) over a dataset; the raw
// data behind the logit-separation histograms.
// ---------------------------------------------------------------------------

struct LogitRangeStats {
  double mean = 0.0;
  double stddev = 0.0;
  double bin_width = 1.0;
  std::vector<long long> histogram;  // bin i covers [i*bin_width, (i+1)*bin_width)
  std::vector<double> ranges;        // per example, dataset order
};

inline LogitRangeStats logit_range_stats(const ModelParams& params, const Vocab& vocab,
                                         const Dataset& dataset, double bin_width = 1.0) {
  if (dataset.empty()) throw EmptyDataset();
  LogitRangeStats st;
  st.bin_width = bin_width;
  for (const Example& ex : dataset.examples) {
    std::vector<int> ids = encode(tokenize(ex.text), vocab);
    if (ids.empty()) continue;
    const Vec logits = forward(params, ids).logits;
    const auto [mn, mx] = std::minmax_element(logits.begin(), logits.end());
    st.ranges.push_back(*mx - *mn);
  }
  if (st.ranges.empty()) throw EmptyDataset();
  double sum = 0.0;
  for (double r : st.ranges) sum += r;
  st.mean = sum / static_cast<double>(st.ranges.size());
  double ss = 0.0;
  for (double r : st.ranges) ss += (r - st.mean) * (r - st.mean);
  st.stddev = std::sqrt(ss / static_cast<double>(st.ranges.size()));
  for (double r : st.ranges) {
    const auto bin = static_cast<std::size_t>(std::floor(r / bin_width));
    if (st.histogram.size() <= bin) st.histogram.resize(bin + 1, 0);
    ++st.histogram[bin];
  }
  return st;
}

// ---------------------------------------------------------------------------
// Checkpoint: JSON with dims, seed, flat row-major tensors, and (optionally)
// the vocabulary so a checkpoint is self-contained for the CLI.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const ModelParams& p, const std::string& path,
                            const Vocab* vocab = nullptr, std::uint64_t seed = 0) {
  nlohmann::json j;
  j["dims"] = {{"vocab", p.dims.vocab},
               {"embed", p.dims.embed},
               {"hidden", p.dims.hidden},
               {"classes", p.dims.classes}};
  j["seed"] = seed;
  j["E"] = p.E.a;
  j["W1"] = p.W1.a;
  j["b1"] = p.b1;
  j["W2"] = p.W2.a;
  j["b2"] = p.b2;
  if (vocab != nullptr) j["vocab"] = vocab->id_to_token;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

inline ModelParams load_checkpoint(const std::string& path, Vocab* vocab = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(1, "checkpoint is not valid JSON");

  ModelParams p;
  p.dims.vocab = j.at("dims").at("vocab").get<int>();
  p.dims.embed = j.at("dims").at("embed").get<int>();
  p.dims.hidden = j.at("dims").at("hidden").get<int>();
  p.dims.classes = j.at("dims").at("classes").get<int>();
  p.E = Mat(p.dims.vocab, p.dims.embed);
  p.E.a = j.at("E").get<Vec>();
  p.W1 = Mat(p.dims.embed, p.dims.hidden);
  p.W1.a = j.at("W1").get<Vec>();
  p.b1 = j.at("b1").get<Vec>();
  p.W2 = Mat(p.dims.hidden, p.dims.classes);
  p.W2.a = j.at("W2").get<Vec>();
  p.b2 = j.at("b2").get<Vec>();

  if (p.E.a.size() != static_cast<std::size_t>(p.dims.vocab) * p.dims.embed ||
      p.W1.a.size() != static_cast<std::size_t>(p.dims.embed) * p.dims.hidden ||
      p.b1.size() != static_cast<std::size_t>(p.dims.hidden) ||
      p.W2.a.size() != static_cast<std::size_t>(p.dims.hidden) * p.dims.classes ||
      p.b2.size() != static_cast<std::size_t>(p.dims.classes)) {
    throw ParseError(1, "checkpoint tensor sizes do not match dims");
  }

  if (vocab != nullptr && j.contains("vocab")) {
    vocab->id_to_token = j["vocab"].get<std::vector<std::string>>();
    vocab->token_to_id.clear();
    for (int i = 0; i < static_cast<int>(vocab->id_to_token.size()); ++i) {
      vocab->token_to_id[vocab->id_to_token[i]] = i;
    }
  }
  return p;
}

}  // namespace iorlab
