#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "iorlab/attacks.hpp"
#include "iorlab/common.hpp"
#include "iorlab/model.hpp"
#include "iorlab/text.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Training engines. Plain SGD throughout: updates stay hand-checkable and the
// gradient transforms act on the raw batch gradient with nothing in between.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 0.1;
  int batch_size = 8;
  int epochs = 20;
  std::uint64_t seed = 1;
  double temperature = 1.0;  // training temperature (logit divisor in the loss)
  GradTransform grad_transform = GradTransform::none();
  int embed_dim = 16;
  int hidden_dim = 32;
};

struct PgdConfig {
  int steps = 5;          // K
  double lr = 0.03;       // adversarial learning rate
  double init_magnitude = 0.05;
  double max_norm = 1.0;  // L2, over the concatenated per-token perturbation
};

struct DDiConfig {
  int num_adversaries = 3;  // M
  int pgd_steps = 3;        // K, PGD steps per adversarial example
  double simplex_tol = 1e-9;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double mean_confidence = 0.0;  // validation, T = 1
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

namespace detail {

struct EncodedSet {
  std::vector<std::vector<int>> ids;
  std::vector<int> labels;
};

inline EncodedSet encode_dataset(const Dataset& ds, const Vocab& vocab) {
  if (ds.empty()) throw EmptyDataset();
  EncodedSet out;
  for (const Example& ex : ds.examples) {
    std::vector<int> ids = encode(tokenize(ex.text), vocab);
    if (ids.empty()) continue;
    out.ids.push_back(std::move(ids));
    out.labels.push_back(ex.label);
  }
  if (out.ids.empty()) throw EmptyDataset();
  return out;
}

inline void accumulate(Gradients& acc, const Gradients& g) {
  for (std::size_t i = 0; i < acc.E.a.size(); ++i) acc.E.a[i] += g.E.a[i];
  for (std::size_t i = 0; i < acc.W1.a.size(); ++i) acc.W1.a[i] += g.W1.a[i];
  for (std::size_t i = 0; i < acc.b1.size(); ++i) acc.b1[i] += g.b1[i];
  for (std::size_t i = 0; i < acc.W2.a.size(); ++i) acc.W2.a[i] += g.W2.a[i];
  for (std::size_t i = 0; i < acc.b2.size(); ++i) acc.b2[i] += g.b2[i];
}

inline Gradients zero_like(const ModelParams& p) {
  Gradients g;
  g.E = Mat(p.dims.vocab, p.dims.embed);
  g.W1 = Mat(p.dims.embed, p.dims.hidden);
  g.b1.assign(static_cast<std::size_t>(p.dims.hidden), 0.0);
  g.W2 = Mat(p.dims.hidden, p.dims.classes);
  g.b2.assign(static_cast<std::size_t>(p.dims.classes), 0.0);
  return g;
}

inline void sgd_step(ModelParams& p, const Gradients& g, double lr) {
  for (std::size_t i = 0; i < p.E.a.size(); ++i) p.E.a[i] -= lr * g.E.a[i];
  for (std::size_t i = 0; i < p.W1.a.size(); ++i) p.W1.a[i] -= lr * g.W1.a[i];
  for (std::size_t i = 0; i < p.b1.size(); ++i) p.b1[i] -= lr * g.b1[i];
  for (std::size_t i = 0; i < p.W2.a.size(); ++i) p.W2.a[i] -= lr * g.W2.a[i];
  for (std::size_t i = 0; i < p.b2.size(); ++i) p.b2[i] -= lr * g.b2[i];
}

inline EpochStats eval_epoch(const ModelParams& p, const EncodedSet& val, int epoch,
                             double train_loss) {
  EpochStats st;
  st.epoch = epoch;
  st.train_loss = train_loss;
  long long correct = 0;
  double conf_sum = 0.0;
  for (std::size_t i = 0; i < val.ids.size(); ++i) {
    const PredictionOutput out = predict(p, val.ids[i], 1.0);
    if (out.predicted == val.labels[i]) ++correct;
    conf_sum += out.confidence;
  }
  st.val_accuracy = static_cast<double>(correct) / static_cast<double>(val.ids.size());
  st.mean_confidence = conf_sum / static_cast<double>(val.ids.size());
  return st;
}

inline std::size_t param_count(const ModelParams& p) {
  return p.E.a.size() + p.W1.a.size() + p.b1.size() + p.W2.a.size() + p.b2.size();
}

// Flattening order: E, W1, b1, W2, b2.
inline void flatten_into(const Gradients& g, double* out) {
  std::size_t k = 0;
  for (double x : g.E.a) out[k++] = x;
  for (double x : g.W1.a) out[k++] = x;
  for (double x : g.b1) out[k++] = x;
  for (double x : g.W2.a) out[k++] = x;
  for (double x : g.b2) out[k++] = x;
}

inline void apply_flat_direction(ModelParams& p, const Vec& dir, double lr) {
  std::size_t k = 0;
  for (double& x : p.E.a) x += lr * dir[k++];
  for (double& x : p.W1.a) x += lr * dir[k++];
  for (double& x : p.b1) x += lr * dir[k++];
  for (double& x : p.W2.a) x += lr * dir[k++];
  for (double& x : p.b2) x += lr * dir[k++];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Standard training, optionally at a high temperature and with a gradient
// transform on the batch gradient.
// ---------------------------------------------------------------------------

inline TrainResult train_standard(const TrainConfig& cfg, const Vocab& vocab,
                                  const Dataset& train, const Dataset& val) {
  const detail::EncodedSet tr = detail::encode_dataset(train, vocab);
  const detail::EncodedSet va = detail::encode_dataset(val, vocab);

  TrainResult res;
  res.params =
      init_params(vocab.size(), cfg.embed_dim, cfg.hidden_dim, train.num_classes, cfg.seed);
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(tr.ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
    epoch_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients acc = detail::zero_like(res.params);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const ForwardTrace t = forward(res.params, tr.ids[i]);
        loss_sum += cross_entropy_t(t.logits, tr.labels[i], cfg.temperature);
        detail::accumulate(acc, backward(res.params, t, tr.labels[i], cfg.temperature));
      }
      scale_gradients(acc, 1.0 / static_cast<double>(end - start));
      acc = apply_grad_transform(std::move(acc), cfg.grad_transform);
      detail::sgd_step(res.params, acc, cfg.lr);
    }
    res.history.push_back(detail::eval_epoch(
        res.params, va, epoch, loss_sum / static_cast<double>(order.size())));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Embedding-space PGD: normalized gradient ascent on the concatenated
// per-token perturbation, projected back to the L2 ball after the
// initialization and after every step.
// ---------------------------------------------------------------------------

inline std::vector<Vec> pgd_attack_embedding(const ModelParams& params,
                                             const std::vector<int>& ids, int label,
                                             const PgdConfig& pgd, double temperature,
                                             std::uint64_t seed) {
  if (ids.empty()) throw EmptyInput();
  const int d = params.dims.embed;
  const std::size_t len = ids.size();

  Rng rng(seed);
  std::vector<Vec> delta(len, Vec(static_cast<std::size_t>(d), 0.0));
  for (Vec& v : delta) {
    for (double& x : v) x = rng.uniform(-pgd.init_magnitude, pgd.init_magnitude);
  }

  const auto project = [&] {
    double sq = 0.0;
    for (const Vec& v : delta) sq += dot(v, v);
    const double norm = std::sqrt(sq);
    if (norm > pgd.max_norm) {
      const double f = pgd.max_norm / norm;
      for (Vec& v : delta) {
        for (double& x : v) x *= f;
      }
    }
  };
  project();

  std::vector<Vec> base(len, Vec(static_cast<std::size_t>(d)));
  for (std::size_t k = 0; k < len; ++k) {
    for (int i = 0; i < d; ++i) base[k][i] = params.E(ids[k], i);
  }

  for (int step = 0; step < pgd.steps; ++step) {
    std::vector<Vec> perturbed = base;
    for (std::size_t k = 0; k < len; ++k) axpy(1.0, delta[k], perturbed[k]);
    const ForwardTrace t = forward_embedded(params, ids, std::move(perturbed));
    const Gradients g = backward(params, t, label, temperature);

    double sq = 0.0;
    for (const Vec& v : g.token_embs) sq += dot(v, v);
    const double norm = std::sqrt(sq);
    if (norm >= 1e-12) {
      const double f = pgd.lr / norm;
      for (std::size_t k = 0; k < len; ++k) axpy(f, g.token_embs[k], delta[k]);
    }
    project();
  }
  return delta;
}

// ---------------------------------------------------------------------------
// PGD adversarial training: worst-case loss in the embedding space.
// ---------------------------------------------------------------------------

inline TrainResult train_pgd_at(const TrainConfig& cfg, const PgdConfig& pgd,
                                const Vocab& vocab, const Dataset& train, const Dataset& val) {
  const detail::EncodedSet tr = detail::encode_dataset(train, vocab);
  const detail::EncodedSet va = detail::encode_dataset(val, vocab);

  TrainResult res;
  res.params =
      init_params(vocab.size(), cfg.embed_dim, cfg.hidden_dim, train.num_classes, cfg.seed);
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(tr.ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
    epoch_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients acc = detail::zero_like(res.params);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const std::uint64_t pgd_seed =
            cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 40) ^
            (static_cast<std::uint64_t>(batch_index) << 20) ^ static_cast<std::uint64_t>(k);
        const std::vector<Vec> delta = pgd_attack_embedding(res.params, tr.ids[i],
                                                            tr.labels[i], pgd,
                                                            cfg.temperature, pgd_seed);
        std::vector<Vec> embs(tr.ids[i].size(), Vec(static_cast<std::size_t>(cfg.embed_dim)));
        for (std::size_t p = 0; p < tr.ids[i].size(); ++p) {
          for (int j = 0; j < cfg.embed_dim; ++j) {
            embs[p][j] = res.params.E(tr.ids[i][p], j) + delta[p][j];
          }
        }
        const ForwardTrace t = forward_embedded(res.params, tr.ids[i], std::move(embs));
        loss_sum += cross_entropy_t(t.logits, tr.labels[i], cfg.temperature);
        detail::accumulate(acc, backward(res.params, t, tr.labels[i], cfg.temperature));
      }
      scale_gradients(acc, 1.0 / static_cast<double>(end - start));
      acc = apply_grad_transform(std::move(acc), cfg.grad_transform);
      detail::sgd_step(res.params, acc, cfg.lr);
    }
    res.history.push_back(detail::eval_epoch(
        res.params, va, epoch, loss_sum / static_cast<double>(order.size())));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Minimum-norm point on the simplex: minimize ||G a||^2 over a in the simplex
// by projected gradient descent. With collinear columns the minimizer is not
// unique; the iterate reached from the uniform start is returned.
// ---------------------------------------------------------------------------

namespace detail {

inline Vec project_simplex(Vec v) {
  // Euclidean projection onto {a : a >= 0, sum a = 1} (sort-based)
  const std::size_t n = v.size();
  Vec u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  for (double& x : v) x = std::max(0.0, x - tau);
  return v;
}

}  // namespace detail

// G has one flattened-gradient column per adversarial set (P x M).
using GradientMatrix = Mat;

inline Vec simplex_min_norm(const GradientMatrix& G, double tol = 1e-9) {
  const int M = G.cols;
  if (M < 1) throw ValidationError("gradient matrix needs at least one column");
  Vec alpha(static_cast<std::size_t>(M), 1.0 / static_cast<double>(M));
  if (M == 1) return alpha;

  // H = G'G, M x M
  Mat H(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      double s = 0.0;
      for (int r = 0; r < G.rows; ++r) s += G(r, i) * G(r, j);
      H(i, j) = s;
      H(j, i) = s;
    }
  }
  double trace = 0.0;
  for (int i = 0; i < M; ++i) trace += H(i, i);
  if (trace < 1e-18) return alpha;  // all-zero gradients: everything is optimal
  const double step = 1.0 / (2.0 * trace);  // lambda_max(H) <= trace for PSD H

  for (int iter = 0; iter < 10000; ++iter) {
    Vec grad(static_cast<std::size_t>(M), 0.0);
    for (int i = 0; i < M; ++i) {
      double s = 0.0;
      for (int j = 0; j < M; ++j) s += H(i, j) * alpha[static_cast<std::size_t>(j)];
      grad[static_cast<std::size_t>(i)] = 2.0 * s;
    }
    Vec next = alpha;
    axpy(-step, grad, next);
    next = detail::project_simplex(std::move(next));
    double delta = 0.0;
    for (int i = 0; i < M; ++i) {
      const double d = next[static_cast<std::size_t>(i)] - alpha[static_cast<std::size_t>(i)];
      delta += d * d;
    }
    alpha = std::move(next);
    if (std::sqrt(delta) < tol) break;
  }
  return alpha;
}

struct DdiDirection {
  Vec direction;  // length P
  Vec alpha;      // length M
  bool degenerate = false;  // ||G alpha*|| ~ 0; fell back to the first column
};

inline DdiDirection ddi_direction(const GradientMatrix& G, double tol = 1e-9) {
  DdiDirection out;
  out.alpha = simplex_min_norm(G, tol);
  out.direction.assign(static_cast<std::size_t>(G.rows), 0.0);
  for (int r = 0; r < G.rows; ++r) {
    double s = 0.0;
    for (int m = 0; m < G.cols; ++m) s += G(r, m) * out.alpha[static_cast<std::size_t>(m)];
    out.direction[static_cast<std::size_t>(r)] = s;
  }
  double norm = l2_norm(out.direction);
  if (norm <= 1e-12) {
    out.degenerate = true;
    for (int r = 0; r < G.rows; ++r) out.direction[static_cast<std::size_t>(r)] = G(r, 0);
    norm = l2_norm(out.direction);
    if (norm <= 1e-12) {
      // nothing to descend along
      std::fill(out.direction.begin(), out.direction.end(), 0.0);
      return out;
    }
  }
  // multiply by the reciprocal so M = 1 reproduces apply_grad_transform's
  // normalization bit for bit
  const double inv = 1.0 / norm;
  for (double& x : out.direction) x = -(x * inv);
  return out;
}

// ---------------------------------------------------------------------------
// DDi adversarial training: per batch, M PGD adversarial sets from distinct
// seeded initializations give M batch-mean gradient columns; the update walks
// the negated min-norm combination. The grad transform selects how that
// combination is scaled: normalize is the DDi definition (unit direction),
// clip and none are the ablation variants.
// ---------------------------------------------------------------------------

inline TrainResult train_ddi_at(const TrainConfig& cfg, const DDiConfig& ddi,
                                const PgdConfig& pgd_base, const Vocab& vocab,
                                const Dataset& train, const Dataset& val) {
  const detail::EncodedSet tr = detail::encode_dataset(train, vocab);
  const detail::EncodedSet va = detail::encode_dataset(val, vocab);
  if (ddi.num_adversaries < 1 || ddi.pgd_steps < 1) {
    throw ValidationError("DDi requires M >= 1 and K >= 1");
  }

  PgdConfig pgd = pgd_base;
  pgd.steps = ddi.pgd_steps;

  TrainResult res;
  res.params =
      init_params(vocab.size(), cfg.embed_dim, cfg.hidden_dim, train.num_classes, cfg.seed);
  Rng rng(cfg.seed);

  const std::size_t P = detail::param_count(res.params);
  const int M = ddi.num_adversaries;

  std::vector<std::size_t> order(tr.ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
    epoch_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      GradientMatrix G(static_cast<int>(P), M);

      for (int m = 0; m < M; ++m) {
        Gradients acc = detail::zero_like(res.params);
        for (std::size_t k = start; k < end; ++k) {
          const std::size_t i = order[k];
          const std::uint64_t pgd_seed =
              cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 40) ^
              (static_cast<std::uint64_t>(batch_index) << 20) ^
              (static_cast<std::uint64_t>(m) << 10) ^ static_cast<std::uint64_t>(k);
          const std::vector<Vec> delta = pgd_attack_embedding(res.params, tr.ids[i],
                                                              tr.labels[i], pgd,
                                                              cfg.temperature, pgd_seed);
          std::vector<Vec> embs(tr.ids[i].size(),
                                Vec(static_cast<std::size_t>(cfg.embed_dim)));
          for (std::size_t p = 0; p < tr.ids[i].size(); ++p) {
            for (int j = 0; j < cfg.embed_dim; ++j) {
              embs[p][j] = res.params.E(tr.ids[i][p], j) + delta[p][j];
            }
          }
          const ForwardTrace t = forward_embedded(res.params, tr.ids[i], std::move(embs));
          if (m == 0) loss_sum += cross_entropy_t(t.logits, tr.labels[i], cfg.temperature);
          detail::accumulate(acc, backward(res.params, t, tr.labels[i], cfg.temperature));
        }
        scale_gradients(acc, 1.0 / static_cast<double>(end - start));
        Vec flat(P);
        detail::flatten_into(acc, flat.data());
        for (std::size_t r = 0; r < P; ++r) G(static_cast<int>(r), m) = flat[r];
      }

      DdiDirection dir = ddi_direction(G, ddi.simplex_tol);
      switch (cfg.grad_transform.mode) {
        case GradTransformMode::kNormalize:
          break;  // unit direction is the DDi update itself
        case GradTransformMode::kClip: {
          // rescale back to the raw combination, then clip at tau
          Vec raw(P, 0.0);
          for (int r = 0; r < G.rows; ++r) {
            double s = 0.0;
            for (int m = 0; m < M; ++m) s += G(r, m) * dir.alpha[static_cast<std::size_t>(m)];
            raw[static_cast<std::size_t>(r)] = -s;
          }
          const double n = l2_norm(raw);
          if (n > cfg.grad_transform.clip_threshold && n > 0.0) {
            for (double& x : raw) x *= cfg.grad_transform.clip_threshold / n;
          }
          dir.direction = std::move(raw);
          break;
        }
        case GradTransformMode::kNone: {
          Vec raw(P, 0.0);
          for (int r = 0; r < G.rows; ++r) {
            double s = 0.0;
            for (int m = 0; m < M; ++m) s += G(r, m) * dir.alpha[static_cast<std::size_t>(m)];
            raw[static_cast<std::size_t>(r)] = -s;
          }
          dir.direction = std::move(raw);
          break;
        }
      }
      detail::apply_flat_direction(res.params, dir.direction, cfg.lr);
    }
    res.history.push_back(detail::eval_epoch(
        res.params, va, epoch, loss_sum / static_cast<double>(order.size())));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Augmentation adversarial training data: originals plus one adversarial
// sequence per example (the unmodified text when the attack failed).
// ---------------------------------------------------------------------------

inline Dataset augment_dataset(const ModelParams& params, const Vocab& vocab,
                               const SynonymLexicon& lexicon, const Dataset& data,
                               AttackKind attack, const AttackConfig& cfg) {
  if (data.empty()) throw EmptyDataset();
  Dataset out = data;
  int next_id = 0;
  for (const Example& ex : data.examples) next_id = std::max(next_id, ex.id + 1);

  for (const Example& ex : data.examples) {
    AttackResult r = run_attack(attack, params, vocab, lexicon, ex, cfg);
    Example adv;
    adv.id = next_id++;
    adv.label = ex.label;
    if (r.success) {
      for (std::size_t i = 0; i < r.adv_tokens.size(); ++i) {
        if (i) adv.text.push_back(' ');
        adv.text += r.adv_tokens[i];
      }
    } else {
      adv.text = ex.text;
    }
    out.examples.push_back(std::move(adv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training history CSV: epoch,train_loss,val_acc,mean_confidence
// ---------------------------------------------------------------------------

inline void save_history(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history: " + path);
  out << "epoch,train_loss,val_acc,mean_confidence\n";
  for (const EpochStats& st : history) {
    out << st.epoch << ',' << format_double(st.train_loss) << ','
        << format_double(st.val_accuracy) << ',' << format_double(st.mean_confidence) << '\n';
  }
}

}  // namespace iorlab
