#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iorlab/common.hpp"
#include "iorlab/model.hpp"
#include "iorlab/text.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Score-based greedy substitution attacks.
//
// Attacks query the target through a narrow channel: the predicted class and
// the predicted-class probability at the attack temperature, rounded to
// `score_decimals` places. The rounding models the limited precision of the
// scores a black-box adversary observes; it is what lets extreme temperature
// scaling starve the search of signal. The class-flip check itself uses the
// predicted class, which is temperature-invariant, so any flip found on the
// scaled model is a flip on the unmodified model too.
// ---------------------------------------------------------------------------

struct AttackConfig {
  double max_perturb_fraction = 0.4;  // epsilon in (0, 1]
  int max_candidates_per_position = 8;
  long long query_budget = 6000;
  double temperature = 1.0;  // logit divisor applied to the attacked model
  int score_decimals = 2;    // <= 0 means the channel is exact
  double tf_min_cosine = 0.0;
};

enum class ImportanceMethod { kUnkSaliency, kDeletion };

struct ImportanceRanking {
  std::vector<double> scores;     // per position
  std::vector<int> order;         // positions, descending score, ties by index
};

struct AttackResult {
  Example original;
  std::vector<std::string> orig_tokens;
  std::vector<std::string> adv_tokens;
  bool attempted = false;  // false: example was already misclassified
  bool success = false;
  long long queries = 0;
  std::vector<int> perturbed_positions;
  int orig_pred = 0;
  double orig_conf = 0.0;  // T=1, unmodified model
  int adv_pred = 0;
  double adv_conf = 0.0;  // T=1, unmodified model
};

struct AdvEvalReport {
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  std::vector<int> indicators;  // per example: model still predicts the true class
  double mean_queries = 0.0;           // over attempted attacks
  double mean_perturbed_fraction = 0.0;  // over attempted attacks
  std::vector<AttackResult> results;
};

// ---------------------------------------------------------------------------
// Importance ranking (exact channel). Deletion of the only token falls back
// to chance confidence 1/C: with nothing left to read, the model is blind.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> descending_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

}  // namespace detail

inline ImportanceRanking token_importance(const ModelParams& params, const Vocab& vocab,
                                          const std::vector<std::string>& tokens,
                                          double temperature, ImportanceMethod method) {
  if (tokens.empty()) throw EmptyInput();
  std::vector<int> ids = encode(tokens, vocab);
  const PredictionOutput base = predict(params, ids, temperature);

  ImportanceRanking r;
  r.scores.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double variant_conf;
    if (method == ImportanceMethod::kUnkSaliency) {
      std::vector<int> v = ids;
      v[i] = Vocab::kUnkId;
      variant_conf = softmax_t(forward(params, v).logits, temperature)[base.predicted];
    } else {
      if (ids.size() == 1) {
        variant_conf = 1.0 / static_cast<double>(params.dims.classes);
      } else {
        std::vector<int> v = ids;
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
        variant_conf = softmax_t(forward(params, v).logits, temperature)[base.predicted];
      }
    }
    r.scores[i] = base.confidence - variant_conf;
  }
  r.order = detail::descending_order(r.scores);
  return r;
}

inline ImportanceRanking token_importance(const ModelParams& params, const Vocab& vocab,
                                          const Example& example, double temperature,
                                          ImportanceMethod method) {
  return token_importance(params, vocab, tokenize(example.text), temperature, method);
}

// ---------------------------------------------------------------------------
// Character-level transform candidates: adjacent swap, single substitution,
// single deletion, single insertion (a-z). Deduplicated, original and empty
// string excluded, lexicographic order.
// ---------------------------------------------------------------------------

inline std::vector<std::string> char_transforms(const std::string& word) {
  std::set<std::string> out;
  const std::size_t n = word.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::string w = word;
    std::swap(w[i], w[i + 1]);
    out.insert(w);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (char c = 'a'; c <= 'z'; ++c) {
      std::string w = word;
      w[i] = c;
      out.insert(w);
    }
  }
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      std::string w = word;
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(i));
      out.insert(w);
    }
  }
  for (std::size_t i = 0; i <= n; ++i) {
    for (char c = 'a'; c <= 'z'; ++c) {
      std::string w = word;
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(i), c);
      out.insert(w);
    }
  }
  out.erase(word);
  out.erase(std::string());
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// Attack machinery
// ---------------------------------------------------------------------------

namespace detail {

struct Observation {
  int pred = 0;
  double conf = 0.0;  // quantized predicted-class confidence at the attack temperature
};

class AttackSession {
 public:
  AttackSession(const ModelParams& params, const Vocab& vocab, const AttackConfig& cfg)
      : params_(params), vocab_(vocab), cfg_(cfg) {
    if (!(cfg.max_perturb_fraction > 0.0 && cfg.max_perturb_fraction <= 1.0)) {
      throw ValidationError("max_perturb_fraction must be in (0, 1]");
    }
    if (cfg.max_candidates_per_position < 1 || cfg.query_budget < 1) {
      throw ValidationError("attack budgets must be >= 1");
    }
    if (!(cfg.temperature > 0.0)) throw NonPositiveTemperature(cfg.temperature);
  }

  long long queries() const { return queries_; }

  double quantize(double conf) const {
    if (cfg_.score_decimals <= 0 || cfg_.score_decimals >= 17) return conf;
    const double scale = std::pow(10.0, cfg_.score_decimals);
    return std::round(conf * scale) / scale;
  }

  // One budgeted query against the temperature-scaled model. nullopt once the
  // query budget is spent.
  std::optional<Observation> query(const std::vector<std::string>& tokens) {
    if (queries_ >= cfg_.query_budget) return std::nullopt;
    ++queries_;
    const Vec logits = forward(params_, encode(tokens, vocab_)).logits;
    Observation ob;
    ob.pred = argmax_class(logits);
    ob.conf = quantize(softmax_t(logits, cfg_.temperature)[ob.pred]);
    return ob;
  }

  // Confidence of a fixed class (the original prediction) under the scaled,
  // quantized channel.
  std::optional<double> query_class_conf(const std::vector<std::string>& tokens, int cls) {
    if (queries_ >= cfg_.query_budget) return std::nullopt;
    ++queries_;
    const Vec logits = forward(params_, encode(tokens, vocab_)).logits;
    return quantize(softmax_t(logits, cfg_.temperature)[cls]);
  }

 private:
  const ModelParams& params_;
  const Vocab& vocab_;
  AttackConfig cfg_;
  long long queries_ = 0;
};

inline AttackResult make_result(const ModelParams& params, const Vocab& vocab,
                                const Example& example,
                                const std::vector<std::string>& orig_tokens,
                                std::vector<std::string> adv_tokens, bool attempted,
                                long long queries, std::vector<int> perturbed) {
  AttackResult r;
  r.original = example;
  r.orig_tokens = orig_tokens;
  r.adv_tokens = std::move(adv_tokens);
  r.attempted = attempted;
  r.queries = queries;
  r.perturbed_positions = std::move(perturbed);

  const PredictionOutput orig = predict(params, encode(orig_tokens, vocab), 1.0);
  r.orig_pred = orig.predicted;
  r.orig_conf = orig.confidence;
  const PredictionOutput adv = predict(params, encode(r.adv_tokens, vocab), 1.0);
  r.adv_pred = adv.predicted;
  r.adv_conf = adv.confidence;
  r.success = attempted && r.adv_pred != r.orig_pred;
  return r;
}

// Candidate substitutes for one position under each attack family.
enum class CandidateSource { kLexicon, kLexiconCosine, kCharTransforms };

inline std::vector<std::string> candidates_for(const std::string& word,
                                               const SynonymLexicon& lexicon,
                                               const ModelParams& params, const Vocab& vocab,
                                               CandidateSource source,
                                               const AttackConfig& cfg) {
  std::vector<std::string> cands;
  if (source == CandidateSource::kCharTransforms) {
    cands = char_transforms(word);
  } else {
    const auto* syns = lexicon.candidates(word);
    if (syns == nullptr) return {};
    cands = *syns;
    if (source == CandidateSource::kLexiconCosine) {
      const int orig_id = vocab.id_of(word);
      Vec orig_e(params.dims.embed);
      for (int i = 0; i < params.dims.embed; ++i) orig_e[i] = params.E(orig_id, i);
      const double orig_n = l2_norm(orig_e);
      std::vector<std::string> kept;
      for (const std::string& c : cands) {
        const int cid = vocab.id_of(c);
        if (cid == orig_id) continue;  // identical encoding cannot change anything
        Vec ce(params.dims.embed);
        for (int i = 0; i < params.dims.embed; ++i) ce[i] = params.E(cid, i);
        const double cn = l2_norm(ce);
        const double cosine =
            (orig_n < 1e-12 || cn < 1e-12) ? 0.0 : dot(orig_e, ce) / (orig_n * cn);
        if (cosine >= cfg.tf_min_cosine) kept.push_back(c);
      }
      cands = std::move(kept);
    }
  }
  if (static_cast<int>(cands.size()) > cfg.max_candidates_per_position) {
    cands.resize(static_cast<std::size_t>(cfg.max_candidates_per_position));
  }
  return cands;
}

struct GreedyPolicy {
  ImportanceMethod ranking = ImportanceMethod::kUnkSaliency;
  CandidateSource source = CandidateSource::kLexicon;
  bool weight_by_best_drop = false;  // pwws ranks by saliency * best candidate drop
};

// Shared greedy skeleton: rank positions on the original input, then visit in
// rank order substituting the candidate with the largest observed confidence
// drop, until the class flips or a budget runs out. A substitution is applied
// only when the observed drop is strictly positive; once extreme scaling
// saturates the channel, every candidate reads as a tie at zero and the
// search has nothing to act on. All tie-breaks are lowest position /
// lexicographically smallest candidate.
inline AttackResult greedy_attack(const ModelParams& params, const Vocab& vocab,
                                  const SynonymLexicon& lexicon, const Example& example,
                                  const AttackConfig& cfg, const GreedyPolicy& policy) {
  const std::vector<std::string> orig_tokens = tokenize(example.text);
  if (orig_tokens.empty()) throw EmptyInput();
  AttackSession session(params, vocab, cfg);

  // Degenerate-input rule: an already-misclassified example is not attacked.
  {
    const PredictionOutput p0 = predict(params, encode(orig_tokens, vocab), 1.0);
    if (p0.predicted != example.label) {
      return make_result(params, vocab, example, orig_tokens, orig_tokens,
                         /*attempted=*/false, 0, {});
    }
  }

  std::vector<std::string> cur = orig_tokens;
  std::vector<int> perturbed;
  const auto finish = [&] {
    return make_result(params, vocab, example, orig_tokens, cur, /*attempted=*/true,
                       session.queries(), perturbed);
  };

  const auto base = session.query(cur);
  if (!base) return finish();
  const int target_class = base->pred;

  // --- ranking phase, on the original input ---
  const std::size_t len = cur.size();
  std::vector<double> scores(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    std::optional<double> variant;
    if (policy.ranking == ImportanceMethod::kUnkSaliency) {
      std::vector<std::string> v = cur;
      v[i] = "<unk>";  // not in any vocab we build: encodes to the UNK id
      variant = session.query_class_conf(v, target_class);
    } else {
      if (len == 1) {
        variant = session.quantize(1.0 / static_cast<double>(params.dims.classes));
      } else {
        std::vector<std::string> v = cur;
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
        variant = session.query_class_conf(v, target_class);
      }
    }
    if (!variant) return finish();
    scores[i] = base->conf - *variant;
  }

  if (policy.weight_by_best_drop) {
    for (std::size_t i = 0; i < len; ++i) {
      const auto cands =
          candidates_for(cur[i], lexicon, params, vocab, policy.source, cfg);
      double best_drop = 0.0;
      for (const std::string& cand : cands) {
        std::vector<std::string> v = cur;
        v[i] = cand;
        const auto conf = session.query_class_conf(v, target_class);
        if (!conf) return finish();
        best_drop = std::max(best_drop, base->conf - *conf);
      }
      scores[i] *= best_drop;
    }
  }
  const std::vector<int> order = descending_order(scores);

  // --- substitution phase ---
  const auto budget = static_cast<std::size_t>(
      std::ceil(cfg.max_perturb_fraction * static_cast<double>(len)));
  double cur_conf = base->conf;

  for (int pos : order) {
    if (perturbed.size() >= budget) break;
    const auto cands = candidates_for(cur[static_cast<std::size_t>(pos)], lexicon, params,
                                      vocab, policy.source, cfg);
    if (cands.empty()) continue;

    bool have_best = false;
    std::string best_word;
    double best_drop = 0.0;
    Observation best_ob;
    for (const std::string& cand : cands) {
      std::vector<std::string> v = cur;
      v[static_cast<std::size_t>(pos)] = cand;
      const auto ob = session.query(v);
      if (!ob) return finish();
      const double drop = cur_conf - ob->conf;
      if (!have_best || drop > best_drop ||
          (drop == best_drop && cand < best_word)) {
        have_best = true;
        best_word = cand;
        best_drop = drop;
        best_ob = *ob;
      }
    }
    if (!have_best || !(best_drop > 0.0)) continue;

    cur[static_cast<std::size_t>(pos)] = best_word;
    perturbed.push_back(pos);
    cur_conf = best_ob.conf;
    if (best_ob.pred != target_class) break;  // class flip: done
  }
  return finish();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The three attack variants
// ---------------------------------------------------------------------------

inline AttackResult pwws_lite(const ModelParams& params, const Vocab& vocab,
                              const SynonymLexicon& lexicon, const Example& example,
                              const AttackConfig& cfg) {
  detail::GreedyPolicy policy;
  policy.ranking = ImportanceMethod::kUnkSaliency;
  policy.source = detail::CandidateSource::kLexicon;
  policy.weight_by_best_drop = true;
  return detail::greedy_attack(params, vocab, lexicon, example, cfg, policy);
}

inline AttackResult textfooler_lite(const ModelParams& params, const Vocab& vocab,
                                    const SynonymLexicon& lexicon, const Example& example,
                                    const AttackConfig& cfg) {
  detail::GreedyPolicy policy;
  policy.ranking = ImportanceMethod::kDeletion;
  policy.source = detail::CandidateSource::kLexiconCosine;
  return detail::greedy_attack(params, vocab, lexicon, example, cfg, policy);
}

inline AttackResult deepwordbug_lite(const ModelParams& params, const Vocab& vocab,
                                     const Example& example, const AttackConfig& cfg) {
  detail::GreedyPolicy policy;
  policy.ranking = ImportanceMethod::kUnkSaliency;
  policy.source = detail::CandidateSource::kCharTransforms;
  static const SynonymLexicon kNoLexicon;
  return detail::greedy_attack(params, vocab, kNoLexicon, example, cfg, policy);
}

enum class AttackKind { kPwws, kTextfooler, kDeepwordbug };

inline const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::kPwws: return "pwws";
    case AttackKind::kTextfooler: return "tf";
    case AttackKind::kDeepwordbug: return "dg";
  }
  return "?";
}

inline AttackKind attack_from_name(const std::string& name) {
  if (name == "pwws") return AttackKind::kPwws;
  if (name == "tf" || name == "textfooler") return AttackKind::kTextfooler;
  if (name == "dg" || name == "deepwordbug") return AttackKind::kDeepwordbug;
  throw ValidationError("unknown attack: " + name);
}

inline AttackResult run_attack(AttackKind kind, const ModelParams& params, const Vocab& vocab,
                               const SynonymLexicon& lexicon, const Example& example,
                               const AttackConfig& cfg) {
  switch (kind) {
    case AttackKind::kPwws: return pwws_lite(params, vocab, lexicon, example, cfg);
    case AttackKind::kTextfooler: return textfooler_lite(params, vocab, lexicon, example, cfg);
    case AttackKind::kDeepwordbug: return deepwordbug_lite(params, vocab, example, cfg);
  }
  throw ValidationError("unknown attack kind");
}

// ---------------------------------------------------------------------------
// Evaluation protocol: adversarial examples are searched on the
// temperature-scaled model (cfg.temperature), then scored on the unmodified
// model at T = 1. Already-misclassified examples contribute indicator 0
// without being attacked.
// ---------------------------------------------------------------------------

inline AdvEvalReport evaluate_attack(AttackKind kind, const ModelParams& params,
                                     const Vocab& vocab, const SynonymLexicon& lexicon,
                                     const Dataset& dataset, const AttackConfig& cfg) {
  if (dataset.empty()) throw EmptyDataset();
  AdvEvalReport rep;
  long long clean_correct = 0;
  long long still_correct = 0;
  long long attempted = 0;
  double query_sum = 0.0;
  double fraction_sum = 0.0;

  for (const Example& ex : dataset.examples) {
    AttackResult r = run_attack(kind, params, vocab, lexicon, ex, cfg);
    const bool clean_ok = r.orig_pred == ex.label;
    if (clean_ok) ++clean_correct;

    int indicator = 0;
    if (r.attempted) {
      ++attempted;
      query_sum += static_cast<double>(r.queries);
      fraction_sum += static_cast<double>(r.perturbed_positions.size()) /
                      static_cast<double>(r.orig_tokens.size());
      indicator = (r.adv_pred == ex.label) ? 1 : 0;
    }
    rep.indicators.push_back(indicator);
    still_correct += indicator;
    rep.results.push_back(std::move(r));
  }

  const auto n = static_cast<double>(dataset.size());
  rep.clean_accuracy = static_cast<double>(clean_correct) / n;
  rep.adversarial_accuracy = static_cast<double>(still_correct) / n;
  if (attempted > 0) {
    rep.mean_queries = query_sum / static_cast<double>(attempted);
    rep.mean_perturbed_fraction = fraction_sum / static_cast<double>(attempted);
  }
  return rep;
}

// Re-score recorded adversarial examples against another model. Examples the
// target already misclassifies on the clean tokens count 0, mirroring the
// conditioning used by evaluate_attack.
inline AdvEvalReport transfer_evaluate(const std::vector<AttackResult>& source_results,
                                       const ModelParams& target, const Vocab& target_vocab) {
  AdvEvalReport rep;
  long long clean_correct = 0;
  long long still_correct = 0;
  for (const AttackResult& r : source_results) {
    const int clean_pred = predict(target, encode(r.orig_tokens, target_vocab), 1.0).predicted;
    const bool clean_ok = clean_pred == r.original.label;
    if (clean_ok) ++clean_correct;
    int indicator = 0;
    if (clean_ok) {
      const int adv_pred = predict(target, encode(r.adv_tokens, target_vocab), 1.0).predicted;
      indicator = (adv_pred == r.original.label) ? 1 : 0;
    }
    rep.indicators.push_back(indicator);
    still_correct += indicator;
  }
  const auto n = static_cast<double>(source_results.size());
  if (n > 0) {
    rep.clean_accuracy = static_cast<double>(clean_correct) / n;
    rep.adversarial_accuracy = static_cast<double>(still_correct) / n;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// AttackResult JSONL stream
// ---------------------------------------------------------------------------

inline void write_attack_results(const std::vector<AttackResult>& results,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write attack results: " + path);
  for (const AttackResult& r : results) {
    nlohmann::json j{{"id", r.original.id},
                     {"label", r.original.label},
                     {"success", r.success},
                     {"attempted", r.attempted},
                     {"queries", r.queries},
                     {"perturbed_positions", r.perturbed_positions},
                     {"orig_tokens", r.orig_tokens},
                     {"adv_tokens", r.adv_tokens},
                     {"orig_pred", r.orig_pred},
                     {"adv_pred", r.adv_pred}};
    out << j.dump() << '\n';
  }
}

inline std::vector<AttackResult> read_attack_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open attack results: " + path);
  std::vector<AttackResult> results;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(lineno, "invalid JSON");
    AttackResult r;
    r.original.id = j.at("id").get<int>();
    r.original.label = j.at("label").get<int>();
    r.success = j.at("success").get<bool>();
    r.attempted = j.at("attempted").get<bool>();
    r.queries = j.at("queries").get<long long>();
    r.perturbed_positions = j.at("perturbed_positions").get<std::vector<int>>();
    r.orig_tokens = j.at("orig_tokens").get<std::vector<std::string>>();
    r.adv_tokens = j.at("adv_tokens").get<std::vector<std::string>>();
    r.orig_pred = j.at("orig_pred").get<int>();
    r.adv_pred = j.at("adv_pred").get<int>();
    for (std::size_t i = 0; i < r.orig_tokens.size(); ++i) {
      if (i) r.original.text.push_back(' ');
      r.original.text += r.orig_tokens[i];
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace iorlab
