#pragma once

#include <array>
#include <string>
#include <vector>

#include "iorlab/common.hpp"
#include "iorlab/text.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Bundled toy corpus: a generated two-class keyword-sentiment task.
//
// Each example mixes 1..3 sentiment keywords (two strength tiers) into
// neutral filler; a fraction of examples carries one weak opposite-class
// word and a fraction of labels is flipped. The noise keeps trained margins
// bounded and produces the spread of per-example margins the attack and
// temperature experiments rely on.
// ---------------------------------------------------------------------------

struct ToyCorpusConfig {
  int size = 2000;
  int min_len = 5;
  int max_len = 12;
  double label_noise = 0.15;
  double contrast_prob = 0.15;  // chance of one weak opposite-class word
  double strong_prob = 0.7;     // keyword drawn from the strong tier
};

namespace toywords {

inline const std::vector<std::string>& strong_pos() {
  static const std::vector<std::string> w = {
      "excellent", "wonderful", "superb",    "fantastic", "brilliant", "amazing",
      "delightful", "perfect",  "stunning",  "charming",  "masterful", "glorious"};
  return w;
}

inline const std::vector<std::string>& weak_pos() {
  static const std::vector<std::string> w = {"good", "nice",  "fun",   "enjoyable",
                                             "fine", "solid", "fresh", "warm"};
  return w;
}

inline const std::vector<std::string>& strong_neg() {
  static const std::vector<std::string> w = {
      "terrible", "awful",  "horrible", "dreadful", "atrocious",   "abysmal",
      "dire",     "appalling", "wretched", "dismal", "lousy", "unbearable"};
  return w;
}

inline const std::vector<std::string>& weak_neg() {
  static const std::vector<std::string> w = {"bad",   "dull",  "boring", "weak",
                                             "bland", "tired", "flat",   "slow"};
  return w;
}

inline const std::vector<std::string>& filler() {
  static const std::vector<std::string> w = {
      "the",     "a",       "this",    "that",    "movie",  "film",    "plot",    "story",
      "actor",   "actress", "scene",   "script",  "cast",   "camera",  "music",   "sound",
      "ending",  "opening", "dialog",  "pacing",  "set",    "costume", "theme",   "tone",
      "style",   "moment",  "minute",  "hour",    "night",  "day",     "week",    "time",
      "people",  "crowd",   "screen",  "seat",    "ticket", "review",  "critic",  "viewer",
      "director", "writer", "editor",  "crew",    "studio", "budget",  "series",  "season",
      "episode", "chapter", "line",    "word",    "voice",  "face",    "look",    "feel",
      "start",   "finish",  "middle",  "part"};
  return w;
}

}  // namespace toywords

inline Dataset make_toy_corpus(const ToyCorpusConfig& cfg, std::uint64_t seed,
                               const std::string& split_tag = "train") {
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = 2;
  ds.split_tag = split_tag;
  ds.examples.reserve(cfg.size);

  auto pick = [&rng](const std::vector<std::string>& pool) -> const std::string& {
    return pool[rng.next_index(pool.size())];
  };

  for (int i = 0; i < cfg.size; ++i) {
    const int cls = rng.next_double() < 0.5 ? 0 : 1;  // 0 = negative, 1 = positive
    const int len = cfg.min_len + static_cast<int>(rng.next_index(
                                      static_cast<std::size_t>(cfg.max_len - cfg.min_len + 1)));

    const double r = rng.next_double();
    const int num_keywords = r < 0.35 ? 1 : (r < 0.75 ? 2 : 3);

    std::vector<std::string> words;
    for (int k = 0; k < num_keywords && static_cast<int>(words.size()) < len; ++k) {
      const bool strong = rng.next_double() < cfg.strong_prob;
      const auto& pool = cls == 1 ? (strong ? toywords::strong_pos() : toywords::weak_pos())
                                  : (strong ? toywords::strong_neg() : toywords::weak_neg());
      words.push_back(pick(pool));
    }
    if (rng.next_double() < cfg.contrast_prob && static_cast<int>(words.size()) < len) {
      words.push_back(pick(cls == 1 ? toywords::weak_neg() : toywords::weak_pos()));
    }
    while (static_cast<int>(words.size()) < len) {
      words.push_back(pick(toywords::filler()));
    }
    rng.shuffle(words);

    Example ex;
    ex.id = i;
    ex.label = rng.next_double() < cfg.label_noise ? 1 - cls : cls;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) ex.text.push_back(' ');
      ex.text += words[w];
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// Hand-built substitution lexicon for the toy vocabulary. Every keyword maps
// to a mix of same-tier words (no attack progress), weaker words, neutral
// filler, and for some entries a weak opposite-class word, so the candidate
// choice genuinely matters. A few filler words also carry entries, which
// gives attacks somewhere to waste budget when their ranking signal is gone.
inline SynonymLexicon toy_lexicon() {
  SynonymLexicon lex;
  auto add = [&lex](const std::string& w, std::vector<std::string> syns) {
    lex.entries[w] = std::move(syns);
  };

  // strong positive
  add("excellent", {"superb", "good", "fine", "solid"});
  add("wonderful", {"amazing", "nice", "warm", "plain"});
  add("superb", {"excellent", "good", "solid"});
  add("fantastic", {"brilliant", "fun", "fresh", "odd"});
  add("brilliant", {"fantastic", "nice", "bright"});
  add("amazing", {"wonderful", "fun", "big"});
  add("delightful", {"charming", "nice", "light"});
  add("perfect", {"stunning", "fine", "complete"});
  add("stunning", {"perfect", "warm", "plain"});
  add("charming", {"delightful", "nice", "mild"});
  add("masterful", {"glorious", "solid", "skilled"});
  add("glorious", {"masterful", "warm", "grand"});

  // weak positive
  add("good", {"excellent", "fine", "decent", "plain"});
  add("nice", {"charming", "warm", "mild", "plain"});
  add("fun", {"fantastic", "fresh", "light"});
  add("enjoyable", {"fun", "nice", "passable"});
  add("fine", {"good", "solid", "plain", "thin"});
  add("solid", {"superb", "fine", "firm"});
  add("fresh", {"fun", "warm", "new"});
  add("warm", {"nice", "fresh", "mild"});

  // strong negative
  add("terrible", {"awful", "bad", "dull", "rough"});
  add("awful", {"terrible", "bad", "bland", "odd"});
  add("horrible", {"dreadful", "weak", "grim"});
  add("dreadful", {"horrible", "dull", "grim"});
  add("atrocious", {"abysmal", "bad", "crude"});
  add("abysmal", {"atrocious", "weak", "deep"});
  add("dire", {"dismal", "bland", "stark"});
  add("appalling", {"wretched", "bad", "stark"});
  add("wretched", {"appalling", "tired", "poor"});
  add("dismal", {"dire", "flat", "gray"});
  add("lousy", {"bad", "slow", "cheap"});
  add("unbearable", {"terrible", "tired", "heavy"});

  // weak negative
  add("bad", {"terrible", "dull", "poor", "plain"});
  add("dull", {"boring", "bland", "plain", "mild"});
  add("boring", {"dull", "slow", "long"});
  add("weak", {"bad", "flat", "thin"});
  add("bland", {"dull", "tired", "mild", "plain"});
  add("tired", {"weak", "slow", "worn"});
  add("flat", {"bland", "slow", "level"});
  add("slow", {"boring", "flat", "late"});

  // a few filler words with harmless substitutes
  add("movie", {"film", "picture", "feature"});
  add("film", {"movie", "picture", "reel"});
  add("plot", {"story", "setup", "arc"});
  add("story", {"plot", "tale", "arc"});
  add("actor", {"actress", "player", "lead"});
  add("scene", {"moment", "shot", "frame"});
  add("music", {"sound", "score", "tune"});
  add("ending", {"finish", "close", "finale"});
  add("start", {"opening", "outset", "top"});
  add("time", {"hour", "while", "spell"});
  add("look", {"feel", "glance", "air"});
  add("people", {"crowd", "folks", "public"});

  return lex;
}

}  // namespace iorlab
