#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "iorlab/common.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Example {
  std::string text;
  int label = 0;
  int id = 0;
};

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 2;
  std::string split_tag = "train";

  bool empty() const { return examples.empty(); }
  std::size_t size() const { return examples.size(); }
};

// Token ids 0 and 1 are reserved; real tokens start at 2, assigned by
// descending training frequency with lexicographic tie-break.
struct Vocab {
  static constexpr int kUnkId = 0;
  static constexpr int kPadId = 1;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // index = id

  int size() const { return static_cast<int>(id_to_token.size()); }

  int id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnkId : it->second;
  }
};

// word -> ordered candidate substitutes; all lowercase, never self-referential
struct SynonymLexicon {
  std::map<std::string, std::vector<std::string>> entries;

  const std::vector<std::string>* candidates(const std::string& word) const {
    auto it = entries.find(word);
    return it == entries.end() ? nullptr : &it->second;
  }
  bool empty() const { return entries.empty(); }
};

// ---------------------------------------------------------------------------
// Tokenization: lowercase, split on whitespace, detach punctuation runs into
// separate single-character tokens.
// ---------------------------------------------------------------------------

inline bool is_punct_char(unsigned char c) {
  return std::ispunct(c) != 0;
}

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (is_punct_char(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

inline Vocab build_vocab(const Dataset& train, int min_freq) {
  if (train.empty()) throw EmptyDataset();
  std::map<std::string, long long> freq;  // ordered: gives the lexicographic tie-break
  for (const Example& ex : train.examples) {
    for (const std::string& tok : tokenize(ex.text)) ++freq[tok];
  }
  std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.id_to_token = {"<unk>", "<pad>"};
  v.token_to_id = {{"<unk>", Vocab::kUnkId}, {"<pad>", Vocab::kPadId}};
  for (const auto& [tok, n] : items) {
    if (n < min_freq) continue;
    v.token_to_id.emplace(tok, v.size());
    v.id_to_token.push_back(tok);
  }
  return v;
}

inline std::vector<int> encode(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(vocab.id_of(tok));
  return ids;
}

// ---------------------------------------------------------------------------
// Dataset loading.  JSONL: one {"text": ..., "label": ...} object per line.
// CSV: header "text,label", RFC 4180 quoting.
// ---------------------------------------------------------------------------

enum class DatasetFormat { kJsonl, kCsv };

namespace detail {

inline void check_label(int label, int num_classes, std::size_t line) {
  if (label < 0 || label >= num_classes) {
    (void)line;
    throw LabelOutOfRange(label, num_classes);
  }
}

// Splits one RFC 4180 record that is already known to be a full record
// (no embedded newlines are produced by our writers; readers still accept
// them via read_csv_record below).
struct CsvReader {
  std::istream& in;
  std::size_t line_number = 0;

  // Returns false at EOF. Fields are unescaped.
  bool next_record(std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
      any = true;
      char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (in.peek() == '"') {
            in.get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(ch);
        }
      } else if (ch == '"') {
        in_quotes = true;
      } else if (ch == ',') {
        fields.push_back(field);
        field.clear();
      } else if (ch == '\n') {
        ++line_number;
        fields.push_back(field);
        return true;
      } else if (ch == '\r') {
        // swallow; \r\n handled by the \n branch
      } else {
        field.push_back(ch);
      }
    }
    if (in_quotes) throw ParseError(line_number + 1, "unterminated quoted field");
    if (!any) return false;
    ++line_number;
    fields.push_back(field);
    return true;
  }
};

}  // namespace detail

inline Dataset load_dataset(const std::string& path, DatasetFormat format, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);

  Dataset ds;
  ds.num_classes = num_classes;
  int next_id = 0;

  if (format == DatasetFormat::kJsonl) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j.contains("label") ||
          !j["text"].is_string() || !j["label"].is_number_integer()) {
        throw ParseError(lineno, "expected {\"text\": string, \"label\": integer}");
      }
      Example ex;
      ex.text = j["text"].get<std::string>();
      ex.label = j["label"].get<int>();
      detail::check_label(ex.label, num_classes, lineno);
      ex.id = next_id++;
      ds.examples.push_back(std::move(ex));
    }
  } else {
    detail::CsvReader reader{in};
    std::vector<std::string> fields;
    if (!reader.next_record(fields) || fields.size() != 2 || fields[0] != "text" ||
        fields[1] != "label") {
      throw ParseError(1, "expected CSV header \"text,label\"");
    }
    while (reader.next_record(fields)) {
      if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
      if (fields.size() != 2) throw ParseError(reader.line_number, "expected 2 fields");
      Example ex;
      ex.text = fields[0];
      try {
        std::size_t pos = 0;
        ex.label = std::stoi(fields[1], &pos);
        if (pos != fields[1].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(reader.line_number, "label is not an integer: " + fields[1]);
      }
      detail::check_label(ex.label, num_classes, reader.line_number);
      ex.id = next_id++;
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

inline void save_dataset_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file: " + path);
  for (const Example& ex : ds.examples) {
    nlohmann::json j{{"text", ex.text}, {"label", ex.label}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Lexicon loading: TSV "word<TAB>syn1,syn2,...". Lowercased, self-synonyms
// dropped, blank lines skipped.
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline SynonymLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open lexicon file: " + path);
  SynonymLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "missing tab separator");
    std::string word = to_lower(line.substr(0, tab));
    if (word.empty()) throw ParseError(lineno, "empty head word");
    std::vector<std::string> syns;
    std::string rest = line.substr(tab + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      std::size_t comma = rest.find(',', start);
      std::string syn =
          to_lower(rest.substr(start, comma == std::string::npos ? std::string::npos
                                                                 : comma - start));
      if (!syn.empty() && syn != word) syns.push_back(syn);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    lex.entries[word] = std::move(syns);
  }
  return lex;
}

inline void save_lexicon(const SynonymLexicon& lex, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write lexicon file: " + path);
  for (const auto& [word, syns] : lex.entries) {
    out << word << '\t';
    for (std::size_t i = 0; i < syns.size(); ++i) {
      if (i) out << ',';
      out << syns[i];
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Stratified split with largest-remainder rounding.
//
// Per label class: shuffle that class's indices (seeded), give each split
// floor(fraction * n_class) examples, then hand out the remaining ones to the
// splits with the largest fractional remainders. Partition is exact.
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

inline SplitResult split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::fabs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw InvalidRatios("split fractions must be non-negative and sum to 1");
  }

  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    by_label[dataset.examples[i].label].push_back(i);
  }

  const double fracs[3] = {ratios.train, ratios.val, ratios.test};
  std::vector<std::size_t> assigned[3];

  Rng rng(seed);
  for (auto& [label, idxs] : by_label) {
    Rng class_rng = rng.fork(static_cast<std::uint64_t>(label) + 1);
    class_rng.shuffle(idxs);

    const std::size_t n = idxs.size();
    std::size_t counts[3];
    double remainders[3];
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      double want = fracs[s] * static_cast<double>(n);
      counts[s] = static_cast<std::size_t>(std::floor(want));
      remainders[s] = want - std::floor(want);
      used += counts[s];
    }
    std::size_t leftover = n - used;
    // hand leftovers to the largest remainders; tie goes to the earlier split
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3,
                     [&](int a, int b) { return remainders[a] > remainders[b]; });
    for (std::size_t k = 0; k < leftover; ++k) ++counts[order[k % 3]];

    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) assigned[s].push_back(idxs[pos++]);
    }
  }

  SplitResult out;
  Dataset* dsts[3] = {&out.train, &out.val, &out.test};
  const char* tags[3] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    std::sort(assigned[s].begin(), assigned[s].end());
    dsts[s]->num_classes = dataset.num_classes;
    dsts[s]->split_tag = tags[s];
    for (std::size_t i : assigned[s]) dsts[s]->examples.push_back(dataset.examples[i]);
  }
  return out;
}

}  // namespace iorlab
