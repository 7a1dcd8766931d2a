#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdp/error.hpp"

namespace cdp {

enum class Speaker { User, Agent };

struct Utterance {
  Speaker speaker = Speaker::User;
  std::string text;      // whitespace-normalized; URLs removed from the final agent turn
  std::string raw_text;  // as ingested
  std::size_t index = 0;
};

struct Dialog {
  std::string dialog_id;
  std::vector<Utterance> utterances;
  std::string gold_url;

  /// Utterance texts joined by single spaces.
  std::string context_text() const;
};

struct Document {
  std::string doc_id;  // the URL
  std::string content;
  std::size_t token_count = 0;
};

/// Ordered document pool with id lookup. Ids are unique.
class DocumentPool {
 public:
  /// Throws DataError on a duplicate id.
  void add(Document doc);

  const Document* find(std::string_view doc_id) const;
  std::size_t position(std::string_view doc_id) const;  // throws DataError if absent
  bool contains(std::string_view doc_id) const { return find(doc_id) != nullptr; }

  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }
  std::span<const Document> documents() const noexcept { return docs_; }
  auto begin() const noexcept { return docs_.begin(); }
  auto end() const noexcept { return docs_.end(); }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// A record that failed to parse; `line` is 1-based within `source`.
struct RecordError {
  std::string source;
  std::size_t line = 0;
  std::string message;
};

struct Corpus {
  std::vector<Dialog> dialogs;
  DocumentPool pool;
  std::vector<RecordError> errors;
};

/// Parses dialogs.jsonl and documents.jsonl streams. Malformed records are
/// collected in `errors` with their line numbers; documents with empty content
/// are rejected the same way. A duplicate document url throws DataError.
Corpus load_corpus(std::istream& dialog_records, std::istream& document_records);
Corpus load_corpus_files(const std::filesystem::path& dialogs, const std::filesystem::path& documents);

/// http:// or https:// spans in `text`, trailing punctuation excluded.
struct UrlMatch {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string url;
};
std::vector<UrlMatch> find_urls(std::string_view text);

/// Counts of dialogs removed by each filtering rule.
struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t no_agent_url = 0;    // no agent utterance carries a URL
  std::size_t label_mismatch = 0;  // gold_url absent from the first URL-bearing agent turn
  std::size_t out_of_domain = 0;   // URL matches no allowlisted prefix
  std::size_t unresolved = 0;      // URL not in the document pool
};

struct FilterResult {
  Corpus corpus;
  FilterReport report;
};

/// Keeps dialogs whose first URL-bearing agent utterance links an allowlisted
/// document present in the pool, truncates them at that utterance and strips
/// the URLs from its text. An empty gold_url is taken from that utterance.
/// Idempotent. Throws InvalidArgument on an empty allowlist.
FilterResult filter_dialogs(Corpus corpus, std::span<const std::string> allowlist);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

struct CorpusSplit {
  std::vector<Dialog> train;
  std::vector<Dialog> dev;
  std::vector<Dialog> test;
  DocumentPool pool;

  const std::vector<Dialog>& by_name(std::string_view name) const;
};

/// Deterministic shuffle (by dialog_id order, then seeded Fisher-Yates) into
/// disjoint splits of the requested sizes.
CorpusSplit split_corpus(const Corpus& corpus, SplitSizes sizes, std::uint64_t seed);

struct TrainingTriple {
  std::string dialog_id;
  std::string doc_id;
  int label = 0;
  bool operator==(const TrainingTriple&) const = default;
};

inline constexpr int kDefaultNegatives = 4;

/// One positive and `num_negatives` distinct negatives per dialog, drawn
/// uniformly without replacement from the pool minus the gold document with
/// an RNG derived from (seed, dialog_id).
std::vector<TrainingTriple> export_triples(std::span<const Dialog> dialogs, const DocumentPool& pool,
                                           int num_negatives, std::uint64_t seed);
void write_triples(std::ostream& out, std::span<const TrainingTriple> triples);

enum class TruncationStrategy { InputA, InputB };

/// InputA keeps the first `limit` tokens. InputB keeps the first ceil(limit/2)
/// and the last floor(limit/2). Inputs within the limit are returned as is.
template <typename T>
std::vector<T> select_context_tokens(std::span<const T> tokens, std::size_t limit,
                                     TruncationStrategy strategy) {
  if (limit < 2) throw InvalidArgument("select_context_tokens: limit must be at least 2");
  if (tokens.size() <= limit) return {tokens.begin(), tokens.end()};
  if (strategy == TruncationStrategy::InputA) return {tokens.begin(), tokens.begin() + limit};
  const std::size_t head = (limit + 1) / 2;
  const std::size_t tail = limit / 2;
  std::vector<T> out(tokens.begin(), tokens.begin() + head);
  out.insert(out.end(), tokens.end() - tail, tokens.end());
  return out;
}

template <typename T>
std::vector<T> select_context_tokens(const std::vector<T>& tokens, std::size_t limit,
                                     TruncationStrategy strategy) {
  return select_context_tokens(std::span<const T>(tokens), limit, strategy);
}

}  // namespace cdp
