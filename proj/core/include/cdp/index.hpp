#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdp/corpus.hpp"
#include "cdp/text.hpp"

namespace cdp {

enum class Field : std::uint8_t { Content = 0, Anchor = 1 };
inline constexpr std::array<Field, 2> kFields = {Field::Content, Field::Anchor};

std::string_view field_name(Field f);

using TermId = std::uint32_t;
using DocIndex = std::uint32_t;

struct Posting {
  DocIndex doc;
  std::uint32_t tf;
  bool operator==(const Posting&) const = default;
};

struct TermCount {
  TermId term;
  std::uint32_t tf;
  bool operator==(const TermCount&) const = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct FieldBoosts {
  double content = 1.0;
  double anchor = 1.0;

  double operator[](Field f) const { return f == Field::Content ? content : anchor; }
  static FieldBoosts content_only() { return {1.0, 0.0}; }
};

/// Inverted index over two fields: the document content, and anchor text made
/// of the training dialogs that link to the document. Immutable once built;
/// safe for concurrent readers.
class FieldedIndex {
 public:
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  const std::string& doc_id(DocIndex doc) const { return doc_ids_[doc]; }
  std::optional<DocIndex> find_doc(std::string_view doc_id) const;

  std::size_t term_count() const noexcept { return terms_.size(); }
  const std::string& term(TermId id) const { return terms_[id]; }
  std::optional<TermId> term_id(std::string_view term) const;

  std::span<const Posting> postings(Field f, TermId t) const { return field(f).postings[t]; }
  std::span<const TermCount> doc_terms(Field f, DocIndex doc) const { return field(f).forward[doc]; }
  std::size_t df(Field f, TermId t) const { return field(f).postings[t].size(); }
  std::uint32_t tf(Field f, TermId t, DocIndex doc) const;
  std::uint64_t collection_frequency(Field f, TermId t) const { return field(f).cf[t]; }

  std::uint32_t length(Field f, DocIndex doc) const { return field(f).lengths[doc]; }
  std::uint64_t total_length(Field f) const { return field(f).total_length; }
  double average_length(Field f) const;

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(Field f, TermId t) const;

  /// Number of documents whose field `f` contains both terms.
  std::size_t co_document_count(Field f, TermId a, TermId b) const;

  const Bm25Params& params() const noexcept { return params_; }

  /// Deterministic tie-break: true when a's id sorts before b's.
  bool id_before(DocIndex a, DocIndex b) const { return id_rank_[a] < id_rank_[b]; }

 private:
  struct FieldData {
    std::vector<std::vector<Posting>> postings;   // by term id, sorted by doc
    std::vector<std::vector<TermCount>> forward;  // by doc, sorted by term id
    std::vector<std::uint32_t> lengths;
    std::vector<std::uint64_t> cf;
    std::uint64_t total_length = 0;
  };

  const FieldData& field(Field f) const { return fields_[static_cast<std::size_t>(f)]; }
  FieldData& field(Field f) { return fields_[static_cast<std::size_t>(f)]; }

  TermId intern(const std::string& term);
  void set_forward(Field f, DocIndex doc, std::vector<TermCount> counts);
  void rebuild_postings(Field f);
  void rank_ids();

  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, DocIndex> doc_by_id_;
  std::vector<DocIndex> id_rank_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, TermId> term_by_name_;
  std::array<FieldData, 2> fields_;
  Bm25Params params_;

  friend FieldedIndex build_index(std::span<const Document>, Bm25Params);
  friend FieldedIndex attach_anchor_text(FieldedIndex, std::span<const Dialog>);
  friend FieldedIndex load_index(std::istream&);
};

/// Analyzes every document into the Content field. The Anchor field is empty.
/// Throws InvalidArgument on an empty list and DataError on duplicate ids.
FieldedIndex build_index(std::span<const Document> documents, Bm25Params params = {});
FieldedIndex build_index(const DocumentPool& pool, Bm25Params params = {});

/// Appends each training dialog's analyzed text to the Anchor field of its
/// gold document. Content statistics are untouched.
FieldedIndex attach_anchor_text(FieldedIndex index, std::span<const Dialog> train_dialogs);

/// Versioned JSON snapshot.
void save_index(const FieldedIndex& index, std::ostream& out);
FieldedIndex load_index(std::istream& in);

struct QueryClause {
  TermSequence terms;
  double weight = 0.0;
};

/// Bag of weighted terms, optionally carrying the clause structure it was
/// built from. The flattened weight of a term is the sum over clauses of
/// clause weight times within-clause term frequency.
class WeightedQuery {
 public:
  WeightedQuery() = default;

  /// Throws InvalidArgument for negative or non-finite weights.
  void add_clause(TermSequence terms, double weight);
  void add_weight(const std::string& term, double weight);

  static WeightedQuery from_terms(const TermSequence& terms);
  static WeightedQuery from_weights(const std::map<std::string, double>& weights);

  const std::vector<QueryClause>& clauses() const noexcept { return clauses_; }
  const std::map<std::string, double>& weights() const noexcept { return weights_; }
  double total_weight() const;
  bool empty() const noexcept { return weights_.empty(); }

  /// Copy with all weights scaled to sum to 1. Throws when the total is 0.
  WeightedQuery normalized() const;
  WeightedQuery scaled(double factor) const;

 private:
  std::vector<QueryClause> clauses_;
  std::map<std::string, double> weights_;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

/// Documents in descending score order. `provenance` names the producing stage.
struct RankedList {
  std::vector<ScoredDoc> entries;
  std::string provenance;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  const ScoredDoc& operator[](std::size_t i) const { return entries[i]; }
  std::vector<std::string> doc_ids() const;
};

/// A query resolved against an index: per-field per-term weight * idf.
/// Shared by bm25_score and retrieve so both produce bit-identical scores.
class Bm25Scorer {
 public:
  Bm25Scorer(const FieldedIndex& index, const FieldBoosts& boosts, const WeightedQuery& query);

  double score(DocIndex doc) const;

  /// Top-n documents matching at least one query term, ties by ascending id.
  std::vector<std::pair<DocIndex, double>> top(std::size_t n) const;

 private:
  struct Term {
    TermId id;
    double weight;  // boost * w(t) * idf
  };
  double contribution(Field f, const Term& t, std::uint32_t tf, DocIndex doc) const;

  const FieldedIndex& index_;
  std::array<std::vector<Term>, 2> terms_;
  std::array<double, 2> avg_len_{};
};

/// BM25 score of one document. Throws DataError for an unknown doc id.
double bm25_score(const FieldedIndex& index, const FieldBoosts& boosts, const WeightedQuery& query,
                  std::string_view doc_id);

/// Top-n documents by BM25 with at least one matching term.
RankedList retrieve(const FieldedIndex& index, const FieldBoosts& boosts, const WeightedQuery& query,
                    std::size_t n);

}  // namespace cdp
