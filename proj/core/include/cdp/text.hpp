#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace cdp {

/// Byte range [begin, end) of a term in the analyzed source text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

/// Normalized terms in source order. All terms are lowercase, stopword-free
/// and stemmed; spans[i] locates terms[i] in the original text.
struct TermSequence {
  std::vector<std::string> terms;
  std::vector<Span> spans;

  std::size_t size() const noexcept { return terms.size(); }
  bool empty() const noexcept { return terms.empty(); }
};

/// The shipped English stopword list (version 1).
const std::unordered_set<std::string>& default_stopwords();

/// Parses a stopword resource: one term per line, '#' starts a comment.
std::unordered_set<std::string> parse_stopwords(std::string_view text);

/// Porter stemmer, following Martin Porter's reference C implementation.
std::string porter_stem(std::string_view word);

/// English analysis chain: tokenize on whitespace and punctuation (ASCII and
/// common Unicode ranges), drop possessive 's, lowercase, remove stopwords,
/// Porter-stem.
TermSequence analyze(std::string_view text);
TermSequence analyze(std::string_view text,
                     const std::unordered_set<std::string>& stopwords);

/// Tokens for the neural side of the hybrid stage: split on whitespace and
/// lowercase only. No stemming, no stopword removal.
std::vector<std::string> neural_tokens(std::string_view text);

/// Replaces every run of whitespace by one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Term -> p(w|C). Expected to be a distribution over its keys.
using CollectionModel = std::map<std::string, double>;

struct Smoothing {
  enum class Kind { MLE, Dirichlet };
  Kind kind = Kind::MLE;
  double mu = 0.0;

  static Smoothing mle() { return {Kind::MLE, 0.0}; }
  static Smoothing dirichlet(double mu) { return {Kind::Dirichlet, mu}; }
};

/// Unigram language model. Sums to 1 over `probabilities`' keys.
struct LanguageModel {
  std::map<std::string, double> probabilities;
  Smoothing smoothing;

  double probability(const std::string& term) const;
};

/// MLE: p(w) = tf/len. Dirichlet: p(w) = (tf + mu p(w|C)) / (len + mu), with
/// support equal to the terms plus the collection model's keys.
LanguageModel estimate_lm(const std::vector<std::string>& terms,
                          const CollectionModel& collection,
                          Smoothing smoothing);

/// Bhattacharyya coefficient: sum over the union of supports of sqrt(p q).
double bhattacharyya(const LanguageModel& p, const LanguageModel& q);

}  // namespace cdp
