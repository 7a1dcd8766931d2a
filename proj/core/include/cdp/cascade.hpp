#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdp/corpus.hpp"
#include "cdp/index.hpp"
#include "cdp/text.hpp"

namespace cdp {

struct RelevanceModelParams {
  std::size_t fb_docs = 10;
  std::size_t fb_terms = 20;
  double mix = 0.5;     // weight of the original query
  double mu = 2000.0;   // Dirichlet prior of feedback document models; 0 means MLE
};

struct ManifoldParams {
  double alpha = 0.6;
  double tolerance = 1e-6;
  int max_iterations = 200;
  double mu = 2000.0;  // Dirichlet prior of candidate document models
};

struct FixedPointParams {
  double delta = 0.5;
  double tolerance = 1e-4;
  int max_iterations = 50;
};

/// Every tunable of the four-stage cascade. Defaults are the documented
/// operating point; all of them can be overridden from JSON.
struct CascadeConfig {
  std::size_t first_pass = 1000;  // N1
  std::size_t rerank_pool = 100;  // N2
  std::array<double, 4> stage_weights = {0.2, 0.2, 0.3, 0.3};
  FieldBoosts boosts;
  RelevanceModelParams rm;
  ManifoldParams manifold;
  FixedPointParams fp;

  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;
};

/// Parses a JSON object; absent keys keep their defaults, unknown keys throw.
CascadeConfig parse_cascade_config(std::string_view json_text);
std::string to_json(const CascadeConfig& config);

/// Term weights on the probability simplex.
struct TermWeights {
  std::map<std::string, double> weights;

  double get(const std::string& term) const;
  double sum() const;
};

/// One clause per utterance, weighted i / (1 + ... + n) for the 1-based
/// position i, so later turns weigh more. Throws when every utterance
/// analyzes to nothing.
WeightedQuery utterance_query(const Dialog& dialog);

/// Relevance-model distribution P(w|R) over the content vocabulary of the top
/// fb_docs feedback documents, descending (ties by term). Sums to 1.
std::vector<std::pair<std::string, double>> relevance_model(const FieldedIndex& index, const WeightedQuery& query,
                                                            const RankedList& first_pass,
                                                            const RelevanceModelParams& params);

/// mix * normalized(query) + (1 - mix) * normalized(top fb_terms of P(w|R)).
WeightedQuery expand_relevance_model(const FieldedIndex& index, const WeightedQuery& query,
                                     const RankedList& first_pass, const RelevanceModelParams& params);

/// Dense row-major n x n matrix.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> values;

  explicit Matrix(std::size_t size = 0) : n(size), values(size * size, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// W_ij = bhattacharyya(lm_i, lm_j) off the diagonal, 0 on it.
Matrix bhattacharyya_affinity(std::span<const LanguageModel> lms);

/// Same matrix for Dirichlet-smoothed content models of `docs`, restricted to
/// their union vocabulary, computed from sparse statistics.
Matrix dirichlet_affinity(const FieldedIndex& index, std::span<const DocIndex> docs, double mu);

/// The generic-path models behind dirichlet_affinity.
std::vector<LanguageModel> candidate_language_models(const FieldedIndex& index, std::span<const DocIndex> docs,
                                                     double mu);

/// D^{-1/2} W D^{-1/2}; rows and columns with zero degree stay zero.
Matrix symmetric_normalize(const Matrix& affinity);

struct ManifoldResult {
  std::vector<double> scores;
  std::vector<double> deltas;  // max-norm change per iteration
  int iterations = 0;
  bool converged = false;
};

/// f <- alpha S f + (1 - alpha) y from f = y until the max-norm change falls
/// below tolerance or max_iterations is reached.
ManifoldResult manifold_rank(const Matrix& affinity, std::span<const double> init_scores, double alpha,
                             double tolerance, int max_iterations);
ManifoldResult manifold_rank(std::span<const LanguageModel> candidate_lms, std::span<const double> init_scores,
                             double alpha, double tolerance, int max_iterations);

struct FixedPointResult {
  TermWeights weights;
  int iterations = 0;
  bool converged = false;
};

/// Verbose-query term weights. Base evidence tf * idf is mixed with support
/// from associated terms (content co-document cosine) at rate delta and
/// projected back on the simplex each iteration.
FixedPointResult fixed_point_weights(const FieldedIndex& index, const TermSequence& query_terms,
                                     const FixedPointParams& params);
FixedPointResult fixed_point_weights(const FieldedIndex& index, const Dialog& dialog,
                                     const FixedPointParams& params);

/// Scores each utterance by (i / n) times the mean weight of its distinct
/// terms, then weights each term by fp(w) times the summed scores of the
/// utterances containing it. Renormalized; support never grows.
TermWeights utterance_biased_reweight(const Dialog& dialog, const TermWeights& fp);

/// (s - min) / (max - min); a constant input maps to all ones.
std::vector<double> min_max(std::span<const double> scores);

struct CascadeTrace {
  RankedList first_pass;             // stage 1 over N1 candidates
  std::array<RankedList, 4> stages;  // each stage's ordering of the N2 pool
  WeightedQuery expanded_query;
  TermWeights utterance_weights;
  RankedList final;
};

/// Full four-stage ranking: the N2 pool ordered by the interpolated min-max
/// normalized stage scores, followed by first-pass ranks N2+1..N1. Tail
/// entries carry minmax(s1) - 2 so they always sort below the pool.
RankedList cascade_rank(const FieldedIndex& index, const Dialog& dialog, const CascadeConfig& config);
CascadeTrace cascade_rank_traced(const FieldedIndex& index, const Dialog& dialog, const CascadeConfig& config);

/// Content-only BM25 over the whole dialog text: the single-stage baseline.
RankedList bm25_rank(const FieldedIndex& index, const Dialog& dialog, const FieldBoosts& boosts, std::size_t n);

}  // namespace cdp
