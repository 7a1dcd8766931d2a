#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdp/corpus.hpp"
#include "cdp/index.hpp"

namespace cdp {

/// Outcome of ranking one dialog.
struct QueryResult {
  std::string dialog_id;
  std::string gold;
  std::vector<std::string> ranked;    // full ordering returned by the ranker
  std::optional<std::size_t> gold_rank;  // 1-based; empty when gold is not ranked
  std::string provenance;
  std::string error;                     // non-empty when the ranker failed
};

/// gold_rank = 1 + number of documents ranked above gold.
QueryResult make_query_result(std::string dialog_id, std::string gold, const RankedList& ranking);

/// Fraction of results whose gold_rank <= k. Throws on empty input or k = 0.
double recall_at_k(std::span<const QueryResult> results, std::size_t k);

/// Mean of 1 / gold_rank, 0 for unranked gold. Throws on empty input.
double mean_reciprocal_rank(std::span<const QueryResult> results);

inline constexpr std::array<std::size_t, 4> kReportedCutoffs = {1, 2, 5, 10};

struct MetricsRow {
  std::string model;
  std::array<double, 4> recall{};  // at kReportedCutoffs
  double mrr = 0.0;
  std::size_t queries = 0;
  std::size_t failures = 0;
};

MetricsRow summarize(std::string model, std::span<const QueryResult> results);

struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::string provenance;  // JSON text describing the run configuration
};

/// Aligned plain-text table: one row per model, columns R@1 R@2 R@5 R@10 MRR.
std::string format_table(const MetricsReport& report);
std::string to_json(const MetricsReport& report);

/// Per-query JSON lines: dialog_id, gold, gold_rank (null if absent), top-10
/// ids, provenance, and error when present.
void write_query_results(std::ostream& out, std::span<const QueryResult> results);

using Ranker = std::function<RankedList(const Dialog&)>;

/// Called once per worker before the run starts; each ranker is then used by
/// one thread only.
using RankerFactory = std::function<Ranker()>;

struct ExperimentResult {
  MetricsRow row;
  std::vector<QueryResult> queries;  // in dialog order
};

/// Ranks every dialog, collecting per-query results. A throwing ranker is
/// recorded on that query, which then counts as a miss. Output does not depend
/// on the number of threads.
ExperimentResult run_experiment(const std::string& model, const RankerFactory& make_ranker,
                                std::span<const Dialog> dialogs, const DocumentPool& pool, unsigned threads = 1);

}  // namespace cdp
