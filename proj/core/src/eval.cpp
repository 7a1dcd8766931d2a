#include "cdp/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "cdp/error.hpp"

namespace cdp {

using json = nlohmann::json;

QueryResult make_query_result(std::string dialog_id, std::string gold, const RankedList& ranking) {
  QueryResult r;
  r.dialog_id = std::move(dialog_id);
  r.gold = std::move(gold);
  r.provenance = ranking.provenance;
  r.ranked = ranking.doc_ids();
  auto it = std::find(r.ranked.begin(), r.ranked.end(), r.gold);
  if (it != r.ranked.end()) r.gold_rank = static_cast<std::size_t>(it - r.ranked.begin()) + 1;
  return r;
}

double recall_at_k(std::span<const QueryResult> results, std::size_t k) {
  if (results.empty()) throw InvalidArgument("recall_at_k: no results");
  if (k == 0) throw InvalidArgument("recall_at_k: k must be >= 1");
  const auto hits = std::count_if(results.begin(), results.end(),
                                  [k](const QueryResult& r) { return r.gold_rank && *r.gold_rank <= k; });
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double mean_reciprocal_rank(std::span<const QueryResult> results) {
  if (results.empty()) throw InvalidArgument("mean_reciprocal_rank: no results");
  double sum = 0.0;
  for (const auto& r : results)
    if (r.gold_rank) sum += 1.0 / static_cast<double>(*r.gold_rank);
  return sum / static_cast<double>(results.size());
}

MetricsRow summarize(std::string model, std::span<const QueryResult> results) {
  MetricsRow row;
  row.model = std::move(model);
  row.queries = results.size();
  row.failures = static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const QueryResult& r) { return !r.error.empty(); }));
  for (std::size_t i = 0; i < kReportedCutoffs.size(); ++i) row.recall[i] = recall_at_k(results, kReportedCutoffs[i]);
  row.mrr = mean_reciprocal_rank(results);
  return row;
}

std::string format_table(const MetricsReport& report) {
  std::size_t width = 5;
  for (const auto& row : report.rows) width = std::max(width, row.model.size());
  std::ostringstream out;
  char buf[64];
  auto cell = [&](const char* fmt, auto value) {
    std::snprintf(buf, sizeof buf, fmt, value);
    out << buf;
  };
  out << "Model" << std::string(width - 5, ' ');
  for (const char* h : {"R@1", "R@2", "R@5", "R@10", "MRR"}) cell("  %7s", h);
  cell("  %7s", "queries");
  out << '\n';
  for (const auto& row : report.rows) {
    out << row.model << std::string(width - row.model.size(), ' ');
    for (double r : row.recall) cell("  %7.4f", r);
    cell("  %7.4f", row.mrr);
    cell("  %7zu", row.queries);
    out << '\n';
  }
  return out.str();
}

std::string to_json(const MetricsReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r = {{"model", row.model}, {"mrr", row.mrr}, {"queries", row.queries}, {"failures", row.failures}};
    for (std::size_t i = 0; i < kReportedCutoffs.size(); ++i)
      r["recall@" + std::to_string(kReportedCutoffs[i])] = row.recall[i];
    rows.push_back(std::move(r));
  }
  json obj = {{"rows", std::move(rows)}};
  obj["config"] = report.provenance.empty() ? json::object() : json::parse(report.provenance);
  return obj.dump(2) + "\n";
}

void write_query_results(std::ostream& out, std::span<const QueryResult> results) {
  for (const auto& r : results) {
    json line = {{"dialog_id", r.dialog_id}, {"gold", r.gold}, {"provenance", r.provenance}};
    line["gold_rank"] = r.gold_rank ? json(*r.gold_rank) : json(nullptr);
    const std::size_t top = std::min<std::size_t>(10, r.ranked.size());
    line["top"] = std::vector<std::string>(r.ranked.begin(), r.ranked.begin() + static_cast<std::ptrdiff_t>(top));
    if (!r.error.empty()) line["error"] = r.error;
    out << line.dump() << '\n';
  }
}

ExperimentResult run_experiment(const std::string& model, const RankerFactory& make_ranker,
                                std::span<const Dialog> dialogs, const DocumentPool& pool, unsigned threads) {
  for (const auto& d : dialogs) {
    if (!pool.contains(d.gold_url))
      throw DataError("run_experiment: gold " + d.gold_url + " of dialog " + d.dialog_id + " not in pool");
  }
  ExperimentResult result;
  result.queries.resize(dialogs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&](const Ranker& rank) {
    for (std::size_t i = next++; i < dialogs.size(); i = next++) {
      const Dialog& d = dialogs[i];
      try {
        result.queries[i] = make_query_result(d.dialog_id, d.gold_url, rank(d));
      } catch (const std::exception& e) {
        QueryResult failed;
        failed.dialog_id = d.dialog_id;
        failed.gold = d.gold_url;
        failed.provenance = model;
        failed.error = e.what();
        result.queries[i] = std::move(failed);
      }
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, dialogs.size()))));
  // Rankers are built up front so construction failures surface here.
  std::vector<Ranker> rankers;
  for (unsigned t = 0; t < threads; ++t) rankers.push_back(make_ranker());
  if (threads == 1) {
    worker(rankers.front());
  } else {
    std::vector<std::jthread> pool_threads;
    for (const Ranker& r : rankers) pool_threads.emplace_back(worker, std::cref(r));
  }
  if (!result.queries.empty()) result.row = summarize(model, result.queries);
  else result.row.model = model;
  return result;
}

}  // namespace cdp
