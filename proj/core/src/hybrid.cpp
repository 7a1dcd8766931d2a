#include "cdp/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cdp/error.hpp"
#include "cdp/text.hpp"

namespace cdp {

using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::string> string_list(const ojson& arr, const char* what) {
  if (!arr.is_array()) throw DataError(std::string(what) + " must be an array");
  std::vector<std::string> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_string()) throw DataError(std::string(what) + " must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

ojson parse_object(std::string_view line) {
  ojson obj;
  try {
    obj = ojson::parse(line);
  } catch (const ojson::exception& e) {
    throw DataError(std::string("malformed protocol line: ") + e.what());
  }
  if (!obj.is_object()) throw DataError("protocol line is not a JSON object");
  return obj;
}

std::string query_id_of(const ojson& obj) {
  auto it = obj.find("query_id");
  if (it == obj.end() || !it->is_string()) throw DataError("missing string \"query_id\"");
  return it->get<std::string>();
}

}  // namespace

std::string encode_request(const ScoreRequest& request) {
  ojson cands = ojson::array();
  for (const auto& c : request.candidates) cands.push_back({{"doc_id", c.doc_id}, {"doc_tokens", c.doc_tokens}});
  ojson obj = {{"query_id", request.query_id},
               {"dialog_tokens", request.dialog_tokens},
               {"candidates", std::move(cands)}};
  return obj.dump();
}

ScoreRequest decode_request(std::string_view line) {
  const ojson obj = parse_object(line);
  ScoreRequest r;
  r.query_id = query_id_of(obj);
  r.dialog_tokens = string_list(obj.value("dialog_tokens", ojson()), "dialog_tokens");
  const ojson& cands = obj.value("candidates", ojson());
  if (!cands.is_array()) throw DataError("candidates must be an array");
  for (const auto& c : cands) {
    if (!c.is_object() || !c.contains("doc_id") || !c["doc_id"].is_string())
      throw DataError("candidate needs a string doc_id");
    r.candidates.push_back({c["doc_id"].get<std::string>(), string_list(c.value("doc_tokens", ojson()), "doc_tokens")});
  }
  return r;
}

std::string encode_response(const ScoreResponse& response) {
  ojson obj = {{"query_id", response.query_id}};
  if (!response.error.empty()) {
    obj["error"] = response.error;
  } else {
    ojson scores = ojson::array();
    for (const auto& s : response.scores) scores.push_back({{"doc_id", s.doc_id}, {"score", s.score}});
    obj["scores"] = std::move(scores);
  }
  return obj.dump();
}

ScoreResponse decode_response(std::string_view line) {
  const ojson obj = parse_object(line);
  ScoreResponse r;
  r.query_id = query_id_of(obj);
  if (auto it = obj.find("error"); it != obj.end()) {
    r.error = it->is_string() ? it->get<std::string>() : it->dump();
    if (r.error.empty()) r.error = "unspecified scorer error";
    return r;
  }
  auto it = obj.find("scores");
  if (it == obj.end() || !it->is_array()) throw DataError("response needs a \"scores\" array");
  for (const auto& s : *it) {
    if (!s.is_object() || !s.contains("doc_id") || !s["doc_id"].is_string() || !s.contains("score") ||
        !s["score"].is_number())
      throw DataError("score entries need a string doc_id and a numeric score");
    r.scores.push_back({s["doc_id"].get<std::string>(), s["score"].get<double>()});
  }
  return r;
}

ScorerHandle::ScorerHandle(std::unique_ptr<LineChannel> channel, ScorerOptions options)
    : channel_(std::move(channel)), options_(options) {
  std::optional<std::string> line;
  try {
    line = channel_->read_line(options_.timeout);
  } catch (const Error& e) {
    throw ProtocolError("", std::string("scorer failed before signalling readiness: ") + e.what());
  }
  if (!line) throw ProtocolError("", "scorer did not signal readiness within the timeout");
  try {
    const ojson obj = parse_object(*line);
    if (obj.value("ready", false) != true) throw DataError("expected {\"ready\": true}");
  } catch (const DataError& e) {
    throw ProtocolError("", std::string("bad readiness line: ") + e.what());
  }
}

ScorerHandle ScorerHandle::spawn(const std::string& command, ScorerOptions options) {
  return ScorerHandle(std::make_unique<Subprocess>(command), options);
}

ScorerHandle ScorerHandle::connect(const std::string& socket_path, ScorerOptions options) {
  return ScorerHandle(SocketChannel::connect_unix(socket_path), options);
}

ScoreResponse ScorerHandle::request(const ScoreRequest& request) {
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  try {
    channel_->write_line(encode_request(request));
    for (;;) {
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) break;
      auto line = channel_->read_line(remaining);
      if (!line) break;
      ScoreResponse response = decode_response(*line);
      if (response.query_id != request.query_id) continue;  // stale answer
      if (!response.error.empty()) throw ProtocolError(request.query_id, "scorer error: " + response.error);
      return response;
    }
  } catch (const ProtocolError&) {
    throw;
  } catch (const Error& e) {
    throw ProtocolError(request.query_id, e.what());
  }
  throw ProtocolError(request.query_id,
                      "scorer timed out after " + std::to_string(options_.timeout.count()) + " ms");
}

ScoreRequest build_request(const Dialog& dialog, std::span<const Document* const> candidates,
                           const HybridOptions& options) {
  ScoreRequest r;
  r.query_id = dialog.dialog_id;
  r.dialog_tokens =
      select_context_tokens(neural_tokens(dialog.context_text()), options.dialog_tokens, options.dialog_strategy);
  for (const Document* doc : candidates) {
    r.candidates.push_back({doc->doc_id, select_context_tokens(neural_tokens(doc->content), options.doc_tokens,
                                                               TruncationStrategy::InputA)});
  }
  return r;
}

std::map<std::string, double> score_candidates(ScorerHandle& scorer, const Dialog& dialog,
                                               std::span<const Document* const> candidates,
                                               const HybridOptions& options) {
  if (candidates.empty()) throw InvalidArgument("score_candidates: no candidates");
  const ScoreRequest request = build_request(dialog, candidates, options);
  const ScoreResponse response = scorer.request(request);

  std::set<std::string> expected;
  for (const auto& c : request.candidates) expected.insert(c.doc_id);
  std::map<std::string, double> scores;
  for (const auto& s : response.scores) {
    if (!expected.contains(s.doc_id)) throw ProtocolError(request.query_id, "unexpected doc_id " + s.doc_id);
    if (!std::isfinite(s.score)) throw ProtocolError(request.query_id, "non-finite score for " + s.doc_id);
    if (!scores.emplace(s.doc_id, s.score).second)
      throw ProtocolError(request.query_id, "duplicate doc_id " + s.doc_id);
  }
  if (scores.size() != expected.size()) {
    for (const auto& id : expected)
      if (!scores.contains(id)) throw ProtocolError(request.query_id, "missing score for " + id);
  }
  return scores;
}

RankedList rerank_top_k(const RankedList& irc_ranking, ScorerHandle& scorer, const Dialog& dialog,
                        const DocumentPool& pool, const HybridOptions& options) {
  if (options.k == 0) throw InvalidArgument("rerank_top_k: k must be >= 1");
  RankedList out;
  out.provenance = "hybrid";
  const std::size_t top = std::min(options.k, irc_ranking.size());
  if (top == 0) return out;

  std::vector<const Document*> docs;
  for (std::size_t i = 0; i < top; ++i) {
    const Document* doc = pool.find(irc_ranking[i].doc_id);
    if (!doc) throw DataError("rerank_top_k: document not in pool: " + irc_ranking[i].doc_id);
    docs.push_back(doc);
  }
  const auto scores = score_candidates(scorer, dialog, docs, options);

  std::vector<double> raw(top);
  for (std::size_t i = 0; i < top; ++i) raw[i] = scores.at(irc_ranking[i].doc_id);
  std::vector<std::size_t> order(top);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a] > raw[b]; });

  const double base = top < irc_ranking.size() ? irc_ranking[top].score + 1.0 : 1.0;
  const auto norm = min_max(raw);
  for (std::size_t i : order) out.entries.push_back({irc_ranking[i].doc_id, base + norm[i]});
  out.entries.insert(out.entries.end(), irc_ranking.entries.begin() + static_cast<std::ptrdiff_t>(top),
                     irc_ranking.entries.end());
  return out;
}

RankedList hybrid_rank(const FieldedIndex& index, const Dialog& dialog, const CascadeConfig& config,
                       ScorerHandle& scorer, const DocumentPool& pool, const HybridOptions& options) {
  RankedList irc = cascade_rank(index, dialog, config);
  try {
    return rerank_top_k(irc, scorer, dialog, pool, options);
  } catch (const ProtocolError&) {
    irc.provenance = "hybrid-fallback";
    return irc;
  }
}

}  // namespace cdp
