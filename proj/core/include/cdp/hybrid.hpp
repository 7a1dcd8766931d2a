#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdp/cascade.hpp"
#include "cdp/corpus.hpp"
#include "cdp/index.hpp"
#include "cdp/subprocess.hpp"

namespace cdp {

inline constexpr int kProtocolVersion = 1;

struct Candidate {
  std::string doc_id;
  std::vector<std::string> doc_tokens;
  bool operator==(const Candidate&) const = default;
};

struct ScoreRequest {
  std::string query_id;
  std::vector<std::string> dialog_tokens;
  std::vector<Candidate> candidates;
  bool operator==(const ScoreRequest&) const = default;
};

struct DocScore {
  std::string doc_id;
  double score = 0.0;
  bool operator==(const DocScore&) const = default;
};

/// Either `scores` or a non-empty `error`.
struct ScoreResponse {
  std::string query_id;
  std::vector<DocScore> scores;
  std::string error;
  bool operator==(const ScoreResponse&) const = default;
};

/// Protocol v1 wire codec: one JSON object per line, no embedded newlines.
std::string encode_request(const ScoreRequest& request);
ScoreRequest decode_request(std::string_view line);
std::string encode_response(const ScoreResponse& response);
ScoreResponse decode_response(std::string_view line);

struct ScorerOptions {
  std::chrono::milliseconds timeout{30000};
};

/// Connection to an external scorer speaking protocol v1. The scorer prints
/// {"ready": true} once at startup, then answers each request line with one
/// response line. One request in flight at a time; lines carrying another
/// query_id (late answers to timed-out requests) are discarded.
class ScorerHandle {
 public:
  /// Spawns `/bin/sh -c command` and waits for readiness.
  static ScorerHandle spawn(const std::string& command, ScorerOptions options = {});
  /// Connects to a scorer listening on a Unix-domain socket.
  static ScorerHandle connect(const std::string& socket_path, ScorerOptions options = {});
  /// Wraps an existing channel and waits for readiness.
  ScorerHandle(std::unique_ptr<LineChannel> channel, ScorerOptions options);

  /// Throws ProtocolError on timeout, malformed lines or an error response.
  ScoreResponse request(const ScoreRequest& request);

  const ScorerOptions& options() const noexcept { return options_; }
  int protocol_version() const noexcept { return kProtocolVersion; }

 private:
  std::unique_ptr<LineChannel> channel_;
  ScorerOptions options_;
};

struct HybridOptions {
  std::size_t k = 20;
  std::size_t dialog_tokens = 256;
  std::size_t doc_tokens = 256;
  TruncationStrategy dialog_strategy = TruncationStrategy::InputB;
};

/// Request for `candidates`: dialog tokens truncated with the configured
/// strategy, document tokens cut to their first `doc_tokens`.
ScoreRequest build_request(const Dialog& dialog, std::span<const Document* const> candidates,
                           const HybridOptions& options);

/// One round trip. The result covers exactly the candidates; anything else is
/// a ProtocolError carrying the query id.
std::map<std::string, double> score_candidates(ScorerHandle& scorer, const Dialog& dialog,
                                               std::span<const Document* const> candidates,
                                               const HybridOptions& options = {});

/// Reorders the top min(k, n) entries by scorer score (ties keep IRC order) and
/// appends the rest untouched. Re-ranked entries get tail_top + 1 + minmax
/// of their scorer score so list scores stay non-increasing.
RankedList rerank_top_k(const RankedList& irc_ranking, ScorerHandle& scorer, const Dialog& dialog,
                        const DocumentPool& pool, const HybridOptions& options = {});

/// IRC followed by rerank_top_k. On ProtocolError the IRC ranking is returned
/// with provenance "hybrid-fallback".
RankedList hybrid_rank(const FieldedIndex& index, const Dialog& dialog, const CascadeConfig& config,
                       ScorerHandle& scorer, const DocumentPool& pool, const HybridOptions& options = {});

}  // namespace cdp
