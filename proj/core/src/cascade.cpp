#include "cdp/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>

#include <json.hpp>

#include "cdp/error.hpp"

namespace cdp {

using json = nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("cascade config: " + what);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

// Reads `key` from `obj` into `out` if present.
template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw InvalidArgument("cascade config: unknown key \"" + key + "\" in " + where);
  }
}

double content_idf(const FieldedIndex& index, const std::string& term) {
  const double n = static_cast<double>(index.doc_count());
  const auto id = index.term_id(term);
  const double df = id ? static_cast<double>(index.df(Field::Content, *id)) : 0.0;
  return std::log1p((n - df + 0.5) / (df + 0.5));
}

std::vector<std::string> distinct_terms(std::string_view text) {
  auto terms = analyze(text).terms;
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return terms;
}

RankedList order_pool(const FieldedIndex& index, std::span<const DocIndex> pool, std::span<const double> scores,
                      std::string provenance) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.id_before(pool[a], pool[b]);
  });
  RankedList list;
  list.provenance = std::move(provenance);
  for (std::size_t i : order) list.entries.push_back({index.doc_id(pool[i]), scores[i]});
  return list;
}

}  // namespace

void CascadeConfig::validate() const {
  require(first_pass >= 1, "first_pass must be >= 1");
  require(rerank_pool >= 1 && rerank_pool <= first_pass, "rerank_pool must be in [1, first_pass]");
  double total = 0.0;
  for (double w : stage_weights) {
    require(finite_nonneg(w), "stage weights must be finite and >= 0");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, "stage weights must sum to 1");
  require(finite_nonneg(boosts.content) && finite_nonneg(boosts.anchor), "field boosts must be finite and >= 0");
  require(rm.fb_docs >= 1 && rm.fb_terms >= 1, "fb_docs and fb_terms must be >= 1");
  require(rm.mix >= 0.0 && rm.mix <= 1.0, "relevance model mix must be in [0, 1]");
  require(finite_nonneg(rm.mu), "relevance model mu must be finite and >= 0");
  require(manifold.alpha >= 0.0 && manifold.alpha < 1.0, "manifold alpha must be in [0, 1)");
  require(manifold.tolerance > 0.0 && fp.tolerance > 0.0, "tolerances must be positive");
  require(manifold.max_iterations >= 1 && fp.max_iterations >= 1, "max_iterations must be >= 1");
  require(std::isfinite(manifold.mu) && manifold.mu > 0.0, "manifold mu must be positive");
  require(fp.delta >= 0.0 && fp.delta < 1.0, "fixed-point delta must be in [0, 1)");
}

CascadeConfig parse_cascade_config(std::string_view json_text) {
  CascadeConfig c;
  try {
    const json obj = json::parse(json_text);
    if (!obj.is_object()) throw InvalidArgument("cascade config: expected a JSON object");
    reject_unknown(obj,
                   {"first_pass", "rerank_pool", "stage_weights", "boosts", "relevance_model", "manifold",
                    "fixed_point"},
                   "cascade");
    read(obj, "first_pass", c.first_pass);
    read(obj, "rerank_pool", c.rerank_pool);
    if (auto it = obj.find("stage_weights"); it != obj.end()) {
      if (!it->is_array() || it->size() != 4) throw InvalidArgument("cascade config: stage_weights needs 4 values");
      for (std::size_t i = 0; i < 4; ++i) c.stage_weights[i] = (*it)[i].get<double>();
    }
    if (auto it = obj.find("boosts"); it != obj.end()) {
      reject_unknown(*it, {"content", "anchor"}, "boosts");
      read(*it, "content", c.boosts.content);
      read(*it, "anchor", c.boosts.anchor);
    }
    if (auto it = obj.find("relevance_model"); it != obj.end()) {
      reject_unknown(*it, {"fb_docs", "fb_terms", "mix", "mu"}, "relevance_model");
      read(*it, "fb_docs", c.rm.fb_docs);
      read(*it, "fb_terms", c.rm.fb_terms);
      read(*it, "mix", c.rm.mix);
      read(*it, "mu", c.rm.mu);
    }
    if (auto it = obj.find("manifold"); it != obj.end()) {
      reject_unknown(*it, {"alpha", "tolerance", "max_iterations", "mu"}, "manifold");
      read(*it, "alpha", c.manifold.alpha);
      read(*it, "tolerance", c.manifold.tolerance);
      read(*it, "max_iterations", c.manifold.max_iterations);
      read(*it, "mu", c.manifold.mu);
    }
    if (auto it = obj.find("fixed_point"); it != obj.end()) {
      reject_unknown(*it, {"delta", "tolerance", "max_iterations"}, "fixed_point");
      read(*it, "delta", c.fp.delta);
      read(*it, "tolerance", c.fp.tolerance);
      read(*it, "max_iterations", c.fp.max_iterations);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("cascade config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_json(const CascadeConfig& c) {
  json obj = {
      {"first_pass", c.first_pass},
      {"rerank_pool", c.rerank_pool},
      {"stage_weights", c.stage_weights},
      {"boosts", {{"content", c.boosts.content}, {"anchor", c.boosts.anchor}}},
      {"relevance_model", {{"fb_docs", c.rm.fb_docs}, {"fb_terms", c.rm.fb_terms}, {"mix", c.rm.mix}, {"mu", c.rm.mu}}},
      {"manifold",
       {{"alpha", c.manifold.alpha},
        {"tolerance", c.manifold.tolerance},
        {"max_iterations", c.manifold.max_iterations},
        {"mu", c.manifold.mu}}},
      {"fixed_point",
       {{"delta", c.fp.delta}, {"tolerance", c.fp.tolerance}, {"max_iterations", c.fp.max_iterations}}},
  };
  return obj.dump();
}

double TermWeights::get(const std::string& term) const {
  auto it = weights.find(term);
  return it == weights.end() ? 0.0 : it->second;
}

double TermWeights::sum() const {
  double s = 0.0;
  for (const auto& [t, w] : weights) s += w;
  return s;
}

WeightedQuery utterance_query(const Dialog& dialog) {
  const std::size_t n = dialog.utterances.size();
  const double denom = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
  WeightedQuery q;
  for (std::size_t i = 0; i < n; ++i) {
    q.add_clause(analyze(dialog.utterances[i].text), static_cast<double>(i + 1) / denom);
  }
  if (q.empty()) throw InvalidArgument("utterance_query: dialog " + dialog.dialog_id + " has no indexable terms");
  return q;
}

std::vector<std::pair<std::string, double>> relevance_model(const FieldedIndex& index, const WeightedQuery& query,
                                                            const RankedList& first_pass,
                                                            const RelevanceModelParams& params) {
  if (first_pass.empty()) throw InvalidArgument("relevance_model: empty first-pass ranking");
  const std::size_t fb = std::min(params.fb_docs, first_pass.size());
  const double total = static_cast<double>(index.total_length(Field::Content));
  const double mu = total > 0.0 ? params.mu : 0.0;
  auto collection = [&](TermId t) {
    return total > 0.0 ? static_cast<double>(index.collection_frequency(Field::Content, t)) / total : 0.0;
  };

  std::vector<DocIndex> docs;
  for (std::size_t i = 0; i < fb; ++i) {
    auto d = index.find_doc(first_pass[i].doc_id);
    if (!d) throw DataError("relevance_model: unknown document " + first_pass[i].doc_id);
    docs.push_back(*d);
  }

  // Query terms the collection has never seen scale every document equally.
  std::vector<std::pair<TermId, double>> qterms;
  for (const auto& [term, w] : query.weights()) {
    auto id = index.term_id(term);
    if (id && w > 0.0 && index.collection_frequency(Field::Content, *id) > 0) qterms.emplace_back(*id, w);
  }

  auto prob = [&](DocIndex d, TermId t) {
    const double len = index.length(Field::Content, d);
    const double denom = len + mu;
    if (denom == 0.0) return 0.0;
    return (index.tf(Field::Content, t, d) + mu * collection(t)) / denom;
  };

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> loglik(docs.size(), 0.0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (const auto& [t, w] : qterms) {
      const double p = prob(docs[i], t);
      loglik[i] += p > 0.0 ? w * std::log(p) : kNegInf;
    }
  }
  const double best = *std::max_element(loglik.begin(), loglik.end());
  std::vector<double> doc_weight(docs.size(), 1.0);
  if (best != kNegInf) {
    for (std::size_t i = 0; i < docs.size(); ++i) doc_weight[i] = std::exp(loglik[i] - best);
  }

  std::set<TermId> vocab;
  for (DocIndex d : docs)
    for (const TermCount& tc : index.doc_terms(Field::Content, d)) vocab.insert(tc.term);

  std::vector<std::pair<std::string, double>> rm;
  double norm = 0.0;
  for (TermId t : vocab) {
    double p = 0.0;
    for (std::size_t i = 0; i < docs.size(); ++i) p += doc_weight[i] * prob(docs[i], t);
    rm.emplace_back(index.term(t), p);
    norm += p;
  }
  if (norm > 0.0) {
    for (auto& [term, p] : rm) p /= norm;
  }
  std::sort(rm.begin(), rm.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return rm;
}

WeightedQuery expand_relevance_model(const FieldedIndex& index, const WeightedQuery& query,
                                     const RankedList& first_pass, const RelevanceModelParams& params) {
  const WeightedQuery original = query.normalized();
  std::map<std::string, double> mixed;
  for (const auto& [term, w] : original.weights()) mixed[term] = params.mix * w;
  if (params.mix < 1.0) {
    auto rm = relevance_model(index, query, first_pass, params);
    rm.resize(std::min(rm.size(), params.fb_terms));
    double mass = 0.0;
    for (const auto& [term, p] : rm) mass += p;
    if (mass > 0.0) {
      for (const auto& [term, p] : rm) mixed[term] += (1.0 - params.mix) * p / mass;
    }
  }
  return WeightedQuery::from_weights(mixed);
}

Matrix bhattacharyya_affinity(std::span<const LanguageModel> lms) {
  Matrix w(lms.size());
  for (std::size_t i = 0; i < lms.size(); ++i) {
    for (std::size_t j = i + 1; j < lms.size(); ++j) {
      const double bc = bhattacharyya(lms[i], lms[j]);
      w(i, j) = bc;
      w(j, i) = bc;
    }
  }
  return w;
}

namespace {

// Collection model over the union content vocabulary of `docs`.
std::map<TermId, double> union_collection(const FieldedIndex& index, std::span<const DocIndex> docs) {
  std::map<TermId, double> c;
  for (DocIndex d : docs)
    for (const TermCount& tc : index.doc_terms(Field::Content, d)) c[tc.term] = 0.0;
  double total = 0.0;
  for (auto& [t, p] : c) {
    p = static_cast<double>(index.collection_frequency(Field::Content, t));
    total += p;
  }
  if (total > 0.0) {
    for (auto& [t, p] : c) p /= total;
  }
  return c;
}

}  // namespace

std::vector<LanguageModel> candidate_language_models(const FieldedIndex& index, std::span<const DocIndex> docs,
                                                     double mu) {
  CollectionModel collection;
  for (const auto& [t, p] : union_collection(index, docs)) collection[index.term(t)] = p;
  std::vector<LanguageModel> lms;
  for (DocIndex d : docs) {
    std::vector<std::string> terms;
    for (const TermCount& tc : index.doc_terms(Field::Content, d)) terms.insert(terms.end(), tc.tf, index.term(tc.term));
    if (collection.empty()) {
      lms.push_back(LanguageModel{{}, Smoothing::dirichlet(mu)});
    } else {
      lms.push_back(estimate_lm(terms, collection, Smoothing::dirichlet(mu)));
    }
  }
  return lms;
}

Matrix dirichlet_affinity(const FieldedIndex& index, std::span<const DocIndex> docs, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("dirichlet_affinity: mu must be positive");
  const std::size_t n = docs.size();
  Matrix w(n);
  const auto cmap = union_collection(index, docs);
  if (cmap.empty()) return w;
  std::vector<double> c(index.term_count(), 0.0);
  for (const auto& [t, p] : cmap) c[t] = p;

  std::vector<double> len(n);
  for (std::size_t i = 0; i < n; ++i) len[i] = index.length(Field::Content, docs[i]);

  // Terms outside both supports contribute mu c(w) / sqrt((Li + mu)(Lj + mu))
  // each; their total collection mass is 1 minus the mass of the union.
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = index.doc_terms(Field::Content, docs[i]);
    const double di = len[i] + mu;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = index.doc_terms(Field::Content, docs[j]);
      const double dj = len[j] + mu;
      double sum = 0.0;
      double covered = 0.0;
      std::size_t x = 0, y = 0;
      while (x < a.size() || y < b.size()) {
        TermId t;
        double tfa = 0.0, tfb = 0.0;
        if (y == b.size() || (x < a.size() && a[x].term < b[y].term)) {
          t = a[x].term;
          tfa = a[x++].tf;
        } else if (x == a.size() || b[y].term < a[x].term) {
          t = b[y].term;
          tfb = b[y++].tf;
        } else {
          t = a[x].term;
          tfa = a[x++].tf;
          tfb = b[y++].tf;
        }
        sum += std::sqrt((tfa + mu * c[t]) / di * ((tfb + mu * c[t]) / dj));
        covered += c[t];
      }
      sum += mu / std::sqrt(di * dj) * std::max(0.0, 1.0 - covered);
      const double bc = std::min(sum, 1.0);
      w(i, j) = bc;
      w(j, i) = bc;
    }
  }
  return w;
}

Matrix symmetric_normalize(const Matrix& affinity) {
  const std::size_t n = affinity.n;
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += affinity(i, j);
    inv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  Matrix s(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = inv_sqrt[i] * affinity(i, j) * inv_sqrt[j];
  return s;
}

ManifoldResult manifold_rank(const Matrix& affinity, std::span<const double> init_scores, double alpha,
                             double tolerance, int max_iterations) {
  const std::size_t n = init_scores.size();
  if (n == 0 || affinity.n != n) throw InvalidArgument("manifold_rank: affinity and score sizes differ or are empty");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("manifold_rank: alpha must be in [0, 1)");
  if (!(tolerance > 0.0) || max_iterations < 1) throw InvalidArgument("manifold_rank: bad stopping parameters");
  for (double y : init_scores)
    if (!std::isfinite(y)) throw InvalidArgument("manifold_rank: non-finite initial score");
  for (double v : affinity.values)
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("manifold_rank: affinity must be finite and >= 0");

  ManifoldResult result;
  result.scores.assign(init_scores.begin(), init_scores.end());
  if (n == 1) {
    result.converged = true;
    return result;
  }

  const Matrix s = symmetric_normalize(affinity);
  std::vector<double> next(n);
  for (int it = 1; it <= max_iterations; ++it) {
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += s(i, j) * result.scores[j];
      next[i] = alpha * acc + (1.0 - alpha) * init_scores[i];
      delta = std::max(delta, std::abs(next[i] - result.scores[i]));
    }
    result.scores.swap(next);
    result.deltas.push_back(delta);
    result.iterations = it;
    if (delta < tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

ManifoldResult manifold_rank(std::span<const LanguageModel> candidate_lms, std::span<const double> init_scores,
                             double alpha, double tolerance, int max_iterations) {
  if (candidate_lms.size() != init_scores.size())
    throw InvalidArgument("manifold_rank: one initial score per candidate required");
  return manifold_rank(bhattacharyya_affinity(candidate_lms), init_scores, alpha, tolerance, max_iterations);
}

FixedPointResult fixed_point_weights(const FieldedIndex& index, const TermSequence& query_terms,
                                     const FixedPointParams& params) {
  if (query_terms.empty()) throw InvalidArgument("fixed_point_weights: query has no terms");
  if (!(params.delta >= 0.0 && params.delta < 1.0)) throw InvalidArgument("fixed_point_weights: delta must be in [0, 1)");
  if (!(params.tolerance > 0.0) || params.max_iterations < 1)
    throw InvalidArgument("fixed_point_weights: bad stopping parameters");

  std::map<std::string, double> tf;
  for (const auto& t : query_terms.terms) tf[t] += 1.0;
  const std::size_t n = tf.size();
  std::vector<std::string> vocab;
  std::vector<double> base;
  std::vector<std::optional<TermId>> ids;
  for (const auto& [term, count] : tf) {
    vocab.push_back(term);
    base.push_back(count * content_idf(index, term));
    ids.push_back(index.term_id(term));
  }
  const double base_total = std::accumulate(base.begin(), base.end(), 0.0);
  for (double& b : base) b /= base_total;

  // Content co-document cosine between query terms.
  Matrix sim(n);
  std::vector<double> mass(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ids[i]) continue;
    const double dfi = static_cast<double>(index.df(Field::Content, *ids[i]));
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!ids[j]) continue;
      const double dfj = static_cast<double>(index.df(Field::Content, *ids[j]));
      if (dfi == 0.0 || dfj == 0.0) continue;
      const double co = static_cast<double>(index.co_document_count(Field::Content, *ids[i], *ids[j]));
      const double v = co / std::sqrt(dfi * dfj);
      sim(i, j) = v;
      sim(j, i) = v;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) mass[i] += sim(i, j);

  FixedPointResult result;
  std::vector<double> s = base;
  std::vector<double> next(n);
  for (int it = 1; it <= params.max_iterations; ++it) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mass[i] > 0.0) {
        double support = 0.0;
        for (std::size_t j = 0; j < n; ++j) support += sim(i, j) * s[j];
        next[i] = (1.0 - params.delta) * base[i] + params.delta * support / mass[i];
      } else {
        next[i] = base[i];
      }
      total += next[i];
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= total;
      change += std::abs(next[i] - s[i]);
    }
    s.swap(next);
    result.iterations = it;
    if (change < params.tolerance) {
      result.converged = true;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) result.weights.weights[vocab[i]] = s[i];
  return result;
}

FixedPointResult fixed_point_weights(const FieldedIndex& index, const Dialog& dialog,
                                     const FixedPointParams& params) {
  return fixed_point_weights(index, analyze(dialog.context_text()), params);
}

TermWeights utterance_biased_reweight(const Dialog& dialog, const TermWeights& fp) {
  const std::size_t n = dialog.utterances.size();
  std::map<std::string, double> propagated;
  for (std::size_t i = 0; i < n; ++i) {
    const auto terms = distinct_terms(dialog.utterances[i].text);
    if (terms.empty()) continue;
    double mean = 0.0;
    for (const auto& t : terms) mean += fp.get(t);
    mean /= static_cast<double>(terms.size());
    const double score = static_cast<double>(i + 1) / static_cast<double>(n) * mean;
    for (const auto& t : terms) propagated[t] += score;
  }

  TermWeights out;
  double total = 0.0;
  for (const auto& [term, w] : fp.weights) {
    auto it = propagated.find(term);
    const double v = it == propagated.end() ? 0.0 : w * it->second;
    out.weights[term] = v;
    total += v;
  }
  if (!(total > 0.0)) return fp;
  for (auto& [term, w] : out.weights) w /= total;
  return out;
}

std::vector<double> min_max(std::span<const double> scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  std::vector<double> out(scores.size(), 1.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / range;
  }
  return out;
}

CascadeTrace cascade_rank_traced(const FieldedIndex& index, const Dialog& dialog, const CascadeConfig& config) {
  config.validate();
  CascadeTrace trace;
  const WeightedQuery first_query = utterance_query(dialog);
  trace.first_pass = retrieve(index, config.boosts, first_query, config.first_pass);
  trace.first_pass.provenance = "irc/stage1";
  trace.final.provenance = "irc";
  if (trace.first_pass.empty()) return trace;

  const std::size_t pool_size = std::min(config.rerank_pool, trace.first_pass.size());
  std::vector<DocIndex> pool(pool_size);
  std::array<std::vector<double>, 4> stage_scores;
  for (auto& s : stage_scores) s.resize(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) {
    pool[i] = *index.find_doc(trace.first_pass[i].doc_id);
    stage_scores[0][i] = trace.first_pass[i].score;
  }

  trace.expanded_query = expand_relevance_model(index, first_query, trace.first_pass, config.rm);
  const Bm25Scorer expanded(index, config.boosts, trace.expanded_query);
  for (std::size_t i = 0; i < pool_size; ++i) stage_scores[1][i] = expanded.score(pool[i]);

  const auto seeds = min_max(stage_scores[1]);
  const Matrix affinity = dirichlet_affinity(index, pool, config.manifold.mu);
  stage_scores[2] = manifold_rank(affinity, seeds, config.manifold.alpha, config.manifold.tolerance,
                                  config.manifold.max_iterations)
                        .scores;

  const auto fp = fixed_point_weights(index, dialog, config.fp);
  trace.utterance_weights = utterance_biased_reweight(dialog, fp.weights);
  const Bm25Scorer weighted(index, config.boosts, WeightedQuery::from_weights(trace.utterance_weights.weights));
  for (std::size_t i = 0; i < pool_size; ++i) stage_scores[3][i] = weighted.score(pool[i]);

  std::vector<double> combined(pool_size, 0.0);
  for (std::size_t j = 0; j < 4; ++j) {
    trace.stages[j] = order_pool(index, pool, stage_scores[j], "irc/stage" + std::to_string(j + 1));
    const auto norm = min_max(stage_scores[j]);
    for (std::size_t i = 0; i < pool_size; ++i) combined[i] += config.stage_weights[j] * norm[i];
  }
  trace.final = order_pool(index, pool, combined, "irc");

  if (trace.first_pass.size() > pool_size) {
    std::vector<double> first(trace.first_pass.size());
    for (std::size_t i = 0; i < first.size(); ++i) first[i] = trace.first_pass[i].score;
    const auto norm = min_max(first);
    for (std::size_t i = pool_size; i < first.size(); ++i)
      trace.final.entries.push_back({trace.first_pass[i].doc_id, norm[i] - 2.0});
  }
  return trace;
}

RankedList cascade_rank(const FieldedIndex& index, const Dialog& dialog, const CascadeConfig& config) {
  return cascade_rank_traced(index, dialog, config).final;
}

RankedList bm25_rank(const FieldedIndex& index, const Dialog& dialog, const FieldBoosts& boosts, std::size_t n) {
  const TermSequence terms = analyze(dialog.context_text());
  if (terms.empty()) throw InvalidArgument("bm25_rank: dialog " + dialog.dialog_id + " has no indexable terms");
  RankedList list = retrieve(index, boosts, WeightedQuery::from_terms(terms), n);
  list.provenance = "bm25";
  return list;
}

}  // namespace cdp
