#include "cdp/index.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "cdp/error.hpp"

namespace cdp {

using json = nlohmann::json;

namespace {

constexpr const char* kSnapshotFormat = "cdp-fielded-index";
constexpr int kSnapshotVersion = 1;

std::vector<TermCount> to_counts(const std::map<TermId, std::uint32_t>& bag) {
  std::vector<TermCount> out;
  out.reserve(bag.size());
  for (const auto& [term, tf] : bag) out.push_back({term, tf});
  return out;
}

}  // namespace

std::string_view field_name(Field f) { return f == Field::Content ? "content" : "anchor"; }

std::optional<DocIndex> FieldedIndex::find_doc(std::string_view doc_id) const {
  auto it = doc_by_id_.find(std::string(doc_id));
  if (it == doc_by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<TermId> FieldedIndex::term_id(std::string_view term) const {
  auto it = term_by_name_.find(std::string(term));
  if (it == term_by_name_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t FieldedIndex::tf(Field f, TermId t, DocIndex doc) const {
  const auto& list = field(f).postings[t];
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, DocIndex d) { return p.doc < d; });
  return it != list.end() && it->doc == doc ? it->tf : 0;
}

double FieldedIndex::average_length(Field f) const {
  if (doc_ids_.empty()) return 0.0;
  return static_cast<double>(field(f).total_length) / static_cast<double>(doc_ids_.size());
}

double FieldedIndex::idf(Field f, TermId t) const {
  const double n = static_cast<double>(doc_count());
  const double df = static_cast<double>(this->df(f, t));
  return std::log1p((n - df + 0.5) / (df + 0.5));
}

std::size_t FieldedIndex::co_document_count(Field f, TermId a, TermId b) const {
  const auto& pa = field(f).postings[a];
  const auto& pb = field(f).postings[b];
  std::size_t i = 0, j = 0, both = 0;
  while (i < pa.size() && j < pb.size()) {
    if (pa[i].doc < pb[j].doc) {
      ++i;
    } else if (pb[j].doc < pa[i].doc) {
      ++j;
    } else {
      ++both;
      ++i;
      ++j;
    }
  }
  return both;
}

TermId FieldedIndex::intern(const std::string& term) {
  auto [it, inserted] = term_by_name_.emplace(term, static_cast<TermId>(terms_.size()));
  if (inserted) terms_.push_back(term);
  return it->second;
}

void FieldedIndex::set_forward(Field f, DocIndex doc, std::vector<TermCount> counts) {
  field(f).forward[doc] = std::move(counts);
}

void FieldedIndex::rebuild_postings(Field f) {
  FieldData& data = field(f);
  data.postings.assign(terms_.size(), {});
  data.cf.assign(terms_.size(), 0);
  data.lengths.assign(doc_ids_.size(), 0);
  data.total_length = 0;
  for (DocIndex doc = 0; doc < doc_ids_.size(); ++doc) {
    for (const TermCount& tc : data.forward[doc]) {
      data.postings[tc.term].push_back({doc, tc.tf});
      data.cf[tc.term] += tc.tf;
      data.lengths[doc] += tc.tf;
    }
    data.total_length += data.lengths[doc];
  }
}

void FieldedIndex::rank_ids() {
  std::vector<DocIndex> order(doc_ids_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](DocIndex a, DocIndex b) { return doc_ids_[a] < doc_ids_[b]; });
  id_rank_.assign(doc_ids_.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = static_cast<DocIndex>(r);
}

FieldedIndex build_index(std::span<const Document> documents, Bm25Params params) {
  if (documents.empty()) throw InvalidArgument("build_index: no documents");
  FieldedIndex index;
  index.params_ = params;
  for (const Document& doc : documents) {
    auto [it, inserted] = index.doc_by_id_.emplace(doc.doc_id, static_cast<DocIndex>(index.doc_ids_.size()));
    if (!inserted) throw DataError("build_index: duplicate document id " + doc.doc_id);
    index.doc_ids_.push_back(doc.doc_id);
  }
  for (Field f : kFields) index.field(f).forward.assign(documents.size(), {});

  for (DocIndex d = 0; d < documents.size(); ++d) {
    std::map<TermId, std::uint32_t> bag;
    for (const std::string& term : analyze(documents[d].content).terms) ++bag[index.intern(term)];
    index.set_forward(Field::Content, d, to_counts(bag));
  }
  for (Field f : kFields) index.rebuild_postings(f);
  index.rank_ids();
  return index;
}

FieldedIndex build_index(const DocumentPool& pool, Bm25Params params) {
  return build_index(pool.documents(), params);
}

FieldedIndex attach_anchor_text(FieldedIndex index, std::span<const Dialog> train_dialogs) {
  std::vector<std::map<TermId, std::uint32_t>> bags(index.doc_count());
  for (DocIndex d = 0; d < index.doc_count(); ++d)
    for (const TermCount& tc : index.doc_terms(Field::Anchor, d)) bags[d][tc.term] += tc.tf;

  for (const Dialog& dialog : train_dialogs) {
    auto doc = index.find_doc(dialog.gold_url);
    if (!doc) throw DataError("attach_anchor_text: gold_url not in index: " + dialog.gold_url);
    for (const std::string& term : analyze(dialog.context_text()).terms) ++bags[*doc][index.intern(term)];
  }
  for (DocIndex d = 0; d < index.doc_count(); ++d) index.set_forward(Field::Anchor, d, to_counts(bags[d]));

  // New anchor-only terms extend the dictionary; content postings just grow
  // empty slots for them.
  index.field(Field::Content).postings.resize(index.term_count());
  index.field(Field::Content).cf.resize(index.term_count(), 0);
  index.rebuild_postings(Field::Anchor);
  return index;
}

void save_index(const FieldedIndex& index, std::ostream& out) {
  json snapshot;
  snapshot["format"] = kSnapshotFormat;
  snapshot["version"] = kSnapshotVersion;
  snapshot["bm25"] = {{"k1", index.params().k1}, {"b", index.params().b}};
  json docs = json::array();
  for (DocIndex d = 0; d < index.doc_count(); ++d) docs.push_back(index.doc_id(d));
  snapshot["docs"] = std::move(docs);
  json terms = json::array();
  for (TermId t = 0; t < index.term_count(); ++t) terms.push_back(index.term(t));
  snapshot["terms"] = std::move(terms);
  for (Field f : kFields) {
    // Forward lists: per document, flat [term, tf, term, tf, ...].
    json fwd = json::array();
    for (DocIndex d = 0; d < index.doc_count(); ++d) {
      json flat = json::array();
      for (const TermCount& tc : index.doc_terms(f, d)) {
        flat.push_back(tc.term);
        flat.push_back(tc.tf);
      }
      fwd.push_back(std::move(flat));
    }
    snapshot["fields"][std::string(field_name(f))] = std::move(fwd);
  }
  out << snapshot.dump() << '\n';
}

FieldedIndex load_index(std::istream& in) {
  json snapshot;
  try {
    in >> snapshot;
  } catch (const json::exception& e) {
    throw DataError(std::string("index snapshot: ") + e.what());
  }
  if (snapshot.value("format", "") != kSnapshotFormat) throw DataError("index snapshot: unknown format");
  if (snapshot.value("version", 0) != kSnapshotVersion) {
    throw DataError("index snapshot: unsupported version " + snapshot.value("version", json()).dump());
  }

  FieldedIndex index;
  try {
    index.params_.k1 = snapshot.at("bm25").at("k1").get<double>();
    index.params_.b = snapshot.at("bm25").at("b").get<double>();
    for (const auto& id : snapshot.at("docs")) {
      const auto doc = static_cast<DocIndex>(index.doc_ids_.size());
      if (!index.doc_by_id_.emplace(id.get<std::string>(), doc).second)
        throw DataError("index snapshot: duplicate document id");
      index.doc_ids_.push_back(id.get<std::string>());
    }
    for (const auto& term : snapshot.at("terms")) index.intern(term.get<std::string>());
    for (Field f : kFields) {
      const json& fwd = snapshot.at("fields").at(std::string(field_name(f)));
      if (fwd.size() != index.doc_count()) throw DataError("index snapshot: field size mismatch");
      index.field(f).forward.assign(index.doc_count(), {});
      for (DocIndex d = 0; d < index.doc_count(); ++d) {
        const json& flat = fwd[d];
        std::vector<TermCount> counts;
        for (std::size_t i = 0; i + 1 < flat.size(); i += 2) {
          const auto term = flat[i].get<TermId>();
          if (term >= index.term_count()) throw DataError("index snapshot: term id out of range");
          counts.push_back({term, flat[i + 1].get<std::uint32_t>()});
        }
        index.set_forward(f, d, std::move(counts));
      }
      index.rebuild_postings(f);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("index snapshot: ") + e.what());
  }
  index.rank_ids();
  return index;
}

void WeightedQuery::add_clause(TermSequence terms, double weight) {
  if (!std::isfinite(weight) || weight < 0.0) throw InvalidArgument("query clause weight must be finite and >= 0");
  for (const auto& t : terms.terms) weights_[t] += weight;
  clauses_.push_back({std::move(terms), weight});
}

void WeightedQuery::add_weight(const std::string& term, double weight) {
  if (!std::isfinite(weight) || weight < 0.0) throw InvalidArgument("query term weight must be finite and >= 0");
  weights_[term] += weight;
}

WeightedQuery WeightedQuery::from_terms(const TermSequence& terms) {
  WeightedQuery q;
  q.add_clause(terms, 1.0);
  return q;
}

WeightedQuery WeightedQuery::from_weights(const std::map<std::string, double>& weights) {
  WeightedQuery q;
  for (const auto& [term, w] : weights) q.add_weight(term, w);
  return q;
}

double WeightedQuery::total_weight() const {
  double total = 0.0;
  for (const auto& [term, w] : weights_) total += w;
  return total;
}

WeightedQuery WeightedQuery::scaled(double factor) const {
  if (!std::isfinite(factor) || factor < 0.0) throw InvalidArgument("query scale must be finite and >= 0");
  WeightedQuery q = *this;
  for (auto& c : q.clauses_) c.weight *= factor;
  for (auto& [term, w] : q.weights_) w *= factor;
  return q;
}

WeightedQuery WeightedQuery::normalized() const {
  const double total = total_weight();
  if (!(total > 0.0)) throw InvalidArgument("cannot normalize a query with zero total weight");
  return scaled(1.0 / total);
}

std::vector<std::string> RankedList::doc_ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.doc_id);
  return ids;
}

Bm25Scorer::Bm25Scorer(const FieldedIndex& index, const FieldBoosts& boosts, const WeightedQuery& query)
    : index_(index) {
  for (Field f : kFields) {
    const auto fi = static_cast<std::size_t>(f);
    avg_len_[fi] = index.average_length(f);
    if (boosts[f] == 0.0) continue;
    for (const auto& [term, w] : query.weights()) {
      if (w == 0.0) continue;
      auto id = index.term_id(term);
      if (!id || index.df(f, *id) == 0) continue;
      terms_[fi].push_back({*id, boosts[f] * w * index.idf(f, *id)});
    }
  }
}

double Bm25Scorer::contribution(Field f, const Term& t, std::uint32_t tf, DocIndex doc) const {
  const Bm25Params& p = index_.params();
  const double freq = tf;
  const double norm = static_cast<double>(index_.length(f, doc)) / avg_len_[static_cast<std::size_t>(f)];
  return t.weight * freq * (p.k1 + 1.0) / (freq + p.k1 * (1.0 - p.b + p.b * norm));
}

double Bm25Scorer::score(DocIndex doc) const {
  double sum = 0.0;
  for (Field f : kFields) {
    for (const Term& t : terms_[static_cast<std::size_t>(f)]) {
      const std::uint32_t tf = index_.tf(f, t.id, doc);
      if (tf > 0) sum += contribution(f, t, tf, doc);
    }
  }
  return sum;
}

std::vector<std::pair<DocIndex, double>> Bm25Scorer::top(std::size_t n) const {
  std::vector<double> acc(index_.doc_count(), 0.0);
  std::vector<char> matched(index_.doc_count(), 0);
  std::vector<DocIndex> hits;
  // Field-major, term-minor accumulation: the same addition order as score().
  for (Field f : kFields) {
    for (const Term& t : terms_[static_cast<std::size_t>(f)]) {
      for (const Posting& p : index_.postings(f, t.id)) {
        acc[p.doc] += contribution(f, t, p.tf, p.doc);
        if (!matched[p.doc]) {
          matched[p.doc] = 1;
          hits.push_back(p.doc);
        }
      }
    }
  }
  auto better = [&](DocIndex a, DocIndex b) {
    if (acc[a] != acc[b]) return acc[a] > acc[b];
    return index_.id_before(a, b);
  };
  const std::size_t keep = std::min(n, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
  std::vector<std::pair<DocIndex, double>> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.emplace_back(hits[i], acc[hits[i]]);
  return out;
}

double bm25_score(const FieldedIndex& index, const FieldBoosts& boosts, const WeightedQuery& query,
                  std::string_view doc_id) {
  auto doc = index.find_doc(doc_id);
  if (!doc) throw DataError("bm25_score: unknown document " + std::string(doc_id));
  return Bm25Scorer(index, boosts, query).score(*doc);
}

RankedList retrieve(const FieldedIndex& index, const FieldBoosts& boosts, const WeightedQuery& query,
                    std::size_t n) {
  if (n == 0) throw InvalidArgument("retrieve: n must be at least 1");
  RankedList list;
  list.provenance = "bm25";
  for (const auto& [doc, score] : Bm25Scorer(index, boosts, query).top(n)) {
    list.entries.push_back({index.doc_id(doc), score});
  }
  return list;
}

}  // namespace cdp
