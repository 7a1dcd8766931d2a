#include "cdp/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "cdp/random.hpp"
#include "cdp/text.hpp"

namespace cdp {

using json = nlohmann::json;

std::string Dialog::context_text() const {
  std::string out;
  for (const auto& u : utterances) {
    if (u.text.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += u.text;
  }
  return out;
}

void DocumentPool::add(Document doc) {
  auto [it, inserted] = by_id_.emplace(doc.doc_id, docs_.size());
  if (!inserted) throw DataError("duplicate document id: " + doc.doc_id);
  docs_.push_back(std::move(doc));
}

const Document* DocumentPool::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::size_t DocumentPool::position(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  if (it == by_id_.end()) throw DataError("unknown document id: " + std::string(doc_id));
  return it->second;
}

namespace {

const std::string& require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing \"") + key + "\"");
  if (!it->is_string()) throw DataError(std::string("\"") + key + "\" must be a string");
  return it->get_ref<const std::string&>();
}

Dialog parse_dialog(const std::string& line) {
  const json obj = json::parse(line);
  if (!obj.is_object()) throw DataError("record is not an object");
  Dialog d;
  d.dialog_id = require_string(obj, "dialog_id");
  if (d.dialog_id.empty()) throw DataError("empty dialog_id");
  d.gold_url = require_string(obj, "gold_url");
  auto turns = obj.find("turns");
  if (turns == obj.end()) throw DataError("missing \"turns\"");
  if (!turns->is_array() || turns->empty()) throw DataError("\"turns\" must be a non-empty array");
  for (const auto& turn : *turns) {
    if (!turn.is_object()) throw DataError("turn is not an object");
    const std::string& speaker = require_string(turn, "speaker");
    Utterance u;
    if (speaker == "U") {
      u.speaker = Speaker::User;
    } else if (speaker == "A") {
      u.speaker = Speaker::Agent;
    } else {
      throw DataError("speaker must be \"U\" or \"A\", got \"" + speaker + "\"");
    }
    u.raw_text = require_string(turn, "text");
    u.text = normalize_whitespace(u.raw_text);
    if (u.text.empty()) throw DataError("turn " + std::to_string(d.utterances.size()) + " has empty text");
    u.index = d.utterances.size();
    d.utterances.push_back(std::move(u));
  }
  return d;
}

Document parse_document(const std::string& line) {
  const json obj = json::parse(line);
  if (!obj.is_object()) throw DataError("record is not an object");
  Document doc;
  doc.doc_id = require_string(obj, "url");
  if (doc.doc_id.empty()) throw DataError("empty url");
  doc.content = require_string(obj, "content");
  if (normalize_whitespace(doc.content).empty()) throw DataError("document has no content: " + doc.doc_id);
  doc.token_count = neural_tokens(doc.content).size();
  return doc;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Corpus load_corpus(std::istream& dialog_records, std::istream& document_records) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(document_records, line)) {
    ++lineno;
    if (blank(line)) continue;
    Document doc;
    try {
      doc = parse_document(line);
    } catch (const json::exception& e) {
      corpus.errors.push_back({"documents", lineno, e.what()});
      continue;
    } catch (const DataError& e) {
      corpus.errors.push_back({"documents", lineno, e.what()});
      continue;
    }
    corpus.pool.add(std::move(doc));  // duplicate ids are fatal
  }

  std::unordered_map<std::string, std::size_t> seen;
  lineno = 0;
  while (std::getline(dialog_records, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      Dialog d = parse_dialog(line);
      if (auto [it, inserted] = seen.emplace(d.dialog_id, lineno); !inserted) {
        throw DataError("duplicate dialog_id " + d.dialog_id + " (first seen on line " +
                        std::to_string(it->second) + ")");
      }
      corpus.dialogs.push_back(std::move(d));
    } catch (const json::exception& e) {
      corpus.errors.push_back({"dialogs", lineno, e.what()});
    } catch (const DataError& e) {
      corpus.errors.push_back({"dialogs", lineno, e.what()});
    }
  }
  return corpus;
}

Corpus load_corpus_files(const std::filesystem::path& dialogs, const std::filesystem::path& documents) {
  std::ifstream d(dialogs);
  if (!d) throw DataError("cannot open " + dialogs.string());
  std::ifstream c(documents);
  if (!c) throw DataError("cannot open " + documents.string());
  return load_corpus(d, c);
}

std::vector<UrlMatch> find_urls(std::string_view text) {
  auto starts_with_ci = [&](std::size_t pos, std::string_view prefix) {
    if (pos + prefix.size() > text.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(text[pos + i])) != prefix[i]) return false;
    }
    return true;
  };
  constexpr std::string_view kTrailing = ".,;:!?)]}>'\"";

  std::vector<UrlMatch> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t scheme = 0;
    if (starts_with_ci(pos, "http://")) {
      scheme = 7;
    } else if (starts_with_ci(pos, "https://")) {
      scheme = 8;
    }
    const bool boundary = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    if (scheme == 0 || !boundary) {
      ++pos;
      continue;
    }
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    while (end > pos + scheme && kTrailing.find(text[end - 1]) != std::string_view::npos) --end;
    if (end > pos + scheme) out.push_back({pos, end, std::string(text.substr(pos, end - pos))});
    pos = std::max(end, pos + scheme);
  }
  return out;
}

namespace {

std::string strip_urls(std::string_view text, const std::vector<UrlMatch>& urls) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& m : urls) {
    out.append(text.substr(pos, m.begin - pos));
    out.push_back(' ');
    pos = m.end;
  }
  out.append(text.substr(pos));
  return normalize_whitespace(out);
}

}  // namespace

FilterResult filter_dialogs(Corpus corpus, std::span<const std::string> allowlist) {
  if (allowlist.empty()) throw InvalidArgument("filter_dialogs: empty domain allowlist removes every dialog");

  FilterResult result;
  FilterReport& report = result.report;
  report.input = corpus.dialogs.size();
  std::vector<Dialog> kept;
  for (Dialog& d : corpus.dialogs) {
    auto cut = std::find_if(d.utterances.begin(), d.utterances.end(), [](const Utterance& u) {
      return u.speaker == Speaker::Agent && !find_urls(u.raw_text).empty();
    });
    if (cut == d.utterances.end()) {
      ++report.no_agent_url;
      continue;
    }
    const auto urls = find_urls(cut->raw_text);
    std::string label = d.gold_url.empty() ? urls.front().url : d.gold_url;
    if (std::none_of(urls.begin(), urls.end(), [&](const UrlMatch& m) { return m.url == label; })) {
      ++report.label_mismatch;
      continue;
    }
    if (std::none_of(allowlist.begin(), allowlist.end(),
                     [&](const std::string& prefix) { return label.starts_with(prefix); })) {
      ++report.out_of_domain;
      continue;
    }
    if (!corpus.pool.contains(label)) {
      ++report.unresolved;
      continue;
    }
    cut->text = strip_urls(cut->raw_text, urls);
    d.utterances.erase(cut + 1, d.utterances.end());
    d.gold_url = std::move(label);
    kept.push_back(std::move(d));
  }
  report.kept = kept.size();
  corpus.dialogs = std::move(kept);
  result.corpus = std::move(corpus);
  return result;
}

const std::vector<Dialog>& CorpusSplit::by_name(std::string_view name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw InvalidArgument("unknown split name: " + std::string(name));
}

CorpusSplit split_corpus(const Corpus& corpus, SplitSizes sizes, std::uint64_t seed) {
  const std::size_t n = corpus.dialogs.size();
  if (sizes.train + sizes.dev + sizes.test > n) {
    throw InvalidArgument("split_corpus: requested " +
                          std::to_string(sizes.train + sizes.dev + sizes.test) + " dialogs but corpus has " +
                          std::to_string(n));
  }
  for (const auto& d : corpus.dialogs) {
    if (!corpus.pool.contains(d.gold_url)) throw DataError("gold_url not in pool: " + d.gold_url);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.dialogs[a].dialog_id < corpus.dialogs[b].dialog_id;
  });
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  CorpusSplit split;
  std::size_t next = 0;
  auto take = [&](std::vector<Dialog>& dst, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) dst.push_back(corpus.dialogs[order[next++]]);
  };
  take(split.train, sizes.train);
  take(split.dev, sizes.dev);
  take(split.test, sizes.test);
  split.pool = corpus.pool;
  return split;
}

std::vector<TrainingTriple> export_triples(std::span<const Dialog> dialogs, const DocumentPool& pool,
                                           int num_negatives, std::uint64_t seed) {
  if (num_negatives < 1) throw InvalidArgument("export_triples: num_negatives must be at least 1");
  const auto k = static_cast<std::size_t>(num_negatives);
  if (pool.size() <= k) {
    throw InvalidArgument("export_triples: pool of " + std::to_string(pool.size()) + " documents cannot supply " +
                          std::to_string(k) + " distinct negatives");
  }

  std::vector<TrainingTriple> triples;
  triples.reserve(dialogs.size() * (k + 1));
  std::vector<std::size_t> candidates;
  for (const Dialog& d : dialogs) {
    const std::size_t gold = pool.position(d.gold_url);
    candidates.clear();
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (i != gold) candidates.push_back(i);

    Rng rng(derive_seed(seed, d.dialog_id));
    triples.push_back({d.dialog_id, d.gold_url, 1});
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
      triples.push_back({d.dialog_id, pool[candidates[i]].doc_id, 0});
    }
  }
  return triples;
}

void write_triples(std::ostream& out, std::span<const TrainingTriple> triples) {
  for (const auto& t : triples) {
    json line = {{"dialog_id", t.dialog_id}, {"doc_id", t.doc_id}, {"label", t.label}};
    out << line.dump() << '\n';
  }
}

}  // namespace cdp
