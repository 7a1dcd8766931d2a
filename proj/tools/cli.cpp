#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdp/cascade.hpp"
#include "cdp/corpus.hpp"
#include "cdp/error.hpp"
#include "cdp/eval.hpp"
#include "cdp/hybrid.hpp"
#include "cdp/index.hpp"

#ifndef CDP_VERSION
#define CDP_VERSION "dev"
#endif

namespace cdp::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Everything tunable from --config, with defaults.
struct ToolConfig {
  std::vector<std::string> allowlist = {"http://", "https://"};
  std::optional<SplitSizes> split_sizes;
  std::array<double, 3> split_fractions = {0.8, 0.1, 0.1};
  Bm25Params bm25;
  CascadeConfig cascade;
  std::size_t bm25_depth = 1000;
  HybridOptions hybrid;

  json to_json() const {
    json j;
    j["corpus"]["allowlist"] = allowlist;
    if (split_sizes) {
      j["corpus"]["split"] = {{"train", split_sizes->train}, {"dev", split_sizes->dev}, {"test", split_sizes->test}};
    } else {
      j["corpus"]["split_fractions"] = split_fractions;
    }
    j["bm25"] = {{"k1", bm25.k1}, {"b", bm25.b}, {"depth", bm25_depth}};
    j["cascade"] = json::parse(cdp::to_json(cascade));
    j["hybrid"] = {{"k", hybrid.k},
                   {"dialog_tokens", hybrid.dialog_tokens},
                   {"doc_tokens", hybrid.doc_tokens},
                   {"dialog_strategy", hybrid.dialog_strategy == TruncationStrategy::InputA ? "input-a" : "input-b"}};
    return j;
  }
};

ToolConfig load_config(const std::string& path) {
  ToolConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  json j;
  try {
    in >> j;
    if (auto c = j.find("corpus"); c != j.end()) {
      if (c->contains("allowlist")) cfg.allowlist = (*c)["allowlist"].get<std::vector<std::string>>();
      if (c->contains("split")) {
        const json& s = (*c)["split"];
        cfg.split_sizes = SplitSizes{s.at("train").get<std::size_t>(), s.at("dev").get<std::size_t>(),
                                     s.at("test").get<std::size_t>()};
      }
      if (c->contains("split_fractions")) cfg.split_fractions = (*c)["split_fractions"].get<std::array<double, 3>>();
    }
    if (auto b = j.find("bm25"); b != j.end()) {
      cfg.bm25.k1 = b->value("k1", cfg.bm25.k1);
      cfg.bm25.b = b->value("b", cfg.bm25.b);
      cfg.bm25_depth = b->value("depth", cfg.bm25_depth);
    }
    if (auto c = j.find("cascade"); c != j.end()) cfg.cascade = parse_cascade_config(c->dump());
    if (auto h = j.find("hybrid"); h != j.end()) {
      cfg.hybrid.k = h->value("k", cfg.hybrid.k);
      cfg.hybrid.dialog_tokens = h->value("dialog_tokens", cfg.hybrid.dialog_tokens);
      cfg.hybrid.doc_tokens = h->value("doc_tokens", cfg.hybrid.doc_tokens);
      if (h->contains("dialog_strategy")) {
        const auto s = (*h)["dialog_strategy"].get<std::string>();
        if (s != "input-a" && s != "input-b") throw InvalidArgument("hybrid.dialog_strategy must be input-a|input-b");
        cfg.hybrid.dialog_strategy = s == "input-a" ? TruncationStrategy::InputA : TruncationStrategy::InputB;
      }
    }
  } catch (const json::exception& e) {
    throw DataError("config " + path + ": " + e.what());
  }
  if (cfg.bm25_depth == 0) throw InvalidArgument("bm25.depth must be >= 1");
  if (cfg.hybrid.k == 0 || cfg.hybrid.dialog_tokens < 2 || cfg.hybrid.doc_tokens < 2)
    throw InvalidArgument("hybrid: k must be >= 1 and token limits >= 2");
  return cfg;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CommonOptions {
  std::string dialogs;
  std::string documents;
  std::string index_path;
  std::string config;
  std::string split = "test";
  std::uint64_t seed = 42;
  std::string out;
  std::string strategy;
};

/// Filtered, split corpus plus its index.
struct Workspace {
  ToolConfig config;
  FilterReport filter;
  std::vector<RecordError> load_errors;
  CorpusSplit split;
  std::optional<FieldedIndex> index;
};

SplitSizes resolve_sizes(const ToolConfig& cfg, std::size_t n) {
  if (cfg.split_sizes) return *cfg.split_sizes;
  const auto train = static_cast<std::size_t>(cfg.split_fractions[0] * static_cast<double>(n));
  const auto dev = static_cast<std::size_t>(cfg.split_fractions[1] * static_cast<double>(n));
  return {train, dev, n - train - dev};
}

Workspace prepare(const CommonOptions& opts, bool need_index, std::ostream& err) {
  if (opts.dialogs.empty() || opts.documents.empty()) throw InvalidArgument("--dialogs and --documents are required");
  Workspace ws;
  ws.config = load_config(opts.config);
  if (!opts.strategy.empty())
    ws.config.hybrid.dialog_strategy = opts.strategy == "input-a" ? TruncationStrategy::InputA : TruncationStrategy::InputB;
  Corpus corpus = load_corpus_files(opts.dialogs, opts.documents);
  ws.load_errors = corpus.errors;
  for (const auto& e : corpus.errors) err << "warning: " << e.source << ":" << e.line << ": " << e.message << '\n';
  FilterResult filtered = filter_dialogs(std::move(corpus), ws.config.allowlist);
  ws.filter = filtered.report;
  ws.split = split_corpus(filtered.corpus, resolve_sizes(ws.config, filtered.corpus.dialogs.size()), opts.seed);
  if (need_index) {
    if (!opts.index_path.empty()) {
      std::ifstream in(opts.index_path);
      if (!in) throw DataError("cannot open index " + opts.index_path);
      ws.index = load_index(in);
    } else {
      ws.index = attach_anchor_text(build_index(ws.split.pool, ws.config.bm25), ws.split.train);
    }
  }
  return ws;
}

json filter_json(const FilterReport& r) {
  return {{"input", r.input},
          {"kept", r.kept},
          {"no_agent_url", r.no_agent_url},
          {"label_mismatch", r.label_mismatch},
          {"out_of_domain", r.out_of_domain},
          {"unresolved", r.unresolved}};
}

void write_manifest(const fs::path& path, std::span<const std::string> args, const CommonOptions& opts,
                    const ToolConfig& cfg, const std::vector<std::string>& outputs) {
  json inputs = json::object();
  for (const auto& p : {opts.dialogs, opts.documents, opts.index_path, opts.config})
    if (!p.empty()) inputs[p] = sha256_file(p);
  std::string command;
  for (std::size_t i = 1; i < args.size(); ++i) command += (i > 1 ? " " : "") + args[i];
  json manifest = {{"command", command},
                   {"config", cfg.to_json()},
                   {"inputs", inputs},
                   {"seed", opts.seed},
                   {"tool_version", CDP_VERSION},
                   {"timestamp", utc_timestamp()},
                   {"outputs", outputs}};
  std::ofstream out(path);
  out << manifest.dump(2) << '\n';
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_dialogs(std::ostream& out, std::span<const Dialog> dialogs) {
  for (const auto& d : dialogs) {
    json turns = json::array();
    for (const auto& u : d.utterances)
      turns.push_back({{"speaker", u.speaker == Speaker::User ? "U" : "A"}, {"text", u.raw_text}});
    out << json{{"dialog_id", d.dialog_id}, {"turns", turns}, {"gold_url", d.gold_url}}.dump() << '\n';
  }
}

const Dialog* find_dialog(const CorpusSplit& split, const std::string& id) {
  for (const auto* part : {&split.train, &split.dev, &split.test})
    for (const auto& d : *part)
      if (d.dialog_id == id) return &d;
  return nullptr;
}

struct ScorerSpec {
  std::string command;
  std::string socket;
  int timeout_ms = 30000;
};

RankerFactory make_factory(const std::string& model, const Workspace& ws, const ScorerSpec& scorer) {
  const FieldedIndex& index = *ws.index;
  const ToolConfig& cfg = ws.config;
  if (model == "bm25") {
    return [&index, &cfg]() -> Ranker {
      return [&index, &cfg](const Dialog& d) {
        return bm25_rank(index, d, FieldBoosts::content_only(), cfg.bm25_depth);
      };
    };
  }
  if (model == "irc") {
    return [&index, &cfg]() -> Ranker {
      return [&index, &cfg](const Dialog& d) { return cascade_rank(index, d, cfg.cascade); };
    };
  }
  if (model == "hybrid") {
    if (scorer.command.empty() && scorer.socket.empty())
      throw InvalidArgument("--model hybrid needs --scorer-cmd or --scorer-socket");
    return [&index, &cfg, &ws, scorer]() -> Ranker {
      ScorerOptions options{std::chrono::milliseconds(scorer.timeout_ms)};
      auto handle = std::make_shared<ScorerHandle>(scorer.socket.empty()
                                                       ? ScorerHandle::spawn(scorer.command, options)
                                                       : ScorerHandle::connect(scorer.socket, options));
      return [&index, &cfg, &ws, handle](const Dialog& d) {
        return hybrid_rank(index, d, cfg.cascade, *handle, ws.split.pool, cfg.hybrid);
      };
    };
  }
  throw InvalidArgument("unknown model: " + model + " (expected bm25, irc or hybrid)");
}

std::vector<std::string> split_models(const std::string& spec) {
  std::vector<std::string> models;
  std::stringstream ss(spec);
  std::string m;
  while (std::getline(ss, m, ','))
    if (!m.empty()) models.push_back(m);
  if (models.empty()) throw InvalidArgument("--model is empty");
  return models;
}

int run_ingest(const CommonOptions& opts, std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  if (opts.out.empty()) throw InvalidArgument("ingest needs --out <directory>");
  Workspace ws = prepare(opts, false, err);
  const fs::path dir(opts.out);
  fs::create_directories(dir);
  {
    auto f = open_output(dir / "dialogs.jsonl");
    for (const auto* part : {&ws.split.train, &ws.split.dev, &ws.split.test}) write_dialogs(f, *part);
  }
  {
    auto f = open_output(dir / "documents.jsonl");
    for (const auto& doc : ws.split.pool) f << json{{"url", doc.doc_id}, {"content", doc.content}}.dump() << '\n';
  }
  json splits;
  for (const char* name : {"train", "dev", "test"}) {
    json ids = json::array();
    for (const auto& d : ws.split.by_name(name)) ids.push_back(d.dialog_id);
    splits[name] = ids;
  }
  json errors = json::array();
  for (const auto& e : ws.load_errors) errors.push_back({{"source", e.source}, {"line", e.line}, {"message", e.message}});
  json report = {{"filter", filter_json(ws.filter)},
                 {"documents", ws.split.pool.size()},
                 {"splits", {{"train", ws.split.train.size()}, {"dev", ws.split.dev.size()}, {"test", ws.split.test.size()}}},
                 {"load_errors", errors}};
  open_output(dir / "splits.json") << splits.dump(2) << '\n';
  open_output(dir / "ingest_report.json") << report.dump(2) << '\n';
  write_manifest(dir / "manifest.json", args, opts, ws.config,
                 {"dialogs.jsonl", "documents.jsonl", "splits.json", "ingest_report.json"});
  out << report["filter"].dump() << '\n';
  return kExitOk;
}

int run_index_build(const CommonOptions& opts, std::span<const std::string> args, std::ostream& out,
                    std::ostream& err) {
  if (opts.out.empty()) throw InvalidArgument("index build needs --out <file>");
  CommonOptions build_opts = opts;
  build_opts.index_path.clear();
  Workspace ws = prepare(build_opts, true, err);
  {
    auto f = open_output(opts.out);
    save_index(*ws.index, f);
  }
  write_manifest(opts.out + ".manifest.json", args, opts, ws.config, {opts.out});
  out << "indexed " << ws.index->doc_count() << " documents, " << ws.index->term_count() << " terms, "
      << ws.split.train.size() << " anchor dialogs\n";
  return kExitOk;
}

int run_rank(const CommonOptions& opts, const std::string& dialog_id, std::size_t top, const std::string& model,
             const ScorerSpec& scorer, std::ostream& out, std::ostream& err) {
  if (dialog_id.empty()) throw InvalidArgument("rank needs --dialog-id");
  Workspace ws = prepare(opts, true, err);
  const Dialog* dialog = find_dialog(ws.split, dialog_id);
  if (!dialog) throw DataError("dialog not found after filtering: " + dialog_id);
  Ranker ranker = make_factory(model, ws, scorer)();
  const RankedList ranking = ranker(*dialog);
  char buf[64];
  for (std::size_t i = 0; i < std::min(top, ranking.size()); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", ranking[i].score);
    out << (i + 1) << ' ' << ranking[i].doc_id << ' ' << buf << '\n';
  }
  return kExitOk;
}

int run_evaluate(const CommonOptions& opts, const std::string& model_spec, const ScorerSpec& scorer,
                 unsigned threads, std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Workspace ws = prepare(opts, true, err);
  const auto& dialogs = ws.split.by_name(opts.split);
  if (dialogs.empty()) throw DataError("split '" + opts.split + "' is empty");

  MetricsReport report;
  json provenance = ws.config.to_json();
  provenance["split"] = opts.split;
  provenance["seed"] = opts.seed;
  provenance["queries"] = dialogs.size();
  provenance["documents"] = ws.split.pool.size();
  report.provenance = provenance.dump();

  std::vector<std::string> outputs;
  std::vector<ExperimentResult> results;
  for (const auto& model : split_models(model_spec)) {
    results.push_back(run_experiment(model, make_factory(model, ws, scorer), dialogs, ws.split.pool, threads));
    report.rows.push_back(results.back().row);
  }
  const std::string table = format_table(report);
  out << table;
  if (!opts.out.empty()) {
    open_output(opts.out + ".txt") << table;
    open_output(opts.out + ".json") << to_json(report);
    outputs = {opts.out + ".txt", opts.out + ".json"};
    for (const auto& r : results) {
      const std::string path = opts.out + "." + r.row.model + ".queries.jsonl";
      auto f = open_output(path);
      write_query_results(f, r.queries);
      outputs.push_back(path);
    }
    write_manifest(opts.out + ".manifest.json", args, opts, ws.config, outputs);
  }
  return kExitOk;
}

int run_export(const CommonOptions& opts, int negatives, std::span<const std::string> args, std::ostream& out,
               std::ostream& err) {
  if (opts.out.empty()) throw InvalidArgument("export-triples needs --out <file>");
  Workspace ws = prepare(opts, false, err);
  const auto triples = export_triples(ws.split.by_name(opts.split), ws.split.pool, negatives, opts.seed);
  {
    auto f = open_output(opts.out);
    write_triples(f, triples);
  }
  write_manifest(opts.out + ".manifest.json", args, opts, ws.config, {opts.out});
  out << "wrote " << triples.size() << " triples\n";
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_index) {
  cmd->add_option("--dialogs", o.dialogs, "dialogs.jsonl")->required();
  cmd->add_option("--documents", o.documents, "documents.jsonl")->required();
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "split and sampling seed");
  if (with_index) cmd->add_option("--index-path", o.index_path, "index snapshot to load instead of building");
}

}  // namespace

int execute(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conversational document prediction: IR cascade ranking and evaluation", "cdp"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string dialog_id;
  std::size_t top = 10;
  std::string model = "irc";
  int negatives = kDefaultNegatives;
  unsigned threads = 1;
  ScorerSpec scorer;
  const std::vector<std::string> strategies = {"input-a", "input-b"};

  auto* ingest = app.add_subcommand("ingest", "Load, filter and split a corpus");
  add_common(ingest, opts, false);
  ingest->add_option("--out", opts.out, "output directory")->required();

  auto* index = app.add_subcommand("index", "Index commands");
  index->require_subcommand(1);
  auto* build = index->add_subcommand("build", "Build the content+anchor index snapshot");
  add_common(build, opts, false);
  build->add_option("--out", opts.out, "snapshot file")->required();

  auto add_scorer = [&](CLI::App* cmd) {
    cmd->add_option("--scorer-cmd", scorer.command, "external scorer command (protocol v1 over stdio)");
    cmd->add_option("--scorer-socket", scorer.socket, "Unix socket of a running scorer");
    cmd->add_option("--timeout-ms", scorer.timeout_ms, "scorer request timeout")->check(CLI::PositiveNumber);
    cmd->add_option("--strategy", opts.strategy, "dialog truncation for the scorer")->check(CLI::IsMember(strategies));
  };

  auto* rank = app.add_subcommand("rank", "Rank the pool for one dialog");
  add_common(rank, opts, true);
  rank->add_option("--dialog-id", dialog_id, "dialog to rank")->required();
  rank->add_option("--top", top, "number of lines to print")->check(CLI::PositiveNumber);
  rank->add_option("--model", model, "bm25 | irc | hybrid");
  add_scorer(rank);

  auto* evaluate = app.add_subcommand("evaluate", "Recall@k / MRR over a split");
  add_common(evaluate, opts, true);
  evaluate->add_option("--model", model, "comma-separated: bm25, irc, hybrid");
  evaluate->add_option("--split", opts.split, "train | dev | test")->check(CLI::IsMember({"train", "dev", "test"}));
  evaluate->add_option("--out", opts.out, "report path prefix");
  evaluate->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  add_scorer(evaluate);

  auto* exporter = app.add_subcommand("export-triples", "Write neural training triples");
  add_common(exporter, opts, false);
  exporter->add_option("--split", opts.split, "train | dev | test")->check(CLI::IsMember({"train", "dev", "test"}));
  exporter->add_option("--negatives", negatives, "negatives per dialog")->check(CLI::PositiveNumber);
  exporter->add_option("--out", opts.out, "triples.jsonl")->required();
  opts.split = "test";

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) return run_ingest(opts, args, out, err);
    if (build->parsed()) return run_index_build(opts, args, out, err);
    if (rank->parsed()) {
      return run_rank(opts, dialog_id, top, model, scorer, out, err);
    }
    if (evaluate->parsed()) return run_evaluate(opts, model, scorer, threads, args, out, err);
    if (exporter->parsed()) {
      if (opts.split == "test" && !exporter->count("--split")) opts.split = "train";
      return run_export(opts, negatives, args, out, err);
    }
  } catch (const DataError& e) {
    err << json{{"error", e.what()}, {"kind", "data"}}.dump() << '\n';
    return kExitError;
  } catch (const ProtocolError& e) {
    err << json{{"error", e.what()}, {"kind", "scorer"}, {"query_id", e.query_id()}}.dump() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << json{{"error", e.what()}, {"kind", "runtime"}}.dump() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace cdp::cli
