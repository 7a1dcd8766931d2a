#include "fixtures.hpp"

#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cdp::testing {

TempDir::TempDir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "cdp-test-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string pseudo_word(char prefix, std::size_t n) {
  static constexpr char kConsonants[] = "bdfgkmnprtvz";
  static constexpr char kVowels[] = "aou";
  std::string word(1, prefix);
  do {
    const std::size_t syllable = n % 36;
    word += kConsonants[syllable / 3];
    word += kVowels[syllable % 3];
    n /= 36;
  } while (n > 0 || word.size() < 5);
  return word;
}

std::string document_url(std::size_t i) { return "https://kb.example.com/doc/" + std::to_string(i); }

Dialog make_dialog(std::string id, const std::vector<std::pair<Speaker, std::string>>& turns, std::string gold_url) {
  Dialog d;
  d.dialog_id = std::move(id);
  d.gold_url = std::move(gold_url);
  for (const auto& [speaker, text] : turns) {
    Utterance u;
    u.speaker = speaker;
    u.text = text;
    u.raw_text = text;
    u.index = d.utterances.size();
    d.utterances.push_back(std::move(u));
  }
  return d;
}

std::string random_text(std::mt19937_64& rng, std::size_t vocab, std::size_t min_words, std::size_t max_words,
                        char prefix) {
  std::uniform_int_distribution<std::size_t> len(min_words, max_words);
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += pseudo_word(prefix, word(rng));
  }
  return out;
}

ZipfText::ZipfText(std::size_t vocab, char prefix) : prefix_(prefix) {
  std::vector<double> weights(vocab);
  for (std::size_t r = 0; r < vocab; ++r) weights[r] = 1.0 / static_cast<double>(r + 1);
  dist_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
}

std::string ZipfText::operator()(std::mt19937_64& rng, std::size_t min_words, std::size_t max_words) {
  std::uniform_int_distribution<std::size_t> len(min_words, max_words);
  std::string out;
  for (std::size_t i = len(rng); i > 0; --i) {
    if (!out.empty()) out += ' ';
    out += word(rng);
  }
  return out;
}

namespace {

constexpr std::size_t kTopicWords = 6;
constexpr std::size_t kFiller = 400;

std::string pick(std::mt19937_64& rng, char prefix, std::size_t base, std::size_t count, std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, count - 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += pseudo_word(prefix, base + dist(rng));
  }
  return out;
}

Dialog gap_dialog(std::mt19937_64& rng, std::size_t doc, std::size_t k) {
  const std::size_t topic = kFiller + doc * kTopicWords;
  std::vector<std::pair<Speaker, std::string>> turns = {
      {Speaker::User, pick(rng, 'q', topic, kTopicWords, 2) + " " + pick(rng, 'q', 0, kFiller, 5)},
      {Speaker::Agent, pick(rng, 'q', 0, kFiller, 6)},
      {Speaker::User, pick(rng, 'q', 0, kFiller, 3) + " " + pick(rng, 'q', topic, kTopicWords, 2)},
      {Speaker::Agent, "see " + document_url(doc) + " for details"},
  };
  Dialog d = make_dialog("dlg-" + std::to_string(doc) + "-" + std::to_string(k), turns, document_url(doc));
  // The filtered form: the final agent turn without its URL.
  d.utterances.back().text = "see for details";
  return d;
}

}  // namespace

VocabularyGapCorpus make_vocabulary_gap_corpus(const VocabularyGapSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  VocabularyGapCorpus c;
  for (std::size_t i = 0; i < spec.documents; ++i) {
    const std::size_t topic = kFiller + i * kTopicWords;
    std::string content = pick(rng, 'x', topic, kTopicWords, 12) + " " + pick(rng, 'x', 0, kFiller, 40);
    c.documents.push_back({document_url(i), content, 52});
  }
  for (std::size_t i = 0; i < spec.documents; ++i) {
    for (std::size_t k = 0; k < spec.train_per_doc; ++k) c.train.push_back(gap_dialog(rng, i, k));
    for (std::size_t k = 0; k < spec.test_per_doc; ++k)
      c.test.push_back(gap_dialog(rng, i, spec.train_per_doc + k));
  }
  return c;
}

void write_corpus(const std::filesystem::path& dialogs, const std::filesystem::path& documents,
                  const std::vector<Dialog>& dialog_records, const std::vector<Document>& document_records) {
  std::ofstream dout(dialogs);
  for (const auto& d : dialog_records) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& u : d.utterances)
      turns.push_back({{"speaker", u.speaker == Speaker::User ? "U" : "A"}, {"text", u.raw_text}});
    dout << nlohmann::json{{"dialog_id", d.dialog_id}, {"turns", turns}, {"gold_url", d.gold_url}}.dump() << '\n';
  }
  std::ofstream fout(documents);
  for (const auto& doc : document_records)
    fout << nlohmann::json{{"url", doc.doc_id}, {"content", doc.content}}.dump() << '\n';
}

}  // namespace cdp::testing
