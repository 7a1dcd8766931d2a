#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cdp/corpus.hpp"

namespace cdp::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Pronounceable nonsense word that the analyzer keeps intact: `prefix`
/// followed by consonant-vowel syllables ending in a, o or u.
std::string pseudo_word(char prefix, std::size_t n);

std::string document_url(std::size_t i);

/// Documents written in vocabulary A and dialogs in vocabulary B. Every
/// document owns a handful of topic words in each vocabulary; everything
/// else is shared filler.
struct VocabularyGapCorpus {
  std::vector<Document> documents;
  std::vector<Dialog> train;
  std::vector<Dialog> test;
};

struct VocabularyGapSpec {
  std::size_t documents = 200;
  std::size_t train_per_doc = 3;
  std::size_t test_per_doc = 1;
  std::uint64_t seed = 1;
};

VocabularyGapCorpus make_vocabulary_gap_corpus(const VocabularyGapSpec& spec);

/// Writes dialogs.jsonl / documents.jsonl records; the gold URL is embedded in
/// the final agent turn so the corpus survives filtering.
void write_corpus(const std::filesystem::path& dialogs, const std::filesystem::path& documents,
                  const std::vector<Dialog>& dialog_records, const std::vector<Document>& document_records);

Dialog make_dialog(std::string id, const std::vector<std::pair<Speaker, std::string>>& turns,
                   std::string gold_url = {});

/// Random lowercase text over a small vocabulary of `vocab` pseudo words.
std::string random_text(std::mt19937_64& rng, std::size_t vocab, std::size_t min_words, std::size_t max_words,
                        char prefix = 'w');

/// Zipf-distributed words (exponent 1) over `vocab` pseudo words.
class ZipfText {
 public:
  explicit ZipfText(std::size_t vocab, char prefix = 'z');
  std::string operator()(std::mt19937_64& rng, std::size_t min_words, std::size_t max_words);
  std::string word(std::mt19937_64& rng) { return pseudo_word(prefix_, dist_(rng)); }

 private:
  std::discrete_distribution<std::size_t> dist_;
  char prefix_;
};

}  // namespace cdp::testing
