#include "cdp/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "cdp/error.hpp"

namespace cdp {

namespace detail {
extern const std::string_view kEmbeddedStopwords;
}  // namespace detail

namespace {

struct CodePoint {
  std::uint32_t value;
  std::size_t length;  // bytes consumed
};

// Lenient UTF-8 decoder: an invalid lead or truncated sequence yields the
// single byte as its own code point.
CodePoint decode(std::string_view s, std::size_t pos) {
  const auto lead = static_cast<unsigned char>(s[pos]);
  if (lead < 0x80) return {lead, 1};
  std::size_t len = 0;
  std::uint32_t cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    return {lead, 1};
  }
  if (pos + len > s.size()) return {lead, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto c = static_cast<unsigned char>(s[pos + i]);
    if ((c & 0xC0) != 0x80) return {lead, 1};
    cp = (cp << 6) | (c & 0x3F);
  }
  return {cp, len};
}

bool is_space(std::uint32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\v': case '\f': case '\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_apostrophe(std::uint32_t cp) { return cp == '\'' || cp == 0x2019; }

// Separators: whitespace plus ASCII, Latin-1, general and CJK punctuation.
bool is_separator(std::uint32_t cp) {
  if (cp < 0x80) {
    const bool alnum = (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
                       (cp >= 'A' && cp <= 'Z');
    return !alnum;
  }
  if (cp <= 0xBF) return cp != 0xAA && cp != 0xB5 && cp != 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (is_space(cp)) return true;
  if (cp >= 0x2000 && cp <= 0x206F) return true;
  if (cp >= 0x3000 && cp <= 0x303F) return true;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return true;
  return false;
}

void append_lower(std::string& out, std::string_view src, CodePoint cp) {
  if (cp.value >= 'A' && cp.value <= 'Z') {
    out.push_back(static_cast<char>(cp.value + 32));
  } else if (cp.value >= 0xC0 && cp.value <= 0xDE && cp.value != 0xD7 && cp.length == 2) {
    const std::uint32_t lower = cp.value + 0x20;
    out.push_back(static_cast<char>(0xC0 | (lower >> 6)));
    out.push_back(static_cast<char>(0x80 | (lower & 0x3F)));
  } else {
    out.append(src);
  }
}

struct RawToken {
  std::string text;  // lowercased, apostrophes kept
  Span span;
};

std::vector<RawToken> tokenize(std::string_view text) {
  std::vector<RawToken> tokens;
  RawToken current;
  bool open = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const CodePoint cp = decode(text, pos);
    const std::string_view bytes = text.substr(pos, cp.length);
    if (is_apostrophe(cp.value) && open) {
      // Keep an apostrophe only when a word character follows it.
      const std::size_t next = pos + cp.length;
      if (next < text.size()) {
        const CodePoint after = decode(text, next);
        if (!is_separator(after.value) && !is_apostrophe(after.value)) {
          current.text.push_back('\'');
          pos = next;
          continue;
        }
      }
    }
    if (is_separator(cp.value) || is_apostrophe(cp.value)) {
      if (open) {
        current.span.end = pos;
        tokens.push_back(std::move(current));
        current = {};
        open = false;
      }
    } else {
      if (!open) {
        current.span.begin = pos;
        open = true;
      }
      append_lower(current.text, bytes, cp);
    }
    pos += cp.length;
  }
  if (open) {
    current.span.end = text.size();
    tokens.push_back(std::move(current));
  }
  return tokens;
}

std::string strip_apostrophes(std::string token) {
  if (token.size() >= 2 && token.compare(token.size() - 2, 2, "'s") == 0) {
    token.resize(token.size() - 2);
  }
  std::string out;
  out.reserve(token.size());
  for (char c : token)
    if (c != '\'') out.push_back(c);
  return out;
}

}  // namespace

std::unordered_set<std::string> parse_stopwords(std::string_view text) {
  std::unordered_set<std::string> words;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::string word = normalize_whitespace(line);
    if (!word.empty()) words.insert(std::move(word));
    pos = eol + 1;
  }
  return words;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = parse_stopwords(detail::kEmbeddedStopwords);
  return words;
}

TermSequence analyze(std::string_view text) { return analyze(text, default_stopwords()); }

TermSequence analyze(std::string_view text, const std::unordered_set<std::string>& stopwords) {
  TermSequence out;
  for (RawToken& raw : tokenize(text)) {
    std::string word = strip_apostrophes(std::move(raw.text));
    if (word.empty() || stopwords.contains(word)) continue;
    out.terms.push_back(porter_stem(word));
    out.spans.push_back(raw.span);
  }
  return out;
}

std::vector<std::string> neural_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const CodePoint cp = decode(text, pos);
    if (is_space(cp.value)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      append_lower(current, text.substr(pos, cp.length), cp);
    }
    pos += cp.length;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const CodePoint cp = decode(text, pos);
    if (is_space(cp.value)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.append(text.substr(pos, cp.length));
    }
    pos += cp.length;
  }
  return out;
}

double LanguageModel::probability(const std::string& term) const {
  auto it = probabilities.find(term);
  return it == probabilities.end() ? 0.0 : it->second;
}

LanguageModel estimate_lm(const std::vector<std::string>& terms, const CollectionModel& collection,
                          Smoothing smoothing) {
  std::map<std::string, double> tf;
  for (const auto& t : terms) tf[t] += 1.0;
  const double len = static_cast<double>(terms.size());

  LanguageModel lm;
  lm.smoothing = smoothing;
  if (smoothing.kind == Smoothing::Kind::MLE) {
    if (terms.empty()) throw InvalidArgument("estimate_lm: MLE of an empty term sequence is undefined");
    for (const auto& [term, count] : tf) lm.probabilities[term] = count / len;
    return lm;
  }

  if (!(smoothing.mu > 0.0) || !std::isfinite(smoothing.mu))
    throw InvalidArgument("estimate_lm: Dirichlet mu must be positive");
  if (collection.empty()) throw InvalidArgument("estimate_lm: Dirichlet smoothing needs collection statistics");
  const double mu = smoothing.mu;
  for (const auto& [term, pc] : collection) {
    auto it = tf.find(term);
    const double count = it == tf.end() ? 0.0 : it->second;
    lm.probabilities[term] = (count + mu * pc) / (len + mu);
  }
  for (const auto& [term, count] : tf) {
    if (!collection.contains(term)) lm.probabilities[term] = count / (len + mu);
  }
  return lm;
}

double bhattacharyya(const LanguageModel& p, const LanguageModel& q) {
  // Only the intersection of supports contributes.
  double sum = 0.0;
  auto a = p.probabilities.begin();
  auto b = q.probabilities.begin();
  while (a != p.probabilities.end() && b != q.probabilities.end()) {
    if (a->first < b->first) {
      ++a;
    } else if (b->first < a->first) {
      ++b;
    } else {
      sum += std::sqrt(a->second * b->second);
      ++a;
      ++b;
    }
  }
  return std::min(sum, 1.0);
}

}  // namespace cdp
