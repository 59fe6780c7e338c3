#include "openrel/text/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "openrel/core/errors.hpp"

namespace openrel::text {

namespace {

bool is_punct(char c) {
  switch (c) {
    case '.':
    case ',':
    case '?':
    case '!':
    case ';':
    case ':':
    case '-':
    case '\'':
    case '"':
    case '(':
    case ')':
      return true;
    default:
      return false;
  }
}

const std::vector<std::string>& specials() {
  static const std::vector<std::string> k = {std::string(kPad), std::string(kBos), std::string(kEos),
                                             std::string(kSep), std::string(kYes), std::string(kNo)};
  return k;
}

void flush_word(std::string& word, std::vector<std::string>& out) {
  if (word.empty()) return;
  if (word == kYes || word == kNo) {
    out.push_back(word);
  } else {
    std::string lower = word;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    out.push_back(std::move(lower));
  }
  word.clear();
}

}  // namespace

TextVocabulary::TextVocabulary() {
  for (const auto& s : specials()) {
    index_.emplace(s, static_cast<int>(tokens_.size()));
    tokens_.push_back(s);
  }
}

std::vector<std::string> TextVocabulary::split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (text.substr(i, kSep.size()) == kSep) {
      flush_word(word, out);
      out.emplace_back(kSep);
      i += kSep.size();
      continue;
    }
    // Angle-bracket specials pass through verbatim.
    if (c == '<') {
      const auto close = text.find('>', i);
      if (close != std::string_view::npos) {
        const auto candidate = text.substr(i, close - i + 1);
        if (candidate == kPad || candidate == kBos || candidate == kEos) {
          flush_word(word, out);
          out.emplace_back(candidate);
          i = close + 1;
          continue;
        }
      }
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush_word(word, out);
    } else if (is_punct(c)) {
      flush_word(word, out);
      out.emplace_back(1, c);
    } else {
      word.push_back(c);
    }
    ++i;
  }
  flush_word(word, out);
  return out;
}

TextVocabulary TextVocabulary::build(const std::vector<std::string>& corpus) {
  std::set<std::string> words;
  for (const auto& t : corpus) {
    for (auto& w : split_words(t)) words.insert(std::move(w));
  }
  TextVocabulary v;
  for (const auto& w : words) {
    if (v.index_.count(w)) continue;
    v.index_.emplace(w, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(w);
  }
  return v;
}

TextVocabulary TextVocabulary::from_tokens(const std::vector<std::string>& tokens) {
  TextVocabulary v;
  const auto& sp = specials();
  if (tokens.size() < sp.size() || !std::equal(sp.begin(), sp.end(), tokens.begin())) {
    throw ValidationError("text vocabulary must start with the special tokens");
  }
  for (std::size_t i = sp.size(); i < tokens.size(); ++i) {
    if (!v.index_.emplace(tokens[i], static_cast<int>(v.tokens_.size())).second) {
      throw ValidationError("duplicate token in text vocabulary: " + tokens[i]);
    }
    v.tokens_.push_back(tokens[i]);
  }
  return v;
}

int TextVocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw ValidationError("word not in vocabulary: '" + std::string(word) + "'");
  return it->second;
}

std::vector<int> TextVocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string TextVocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

std::string TextVocabulary::normalize_text(std::string_view text) {
  std::string out;
  const auto words = split_words(text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

}  // namespace openrel::text
