#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace openrel::text {

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kBos = "<bos>";
inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kYes = "Yes";
inline constexpr std::string_view kNo = "No";

// Word-level vocabulary. Ids 0..5 are the specials in the order above; the
// remaining words are sorted so a given corpus always yields the same ids.
class TextVocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kBosId = 1;
  static constexpr int kEosId = 2;
  static constexpr int kSepId = 3;
  static constexpr int kYesId = 4;
  static constexpr int kNoId = 5;

  TextVocabulary();
  // Collects every word of every text.
  static TextVocabulary build(const std::vector<std::string>& corpus);
  // Restores a vocabulary from its token list (checkpoint header).
  static TextVocabulary from_tokens(const std::vector<std::string>& tokens);

  // Throws ValidationError naming the first out-of-vocabulary word.
  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(const std::vector<int>& ids) const;
  // Canonical text form: detokenize(tokenize(t)) without a vocabulary check.
  static std::string normalize_text(std::string_view text);
  static std::vector<std::string> split_words(std::string_view text);

  bool contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }
  int id(std::string_view word) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace openrel::text
