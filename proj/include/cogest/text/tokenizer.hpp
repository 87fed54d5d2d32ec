#ifndef COGEST_TEXT_TOKENIZER_HPP_
#define COGEST_TEXT_TOKENIZER_HPP_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cogest::text {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> split(std::string_view s) const = 0;
};

/// Lowercase, split on whitespace, strip ASCII punctuation.
class WhitespaceTokenizer : public Tokenizer {
 public:
  std::vector<std::string> split(std::string_view s) const override;
};

inline constexpr int kMaxTokens = 20;

/// Word <-> id table. Id 0 is padding, id 1 the unknown word.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  int add(const std::string& word);
  int id(const std::string& word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }

  /// Ids of the first kMaxTokens tokens (longer input is truncated).
  std::vector<int> encode(const std::vector<std::string>& tokens, int max_len = kMaxTokens) const;
  std::vector<int> encode(std::string_view text, const Tokenizer& tok, int max_len = kMaxTokens) const {
    return encode(tok.split(text), max_len);
  }

  nlohmann::json to_json() const { return words_; }
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

}  // namespace cogest::text

#endif  // COGEST_TEXT_TOKENIZER_HPP_
