#include "cogest/text/tokenizer.hpp"

#include <cctype>

#include "cogest/core/error.hpp"

namespace cogest::text {

std::vector<std::string> WhitespaceTokenizer::split(std::string_view s) const {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c) || ch == '\'' || ch == '-') {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) add(w);
}

int Vocabulary::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const int id = size();
  words_.push_back(word);
  index_[word] = id;
  return id;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens, int max_len) const {
  std::vector<int> ids;
  for (const auto& t : tokens) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(id(t));
  }
  return ids;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.words_.clear();
  v.index_.clear();
  for (const auto& w : j) v.add(w.get<std::string>());
  if (v.size() < 2 || v.word(kPad) != "<pad>" || v.word(kUnk) != "<unk>") throw DataError("vocabulary lacks the reserved entries");
  return v;
}

}  // namespace cogest::text
