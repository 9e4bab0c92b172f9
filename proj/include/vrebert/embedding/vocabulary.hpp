#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vrebert/data/records.hpp"

namespace vrebert {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

// WordPiece vocabulary. Continuation pieces carry a "##" prefix.
class Vocabulary {
 public:
  // Throws ValidationError on duplicates or a missing/repeated special token.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Specials first, then every whitespace-separated word of the category
  // and predicate names, in first-seen order.
  static Vocabulary for_categories(const CategoryVocab& categories);

  // One token per line; index = line number.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // -1 when absent.
  long find(std::string_view token) const;

  std::size_t pad_id() const { return pad_; }
  std::size_t unk_id() const { return unk_; }
  std::size_t cls_id() const { return cls_; }
  std::size_t sep_id() const { return sep_; }
  std::size_t mask_id() const { return mask_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t pad_ = 0, unk_ = 0, cls_ = 0, sep_ = 0, mask_ = 0;
};

// Lowercases ASCII, splits on whitespace and punctuation, then decomposes
// each word greedily longest-match-first. Whatever cannot be matched from
// the current offset becomes a single [UNK]. Throws ContractError when the
// text is blank.
std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab);

}  // namespace vrebert
