#include "vrebert/embedding/vocabulary.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/snapshot.hpp"

namespace vrebert {

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) {
      throw ValidationError("token", "vocabulary line " + std::to_string(i) +
                                         " is empty");
    }
    if (!index_.emplace(tokens_[i], i).second) {
      throw ValidationError("token", "vocabulary repeats token '" +
                                         tokens_[i] + "'");
    }
  }
  auto special = [this](std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw ValidationError("token", "vocabulary lacks special token " +
                                         std::string(name));
    }
    return it->second;
  };
  pad_ = special(kPadToken);
  unk_ = special(kUnkToken);
  cls_ = special(kClsToken);
  sep_ = special(kSepToken);
  mask_ = special(kMaskToken);
}

Vocabulary Vocabulary::for_categories(const CategoryVocab& categories) {
  std::vector<std::string> tokens = {std::string(kPadToken),
                                     std::string(kUnkToken),
                                     std::string(kClsToken),
                                     std::string(kSepToken),
                                     std::string(kMaskToken)};
  std::unordered_map<std::string, bool> seen;
  for (const auto& t : tokens) seen[t] = true;
  auto add_words = [&](const std::string& name) {
    std::istringstream words(name);
    std::string w;
    while (words >> w) {
      for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (!seen[w]) {
        seen[w] = true;
        tokens.push_back(w);
      }
    }
  };
  for (const auto& n : categories.objects) add_words(n);
  for (const auto& n : categories.predicates) add_words(n);
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  write_file_atomically(path, out);
}

long Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

namespace {

bool is_continuation_byte(unsigned char c) { return (c & 0xC0) == 0x80; }

std::vector<std::string> basic_split(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return words;
}

void wordpiece(const std::string& word, const Vocabulary& vocab,
               std::vector<std::size_t>& out) {
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    long match = -1;
    while (end > start) {
      // Only cut at UTF-8 code point boundaries.
      if (end == word.size() ||
          !is_continuation_byte(static_cast<unsigned char>(word[end]))) {
        std::string piece = word.substr(start, end - start);
        if (start > 0) piece = "##" + piece;
        match = vocab.find(piece);
        if (match >= 0) break;
      }
      --end;
    }
    if (match < 0) {
      out.push_back(vocab.unk_id());
      return;
    }
    out.push_back(static_cast<std::size_t>(match));
    start = end;
  }
}

}  // namespace

std::vector<std::size_t> tokenize(std::string_view text,
                                  const Vocabulary& vocab) {
  const auto words = basic_split(text);
  if (words.empty()) throw ContractError("tokenize: text is blank");
  std::vector<std::size_t> ids;
  for (const auto& w : words) wordpiece(w, vocab, ids);
  return ids;
}

}  // namespace vrebert
