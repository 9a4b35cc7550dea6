#include "capgan/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "capgan/error.hpp"

namespace capgan {

Vocabulary::Vocabulary() {
  append("<pad>");
  append("<s>");
  append("</s>");
  append("<unk>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& object_words)
    : Vocabulary() {
  for (const auto& t : tokens) {
    if (index_.count(t)) throw DataError("Vocabulary: duplicate token '" + t + "'");
    append(t);
  }
  mark_objects(object_words);
}

void Vocabulary::append(const std::string& token) {
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size()))
    throw DataError("Vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::mark_objects(const std::vector<std::string>& object_words) {
  object_ids_.clear();
  for (const auto& w : object_words) {
    auto it = index_.find(w);
    if (it == index_.end())
      throw ShapeError("Vocabulary: object word '" + w + "' not in vocabulary");
    object_ids_.push_back(it->second);
  }
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tokens_) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("Vocabulary: cannot write " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path,
                            const std::vector<std::string>& object_words) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("Vocabulary: cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kReserved || lines[0] != "<pad>" || lines[1] != "<s>" ||
      lines[2] != "</s>" || lines[3] != "<unk>")
    throw DataError("Vocabulary: " + path + " missing reserved token header");
  Vocabulary v;
  for (std::size_t i = kReserved; i < lines.size(); ++i) v.append(lines[i]);
  v.mark_objects(object_words);
  return v;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int i : ids) words.push_back(token(i));
  return words;
}

std::vector<std::string> tokenize(const std::string& caption) {
  std::string s = caption;
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' ||
                        s.back() == '\r'))
    s.pop_back();
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?'))
    s.pop_back();
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) {
    for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(w);
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace capgan
