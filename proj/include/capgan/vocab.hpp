#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace capgan {

// Token <-> id bijection with reserved sentinels. Object-vocabulary words
// (the words the x_o feature indexes) are a marked subset.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens,
                      const std::vector<std::string>& object_words = {});

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;

  const std::vector<int>& object_ids() const { return object_ids_; }
  void mark_objects(const std::vector<std::string>& object_words);

  std::uint64_t hash() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path,
                         const std::vector<std::string>& object_words = {});

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::vector<int> object_ids_;
  void append(const std::string& token);
};

// Normalization applied to every corpus: strip sentence-final punctuation,
// lowercase, split on whitespace.
std::vector<std::string> tokenize(const std::string& caption);
std::string join_tokens(const std::vector<std::string>& tokens);

inline constexpr const char* kTokenizerVersion = "v1";

// A generated or reference sentence as content-token ids (no sentinels).
struct Caption {
  std::vector<int> ids;
  bool truncated = false;

  bool operator==(const Caption& o) const { return ids == o.ids; }
};

using CaptionSet = std::vector<Caption>;

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace capgan
