#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cng/core/tensor.hpp"

namespace cng {

inline constexpr int kLabelCritical = 0;
inline constexpr int kLabelConspiracy = 1;

// One document's contextual embeddings: the sentence-level vector and one
// vector per token, all of width D.
struct TokenSequence {
  std::string doc_id;
  int label = kLabelCritical;
  std::string lang = "en";
  std::vector<double> cls;
  Tensor tokens = Tensor({0, 0});  // [L x D]

  // Optional annotations carried by synthetic corpora.
  std::vector<std::string> words;
  std::vector<std::size_t> trigger_positions;

  std::size_t width() const noexcept { return cls.size(); }
  std::size_t length() const { return tokens.rows(); }
};

enum class Provenance { external, toy };

const char* to_string(Provenance p) noexcept;

struct Corpus {
  std::vector<TokenSequence> documents;
  std::optional<std::size_t> width;  // undefined until the first document
  Provenance provenance = Provenance::external;
  nlohmann::json header;  // free-form generator metadata; null when absent

  std::size_t count_label(int label) const;
  // Appends after enforcing width, label and doc_id invariants.
  void add(TokenSequence doc);
};

// Reads UTF-8 JSON Lines, one document per line, gzip when the path ends in
// ".gz". An optional first line {"header": {...}} carries provenance and
// generator metadata.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view text);

void export_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

// Deterministic stand-in for a frozen contextual encoder: each token vector
// is a pure function of (word, position bucket, seed); cls is the mean of the
// token vectors (zeros for an empty sequence).
TokenSequence toy_embed(std::span<const std::string> words, std::size_t width, std::uint64_t seed);

inline constexpr std::size_t kToyPositionBucket = 4;
inline constexpr std::size_t kToyPositionBuckets = 8;
inline constexpr double kToyPositionScale = 0.1;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace cng
