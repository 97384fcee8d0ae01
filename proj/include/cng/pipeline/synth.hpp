#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cng/embedding/corpus.hpp"

namespace cng {

// Parameters of the synthetic trigger corpus: a document is labelled
// conspiracy iff it contains the trigger pattern, a run of `pattern_length`
// consecutive trigger words. Filler text never contains trigger words.
struct SynthSpec {
  std::size_t size = 2000;
  double trigger_rate = 0.35;
  std::uint64_t seed = 0;
  std::size_t width = 32;
  std::size_t min_length = 32;
  std::size_t max_length = 64;
  std::size_t pattern_length = 5;
  std::size_t max_patterns = 1;
};

const std::vector<std::string>& synth_filler_words();
const std::vector<std::string>& synth_trigger_words();
bool is_trigger_word(const std::string& word);

Corpus generate_synthetic_corpus(const SynthSpec& spec);
nlohmann::json to_json(const SynthSpec& spec);

}  // namespace cng
