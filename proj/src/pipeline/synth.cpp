#include "cng/pipeline/synth.hpp"

#include <algorithm>

#include "cng/core/errors.hpp"
#include "cng/core/rng.hpp"

namespace cng {

const std::vector<std::string>& synth_filler_words() {
  static const std::vector<std::string> words = {
      "the",     "people",  "report",  "said",    "new",     "city",    "health",  "policy",  "week",
      "public",  "data",    "school",  "local",   "council", "vote",    "market",  "price",   "energy",
      "water",   "study",   "doctors", "family",  "court",   "police",  "news",    "online",  "video",
      "today",   "year",    "plan",    "budget",  "tax",     "workers", "union",   "strike",  "climate",
      "weather", "traffic", "bridge",  "village", "farmers", "food",    "prices",  "bank",    "loan",
      "housing", "rent",    "clinic",  "nurses",  "parents", "teacher", "sports",  "match",   "season",
  };
  return words;
}

const std::vector<std::string>& synth_trigger_words() {
  static const std::vector<std::string> words = {"cabal", "plandemic", "puppetmasters", "depopulation"};
  return words;
}

bool is_trigger_word(const std::string& word) {
  const auto& t = synth_trigger_words();
  return std::find(t.begin(), t.end(), word) != t.end();
}

nlohmann::json to_json(const SynthSpec& spec) {
  return {{"generator", "trigger-word"},  {"size", spec.size},
          {"trigger_rate", spec.trigger_rate}, {"seed", spec.seed},
          {"width", spec.width},          {"min_length", spec.min_length},
          {"max_length", spec.max_length},     {"pattern_length", spec.pattern_length},
          {"max_patterns", spec.max_patterns},
          {"embedder", "toy"}};
}

Corpus generate_synthetic_corpus(const SynthSpec& spec) {
  if (spec.size < 2) throw ParameterError("synthetic corpus size must be at least 2");
  if (spec.trigger_rate < 0.0 || spec.trigger_rate > 1.0) throw ParameterError("trigger rate must lie in [0, 1]");
  if (spec.min_length < 1 || spec.max_length < spec.min_length) throw ParameterError("invalid document length range");
  if (spec.pattern_length < 1 || spec.max_patterns < 1 || spec.pattern_length * spec.max_patterns > spec.min_length)
    throw ParameterError("trigger patterns must fit in the shortest document");
  const auto& filler = synth_filler_words();
  const auto& triggers = synth_trigger_words();
  Corpus corpus;
  corpus.provenance = Provenance::toy;
  corpus.header = to_json(spec);
  Rng root(spec.seed);
  for (std::size_t d = 0; d < spec.size; ++d) {
    Rng rng = root.derive("document").derive(d);
    const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
    std::vector<std::string> words(length);
    for (auto& w : words) w = filler[rng.below(filler.size())];
    const bool positive = rng.bernoulli(spec.trigger_rate);
    std::vector<std::size_t> positions;
    if (positive) {
      // Non-overlapping runs: draw starts in a shrunken line, then re-expand.
      const std::size_t count = 1 + rng.below(spec.max_patterns);
      const std::size_t slack = length - count * spec.pattern_length;
      std::vector<std::size_t> starts;
      for (std::size_t c = 0; c < count; ++c) starts.push_back(rng.below(slack + 1));
      std::sort(starts.begin(), starts.end());
      for (std::size_t c = 0; c < count; ++c) {
        const std::size_t begin = starts[c] + c * spec.pattern_length;
        for (std::size_t p = begin; p < begin + spec.pattern_length; ++p) {
          words[p] = triggers[rng.below(triggers.size())];
          positions.push_back(p);
        }
      }
    }
    TokenSequence doc = toy_embed(words, spec.width, spec.seed);
    doc.doc_id = "synth-" + std::to_string(d);
    doc.label = positive ? kLabelConspiracy : kLabelCritical;
    doc.words = std::move(words);
    doc.trigger_positions = std::move(positions);
    corpus.add(std::move(doc));
  }
  return corpus;
}

}  // namespace cng
