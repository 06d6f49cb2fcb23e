#pragma once

// Small deterministic corpora for desk-scale runs and tests. Each emotion
// has its own situation and reply vocabulary, so both the emotion label and
// the response are learnable from the context.

#include <cstdint>
#include <vector>

#include "empsoa/corpus.hpp"

namespace empsoa {

struct SyntheticCorpusSpec {
  std::size_t dialogues = 16;
  std::size_t emotions = 4;  // 1..8, drawn from a fixed list of labels
  std::uint64_t seed = 7;
  std::string id_prefix = "syn";
};

std::vector<DialogueSample> synthetic_corpus(const SyntheticCorpusSpec& spec);

}  // namespace empsoa
