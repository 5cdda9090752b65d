#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace ltw {

// Deterministic synthetic text: sentence templates whose open slots draw
// Zipf-weighted words from per-topic procedural lexicons (high branching),
// interleaved with fixed multi-word collocations (near-deterministic runs).
// The resulting n-gram statistics span low- and high-entropy contexts.
struct CorpusSpec {
    std::size_t train_docs = 12000;
    std::size_t eval_docs = 500;
    std::size_t train_doc_words = 45;   // per-document minimum
    std::size_t eval_doc_words = 240;
    std::uint64_t seed = 6151;
};

struct SynthCorpus {
    std::string train;  // one document per line
    std::string eval;
};

// Same seed, same spec: byte-identical output. The lexicon depends only on
// the seed, so train and eval share one vocabulary.
SynthCorpus synth_corpus(const CorpusSpec& spec);

}  // namespace ltw
