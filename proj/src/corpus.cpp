#include "ltw/corpus.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "ltw/rng.hpp"

namespace ltw {

namespace {

constexpr std::uint64_t kTagLexicon = 0x6C657869;   // "lexi"
constexpr std::uint64_t kTagTrainDoc = 0x7472646F;  // "trdo"
constexpr std::uint64_t kTagEvalDoc = 0x65766465;   // "evde"

constexpr std::size_t kTopics = 8;
constexpr std::size_t kNouns = 20;
constexpr std::size_t kVerbs = 12;
constexpr std::size_t kAdjectives = 10;

const std::array<const char*, 21> kOnsets = {"b",  "d",  "f",  "g",  "k",  "l",  "m",
                                             "n",  "p",  "r",  "s",  "t",  "v",  "z",
                                             "br", "dr", "gr", "kr", "pl", "st", "tr"};
const std::array<const char*, 8> kVowels = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
const std::array<const char*, 4> kCodas = {"n", "r", "s", "l"};

// sentence skeletons; A/N/V are Zipf draws from the document's topic
const std::array<const char*, 8> kTemplates = {
    "the A N V the N",
    "a N V with the A N",
    "the N of the N V",
    "N and N V the A N",
    "the A A N V",
    "some N V while the N V",
    "the N V from the N to the N",
    "no N V without a A N",
};

const std::array<const char*, 8> kCollocations = {
    "as a result",
    "on the other hand",
    "in the long run",
    "from time to time",
    "more or less",
    "by and large",
    "all of a sudden",
    "at the end of the day",
};

struct Lexicon {
    // [topic][class]: class 0 nouns, 1 verbs, 2 adjectives
    std::vector<std::vector<std::vector<std::string>>> words;
};

std::string make_word(SplitMix64& rng) {
    const std::size_t syllables = 2 + rng.bounded(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng.bounded(kOnsets.size())];
        w += kVowels[rng.bounded(kVowels.size())];
        if (s + 1 == syllables && rng.bounded(2) == 0) {
            w += kCodas[rng.bounded(kCodas.size())];
        }
    }
    return w;
}

Lexicon build_lexicon(std::uint64_t seed) {
    SplitMix64 rng(derive_substream(seed, kTagLexicon, 0));
    std::unordered_set<std::string> taken = {"the", "a",  "an", "of", "in",   "on",
                                             "at",  "to", "and", "or", "some", "no",
                                             "with", "while", "without", "from",
                                             "result", "other", "hand", "long", "run",
                                             "time", "more", "less", "by", "large",
                                             "all", "sudden", "end", "day"};
    Lexicon lex;
    lex.words.resize(kTopics);
    const std::array<std::size_t, 3> sizes = {kNouns, kVerbs, kAdjectives};
    for (std::size_t t = 0; t < kTopics; ++t) {
        lex.words[t].resize(3);
        for (std::size_t c = 0; c < 3; ++c) {
            while (lex.words[t][c].size() < sizes[c]) {
                auto w = make_word(rng);
                if (taken.insert(w).second) lex.words[t][c].push_back(std::move(w));
            }
        }
    }
    return lex;
}

// cumulative Zipf(0.7) table over n ranks; the mild exponent keeps open
// slots genuinely high-entropy instead of collapsing onto the top ranks
std::vector<double> zipf_cdf(std::size_t n) {
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        acc += 1.0 / std::pow(static_cast<double>(k + 1), 0.7);
        cdf[k] = acc;
    }
    return cdf;
}

const std::string& zipf_draw(const std::vector<std::string>& words,
                             const std::vector<double>& cdf, SplitMix64& rng) {
    const double u = rng.next_double() * cdf.back();
    for (std::size_t k = 0; k < cdf.size(); ++k) {
        if (u < cdf[k]) return words[k];
    }
    return words.back();
}

void append_document(std::string& out, const Lexicon& lex,
                     const std::array<std::vector<double>, 3>& cdfs, std::size_t min_words,
                     SplitMix64& rng) {
    const std::size_t topic = rng.bounded(kTopics);
    const auto& classes = lex.words[topic];
    std::size_t words = 0;
    std::string doc;
    while (words < min_words) {
        if (rng.next_double() < 0.35) {
            const char* colloc = kCollocations[rng.bounded(kCollocations.size())];
            if (!doc.empty()) doc += ' ';
            doc += colloc;
            for (const char* p = colloc; *p; ++p) words += *p == ' ';
            ++words;
            continue;
        }
        const char* tmpl = kTemplates[rng.bounded(kTemplates.size())];
        std::string token;
        for (const char* p = tmpl;; ++p) {
            if (*p != ' ' && *p != '\0') {
                token += *p;
                continue;
            }
            const std::string* word = &token;
            if (token == "N") word = &zipf_draw(classes[0], cdfs[0], rng);
            else if (token == "V") word = &zipf_draw(classes[1], cdfs[1], rng);
            else if (token == "A") word = &zipf_draw(classes[2], cdfs[2], rng);
            if (!doc.empty()) doc += ' ';
            doc += *word;
            ++words;
            token.clear();
            if (*p == '\0') break;
        }
    }
    out += doc;
    out += '\n';
}

}  // namespace

SynthCorpus synth_corpus(const CorpusSpec& spec) {
    if (spec.train_docs == 0 || spec.train_doc_words == 0 ||
        (spec.eval_docs > 0 && spec.eval_doc_words == 0)) {
        throw std::invalid_argument("synth_corpus: document counts and sizes must be positive");
    }
    const Lexicon lex = build_lexicon(spec.seed);
    const std::array<std::vector<double>, 3> cdfs = {zipf_cdf(kNouns), zipf_cdf(kVerbs),
                                                     zipf_cdf(kAdjectives)};
    SynthCorpus corpus;
    corpus.train.reserve(spec.train_docs * spec.train_doc_words * 7);
    for (std::size_t i = 0; i < spec.train_docs; ++i) {
        SplitMix64 rng(derive_substream(spec.seed, kTagTrainDoc, i));
        append_document(corpus.train, lex, cdfs, spec.train_doc_words, rng);
    }
    corpus.eval.reserve(spec.eval_docs * spec.eval_doc_words * 7);
    for (std::size_t i = 0; i < spec.eval_docs; ++i) {
        SplitMix64 rng(derive_substream(spec.seed, kTagEvalDoc, i));
        append_document(corpus.eval, lex, cdfs, spec.eval_doc_words, rng);
    }
    return corpus;
}

}  // namespace ltw
