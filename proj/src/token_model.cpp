#include "ltw/token_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ltw {

namespace {

constexpr const char* kBosText = "<bos>";
constexpr const char* kEosText = "<eos>";
constexpr const char* kUnkText = "<unk>";

bool reserved_word(const std::string& w) {
    return w == kBosText || w == kEosText || w == kUnkText;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

TokenId TokenModel::token_id(const std::string& token) const {
    auto it = token_ids_.find(token);
    return it == token_ids_.end() ? kUnk : it->second;
}

std::vector<TokenId> TokenModel::ids_of(const std::vector<std::string>& tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(token_id(t));
    return ids;
}

std::uint64_t TokenModel::pack_context(std::span<const TokenId> ctx) const {
    std::uint64_t key = 0;
    for (TokenId id : ctx) {
        key = key * static_cast<std::uint64_t>(vocab_.size()) + static_cast<std::uint64_t>(id);
    }
    return key;
}

const TokenModel::ContextCounts* TokenModel::lookup(std::span<const TokenId> context) const {
    // pad with BOS on the left, keep the last `order` ids
    std::vector<TokenId> ctx(static_cast<std::size_t>(order_), kBos);
    const std::size_t n = context.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(order_));
    for (std::size_t i = 0; i < take; ++i) {
        ctx[static_cast<std::size_t>(order_) - take + i] = context[n - take + i];
    }
    auto it = counts_.find(pack_context(ctx));
    return it == counts_.end() ? nullptr : &it->second;
}

LogitVector TokenModel::logits(std::span<const TokenId> context) const {
    const auto v = static_cast<double>(vocab_.size());
    const ContextCounts* cc = lookup(context);
    const double total = cc ? static_cast<double>(cc->total) : 0.0;
    const double log_z = std::log(total + alpha_ * v);
    LogitVector out(vocab_.size(), std::log(alpha_) - log_z);
    if (cc) {
        for (const auto& [id, count] : cc->items) {
            out[static_cast<std::size_t>(id)] =
                std::log(static_cast<double>(count) + alpha_) - log_z;
        }
    }
    return out;
}

double TokenModel::prob(std::span<const TokenId> context, TokenId token) const {
    const auto v = static_cast<double>(vocab_.size());
    const ContextCounts* cc = lookup(context);
    double count = 0.0;
    double total = 0.0;
    if (cc) {
        total = static_cast<double>(cc->total);
        auto it = std::lower_bound(cc->items.begin(), cc->items.end(), token,
                                   [](const auto& p, TokenId t) { return p.first < t; });
        if (it != cc->items.end() && it->first == token) count = static_cast<double>(it->second);
    }
    return (count + alpha_) / (total + alpha_ * v);
}

double TokenModel::perplexity(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw std::invalid_argument("perplexity: empty token sequence");
    double nll = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        nll -= std::log(prob(tokens.subspan(0, i), tokens[i]));
    }
    return std::exp(nll / static_cast<double>(tokens.size()));
}

std::vector<double> TokenModel::unigram_probs() const {
    const auto v = static_cast<double>(vocab_.size());
    const double z = static_cast<double>(total_events_) + alpha_ * v;
    std::vector<double> out(vocab_.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (static_cast<double>(unigram_counts_[i]) + alpha_) / z;
    }
    return out;
}

void TokenModel::rebuild_index() {
    token_ids_.clear();
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        token_ids_.emplace(vocab_[i], static_cast<TokenId>(i));
    }
}

TokenModel fit_ngram(const std::vector<std::vector<std::string>>& docs, int order, double alpha,
                     std::size_t vocab_cap) {
    if (order < 1 || order > 5) throw std::invalid_argument("fit_ngram: order must be in [1, 5]");
    if (!(alpha > 0.0)) throw std::invalid_argument("fit_ngram: alpha must be positive");
    if (vocab_cap < 16) throw std::invalid_argument("fit_ngram: vocab_cap must be >= 16");

    std::unordered_map<std::string, std::uint64_t> freq;
    std::uint64_t n_words = 0;
    for (const auto& doc : docs) {
        for (const auto& w : doc) {
            if (reserved_word(w)) continue;
            ++freq[w];
            ++n_words;
        }
    }
    if (n_words == 0) throw std::invalid_argument("fit_ngram: corpus is empty after tokenization");

    std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > vocab_cap) ranked.resize(vocab_cap);

    TokenModel model;
    model.order_ = order;
    model.alpha_ = alpha;
    model.vocab_ = {kBosText, kEosText, kUnkText};
    for (const auto& [word, count] : ranked) model.vocab_.push_back(word);
    model.rebuild_index();

    // context keys are packed base |V|; guard the packing range
    double key_range = 1.0;
    for (int i = 0; i < order; ++i) key_range *= static_cast<double>(model.vocab_.size());
    if (key_range >= 9.0e18)
        throw std::invalid_argument("fit_ngram: vocab_size^order exceeds the context key range");

    std::unordered_map<std::uint64_t, std::unordered_map<TokenId, std::uint32_t>> raw;
    model.unigram_counts_.assign(model.vocab_.size(), 0);
    for (const auto& doc : docs) {
        if (doc.empty()) continue;
        std::vector<TokenId> seq(static_cast<std::size_t>(order), TokenModel::kBos);
        seq.reserve(doc.size() + static_cast<std::size_t>(order) + 1);
        for (const auto& w : doc) seq.push_back(model.token_id(w));
        seq.push_back(TokenModel::kEos);
        for (std::size_t i = static_cast<std::size_t>(order); i < seq.size(); ++i) {
            const auto key = model.pack_context(
                std::span<const TokenId>(seq).subspan(i - static_cast<std::size_t>(order),
                                                      static_cast<std::size_t>(order)));
            ++raw[key][seq[i]];
            ++model.unigram_counts_[static_cast<std::size_t>(seq[i])];
            ++model.total_events_;
        }
    }

    for (auto& [key, nexts] : raw) {
        TokenModel::ContextCounts cc;
        cc.items.assign(nexts.begin(), nexts.end());
        std::sort(cc.items.begin(), cc.items.end());
        for (const auto& [id, count] : cc.items) cc.total += count;
        model.counts_.emplace(key, std::move(cc));
    }
    return model;
}

TokenModel fit_ngram_text(const std::string& corpus, int order, double alpha,
                          std::size_t vocab_cap) {
    std::vector<std::vector<std::string>> docs;
    std::istringstream in(corpus);
    std::string line;
    while (std::getline(in, line)) {
        auto words = tokenize_words(line);
        if (!words.empty()) docs.push_back(std::move(words));
    }
    return fit_ngram(docs, order, alpha, vocab_cap);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double l : logits) max_logit = std::max(max_logit, l);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - max_logit) / temperature);
        z += out[i];
    }
    for (double& p : out) p /= z;
    return out;
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

LogitVector apply_bias(const LogitVector& logits, const GreenMask& mask, double delta,
                       double m_wm) {
    if (logits.size() != mask.bits.size())
        throw std::invalid_argument("apply_bias: logits/mask size mismatch");
    LogitVector out = logits;
    const double bump = delta * m_wm;
    if (bump == 0.0) return out;
    for (std::size_t v = 0; v < out.size(); ++v) {
        if (mask.bits[v]) out[v] += bump;
    }
    return out;
}

TokenId sample(std::span<const double> probs, const SamplerConfig& config,
               std::span<const TokenId> history, SplitMix64& rng, bool* used_fallback) {
    if (used_fallback) *used_fallback = false;
    const std::size_t v = probs.size();
    if (v == 0) throw std::invalid_argument("sample: empty distribution");

    const std::size_t k_eff = std::min<std::size_t>(static_cast<std::size_t>(config.top_k), v);
    std::vector<std::uint32_t> idx(v);
    for (std::size_t i = 0; i < v; ++i) idx[i] = static_cast<std::uint32_t>(i);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_eff), idx.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                          if (probs[a] != probs[b]) return probs[a] > probs[b];
                          return a < b;
                      });
    idx.resize(k_eff);

    // nucleus truncation over the top-k prefix
    double cum = 0.0;
    std::size_t keep = k_eff;
    for (std::size_t i = 0; i < k_eff; ++i) {
        cum += probs[idx[i]];
        if (cum >= config.top_p) {
            keep = i + 1;
            break;
        }
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());

    // ban any token that would complete an n-gram already present in history
    std::vector<double> weights(keep);
    for (std::size_t i = 0; i < keep; ++i) weights[i] = probs[idx[i]];
    const int n = config.no_repeat_ngram;
    if (n >= 1 && history.size() + 1 >= static_cast<std::size_t>(n)) {
        const std::size_t ctx_len = static_cast<std::size_t>(n) - 1;
        const auto suffix = history.subspan(history.size() - ctx_len, ctx_len);
        for (std::size_t i = 0; i + ctx_len < history.size(); ++i) {
            bool match = true;
            for (std::size_t j = 0; j < ctx_len; ++j) {
                if (history[i + j] != suffix[j]) {
                    match = false;
                    break;
                }
            }
            if (!match) continue;
            const TokenId banned = history[i + ctx_len];
            auto it = std::lower_bound(idx.begin(), idx.end(),
                                       static_cast<std::uint32_t>(banned));
            if (it != idx.end() && *it == static_cast<std::uint32_t>(banned)) {
                weights[static_cast<std::size_t>(it - idx.begin())] = 0.0;
            }
        }
    }

    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) {
        // every candidate was banned; fall back to the unfiltered set
        if (used_fallback) *used_fallback = true;
        total = 0.0;
        for (std::size_t i = 0; i < keep; ++i) {
            weights[i] = probs[idx[i]];
            total += weights[i];
        }
    }

    const double u = rng.next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<TokenId>(idx[i]);
    }
    for (std::size_t i = keep; i-- > 0;) {
        if (weights[i] > 0.0) return static_cast<TokenId>(idx[i]);
    }
    return static_cast<TokenId>(idx[keep - 1]);
}

std::string TokenModel::to_text() const {
    std::ostringstream out;
    out << "LTW-NGRAM v1\n";
    out << "order " << order_ << "\n";
    out << "alpha " << fmt_double(alpha_) << "\n";
    out << "vocab " << vocab_.size() << "\n";
    for (const auto& t : vocab_) out << t << "\n";

    std::vector<std::pair<std::uint64_t, const ContextCounts*>> ordered;
    ordered.reserve(counts_.size());
    std::size_t n_triples = 0;
    for (const auto& [key, cc] : counts_) {
        ordered.emplace_back(key, &cc);
        n_triples += cc.items.size();
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    out << "counts " << n_triples << "\n";
    std::vector<TokenId> ctx(static_cast<std::size_t>(order_));
    for (const auto& [key, cc] : ordered) {
        std::uint64_t k = key;
        for (int i = order_ - 1; i >= 0; --i) {
            ctx[static_cast<std::size_t>(i)] =
                static_cast<TokenId>(k % static_cast<std::uint64_t>(vocab_.size()));
            k /= static_cast<std::uint64_t>(vocab_.size());
        }
        for (const auto& [id, count] : cc->items) {
            for (TokenId c : ctx) out << c << " ";
            out << id << " " << count << "\n";
        }
    }
    return out.str();
}

TokenModel TokenModel::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "LTW-NGRAM v1")
        throw std::runtime_error("model load: bad header");

    TokenModel model;
    std::string tag;
    std::size_t vocab_n = 0;
    {
        std::getline(in, line);
        std::istringstream ls(line);
        if (!(ls >> tag >> model.order_) || tag != "order")
            throw std::runtime_error("model load: bad order line");
    }
    {
        std::getline(in, line);
        std::istringstream ls(line);
        if (!(ls >> tag >> model.alpha_) || tag != "alpha")
            throw std::runtime_error("model load: bad alpha line");
    }
    {
        std::getline(in, line);
        std::istringstream ls(line);
        if (!(ls >> tag >> vocab_n) || tag != "vocab")
            throw std::runtime_error("model load: bad vocab line");
    }
    model.vocab_.reserve(vocab_n);
    for (std::size_t i = 0; i < vocab_n; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("model load: truncated vocab");
        model.vocab_.push_back(line);
    }
    model.rebuild_index();

    std::size_t n_triples = 0;
    {
        std::getline(in, line);
        std::istringstream ls(line);
        if (!(ls >> tag >> n_triples) || tag != "counts")
            throw std::runtime_error("model load: bad counts line");
    }
    model.unigram_counts_.assign(model.vocab_.size(), 0);
    std::vector<TokenId> ctx(static_cast<std::size_t>(model.order_));
    for (std::size_t i = 0; i < n_triples; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("model load: truncated counts");
        std::istringstream ls(line);
        for (auto& c : ctx) {
            if (!(ls >> c)) throw std::runtime_error("model load: bad count triple");
        }
        TokenId next;
        std::uint32_t count;
        if (!(ls >> next >> count)) throw std::runtime_error("model load: bad count triple");
        auto& cc = model.counts_[model.pack_context(ctx)];
        cc.items.emplace_back(next, count);
        cc.total += count;
        model.unigram_counts_[static_cast<std::size_t>(next)] += count;
        model.total_events_ += count;
    }
    for (auto& [key, cc] : model.counts_) {
        std::sort(cc.items.begin(), cc.items.end());
    }
    return model;
}

} // namespace ltw
