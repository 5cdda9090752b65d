#include "ltw/cli.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ltw/embedder.hpp"
#include "ltw/rng.hpp"

namespace ltw {

namespace {

constexpr std::uint64_t kTagCliGenerate = 0x636C6967;  // "clig"
constexpr std::uint64_t kTagCliAttack = 0x636C6961;    // "clia"

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_f64(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (v.empty()) throw std::invalid_argument("config: empty value for " + key);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size()) {
        throw std::invalid_argument("config: bad number '" + value + "' for " + key);
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (v.empty() || v[0] == '-') {
        throw std::invalid_argument("config: bad unsigned '" + value + "' for " + key);
    }
    char* end = nullptr;
    const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size()) {
        throw std::invalid_argument("config: bad unsigned '" + value + "' for " + key);
    }
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

std::vector<double> parse_rates(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(trim(value));
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_f64(key, item));
    }
    if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
    return out;
}

std::string format_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "corpus") c.corpus = v;
    else if (key == "eval_corpus") c.eval_corpus = v;
    else if (key == "model_file") c.model_file = v;
    else if (key == "selector_file") c.selector_file = v;
    else if (key == "out_dir") c.out_dir = v;
    else if (key == "scheme") c.scheme = v;
    else if (key == "key") c.key = parse_u64(key, v);
    else if (key == "gamma") c.gamma = parse_f64(key, v);
    else if (key == "delta") c.delta = parse_f64(key, v);
    else if (key == "order") c.order = static_cast<int>(parse_u64(key, v));
    else if (key == "alpha") c.alpha = parse_f64(key, v);
    else if (key == "vocab_cap") c.vocab_cap = parse_size(key, v);
    else if (key == "top_k") c.top_k = parse_size(key, v);
    else if (key == "top_p") c.top_p = parse_f64(key, v);
    else if (key == "no_repeat") c.no_repeat = parse_size(key, v);
    else if (key == "temperature") c.temperature = parse_f64(key, v);
    else if (key == "hidden1") c.hidden1 = parse_size(key, v);
    else if (key == "hidden2") c.hidden2 = parse_size(key, v);
    else if (key == "hidden3") c.hidden3 = parse_size(key, v);
    else if (key == "tau_low") c.tau_low = parse_f64(key, v);
    else if (key == "tau_mid") c.tau_mid = parse_f64(key, v);
    else if (key == "tau_high") c.tau_high = parse_f64(key, v);
    else if (key == "band_low") c.band_low = parse_f64(key, v);
    else if (key == "band_high") c.band_high = parse_f64(key, v);
    else if (key == "lambda_sim") c.lambda_sim = parse_f64(key, v);
    else if (key == "lambda_entropy") c.lambda_entropy = parse_f64(key, v);
    else if (key == "lambda_fix") c.lambda_fix = parse_f64(key, v);
    else if (key == "lambda_z") c.lambda_z = parse_f64(key, v);
    else if (key == "lambda_wm") c.lambda_wm = parse_f64(key, v);
    else if (key == "lambda_e") c.lambda_e = parse_f64(key, v);
    else if (key == "mu_e") c.mu_e = parse_f64(key, v);
    else if (key == "ratio_target") c.ratio_target = v;
    else if (key == "lr") c.lr = parse_f64(key, v);
    else if (key == "batch") c.batch = parse_size(key, v);
    else if (key == "max_train_len") c.max_train_len = parse_size(key, v);
    else if (key == "epochs") c.epochs = parse_size(key, v);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_size(key, v);
    else if (key == "n_prompts") c.n_prompts = parse_size(key, v);
    else if (key == "gen_len") c.gen_len = parse_size(key, v);
    else if (key == "prompt_tokens") c.prompt_tokens = parse_size(key, v);
    else if (key == "reference_words") c.reference_words = parse_size(key, v);
    else if (key == "attack_rates") c.attack_rates = parse_rates(key, v);
    else if (key == "eval_modes") c.eval_modes = v;
    else if (key == "entropy_threshold") c.entropy_threshold = parse_f64(key, v);
    else if (key == "seed") c.seed = parse_u64(key, v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

// every command leaves a replayable record of its resolved settings
void echo_into(const RunConfig& config, const char* command) {
    std::filesystem::create_directories(config.out_dir);
    write_file(config.out_dir + "/" + command + "_config.txt", echo_config(config));
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> docs;
    std::string line;
    std::stringstream ss(text);
    while (std::getline(ss, line)) {
        if (!trim(line).empty()) docs.push_back(line);
    }
    return docs;
}

RatioTarget ratio_target_from(const RunConfig& config) {
    if (config.ratio_target == "one_minus_r") return RatioTarget::OneMinusR;
    if (config.ratio_target == "sigmoid") return RatioTarget::Sigmoid;
    throw std::invalid_argument("config: ratio_target must be one_minus_r or sigmoid");
}

std::vector<BaselineMode> modes_from(const RunConfig& config) {
    std::vector<BaselineMode> modes;
    std::string item;
    std::stringstream ss(config.eval_modes);
    while (std::getline(ss, item, ',')) {
        const std::string name = trim(item);
        if (name == "ltw") modes.push_back(BaselineMode::ltw());
        else if (name == "always-on") modes.push_back(BaselineMode::always_on());
        else if (name == "entropy-threshold")
            modes.push_back(BaselineMode::entropy_gate(config.entropy_threshold));
        else throw std::invalid_argument("config: unknown eval mode '" + name + "'");
    }
    if (modes.empty()) throw std::invalid_argument("config: eval_modes is empty");
    return modes;
}

TokenModel load_model(const RunConfig& config) {
    if (config.model_file.empty()) {
        throw std::invalid_argument("config: model_file is required");
    }
    return TokenModel::from_text(read_file(config.model_file));
}

SelectorParams load_selector(const RunConfig& config) {
    if (config.selector_file.empty()) {
        throw std::invalid_argument("config: selector_file is required");
    }
    return selector_load(read_file(config.selector_file));
}

std::string rate_label(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", rate);
    return buf;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;
    std::string line;
    std::stringstream ss(text);
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        }
        set_key(config, trim(t.substr(0, eq)), t.substr(eq + 1));
    }
    return config;
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override '" + assignment + "' is not key=value");
    }
    set_key(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string echo_config(const RunConfig& c) {
    std::string out;
    auto put = [&](const char* key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    };
    put("corpus", c.corpus);
    put("eval_corpus", c.eval_corpus);
    put("model_file", c.model_file);
    put("selector_file", c.selector_file);
    put("out_dir", c.out_dir);
    put("scheme", c.scheme);
    put("key", std::to_string(c.key));
    put("gamma", format_f64(c.gamma));
    put("delta", format_f64(c.delta));
    put("order", std::to_string(c.order));
    put("alpha", format_f64(c.alpha));
    put("vocab_cap", std::to_string(c.vocab_cap));
    put("top_k", std::to_string(c.top_k));
    put("top_p", format_f64(c.top_p));
    put("no_repeat", std::to_string(c.no_repeat));
    put("temperature", format_f64(c.temperature));
    put("hidden1", std::to_string(c.hidden1));
    put("hidden2", std::to_string(c.hidden2));
    put("hidden3", std::to_string(c.hidden3));
    put("tau_low", format_f64(c.tau_low));
    put("tau_mid", format_f64(c.tau_mid));
    put("tau_high", format_f64(c.tau_high));
    put("band_low", format_f64(c.band_low));
    put("band_high", format_f64(c.band_high));
    put("lambda_sim", format_f64(c.lambda_sim));
    put("lambda_entropy", format_f64(c.lambda_entropy));
    put("lambda_fix", format_f64(c.lambda_fix));
    put("lambda_z", format_f64(c.lambda_z));
    put("lambda_wm", format_f64(c.lambda_wm));
    put("lambda_e", format_f64(c.lambda_e));
    put("mu_e", format_f64(c.mu_e));
    put("ratio_target", c.ratio_target);
    put("lr", format_f64(c.lr));
    put("batch", std::to_string(c.batch));
    put("max_train_len", std::to_string(c.max_train_len));
    put("epochs", std::to_string(c.epochs));
    put("checkpoint_every", std::to_string(c.checkpoint_every));
    put("n_prompts", std::to_string(c.n_prompts));
    put("gen_len", std::to_string(c.gen_len));
    put("prompt_tokens", std::to_string(c.prompt_tokens));
    put("reference_words", std::to_string(c.reference_words));
    std::string rates;
    for (double r : c.attack_rates) {
        if (!rates.empty()) rates += ',';
        rates += format_f64(r);
    }
    put("attack_rates", rates);
    put("eval_modes", c.eval_modes);
    put("entropy_threshold", format_f64(c.entropy_threshold));
    put("seed", std::to_string(c.seed));
    return out;
}

void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (c.scheme != "context" && c.scheme != "fixed") fail("scheme must be context or fixed");
    if (!(c.gamma > 0.0 && c.gamma < 1.0)) fail("gamma must lie in (0,1)");
    if (!(c.delta >= 0.0)) fail("delta must be >= 0");
    if (c.order < 1 || c.order > 5) fail("order must lie in [1,5]");
    if (!(c.alpha > 0.0)) fail("alpha must be > 0");
    if (c.vocab_cap < 16) fail("vocab_cap must be >= 16");
    if (c.top_k < 1) fail("top_k must be >= 1");
    if (!(c.top_p > 0.0 && c.top_p <= 1.0)) fail("top_p must lie in (0,1]");
    if (!(c.temperature > 0.0)) fail("temperature must be > 0");
    if (c.hidden1 < 1 || c.hidden2 < 1 || c.hidden3 < 1) fail("hidden sizes must be >= 1");
    for (double t : {c.tau_low, c.tau_mid, c.tau_high, c.band_low, c.band_high}) {
        if (!(t > 0.0 && t < 1.0)) fail("thresholds and bands must lie in (0,1)");
    }
    if (!(c.band_low <= c.band_high)) fail("band_low must be <= band_high");
    ratio_target_from(c);
    if (!(c.lr > 0.0)) fail("lr must be > 0");
    if (c.batch < 1) fail("batch must be >= 1");
    if (c.max_train_len < 1) fail("max_train_len must be >= 1");
    if (c.n_prompts < 1) fail("n_prompts must be >= 1");
    if (c.gen_len < 1) fail("gen_len must be >= 1");
    if (c.prompt_tokens < 1) fail("prompt_tokens must be >= 1");
    if (c.reference_words < 1) fail("reference_words must be >= 1");
    for (double r : c.attack_rates) {
        if (!(r >= 0.0 && r < 1.0)) fail("attack rates must lie in [0,1)");
    }
    if (!(c.entropy_threshold >= 0.0)) fail("entropy_threshold must be >= 0");
    for (double w : {c.lambda_sim, c.lambda_entropy, c.lambda_fix, c.lambda_z, c.lambda_wm}) {
        if (!(w >= 0.0)) fail("loss weights must be >= 0");
    }
    modes_from(c);
}

HashScheme scheme_from(const RunConfig& config) {
    return config.scheme == "fixed" ? HashScheme::fixed_key(config.key)
                                    : HashScheme::context_hash(config.key);
}

SamplerConfig sampler_from(const RunConfig& config) {
    SamplerConfig s;
    s.top_k = static_cast<int>(config.top_k);
    s.top_p = config.top_p;
    s.no_repeat_ngram = static_cast<int>(config.no_repeat);
    s.temperature = config.temperature;
    return s;
}

ThresholdPolicy policy_from(const RunConfig& config) {
    ThresholdPolicy p;
    p.tau_low = config.tau_low;
    p.tau_mid = config.tau_mid;
    p.tau_high = config.tau_high;
    p.low_band = config.band_low;
    p.high_band = config.band_high;
    return p;
}

LossWeights weights_from(const RunConfig& config) {
    LossWeights w;
    w.lambda_sim = config.lambda_sim;
    w.lambda_entropy = config.lambda_entropy;
    w.lambda_fix = config.lambda_fix;
    w.lambda_z = config.lambda_z;
    w.lambda_wm = config.lambda_wm;
    w.lambda_e = config.lambda_e;
    w.mu_e = config.mu_e;
    return w;
}

EvalConfig eval_config_from(const RunConfig& config) {
    EvalConfig e;
    e.scheme = scheme_from(config);
    e.gamma = config.gamma;
    e.delta = config.delta;
    e.sampler = sampler_from(config);
    e.policy = policy_from(config);
    e.max_new_tokens = config.gen_len;
    e.attack_rates = config.attack_rates;
    e.seed = config.seed;
    return e;
}

std::vector<PromptCase> slice_prompts(const TokenModel& model, const std::string& corpus_text,
                                      const RunConfig& config, bool want_reference,
                                      std::size_t max_cases) {
    std::vector<PromptCase> cases;
    for (const auto& doc : split_lines(corpus_text)) {
        if (cases.size() >= max_cases) break;
        const auto words = tokenize_words(doc);
        if (words.size() < config.prompt_tokens + (want_reference ? 1 : 0)) continue;
        const auto ids = model.ids_of(words);
        PromptCase pc;
        pc.prompt.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(config.prompt_tokens));
        if (want_reference) {
            const std::size_t stop =
                std::min(words.size(), config.prompt_tokens + config.reference_words);
            pc.reference.assign(ids.begin() + static_cast<std::ptrdiff_t>(config.prompt_tokens),
                                ids.begin() + static_cast<std::ptrdiff_t>(stop));
        }
        cases.push_back(std::move(pc));
    }
    if (cases.empty()) {
        throw std::runtime_error("no corpus document is long enough to slice a prompt");
    }
    return cases;
}

std::string IdsFile::to_text() const {
    std::string out = "LTW-IDS v1\n";
    out += "prompt_len " + std::to_string(prompt_len) + "\n";
    out += "tokens " + std::to_string(ids.size()) + "\n";
    for (TokenId id : ids) {
        out += std::to_string(id);
        out += '\n';
    }
    return out;
}

IdsFile IdsFile::from_text(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line) || line != "LTW-IDS v1") {
        throw std::runtime_error("ids file: bad header");
    }
    IdsFile f;
    std::size_t n = 0;
    if (!(ss >> line >> f.prompt_len) || line != "prompt_len") {
        throw std::runtime_error("ids file: bad prompt_len line");
    }
    if (!(ss >> line >> n) || line != "tokens") {
        throw std::runtime_error("ids file: bad tokens line");
    }
    f.ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        long long v = 0;
        if (!(ss >> v)) throw std::runtime_error("ids file: truncated token list");
        f.ids.push_back(static_cast<TokenId>(v));
    }
    if (f.prompt_len < 1 || f.prompt_len >= f.ids.size()) {
        throw std::runtime_error("ids file: prompt_len out of range");
    }
    return f;
}

int cmd_train_lm(const RunConfig& config, std::ostream& out) {
    validate_config(config);
    if (config.corpus.empty()) throw std::invalid_argument("config: corpus is required");
    if (config.model_file.empty()) throw std::invalid_argument("config: model_file is required");
    echo_into(config, "train-lm");

    const auto docs = split_lines(read_file(config.corpus));
    if (docs.empty()) throw std::runtime_error("corpus has no documents");

    // every 20th document is held out for the perplexity report
    std::vector<std::vector<std::string>> train_docs;
    std::vector<std::string> holdout;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i % 20 == 19) holdout.push_back(docs[i]);
        else train_docs.push_back(tokenize_words(docs[i]));
    }
    auto model = fit_ngram(train_docs, config.order, config.alpha, config.vocab_cap);
    write_file(config.model_file, model.to_text());

    std::size_t unk = 0, total = 0;
    for (const auto& words : train_docs) {
        for (const auto& w : words) {
            unk += model.ids_of({w})[0] == TokenModel::kUnk;
            ++total;
        }
    }
    double ppl_acc = 0.0;
    std::size_t ppl_n = 0;
    for (const auto& doc : holdout) {
        const auto ids = model.ids_of(tokenize_words(doc));
        if (ids.empty()) continue;
        ppl_acc += model.perplexity(ids);
        ++ppl_n;
    }
    char line[160];
    std::snprintf(line, sizeof line, "vocab=%zu docs=%zu holdout_docs=%zu holdout_ppl=%.6g unk_fraction=%.6g\n",
                  model.vocab_size(), train_docs.size(), ppl_n,
                  ppl_n ? ppl_acc / static_cast<double>(ppl_n) : std::nan(""),
                  total ? static_cast<double>(unk) / static_cast<double>(total) : 0.0);
    out << line;
    return 0;
}

int cmd_train_selector(const RunConfig& config, std::ostream& out) {
    validate_config(config);
    if (config.corpus.empty()) throw std::invalid_argument("config: corpus is required");
    if (config.selector_file.empty()) {
        throw std::invalid_argument("config: selector_file is required");
    }
    echo_into(config, "train-selector");

    const auto model = load_model(config);
    RunConfig slice_cfg = config;
    std::vector<std::vector<TokenId>> prompts;
    for (auto& pc : slice_prompts(model, read_file(config.corpus), slice_cfg, false,
                                  std::numeric_limits<std::size_t>::max())) {
        prompts.push_back(std::move(pc.prompt));
    }

    auto init = selector_init(kEmbedDim, config.hidden1, config.hidden2, config.hidden3,
                              config.seed);
    TrainConfig tc;
    tc.scheme = scheme_from(config);
    tc.gamma = config.gamma;
    tc.delta = config.delta;
    tc.sampler = sampler_from(config);
    tc.weights = weights_from(config);
    tc.ratio_target = ratio_target_from(config);
    tc.lr = config.lr;
    tc.batch = config.batch;
    tc.max_len = config.max_train_len;
    tc.epochs = config.epochs;
    tc.seed = config.seed;
    tc.checkpoint_every = config.checkpoint_every;
    tc.checkpoint_sink = [&](std::size_t step, const SelectorParams& p) {
        write_file(config.out_dir + "/checkpoint_" + std::to_string(step) + ".txt",
                   selector_save(p));
    };

    try {
        auto result = train_epoch(model, init, prompts, tc);
        write_file(config.selector_file, selector_save(result.params));
        write_file(config.out_dir + "/history.csv", history_to_csv(result.history));
        char line[160];
        const auto steps = result.history.size();
        std::snprintf(line, sizeof line, "prompts=%zu steps=%zu final_L_Q=%.6g final_L_D=%.6g\n",
                      prompts.size(), steps, steps ? result.history.back().l_q : std::nan(""),
                      steps ? result.history.back().l_d : std::nan(""));
        out << line;
        return 0;
    } catch (const TrainingDiverged& e) {
        write_file(config.selector_file, selector_save(e.last_good));
        out << "training diverged after step " << e.at_step
            << "; wrote the last good parameters\n";
        return 2;
    }
}

int cmd_generate(const RunConfig& config, std::ostream& out) {
    validate_config(config);
    if (config.eval_corpus.empty()) {
        throw std::invalid_argument("config: eval_corpus is required");
    }
    echo_into(config, "generate");

    const auto model = load_model(config);
    const auto selector = load_selector(config);
    const auto scheme = scheme_from(config);
    const auto sampler = sampler_from(config);
    const auto policy = policy_from(config);
    const auto cases =
        slice_prompts(model, read_file(config.eval_corpus), config, false, config.n_prompts);

    double z_acc = 0.0;
    std::size_t z_n = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        SplitMix64 rng(derive_substream(config.seed, kTagCliGenerate, i));
        auto rec = generate_watermarked(model, selector, policy, scheme, config.gamma,
                                        config.delta, sampler, cases[i].prompt,
                                        config.gen_len, rng);
        write_file(config.out_dir + "/record_" + std::to_string(i) + ".txt", rec.to_text());
        const auto audit = audit_score(rec, config.gamma);
        if (audit.detectable()) {
            z_acc += audit.z;
            ++z_n;
        }
    }
    char line[120];
    std::snprintf(line, sizeof line, "records=%zu mean_audit_z=%.6g\n", cases.size(),
                  z_n ? z_acc / static_cast<double>(z_n) : std::nan(""));
    out << line;
    return 0;
}

int cmd_detect(const RunConfig& config, const std::string& in_path, std::ostream& out) {
    validate_config(config);
    echo_into(config, "detect");

    const auto model = load_model(config);
    const auto selector = load_selector(config);
    const auto text = read_file(in_path);

    std::vector<TokenId> ids;
    std::size_t prompt_len = 0;
    if (text.rfind("LTW-RECORD", 0) == 0) {
        auto rec = GenerationRecord::from_text(text);
        ids = rec.prompt;
        ids.insert(ids.end(), rec.output.begin(), rec.output.end());
        prompt_len = rec.prompt.size();
    } else if (text.rfind("LTW-IDS", 0) == 0) {
        auto f = IdsFile::from_text(text);
        ids = std::move(f.ids);
        prompt_len = f.prompt_len;
    } else {
        throw std::runtime_error("detect: unrecognized input format in " + in_path);
    }

    const auto result = detect(model, selector, policy_from(config), scheme_from(config),
                               config.gamma, ids, prompt_len);
    out << "z=" << format_f64(result.z) << " n_scored=" << result.n_scored
        << " n_green=" << result.n_green
        << " detectable=" << (result.detectable() ? "yes" : "no") << "\n";
    out << "selected_positions=";
    for (std::size_t i = 0; i < result.selected_positions.size(); ++i) {
        if (i) out << ',';
        out << result.selected_positions[i];
    }
    out << "\n";
    return 0;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
    validate_config(config);
    if (config.eval_corpus.empty()) {
        throw std::invalid_argument("config: eval_corpus is required");
    }
    echo_into(config, "eval");

    const auto model = load_model(config);
    const auto selector = load_selector(config);
    const auto cases =
        slice_prompts(model, read_file(config.eval_corpus), config, true, config.n_prompts);
    const auto eval_cfg = eval_config_from(config);

    std::string csv, summaries;
    for (const auto& mode : modes_from(config)) {
        const auto report = run_eval(model, selector, mode, cases, eval_cfg);
        const auto mode_csv = report.csv();
        if (csv.empty()) {
            csv = mode_csv;
        } else {
            csv += mode_csv.substr(mode_csv.find('\n') + 1);  // drop the repeated header
        }
        if (!summaries.empty()) summaries += "\n";
        summaries += report.summary();
    }
    write_file(config.out_dir + "/report.csv", csv);
    write_file(config.out_dir + "/summary.txt", summaries);
    out << summaries;
    return 0;
}

int cmd_attack(const RunConfig& config, const std::string& in_path, std::ostream& out) {
    validate_config(config);
    echo_into(config, "attack");

    const auto model = load_model(config);
    const auto text = read_file(in_path);
    if (text.rfind("LTW-RECORD", 0) != 0) {
        throw std::runtime_error("attack: input must be a generation record: " + in_path);
    }
    const auto rec = GenerationRecord::from_text(text);

    for (std::size_t k = 0; k < config.attack_rates.size(); ++k) {
        const double rate = config.attack_rates[k];
        SplitMix64 rng(derive_substream(config.seed, kTagCliAttack, k));
        const auto hit = substitution_attack(rec.output, rate, model, rng);
        IdsFile f;
        f.prompt_len = rec.prompt.size();
        f.ids = rec.prompt;
        f.ids.insert(f.ids.end(), hit.begin(), hit.end());
        const auto path = config.out_dir + "/attacked_rate_" + rate_label(rate) + ".txt";
        write_file(path, f.to_text());
        std::size_t changed = 0;
        for (std::size_t i = 0; i < hit.size(); ++i) changed += hit[i] != rec.output[i];
        out << "rate=" << rate_label(rate) << " changed=" << changed << " wrote=" << path
            << "\n";
    }
    return 0;
}

}  // namespace ltw
