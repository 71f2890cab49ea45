#ifndef THIP_GSPO_HPP
#define THIP_GSPO_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/extract.hpp"
#include "thip/process_tree.hpp"
#include "thip/random.hpp"
#include "thip/reward.hpp"

namespace thip {

using TokenId = std::size_t;
using TokenSequence = std::vector<TokenId>;

enum class TokenKind { activity, think_open, think_close, answer, end };

struct Token {
    std::string text;
    TokenKind kind;
};

/// Softmax policy over a small vocabulary, conditioned on the previous
/// `context_order` tokens (padded with a begin marker). One logit vector
/// per context, stored densely.
class PolicyParams {
public:
    PolicyParams(std::vector<Token> vocabulary, std::size_t context_order, bool constrained = false)
        : vocabulary_(std::move(vocabulary)), context_order_(context_order), constrained_(constrained) {
        if (vocabulary_.empty()) throw Error(Errc::InvalidConfig, "policy vocabulary is empty");
        if (constrained_ && !end_token())
            throw Error(Errc::InvalidConfig, "a constrained policy needs an end-of-sequence token");
        std::size_t contexts = 1;
        for (std::size_t i = 0; i < context_order_; ++i) contexts *= vocabulary_.size() + 1;
        logits_.assign(contexts * vocabulary_.size(), 0.0);
    }

    const std::vector<Token>& vocabulary() const noexcept { return vocabulary_; }
    std::size_t vocab_size() const noexcept { return vocabulary_.size(); }
    std::size_t context_order() const noexcept { return context_order_; }
    std::size_t context_count() const noexcept { return logits_.size() / vocabulary_.size(); }
    bool constrained() const noexcept { return constrained_; }

    std::optional<TokenId> end_token() const {
        for (TokenId t = 0; t < vocabulary_.size(); ++t)
            if (vocabulary_[t].kind == TokenKind::end) return t;
        return std::nullopt;
    }

    std::optional<TokenId> find(TokenKind kind, std::string_view text = {}) const {
        for (TokenId t = 0; t < vocabulary_.size(); ++t)
            if (vocabulary_[t].kind == kind && (text.empty() || vocabulary_[t].text == text)) return t;
        return std::nullopt;
    }

    /// Context index for the next token given the tokens emitted so far.
    std::size_t context_of(std::span<const TokenId> history) const {
        const std::size_t base = vocabulary_.size() + 1;
        std::size_t ctx = 0;
        for (std::size_t k = 0; k < context_order_; ++k) {
            // Positions before the start read as the begin marker (digit 0).
            std::size_t digit = 0;
            if (history.size() + k >= context_order_) digit = history[history.size() + k - context_order_] + 1;
            ctx = ctx * base + digit;
        }
        return ctx;
    }

    std::span<double> logits(std::size_t ctx) { return {logits_.data() + ctx * vocab_size(), vocab_size()}; }
    std::span<const double> logits(std::size_t ctx) const {
        return {logits_.data() + ctx * vocab_size(), vocab_size()};
    }

    std::vector<double>& parameters() noexcept { return logits_; }
    const std::vector<double>& parameters() const noexcept { return logits_; }

    /// Tokens that may follow `history`. Unconstrained policies allow all of
    /// them; constrained ones follow `<think> activity* </think> answer end`.
    std::vector<bool> allowed(std::span<const TokenId> history) const {
        std::vector<bool> ok(vocab_size(), true);
        if (!constrained_) return ok;
        // 0: before <think>, 1: inside, 2: after </think>, 3: after the answer
        int phase = 0;
        for (auto t : history) {
            switch (vocabulary_[t].kind) {
            case TokenKind::think_open: phase = std::max(phase, 1); break;
            case TokenKind::think_close: phase = std::max(phase, 2); break;
            case TokenKind::answer: phase = std::max(phase, 3); break;
            default: break;
            }
        }
        for (TokenId k = 0; k < vocab_size(); ++k) {
            auto kind = vocabulary_[k].kind;
            switch (phase) {
            case 0: ok[k] = kind == TokenKind::think_open; break;
            case 1: ok[k] = kind == TokenKind::activity || kind == TokenKind::think_close; break;
            case 2: ok[k] = kind == TokenKind::answer; break;
            default: ok[k] = kind == TokenKind::end; break;
            }
        }
        return ok;
    }

    /// Next-token log-probabilities after `history`; -inf for disallowed tokens.
    std::vector<double> log_softmax(std::span<const TokenId> history) const {
        auto z = logits(context_of(history));
        auto ok = allowed(history);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < z.size(); ++i)
            if (ok[i]) mx = std::max(mx, z[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (ok[i]) sum += std::exp(z[i] - mx);
        double lse = mx + std::log(sum);
        std::vector<double> out(z.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < z.size(); ++i)
            if (ok[i]) out[i] = z[i] - lse;
        return out;
    }

    /// Sum of per-token log-probabilities of the whole sequence.
    double log_prob(const TokenSequence& seq) const {
        double lp = 0.0;
        for (std::size_t t = 0; t < seq.size(); ++t) lp += log_softmax(std::span(seq).first(t))[seq[t]];
        return lp;
    }

    /// Bumped by every optimizer step; rollouts remember the value they were
    /// sampled at.
    std::uint64_t generation = 0;

private:
    std::vector<Token> vocabulary_;
    std::size_t context_order_;
    bool constrained_;
    std::vector<double> logits_;
};

struct GSPOConfig {
    std::size_t group_size = 8;
    double clip = 0.2;
    double learning_rate = 1.0;
    std::size_t max_length = 10;
    std::size_t steps = 2000;
    std::uint64_t seed = 1;
    std::size_t context_order = 1;
    /// Sample only well-formed responses (see PolicyParams::allowed).
    bool constrained = true;

    void validate() const {
        if (group_size < 2) throw Error(Errc::InvalidConfig, "group_size must be at least 2");
        if (!(clip > 0.0 && clip < 1.0)) throw Error(Errc::InvalidConfig, "clip range epsilon must lie in (0, 1)");
        if (!(learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "learning_rate must be positive");
        if (max_length < 1) throw Error(Errc::InvalidConfig, "max_length must be positive");
        if (steps < 1) throw Error(Errc::InvalidConfig, "steps must be positive");
    }
};

struct GroupRollout {
    Query query;
    std::vector<TokenSequence> responses;
    std::vector<double> logp_old;
    std::vector<double> logp_new;
    std::vector<std::size_t> lengths;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> advantages;
    std::vector<double> ratios;
    std::uint64_t old_generation = 0;

    std::size_t size() const noexcept { return responses.size(); }
};

/// Draws `cfg.group_size` responses by ancestral sampling. A response ends
/// at the end token or after `cfg.max_length` tokens.
inline GroupRollout sample_group(const PolicyParams& params_old, const Query& x, const GSPOConfig& cfg,
                                 std::uint64_t seed) {
    Rng rng(seed);
    const auto eos = params_old.end_token();
    GroupRollout g;
    g.query = x;
    g.old_generation = params_old.generation;
    for (std::size_t i = 0; i < cfg.group_size; ++i) {
        TokenSequence seq;
        double lp = 0.0;
        while (seq.size() < cfg.max_length) {
            auto ls = params_old.log_softmax(seq);
            double u = rng.uniform(), acc = 0.0;
            // Rounding can leave u above the final cumulative sum; fall back to
            // the last allowed token.
            TokenId pick = 0;
            for (TokenId t = 0; t < ls.size(); ++t)
                if (std::isfinite(ls[t])) pick = t;
            for (TokenId t = 0; t < ls.size(); ++t) {
                acc += std::exp(ls[t]);
                if (u < acc) {
                    pick = t;
                    break;
                }
            }
            seq.push_back(pick);
            lp += ls[pick];
            if (eos && pick == *eos) break;
        }
        g.lengths.push_back(seq.size());
        g.logp_old.push_back(lp);
        g.responses.push_back(std::move(seq));
    }
    g.logp_new = g.logp_old;
    g.ratios.assign(cfg.group_size, 1.0);
    return g;
}

/// Group-relative advantages: rewards minus their group mean, unscaled.
inline std::vector<double> advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw Error(Errc::GroupTooSmall, "a group needs at least two responses");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) out.push_back(r - mean);
    return out;
}

/// Length-normalized sequence likelihood ratio, evaluated in log space.
inline double seq_ratio(double logp_new, double logp_old, std::size_t length) {
    if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
        throw Error(Errc::NonFiniteLikelihood, "sequence log-likelihood is not finite");
    if (length < 1) throw Error(Errc::NonFiniteLikelihood, "sequence length must be positive");
    return std::exp((logp_new - logp_old) / static_cast<double>(length));
}

/// Recomputes logp_new and the ratios of every response under `params`.
inline void score_rollout(const PolicyParams& params, GroupRollout& rollout) {
    rollout.logp_new.resize(rollout.size());
    rollout.ratios.resize(rollout.size());
    for (std::size_t i = 0; i < rollout.size(); ++i) {
        rollout.logp_new[i] = params.log_prob(rollout.responses[i]);
        rollout.ratios[i] = seq_ratio(rollout.logp_new[i], rollout.logp_old[i], rollout.lengths[i]);
    }
}

inline double clipped_term(double ratio, double advantage, double clip) {
    return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

/// True when the min in the surrogate selects the clipped branch with the
/// ratio outside the band, i.e. the term is constant in the parameters.
inline bool clip_active(double ratio, double advantage, double clip) {
    return (advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
}

inline double gspo_objective(const GroupRollout& rollout, const GSPOConfig& cfg) {
    double sum = 0.0;
    for (std::size_t i = 0; i < rollout.size(); ++i)
        sum += clipped_term(rollout.ratios[i], rollout.advantages[i], cfg.clip);
    return sum / static_cast<double>(rollout.size());
}

/// Gradient of log pi(seq) with respect to every logit, added into `grad`
/// after scaling by `coef`.
inline void accumulate_log_prob_gradient(const PolicyParams& params, const TokenSequence& seq, double coef,
                                         std::vector<double>& grad) {
    const auto v = params.vocab_size();
    for (std::size_t t = 0; t < seq.size(); ++t) {
        auto history = std::span(seq).first(t);
        auto ls = params.log_softmax(history);
        double* g = grad.data() + params.context_of(history) * v;
        for (TokenId k = 0; k < v; ++k) g[k] -= coef * std::exp(ls[k]);
        g[seq[t]] += coef;
    }
}

/// Contribution of response `i` to the objective gradient. Zero for the
/// whole sequence when its clipped branch is active.
inline std::vector<double> sequence_gradient(const PolicyParams& params, const GroupRollout& rollout,
                                             const GSPOConfig& cfg, std::size_t i) {
    std::vector<double> grad(params.parameters().size(), 0.0);
    const double lp = params.log_prob(rollout.responses[i]);
    const double r = seq_ratio(lp, rollout.logp_old[i], rollout.lengths[i]);
    const double a = rollout.advantages[i];
    if (a == 0.0 || clip_active(r, a, cfg.clip)) return grad;
    const double coef = a * r / static_cast<double>(rollout.lengths[i]) / static_cast<double>(rollout.size());
    accumulate_log_prob_gradient(params, rollout.responses[i], coef, grad);
    return grad;
}

/// Analytic gradient of the clipped sequence-level surrogate.
inline std::vector<double> gspo_gradient(const PolicyParams& params, const GroupRollout& rollout,
                                         const GSPOConfig& cfg) {
    if (rollout.old_generation != params.generation)
        throw Error(Errc::StaleRollout, "rollout was sampled at policy generation " +
                                            std::to_string(rollout.old_generation) + ", params are at " +
                                            std::to_string(params.generation));
    std::vector<double> grad(params.parameters().size(), 0.0);
    for (std::size_t i = 0; i < rollout.size(); ++i) {
        auto g = sequence_gradient(params, rollout, cfg, i);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Synthetic teacher environment

struct SyntheticTask {
    ProcessTree teacher_model;
    std::string answer;
    Query query;
    std::vector<std::string> distractors;
    std::size_t teacher_traces = 1;
};

inline SyntheticTask make_task(ProcessTree teacher_model, std::string answer,
                               std::vector<std::string> distractors = {"7", "13"}) {
    SyntheticTask task{std::move(teacher_model), answer, Query{"q1", "synthetic", answer}, std::move(distractors), 1};
    return task;
}

/// `<think>`, `</think>`, one token per activity, answer tokens, end.
inline std::vector<Token> task_vocabulary(const SyntheticTask& task) {
    std::vector<Token> v{{"<think>", TokenKind::think_open}, {"</think>", TokenKind::think_close}};
    for (const auto& l : task.teacher_model.alphabet()) v.push_back({l, TokenKind::activity});
    std::vector<std::string> answers{task.answer};
    for (const auto& d : task.distractors)
        if (std::find(answers.begin(), answers.end(), d) == answers.end()) answers.push_back(d);
    for (const auto& a : answers) v.push_back({a, TokenKind::answer});
    v.push_back({"<eos>", TokenKind::end});
    return v;
}

/// Extraction rules matching how `render` writes activity tokens.
inline ExtractionRules task_rules(const SyntheticTask& task) {
    ExtractionRules rules;
    rules.step_delimiters = ExtractionRules::default_delimiters();
    for (const auto& l : task.teacher_model.alphabet()) {
        std::string escaped;
        for (char c : l) {
            if (std::string_view("\\^$.|?*+()[]{}").find(c) != std::string_view::npos) escaped += '\\';
            escaped += c;
        }
        rules.label_map.push_back({"^" + escaped + "$", l});
    }
    rules.default_label = "other";
    return rules;
}

/// Response text for a token sequence: activities as sentences, answers boxed.
inline std::string render(const PolicyParams& params, const TokenSequence& seq) {
    std::string out;
    for (auto id : seq) {
        const auto& tok = params.vocabulary()[id];
        switch (tok.kind) {
        case TokenKind::think_open:
        case TokenKind::think_close: out += tok.text; break;
        case TokenKind::activity: out += tok.text + ". "; break;
        case TokenKind::answer: out += " \\boxed{" + tok.text + "} "; break;
        case TokenKind::end: break;
        }
    }
    return out;
}

inline TokenSequence teacher_tokens(const PolicyParams& params, const std::vector<Label>& trace,
                                    const std::string& answer) {
    TokenSequence seq{*params.find(TokenKind::think_open)};
    for (const auto& l : trace) seq.push_back(*params.find(TokenKind::activity, l));
    seq.push_back(*params.find(TokenKind::think_close));
    seq.push_back(*params.find(TokenKind::answer, answer));
    if (auto e = params.end_token()) seq.push_back(*e);
    return seq;
}

inline EventLog teacher_log(const SyntheticTask& task, const PolicyParams& params, const Extractor& extractor,
                            std::uint64_t seed) {
    Rng rng(seed);
    EventLog log;
    for (std::size_t i = 0; i < std::max<std::size_t>(task.teacher_traces, 1); ++i) {
        auto seq = teacher_tokens(params, sample_trace(task.teacher_model, rng), task.answer);
        log.add(extractor.extract(render(params, seq), "teacher" + std::to_string(i + 1)));
    }
    return log;
}

/// Near-deterministic policy emitting `seq` (logit +50 on the chosen token,
/// -50 elsewhere). Requires `seq` to visit each context at most once.
inline PolicyParams deterministic_policy(std::vector<Token> vocabulary, std::size_t context_order,
                                         const TokenSequence& seq, bool constrained = false) {
    PolicyParams p(std::move(vocabulary), context_order, constrained);
    std::fill(p.parameters().begin(), p.parameters().end(), -50.0);
    for (std::size_t t = 0; t < seq.size(); ++t) p.logits(p.context_of(std::span(seq).first(t)))[seq[t]] = 50.0;
    return p;
}

struct StepRecord {
    std::size_t step = 0;
    double mean_format = 0.0;
    double mean_answer = 0.0;
    double mean_conformance = 0.0;
    double mean_total = 0.0;
    double objective = 0.0;
};

struct TrainerReport {
    std::vector<StepRecord> steps;
    PolicyParams final_policy;
    EventLog teacher;

    /// Component means over the last `window` steps.
    StepRecord tail_mean(std::size_t window = 100) const {
        StepRecord m;
        auto n = std::min(window, steps.size());
        for (auto it = steps.end() - static_cast<std::ptrdiff_t>(n); it != steps.end(); ++it) {
            m.mean_format += it->mean_format;
            m.mean_answer += it->mean_answer;
            m.mean_conformance += it->mean_conformance;
            m.mean_total += it->mean_total;
            m.objective += it->objective;
        }
        if (n > 0) {
            for (double* f : {&m.mean_format, &m.mean_answer, &m.mean_conformance, &m.mean_total, &m.objective})
                *f /= static_cast<double>(n);
        }
        m.step = steps.empty() ? 0 : steps.back().step;
        return m;
    }
};

inline nlohmann::json to_json(const StepRecord& r) {
    return {{"step", r.step},
            {"mean_format", r.mean_format},
            {"mean_answer", r.mean_answer},
            {"mean_conformance", r.mean_conformance},
            {"mean_total", r.mean_total},
            {"objective", r.objective}};
}

/// One JSON object per step.
inline std::string to_jsonl(const TrainerReport& report) {
    std::string out;
    for (const auto& r : report.steps) out += to_json(r).dump() + "\n";
    return out;
}

inline nlohmann::json to_json(const PolicyParams& p) {
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& t : p.vocabulary()) vocab.push_back(t.text);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t c = 0; c < p.context_count(); ++c) {
        auto z = p.logits(c);
        rows.push_back(std::vector<double>(z.begin(), z.end()));
    }
    return {{"vocabulary", vocab},
            {"context_order", p.context_order()},
            {"constrained", p.constrained()},
            {"generation", p.generation},
            {"logits", rows}};
}

inline std::uint64_t step_seed(std::uint64_t seed, std::uint64_t step) {
    // splitmix64 finalizer
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + step + 1;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct TrainOptions {
    RewardWeights weights;
    /// Starting policy; uniform when absent.
    std::optional<PolicyParams> initial_policy;
};

/// Scores every response of the group and fills rewards and advantages.
inline void evaluate_group(const PolicyParams& params, GroupRollout& rollout, const EventLog& teacher,
                           const Extractor& extractor, const RewardWeights& weights) {
    rollout.rewards.clear();
    std::vector<double> totals;
    for (const auto& seq : rollout.responses) {
        auto r = total_reward(rollout.query, RolloutText::parse(render(params, seq)), teacher, extractor, weights);
        totals.push_back(r.total);
        rollout.rewards.push_back(std::move(r));
    }
    rollout.advantages = advantages(totals);
}

/// Sequence-level GSPO with one gradient-ascent step per sampled group.
inline TrainerReport train(const SyntheticTask& task, const GSPOConfig& cfg, const ExtractionRules& rules,
                           const TrainOptions& opts = {}) {
    cfg.validate();
    const Extractor extractor(rules);
    PolicyParams policy = opts.initial_policy ? *opts.initial_policy
                                              : PolicyParams(task_vocabulary(task), cfg.context_order, cfg.constrained);
    auto teacher = teacher_log(task, policy, extractor, step_seed(cfg.seed, ~0ull));

    std::vector<StepRecord> records;
    records.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        auto rollout = sample_group(policy, task.query, cfg, step_seed(cfg.seed, step));
        evaluate_group(policy, rollout, teacher, extractor, opts.weights);

        auto grad = gspo_gradient(policy, rollout, cfg);
        auto& theta = policy.parameters();
        for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += cfg.learning_rate * grad[k];
        ++policy.generation;

        StepRecord rec;
        rec.step = step;
        for (const auto& r : rollout.rewards) {
            rec.mean_format += r.format;
            rec.mean_answer += r.answer;
            rec.mean_conformance += r.conformance;
            rec.mean_total += r.total;
        }
        const double g = static_cast<double>(rollout.size());
        rec.mean_format /= g;
        rec.mean_answer /= g;
        rec.mean_conformance /= g;
        rec.mean_total /= g;
        // Surrogate value after the update, on the group that produced it.
        score_rollout(policy, rollout);
        rec.objective = gspo_objective(rollout, cfg);
        records.push_back(rec);
    }
    return TrainerReport{std::move(records), std::move(policy), std::move(teacher)};
}

} // namespace thip

#endif // THIP_GSPO_HPP
