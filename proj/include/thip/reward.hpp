#ifndef THIP_REWARD_HPP
#define THIP_REWARD_HPP

#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "thip/conformance.hpp"
#include "thip/discovery.hpp"
#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/extract.hpp"
#include "thip/petri.hpp"

namespace thip {

struct Query {
    std::string id;
    std::string prompt;
    std::string ground_truth;
};

namespace detail {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kBoxed = "\\boxed{";

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size()))
        ++n;
    return n;
}

/// Index one past the brace that closes the one at `open`, or npos.
inline std::size_t matching_brace(std::string_view text, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < text.size(); ++i) {
        if (text[i] == '{') ++depth;
        else if (text[i] == '}' && --depth == 0) return i + 1;
    }
    return std::string_view::npos;
}

/// Contents of the last balanced `\boxed{...}` in `text`.
inline std::optional<std::string> last_boxed(std::string_view text) {
    std::optional<std::string> found;
    for (auto pos = text.find(kBoxed); pos != std::string_view::npos; pos = text.find(kBoxed, pos + 1)) {
        auto brace = pos + kBoxed.size() - 1;
        auto close = matching_brace(text, brace);
        if (close != std::string_view::npos) found = std::string(text.substr(brace + 1, close - brace - 2));
    }
    return found;
}

} // namespace detail

/// A response split into its reasoning block and its answer field.
struct RolloutText {
    std::string full_text;
    std::optional<std::string> think_region;
    std::optional<std::string> answer_region;

    static RolloutText parse(std::string text) {
        RolloutText r;
        std::string_view view(text);
        auto open = view.find(detail::kThinkOpen);
        auto close = open == std::string_view::npos ? open : view.find(detail::kThinkClose, open);
        if (close != std::string_view::npos) {
            auto b = open + detail::kThinkOpen.size();
            r.think_region = std::string(view.substr(b, close - b));
        }
        auto last_close = view.rfind(detail::kThinkClose);
        auto tail = last_close == std::string_view::npos ? view : view.substr(last_close + detail::kThinkClose.size());
        r.answer_region = detail::last_boxed(tail);
        r.full_text = std::move(text);
        return r;
    }
};

/// 1 iff the text holds exactly one `<think>...</think>` block followed by a
/// nonempty `\boxed{...}` answer.
inline double format_reward(std::string_view text) {
    if (detail::count_occurrences(text, detail::kThinkOpen) != 1) return 0.0;
    if (detail::count_occurrences(text, detail::kThinkClose) != 1) return 0.0;
    auto open = text.find(detail::kThinkOpen);
    auto close = text.find(detail::kThinkClose);
    if (close < open) return 0.0;
    auto answer = detail::last_boxed(text.substr(close + detail::kThinkClose.size()));
    return answer && !detail::trim(*answer).empty() ? 1.0 : 0.0;
}

namespace detail {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline std::string normalize_answer(std::string_view s) {
    s = trim(s);
    while (s.size() >= 2 && s.front() == '{' && matching_brace(s, 0) == s.size()) s = trim(s.substr(1, s.size() - 2));
    return std::string(s);
}

/// Decimal integer from an optionally signed digit string. Leading zeros are
/// dropped first; cpp_int would otherwise read "050" as octal.
inline BigInt decimal_int(std::string_view digits) {
    bool negative = false;
    if (!digits.empty() && (digits.front() == '+' || digits.front() == '-')) {
        negative = digits.front() == '-';
        digits.remove_prefix(1);
    }
    while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
    BigInt v(std::string(digits.empty() ? "0" : digits));
    return negative ? BigInt(-v) : v;
}

inline std::optional<Rational> parse_rational(const std::string& s) {
    static const std::regex decimal(R"(^([+-]?)(\d*)(?:\.(\d*))?$)");
    static const std::regex fraction(R"(^([+-]?\d+)\s*/\s*([+-]?\d+)$)");
    static const std::regex latex(R"(^([+-]?)\\d?frac\{\s*([+-]?\d+)\s*\}\{\s*([+-]?\d+)\s*\}$)");
    std::smatch m;
    auto ratio = [](const std::string& num, const std::string& den) -> std::optional<Rational> {
        BigInt d = decimal_int(den);
        if (d == 0) return std::nullopt;
        return Rational(decimal_int(num), d);
    };
    if (std::regex_match(s, m, decimal)) {
        std::string whole = m[2], frac = m[3];
        if (whole.empty() && frac.empty()) return std::nullopt;
        BigInt scale = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
        Rational v(decimal_int(whole + frac), scale);
        return m[1] == "-" ? -v : v;
    }
    if (std::regex_match(s, m, fraction)) return ratio(m[1], m[2]);
    if (std::regex_match(s, m, latex)) {
        auto v = ratio(m[2], m[3]);
        if (v && m[1] == "-") *v = -*v;
        return v;
    }
    return std::nullopt;
}

} // namespace detail

/// 1 iff the normalized answers agree: numerically when both read as
/// rationals (integers, decimals, a/b, \frac{a}{b}), else as strings.
inline double answer_reward(std::string_view predicted, std::string_view ground_truth) {
    auto p = detail::normalize_answer(predicted);
    auto g = detail::normalize_answer(ground_truth);
    auto pr = detail::parse_rational(p);
    auto gr = detail::parse_rational(g);
    if (pr && gr) return *pr == *gr ? 1.0 : 0.0;
    return p == g ? 1.0 : 0.0;
}

inline double conformance_reward(const ConformanceResult& result) { return result.f1; }

struct RewardWeights {
    double format = 1.0;
    double answer = 1.0;
    double conformance = 1.0;
};

/// Reward components are stored already weighted, so total is their plain sum.
struct RewardBreakdown {
    double format = 0.0;
    double answer = 0.0;
    double conformance = 0.0;
    double total = 0.0;
    /// Set when the conformance pipeline failed and was scored as zero.
    std::optional<std::string> diagnostic;
};

/// Turns reasoning text into a trace; the rule-based extractor or a remote labeler.
using TraceLabeler = std::function<Trace(std::string_view text, std::string case_id)>;

/// Scores one response: format and answer checks plus the conformance of the
/// model mined from its reasoning trace against the teacher log.
inline RewardBreakdown total_reward(const Query& x, const RolloutText& y, const EventLog& teacher,
                                    const TraceLabeler& labeler, const RewardWeights& weights = {},
                                    const AlignOptions& opts = {}) {
    if (teacher.empty()) throw Error(Errc::EmptyTeacherLog, "teacher log has no traces");
    RewardBreakdown r;
    r.format = weights.format * format_reward(y.full_text);
    r.answer = y.answer_region ? weights.answer * answer_reward(*y.answer_region, x.ground_truth) : 0.0;
    if (y.think_region) {
        try {
            auto trace = labeler(*y.think_region, x.id.empty() ? "policy" : x.id);
            auto net = tree_to_petri(discover_tree(trace));
            r.conformance = weights.conformance * conformance_reward(conformance_check(net, teacher, opts));
        } catch (const Error& e) {
            r.conformance = 0.0;
            r.diagnostic = e.what();
        }
    }
    r.total = r.format + r.answer + r.conformance;
    return r;
}

inline RewardBreakdown total_reward(const Query& x, const RolloutText& y, const EventLog& teacher,
                                    const Extractor& extractor, const RewardWeights& weights = {},
                                    const AlignOptions& opts = {}) {
    return total_reward(
        x, y, teacher, [&](std::string_view text, std::string id) { return extractor.extract(text, std::move(id)); },
        weights, opts);
}

inline RewardBreakdown total_reward(const Query& x, const RolloutText& y, const EventLog& teacher,
                                    const ExtractionRules& rules, const RewardWeights& weights = {}) {
    return total_reward(x, y, teacher, Extractor(rules), weights);
}

} // namespace thip

#endif // THIP_REWARD_HPP
