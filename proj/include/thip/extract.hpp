#ifndef THIP_EXTRACT_HPP
#define THIP_EXTRACT_HPP

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"

namespace thip {

struct LabelRule {
    std::string pattern;
    Label label;
};

/// Rule set turning reasoning text into activity labels. Policy and teacher
/// traces must be extracted with the same rules for conformance to be
/// meaningful.
struct ExtractionRules {
    std::vector<std::string> step_delimiters;
    std::vector<LabelRule> label_map;
    Label default_label = "other";
    std::size_t max_steps = 64;

    static std::vector<std::string> default_delimiters() {
        return {
            R"([.!?](?:\s+|$))",
            R"(\n[ \t]*\n)",
            R"(Step\s+\d+\s*:)",
        };
    }

    /// A small reasoning-move taxonomy usable out of the box.
    static ExtractionRules defaults() {
        ExtractionRules r;
        r.step_delimiters = default_delimiters();
        r.label_map = {
            {R"(^(Let|Given|We are given|We need|We want|The problem))", "restate"},
            {R"(\b(Case|Suppose|Assume|Otherwise)\b|^If\b)", "case-split"},
            {R"(\b(Check|check|Verify|verify|Indeed|Confirm|confirm))", "verify"},
            {R"(\b(Therefore|Thus|Hence|So the answer|In conclusion|Finally)\b)", "conclude"},
            {R"(\b(First|Then|Next|Now|Substitut|substitut|Comput|comput|Simplif|simplif)|=)", "derive"},
        };
        return r;
    }

    std::vector<Label> labels() const {
        std::vector<Label> out;
        for (const auto& r : label_map) out.push_back(r.label);
        out.push_back(default_label);
        return out;
    }

    void validate() const {
        if (max_steps < 1) throw Error(Errc::InvalidConfig, "max_steps must be at least 1");
        if (!is_valid_label(default_label))
            throw Error(Errc::InvalidConfig, "default_label is not a valid activity label");
        for (const auto& r : label_map)
            if (!is_valid_label(r.label))
                throw Error(Errc::InvalidConfig, "label_map entry has an invalid label");
    }
};

/// Returns the text between the first `<think>` and the next `</think>`.
/// An unterminated block runs to the end of the text.
inline std::optional<std::string_view> think_block(std::string_view text) {
    constexpr std::string_view open = "<think>", close = "</think>";
    auto b = text.find(open);
    if (b == std::string_view::npos) return std::nullopt;
    b += open.size();
    auto e = text.find(close, b);
    return text.substr(b, e == std::string_view::npos ? std::string_view::npos : e - b);
}

/// Compiled form of ExtractionRules; reusable across many texts.
class Extractor {
public:
    explicit Extractor(ExtractionRules rules) : rules_(std::move(rules)) {
        rules_.validate();
        try {
            if (!rules_.step_delimiters.empty()) {
                std::string combined;
                for (const auto& d : rules_.step_delimiters) {
                    if (!combined.empty()) combined += '|';
                    combined += "(?:" + d + ")";
                }
                delimiter_ = std::regex(combined);
            }
            for (const auto& r : rules_.label_map) labelers_.emplace_back(std::regex(r.pattern), r.label);
        } catch (const std::regex_error& e) {
            throw Error(Errc::InvalidConfig, std::string("bad extraction pattern: ") + e.what());
        }
    }

    const ExtractionRules& rules() const noexcept { return rules_; }

    /// Splits the reasoning text into steps (non-blank, trimmed).
    std::vector<std::string> steps(std::string_view text) const {
        std::string region(think_block(text).value_or(text));
        std::vector<std::string> out;
        auto keep = [&](std::string_view piece) {
            piece = detail::trim(piece);
            if (!piece.empty()) out.emplace_back(piece);
        };
        if (rules_.step_delimiters.empty()) {
            keep(region);
            return out;
        }
        std::size_t last = 0;
        for (auto it = std::sregex_iterator(region.begin(), region.end(), delimiter_);
             it != std::sregex_iterator(); ++it) {
            auto pos = static_cast<std::size_t>(it->position());
            keep(std::string_view(region).substr(last, pos - last));
            last = pos + static_cast<std::size_t>(it->length());
        }
        keep(std::string_view(region).substr(std::min(last, region.size())));
        return out;
    }

    Label label_of(const std::string& step) const {
        for (const auto& [re, label] : labelers_)
            if (std::regex_search(step, re)) return label;
        return rules_.default_label;
    }

    Trace extract(std::string_view text, std::string case_id) const {
        Trace trace(std::move(case_id), {}, std::string(text));
        for (const auto& step : steps(text)) {
            if (trace.size() >= rules_.max_steps) break;
            trace.push_back(label_of(step));
        }
        if (trace.empty()) trace.push_back(rules_.default_label);
        return trace;
    }

private:
    ExtractionRules rules_;
    std::regex delimiter_;
    std::vector<std::pair<std::regex, Label>> labelers_;
};

/// Rule-based extraction of one trace. Deterministic in (text, rules).
inline Trace extract_trace(std::string_view text, const ExtractionRules& rules, std::string case_id) {
    return Extractor(rules).extract(text, std::move(case_id));
}

} // namespace thip

#endif // THIP_EXTRACT_HPP
