#ifndef THIP_PROCESS_TREE_HPP
#define THIP_PROCESS_TREE_HPP

#include <cctype>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/random.hpp"

namespace thip {

enum class TreeKind { leaf, silent, sequence, exclusive_choice, parallel, loop };

/// Hierarchical process model. Operator nodes hold at least two children;
/// a loop's first child is its body and the rest are redo parts.
class ProcessTree {
public:
    static ProcessTree leaf(Label label) {
        require_valid_label(label);
        ProcessTree t(TreeKind::leaf);
        t.label_ = std::move(label);
        return t;
    }

    static ProcessTree silent() { return ProcessTree(TreeKind::silent); }

    static ProcessTree op(TreeKind kind, std::vector<ProcessTree> children) {
        if (kind == TreeKind::leaf || kind == TreeKind::silent)
            throw Error(Errc::InvalidModel, "leaf kinds take no children");
        if (children.size() < 2)
            throw Error(Errc::InvalidModel, "operator nodes need at least two children");
        ProcessTree t(kind);
        t.children_ = std::move(children);
        return t;
    }

    static ProcessTree sequence(std::vector<ProcessTree> c) { return op(TreeKind::sequence, std::move(c)); }
    static ProcessTree choice(std::vector<ProcessTree> c) { return op(TreeKind::exclusive_choice, std::move(c)); }
    static ProcessTree parallel(std::vector<ProcessTree> c) { return op(TreeKind::parallel, std::move(c)); }
    static ProcessTree loop(std::vector<ProcessTree> c) { return op(TreeKind::loop, std::move(c)); }

    TreeKind kind() const noexcept { return kind_; }
    bool is_leaf() const noexcept { return kind_ == TreeKind::leaf || kind_ == TreeKind::silent; }
    const Label& label() const noexcept { return label_; }
    const std::vector<ProcessTree>& children() const noexcept { return children_; }

    std::set<Label> alphabet() const {
        std::set<Label> out;
        collect_labels(out);
        return out;
    }

    std::size_t leaf_count() const {
        if (is_leaf()) return 1;
        std::size_t n = 0;
        for (const auto& c : children_) n += c.leaf_count();
        return n;
    }

    friend bool operator==(const ProcessTree&, const ProcessTree&) = default;

private:
    explicit ProcessTree(TreeKind kind) : kind_(kind) {}

    void collect_labels(std::set<Label>& out) const {
        if (kind_ == TreeKind::leaf) out.insert(label_);
        for (const auto& c : children_) c.collect_labels(out);
    }

    TreeKind kind_;
    Label label_;
    std::vector<ProcessTree> children_;
};

inline std::string_view operator_symbol(TreeKind kind) {
    switch (kind) {
    case TreeKind::sequence: return "->";
    case TreeKind::exclusive_choice: return "X";
    case TreeKind::parallel: return "+";
    case TreeKind::loop: return "*";
    case TreeKind::silent: return "tau";
    case TreeKind::leaf: break;
    }
    return "";
}

namespace detail {

inline bool is_plain_label_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
           c == ':' || c == '<' || c == '>' || c == '/' || c == '#' || c == '@';
}

inline std::string quote_label(const Label& label) {
    bool plain = label != "tau";
    for (char c : label) plain = plain && is_plain_label_char(c);
    // A bare "->" would read as an operator symbol.
    if (plain && label.rfind("->", 0) != 0) return label;
    std::string out = "'";
    for (char c : label) {
        if (c == '\'' || c == '\\') out += '\\';
        out += c;
    }
    return out + "'";
}

class TreeParser {
public:
    explicit TreeParser(std::string_view src) : src_(src) {}

    ProcessTree parse() {
        auto t = node();
        skip_ws();
        if (pos_ != src_.size()) fail("trailing input");
        return t;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw Error(Errc::InvalidModel, "tree syntax at offset " + std::to_string(pos_) + ": " + why);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool at(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    ProcessTree node() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        if (src_[pos_] == '\'') return ProcessTree::leaf(quoted());
        std::string word;
        if (src_.substr(pos_, 2) == "->") {
            word = "->";
            pos_ += 2;
        } else {
            while (pos_ < src_.size() && is_plain_label_char(src_[pos_])) word += src_[pos_++];
            if (word.empty() && pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '*'))
                word = src_[pos_++];
        }
        if (word.empty()) fail("expected a label or operator");
        if (at('(')) {
            TreeKind kind;
            if (word == "->") kind = TreeKind::sequence;
            else if (word == "X") kind = TreeKind::exclusive_choice;
            else if (word == "+") kind = TreeKind::parallel;
            else if (word == "*") kind = TreeKind::loop;
            else fail("unknown operator '" + word + "'");
            ++pos_;
            std::vector<ProcessTree> children;
            children.push_back(node());
            while (at(',')) {
                ++pos_;
                children.push_back(node());
            }
            if (!at(')')) fail("expected ')'");
            ++pos_;
            return ProcessTree::op(kind, std::move(children));
        }
        if (word == "tau") return ProcessTree::silent();
        if (word == "->" || word == "+" || word == "*") fail("operator without children");
        return ProcessTree::leaf(word);
    }

    std::string quoted() {
        ++pos_;
        std::string out;
        while (pos_ < src_.size() && src_[pos_] != '\'') {
            if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) ++pos_;
            out += src_[pos_++];
        }
        if (pos_ >= src_.size()) fail("unterminated quoted label");
        ++pos_;
        return out;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Nested s-expression, e.g. `->(a, +(b, c))`; `X` choice, `*` loop, `tau` silent.
inline std::string to_string(const ProcessTree& tree) {
    switch (tree.kind()) {
    case TreeKind::leaf: return detail::quote_label(tree.label());
    case TreeKind::silent: return "tau";
    default: break;
    }
    std::string out(operator_symbol(tree.kind()));
    out += '(';
    for (std::size_t i = 0; i < tree.children().size(); ++i) {
        if (i) out += ", ";
        out += to_string(tree.children()[i]);
    }
    return out + ')';
}

inline ProcessTree parse_tree(std::string_view text) { return detail::TreeParser(text).parse(); }

/// Random playout of the tree's language. Choices are uniform; each loop
/// takes another redo round with probability `redo_probability`.
inline void play_out(const ProcessTree& tree, Rng& rng, std::vector<Label>& out,
                     double redo_probability = 0.5) {
    const auto& ch = tree.children();
    switch (tree.kind()) {
    case TreeKind::leaf: out.push_back(tree.label()); return;
    case TreeKind::silent: return;
    case TreeKind::sequence:
        for (const auto& c : ch) play_out(c, rng, out, redo_probability);
        return;
    case TreeKind::exclusive_choice: play_out(ch[rng.below(ch.size())], rng, out, redo_probability); return;
    case TreeKind::loop:
        play_out(ch[0], rng, out, redo_probability);
        while (rng.uniform() < redo_probability) {
            play_out(ch[1 + rng.below(ch.size() - 1)], rng, out, redo_probability);
            play_out(ch[0], rng, out, redo_probability);
        }
        return;
    case TreeKind::parallel: {
        std::vector<std::vector<Label>> parts(ch.size());
        for (std::size_t i = 0; i < ch.size(); ++i) play_out(ch[i], rng, parts[i], redo_probability);
        std::vector<std::size_t> cursor(ch.size(), 0);
        std::size_t remaining = 0;
        for (const auto& p : parts) remaining += p.size();
        for (; remaining > 0; --remaining) {
            // Pick a branch weighted by what it still has to emit.
            auto k = rng.below(remaining);
            for (std::size_t i = 0; i < parts.size(); ++i) {
                auto left = parts[i].size() - cursor[i];
                if (k < left) {
                    out.push_back(parts[i][cursor[i]++]);
                    break;
                }
                k -= left;
            }
        }
        return;
    }
    }
}

inline std::vector<Label> sample_trace(const ProcessTree& tree, Rng& rng) {
    std::vector<Label> out;
    play_out(tree, rng, out);
    return out;
}

} // namespace thip

#endif // THIP_PROCESS_TREE_HPP
