#ifndef THIP_DISCOVERY_HPP
#define THIP_DISCOVERY_HPP

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/petri.hpp"
#include "thip/process_tree.hpp"

namespace thip {

/// Model accepting every nonempty sequence over `alphabet`:
/// `*(X(a, b, ...), tau)`, or `*(a, tau)` for a single label.
inline ProcessTree make_flower(const std::set<Label>& alphabet) {
    if (alphabet.empty()) throw Error(Errc::EmptyAlphabet, "flower over an empty alphabet");
    std::vector<ProcessTree> leaves;
    for (const auto& l : alphabet) leaves.push_back(ProcessTree::leaf(l));
    auto body = leaves.size() == 1 ? std::move(leaves.front()) : ProcessTree::choice(std::move(leaves));
    return ProcessTree::loop({std::move(body), ProcessTree::silent()});
}

namespace detail {

using Sequence = std::vector<Label>;
using SequenceLog = std::vector<Sequence>;
using Partition = std::vector<std::set<Label>>;

/// Small union-find over label indices.
class Groups {
public:
    explicit Groups(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
        return i;
    }

    bool unite(std::size_t a, std::size_t b) {
        a = find(a), b = find(b);
        if (a == b) return false;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
        return true;
    }

    /// Parts ordered by their smallest member.
    Partition parts(const std::vector<Label>& labels) {
        std::map<std::size_t, std::set<Label>> by_root;
        for (std::size_t i = 0; i < labels.size(); ++i) by_root[find(i)].insert(labels[i]);
        Partition out;
        for (auto& [_, part] : by_root) out.push_back(std::move(part));
        std::sort(out.begin(), out.end(),
                  [](const auto& a, const auto& b) { return *a.begin() < *b.begin(); });
        return out;
    }

private:
    std::vector<std::size_t> parent_;
};

/// DFG view with dense label indices, as used by cut detection.
struct CutContext {
    std::vector<Label> labels; // sorted alphabet
    std::map<Label, std::size_t> index;
    std::vector<std::vector<bool>> edge;
    std::vector<bool> start, end;

    explicit CutContext(const DirectlyFollowsGraph& dfg) : labels(dfg.nodes.begin(), dfg.nodes.end()) {
        const auto n = labels.size();
        for (std::size_t i = 0; i < n; ++i) index[labels[i]] = i;
        edge.assign(n, std::vector<bool>(n, false));
        for (const auto& [e, _] : dfg.edges) edge[index[e.first]][index[e.second]] = true;
        start.assign(n, false);
        end.assign(n, false);
        for (const auto& [l, _] : dfg.start_labels) start[index[l]] = true;
        for (const auto& [l, _] : dfg.end_labels) end[index[l]] = true;
    }

    std::size_t size() const { return labels.size(); }

    /// reach[i][j]: a nonempty directly-follows path leads from i to j.
    std::vector<std::vector<bool>> reachability() const {
        auto reach = edge;
        const auto n = size();
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i)
                if (reach[i][k])
                    for (std::size_t j = 0; j < n; ++j)
                        if (reach[k][j]) reach[i][j] = true;
        return reach;
    }

    std::vector<std::size_t> members(const std::set<Label>& part) const {
        std::vector<std::size_t> out;
        for (const auto& l : part) out.push_back(index.at(l));
        return out;
    }
};

inline std::optional<Partition> exclusive_choice_cut(const CutContext& ctx) {
    Groups g(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i)
        for (std::size_t j = 0; j < ctx.size(); ++j)
            if (ctx.edge[i][j]) g.unite(i, j);
    auto parts = g.parts(ctx.labels);
    if (parts.size() < 2) return std::nullopt;
    return parts;
}

inline std::optional<Partition> sequence_cut(const CutContext& ctx) {
    const auto n = ctx.size();
    const auto reach = ctx.reachability();
    Groups g(n);
    // Strongly connected components first.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (reach[i][j] && reach[j][i]) g.unite(i, j);
    // Then merge groups that cannot reach each other in either direction.
    auto linked = [&](const std::set<Label>& a, const std::set<Label>& b) {
        for (auto i : ctx.members(a))
            for (auto j : ctx.members(b))
                if (reach[i][j] || reach[j][i]) return true;
        return false;
    };
    for (bool merged = true; merged;) {
        merged = false;
        auto parts = g.parts(ctx.labels);
        for (std::size_t a = 0; a < parts.size() && !merged; ++a)
            for (std::size_t b = a + 1; b < parts.size() && !merged; ++b)
                if (!linked(parts[a], parts[b]))
                    merged = g.unite(ctx.index.at(*parts[a].begin()), ctx.index.at(*parts[b].begin()));
    }
    auto parts = g.parts(ctx.labels);
    if (parts.size() < 2) return std::nullopt;

    // Order by how many other groups reach into each group.
    auto reaches = [&](const std::set<Label>& a, const std::set<Label>& b) {
        for (auto i : ctx.members(a))
            for (auto j : ctx.members(b))
                if (reach[i][j]) return true;
        return false;
    };
    std::vector<std::pair<std::size_t, std::size_t>> rank;
    for (std::size_t b = 0; b < parts.size(); ++b) {
        std::size_t preds = 0;
        for (std::size_t a = 0; a < parts.size(); ++a)
            if (a != b && reaches(parts[a], parts[b])) ++preds;
        rank.emplace_back(preds, b);
    }
    std::sort(rank.begin(), rank.end());
    Partition ordered;
    for (const auto& [_, b] : rank) ordered.push_back(parts[b]);

    for (std::size_t a = 0; a < ordered.size(); ++a)
        for (std::size_t b = a + 1; b < ordered.size(); ++b)
            for (auto i : ctx.members(ordered[a]))
                for (auto j : ctx.members(ordered[b]))
                    if (!reach[i][j] || reach[j][i]) return std::nullopt;
    return ordered;
}

inline std::optional<Partition> parallel_cut(const CutContext& ctx) {
    const auto n = ctx.size();
    Groups g(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (!(ctx.edge[i][j] && ctx.edge[j][i])) g.unite(i, j);
    auto parts = g.parts(ctx.labels);
    if (parts.size() < 2) return std::nullopt;

    auto complete = [&](const std::set<Label>& part) {
        bool s = false, e = false;
        for (auto i : ctx.members(part)) s = s || ctx.start[i], e = e || ctx.end[i];
        return s && e;
    };
    Partition kept;
    std::set<Label> deficient;
    for (auto& part : parts) {
        if (complete(part)) kept.push_back(std::move(part));
        else deficient.insert(part.begin(), part.end());
    }
    if (kept.empty()) return std::nullopt;
    if (!deficient.empty()) {
        if (complete(deficient)) kept.push_back(std::move(deficient));
        else kept.front().insert(deficient.begin(), deficient.end());
    }
    if (kept.size() < 2) return std::nullopt;
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return *a.begin() < *b.begin(); });
    return kept;
}

/// Body first, then redo groups ordered by smallest label.
inline std::optional<Partition> loop_cut(const CutContext& ctx) {
    const auto n = ctx.size();
    std::vector<bool> in_body(n, false);
    for (std::size_t i = 0; i < n; ++i) in_body[i] = ctx.start[i] || ctx.end[i];

    for (bool changed = true; changed;) {
        changed = false;
        Groups g(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (!in_body[i] && !in_body[j] && ctx.edge[i][j]) g.unite(i, j);
        for (const auto& part : g.parts(ctx.labels)) {
            auto idx = ctx.members(part);
            if (in_body[idx.front()]) continue;
            bool ok = true;
            for (auto r : idx) {
                bool any_end = false, all_ends = true, any_start = false, all_starts = true;
                for (std::size_t b = 0; b < n; ++b) {
                    if (!in_body[b]) continue;
                    // Enter a redo part only from end activities, leave only to start activities.
                    if (ctx.edge[b][r] && !ctx.end[b]) ok = false;
                    if (ctx.edge[r][b] && !ctx.start[b]) ok = false;
                    if (ctx.end[b]) any_end = any_end || ctx.edge[b][r], all_ends = all_ends && ctx.edge[b][r];
                    if (ctx.start[b])
                        any_start = any_start || ctx.edge[r][b], all_starts = all_starts && ctx.edge[r][b];
                }
                if ((any_end && !all_ends) || (any_start && !all_starts)) ok = false;
            }
            if (!ok) {
                for (auto r : idx) in_body[r] = true;
                changed = true;
            }
        }
    }

    std::set<Label> body;
    for (std::size_t i = 0; i < n; ++i)
        if (in_body[i]) body.insert(ctx.labels[i]);
    if (body.size() == n) return std::nullopt;
    Groups g(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!in_body[i] && !in_body[j] && ctx.edge[i][j]) g.unite(i, j);
    Partition out{body};
    for (auto& part : g.parts(ctx.labels))
        if (!in_body[ctx.index.at(*part.begin())]) out.push_back(std::move(part));
    return out;
}

inline std::size_t part_of(const Partition& parts, const Label& l) {
    for (std::size_t i = 0; i < parts.size(); ++i)
        if (parts[i].count(l)) return i;
    return parts.size();
}

inline std::vector<SequenceLog> split_exclusive(const SequenceLog& log, const Partition& parts) {
    std::vector<SequenceLog> out(parts.size());
    for (const auto& s : log) out[part_of(parts, s.front())].push_back(s);
    return out;
}

inline std::vector<SequenceLog> split_sequence(const SequenceLog& log, const Partition& parts) {
    std::vector<SequenceLog> out(parts.size(), SequenceLog(log.size()));
    for (std::size_t t = 0; t < log.size(); ++t)
        for (const auto& l : log[t]) out[part_of(parts, l)][t].push_back(l);
    return out;
}

// Projection onto each part; identical in shape to the sequence split.
inline std::vector<SequenceLog> split_parallel(const SequenceLog& log, const Partition& parts) {
    return split_sequence(log, parts);
}

inline std::vector<SequenceLog> split_loop(const SequenceLog& log, const Partition& parts) {
    std::vector<SequenceLog> out(parts.size());
    for (const auto& s : log) {
        Sequence segment;
        std::size_t current = part_of(parts, s.front());
        for (const auto& l : s) {
            auto p = part_of(parts, l);
            if (p != current) {
                out[current].push_back(std::move(segment));
                segment.clear();
                current = p;
            }
            segment.push_back(l);
        }
        out[current].push_back(std::move(segment));
    }
    return out;
}

inline ProcessTree mine(const SequenceLog& log);

inline ProcessTree mine_parts(TreeKind kind, const std::vector<SequenceLog>& sublogs) {
    std::vector<ProcessTree> children;
    for (const auto& sub : sublogs) children.push_back(mine(sub));
    return ProcessTree::op(kind, std::move(children));
}

inline ProcessTree mine(const SequenceLog& log) {
    SequenceLog nonempty;
    for (const auto& s : log)
        if (!s.empty()) nonempty.push_back(s);

    if (nonempty.empty()) return ProcessTree::silent();
    if (nonempty.size() < log.size())
        return ProcessTree::choice({ProcessTree::silent(), mine(nonempty)});

    const auto& first = nonempty.front().front();
    if (std::all_of(nonempty.begin(), nonempty.end(),
                    [&](const Sequence& s) { return s.size() == 1 && s.front() == first; }))
        return ProcessTree::leaf(first);

    const auto dfg = build_dfg_from(nonempty);
    const CutContext ctx(dfg);
    if (auto cut = exclusive_choice_cut(ctx))
        return mine_parts(TreeKind::exclusive_choice, split_exclusive(nonempty, *cut));
    if (auto cut = sequence_cut(ctx))
        return mine_parts(TreeKind::sequence, split_sequence(nonempty, *cut));
    if (auto cut = parallel_cut(ctx))
        return mine_parts(TreeKind::parallel, split_parallel(nonempty, *cut));
    if (auto cut = loop_cut(ctx))
        return mine_parts(TreeKind::loop, split_loop(nonempty, *cut));
    return make_flower(dfg.nodes);
}

} // namespace detail

/// Inductive miner: every trace of `log` is in the language of the result.
/// Throws EmptyLog without traces and EmptyAlphabet when every trace is empty.
inline ProcessTree discover_tree(const EventLog& log) {
    if (log.empty()) throw Error(Errc::EmptyLog, "cannot discover a model from a log without traces");
    auto seqs = log.sequences();
    if (std::all_of(seqs.begin(), seqs.end(), [](const auto& s) { return s.empty(); }))
        throw Error(Errc::EmptyAlphabet, "every trace in the log is empty");
    return detail::mine(seqs);
}

inline ProcessTree discover_tree(const Trace& trace) {
    return discover_tree(EventLog({trace}));
}

} // namespace thip

#endif // THIP_DISCOVERY_HPP
