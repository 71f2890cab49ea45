#ifndef THIP_CONFORMANCE_HPP
#define THIP_CONFORMANCE_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/petri.hpp"

namespace thip {

enum class MoveKind { synchronous, log, model };

struct AlignmentMove {
    MoveKind kind;
    std::optional<Label> label;             // empty only for silent model moves
    std::optional<TransitionId> transition; // set for synchronous and model moves
    std::uint64_t cost = 0;

    bool silent() const noexcept { return kind == MoveKind::model && !label; }
};

struct Alignment {
    std::vector<AlignmentMove> moves;
    std::uint64_t total_cost = 0;
};

/// Costs of deviating moves. Synchronous and silent moves are always free.
struct MoveCosts {
    std::uint64_t log_move = 1;
    std::uint64_t model_move = 1;
};

struct AlignOptions {
    MoveCosts costs;
    std::size_t state_bound = 1'000'000;
};

/// Optimal alignment of `trace` against `net` by Dijkstra search over the
/// synchronous product (states are marking x trace position).
inline Alignment align(const PetriNet& net, const std::vector<Label>& trace, const AlignOptions& opts = {}) {
    using detail::DenseMarking;
    using State = std::pair<DenseMarking, std::size_t>;

    struct Node {
        std::size_t parent;
        AlignmentMove move;
    };
    std::vector<Node> nodes;
    std::vector<State> states;
    std::unordered_map<State, std::size_t, detail::DenseStateHash> index;
    std::vector<std::uint64_t> dist;
    std::vector<bool> closed;

    // (cost, events left, insertion order, node)
    using Entry = std::tuple<std::uint64_t, std::size_t, std::size_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    std::size_t pushes = 0;

    auto relax = [&](State s, std::size_t parent, AlignmentMove move, std::uint64_t cost) {
        auto [it, fresh] = index.try_emplace(std::move(s), states.size());
        if (fresh) {
            states.push_back(it->first);
            nodes.push_back(Node{parent, std::move(move)});
            dist.push_back(cost);
            closed.push_back(false);
        } else if (closed[it->second] || dist[it->second] <= cost) {
            return;
        } else {
            nodes[it->second] = Node{parent, std::move(move)};
            dist[it->second] = cost;
        }
        open.emplace(cost, trace.size() - it->first.second, pushes++, it->second);
    };

    const auto goal = detail::to_dense(net, net.final_marking());
    relax({detail::to_dense(net, net.initial_marking()), 0}, SIZE_MAX, AlignmentMove{}, 0);
    std::size_t expanded = 0;

    while (!open.empty()) {
        auto [cost, _, __, id] = open.top();
        open.pop();
        if (closed[id] || cost != dist[id]) continue;
        closed[id] = true;
        const auto marking = states[id].first;
        const auto pos = states[id].second;

        if (pos == trace.size() && marking == goal) {
            Alignment out;
            out.total_cost = cost;
            for (auto n = id; nodes[n].parent != SIZE_MAX; n = nodes[n].parent) out.moves.push_back(nodes[n].move);
            std::reverse(out.moves.begin(), out.moves.end());
            return out;
        }
        if (++expanded > opts.state_bound) detail::state_bound_exceeded(opts.state_bound);

        const auto& transitions = net.transitions();
        for (TransitionId t = 0; t < transitions.size(); ++t) {
            const auto& tr = transitions[t];
            if (tr.silent() || pos == trace.size() || *tr.label != trace[pos]) continue;
            if (!detail::dense_enabled(tr, marking)) continue;
            relax({detail::dense_fire(tr, marking), pos + 1}, id,
                  AlignmentMove{MoveKind::synchronous, tr.label, t, 0}, cost);
        }
        for (TransitionId t = 0; t < transitions.size(); ++t) {
            const auto& tr = transitions[t];
            if (!detail::dense_enabled(tr, marking)) continue;
            auto c = tr.silent() ? 0 : opts.costs.model_move;
            relax({detail::dense_fire(tr, marking), pos}, id, AlignmentMove{MoveKind::model, tr.label, t, c},
                  cost + c);
        }
        if (pos < trace.size())
            relax({marking, pos + 1}, id, AlignmentMove{MoveKind::log, trace[pos], std::nullopt, opts.costs.log_move},
                  cost + opts.costs.log_move);
    }
    throw Error(Errc::FinalMarkingUnreachable, "no alignment reaches the final marking");
}

inline Alignment align(const PetriNet& net, const Trace& trace, const AlignOptions& opts = {}) {
    return align(net, trace.labels(), opts);
}

/// One move per line (`sync a`, `log x`, `model b`, `tau`), then `cost N`.
inline std::string to_string(const Alignment& a) {
    std::ostringstream out;
    for (const auto& m : a.moves) {
        switch (m.kind) {
        case MoveKind::synchronous: out << "sync " << *m.label << '\n'; break;
        case MoveKind::log: out << "log " << *m.label << '\n'; break;
        case MoveKind::model:
            if (m.label) out << "model " << *m.label << '\n';
            else out << "tau\n";
            break;
        }
    }
    out << "cost " << a.total_cost << '\n';
    return out.str();
}

/// Cost of aligning `trace` when nothing matches: every event is a log move
/// and the cheapest complete run is all model moves.
inline std::uint64_t worst_case_cost(const PetriNet& net, std::size_t trace_length, const AlignOptions& opts = {}) {
    return trace_length * opts.costs.log_move + shortest_visible_path(net, opts.state_bound) * opts.costs.model_move;
}

inline double fitness_from_cost(std::uint64_t cost, std::uint64_t worst_case) {
    if (worst_case == 0) return 1.0;
    return 1.0 - static_cast<double>(cost) / static_cast<double>(worst_case);
}

/// 1 - optimal alignment cost / worst-case cost, in [0, 1].
inline double fitness(const PetriNet& net, const std::vector<Label>& trace, const AlignOptions& opts = {}) {
    auto a = align(net, trace, opts);
    return fitness_from_cost(a.total_cost, worst_case_cost(net, trace.size(), opts));
}

inline double fitness(const PetriNet& net, const Trace& trace, const AlignOptions& opts = {}) {
    return fitness(net, trace.labels(), opts);
}

namespace detail {

struct PrefixState {
    std::size_t visits = 0;
    std::set<Label> executed;
    std::set<Label> enabled;
};

inline double precision_from_alignments(const PetriNet& net, const std::vector<Alignment>& alignments,
                                        std::size_t state_bound) {
    std::map<std::vector<Label>, PrefixState> states;
    std::map<Marking, std::set<Label>> enabled_cache;
    auto enabled_at = [&](const Marking& m) -> const std::set<Label>& {
        auto it = enabled_cache.find(m);
        if (it == enabled_cache.end())
            it = enabled_cache.emplace(m, eventually_enabled_labels(net, m, state_bound)).first;
        return it->second;
    };

    for (const auto& a : alignments) {
        std::vector<Label> prefix;
        Marking current = net.initial_marking();
        Marking at_prefix = current;
        for (const auto& mv : a.moves) {
            if (!mv.transition) continue;
            current = fire(net, current, *mv.transition);
            if (!mv.label) continue;
            auto& s = states[prefix];
            ++s.visits;
            s.executed.insert(*mv.label);
            const auto& en = enabled_at(at_prefix);
            s.enabled.insert(en.begin(), en.end());
            prefix.push_back(*mv.label);
            at_prefix = current;
        }
    }

    double weighted = 0.0, weight = 0.0;
    for (const auto& [_, s] : states) {
        weighted += static_cast<double>(s.visits) * static_cast<double>(s.executed.size()) /
                    static_cast<double>(s.enabled.size());
        weight += static_cast<double>(s.visits);
    }
    return weight == 0.0 ? 1.0 : weighted / weight;
}

} // namespace detail

/// Escaping-edges precision over the model states visited by the optimal
/// alignments of the log's traces. Each state visited before a visible move
/// contributes |executed| / |enabled|; the result is the visit-weighted mean.
inline double precision(const PetriNet& net, const EventLog& log, const AlignOptions& opts = {}) {
    std::vector<Alignment> alignments;
    for (const auto& t : log.traces()) alignments.push_back(align(net, t, opts));
    return detail::precision_from_alignments(net, alignments, opts.state_bound);
}

struct ConformanceResult {
    double fitness = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

/// Harmonic mean of fitness and precision; zero when both are zero.
inline double f1_score(double fitness, double precision) {
    if (fitness + precision == 0.0) return 0.0;
    return 2.0 * fitness * precision / (fitness + precision);
}

/// Fitness is averaged over the teacher traces (usually a single one).
inline ConformanceResult conformance_check(const PetriNet& model, const EventLog& teacher,
                                           const AlignOptions& opts = {}) {
    if (teacher.empty()) throw Error(Errc::EmptyTeacherLog, "teacher log has no traces");
    std::vector<Alignment> alignments;
    double fit_sum = 0.0;
    const auto shortest = shortest_visible_path(model, opts.state_bound);
    for (const auto& t : teacher.traces()) {
        alignments.push_back(align(model, t, opts));
        auto worst = t.size() * opts.costs.log_move + shortest * opts.costs.model_move;
        fit_sum += fitness_from_cost(alignments.back().total_cost, worst);
    }
    ConformanceResult r;
    r.fitness = fit_sum / static_cast<double>(teacher.size());
    r.precision = detail::precision_from_alignments(model, alignments, opts.state_bound);
    r.f1 = f1_score(r.fitness, r.precision);
    return r;
}

} // namespace thip

#endif // THIP_CONFORMANCE_HPP
