#ifndef THIP_PETRI_HPP
#define THIP_PETRI_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/process_tree.hpp"

namespace thip {

using PlaceId = std::size_t;
using TransitionId = std::size_t;

/// Multiset of places. Only places holding tokens are stored.
class Marking {
public:
    Marking() = default;
    Marking(std::initializer_list<std::pair<const PlaceId, unsigned>> init) {
        for (const auto& [p, n] : init) add(p, n);
    }

    void add(PlaceId p, unsigned n = 1) {
        if (n > 0) tokens_[p] += n;
    }

    /// Removes one token; returns false when the place is empty.
    bool take(PlaceId p) {
        auto it = tokens_.find(p);
        if (it == tokens_.end()) return false;
        if (--it->second == 0) tokens_.erase(it);
        return true;
    }

    unsigned operator[](PlaceId p) const {
        auto it = tokens_.find(p);
        return it == tokens_.end() ? 0 : it->second;
    }

    bool empty() const noexcept { return tokens_.empty(); }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [_, c] : tokens_) n += c;
        return n;
    }
    const std::map<PlaceId, unsigned>& tokens() const noexcept { return tokens_; }

    friend bool operator==(const Marking&, const Marking&) = default;
    friend bool operator<(const Marking& a, const Marking& b) { return a.tokens_ < b.tokens_; }

private:
    std::map<PlaceId, unsigned> tokens_;
};

struct Place {
    std::string name;
};

struct Transition {
    std::string name;
    std::optional<Label> label; // nullopt = silent
    std::vector<PlaceId> inputs;
    std::vector<PlaceId> outputs;

    bool silent() const noexcept { return !label.has_value(); }
};

class PetriNet {
public:
    PlaceId add_place(std::string name) {
        places_.push_back(Place{std::move(name)});
        return places_.size() - 1;
    }

    TransitionId add_transition(std::string name, std::optional<Label> label) {
        if (label) require_valid_label(*label);
        transitions_.push_back(Transition{std::move(name), std::move(label), {}, {}});
        return transitions_.size() - 1;
    }

    void add_input_arc(PlaceId p, TransitionId t) { insert_unique(checked(t).inputs, checked_place(p)); }
    void add_output_arc(TransitionId t, PlaceId p) { insert_unique(checked(t).outputs, checked_place(p)); }

    void set_initial_marking(Marking m) { initial_ = std::move(m); }
    void set_final_marking(Marking m) { final_ = std::move(m); }

    const std::vector<Place>& places() const noexcept { return places_; }
    const std::vector<Transition>& transitions() const noexcept { return transitions_; }
    const Marking& initial_marking() const noexcept { return initial_; }
    const Marking& final_marking() const noexcept { return final_; }

    std::size_t visible_transition_count() const {
        return static_cast<std::size_t>(std::count_if(transitions_.begin(), transitions_.end(),
                                                      [](const Transition& t) { return !t.silent(); }));
    }

    /// Places without incoming arcs.
    std::vector<PlaceId> source_places() const { return places_without(&Transition::outputs); }
    /// Places without outgoing arcs.
    std::vector<PlaceId> sink_places() const { return places_without(&Transition::inputs); }

    void validate() const {
        if (initial_.empty() || final_.empty())
            throw Error(Errc::InvalidModel, "initial and final markings must be nonempty");
        for (const auto* m : {&initial_, &final_})
            for (const auto& [p, _] : m->tokens())
                if (p >= places_.size()) throw Error(Errc::InvalidModel, "marking names an unknown place");
    }

private:
    static void insert_unique(std::vector<PlaceId>& v, PlaceId p) {
        if (std::find(v.begin(), v.end(), p) == v.end()) v.push_back(p);
    }

    Transition& checked(TransitionId t) {
        if (t >= transitions_.size()) throw Error(Errc::InvalidModel, "arc names an unknown transition");
        return transitions_[t];
    }

    PlaceId checked_place(PlaceId p) const {
        if (p >= places_.size()) throw Error(Errc::InvalidModel, "arc names an unknown place");
        return p;
    }

    std::vector<PlaceId> places_without(std::vector<PlaceId> Transition::*side) const {
        std::vector<bool> touched(places_.size(), false);
        for (const auto& t : transitions_)
            for (auto p : t.*side) touched[p] = true;
        std::vector<PlaceId> out;
        for (PlaceId p = 0; p < places_.size(); ++p)
            if (!touched[p]) out.push_back(p);
        return out;
    }

    std::vector<Place> places_;
    std::vector<Transition> transitions_;
    Marking initial_;
    Marking final_;
};

/// Default bound on distinct states visited by exhaustive net searches.
inline constexpr std::size_t kDefaultReplayBound = 100'000;

inline bool is_enabled(const PetriNet& net, const Marking& m, TransitionId t) {
    const auto& tr = net.transitions().at(t);
    return std::all_of(tr.inputs.begin(), tr.inputs.end(), [&](PlaceId p) { return m[p] >= 1; });
}

inline std::vector<TransitionId> enabled_transitions(const PetriNet& net, const Marking& m) {
    std::vector<TransitionId> out;
    for (TransitionId t = 0; t < net.transitions().size(); ++t)
        if (is_enabled(net, m, t)) out.push_back(t);
    return out;
}

inline Marking fire(const PetriNet& net, const Marking& m, TransitionId t) {
    if (t >= net.transitions().size() || !is_enabled(net, m, t))
        throw Error(Errc::TransitionNotEnabled, "transition " + std::to_string(t) + " is not enabled");
    Marking next = m;
    const auto& tr = net.transitions()[t];
    for (auto p : tr.inputs) next.take(p);
    for (auto p : tr.outputs) next.add(p);
    return next;
}

namespace detail {

/// Dense marking used by the search routines: one counter per place.
using DenseMarking = std::vector<std::uint32_t>;

struct DenseHash {
    std::size_t operator()(const DenseMarking& m) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (auto c : m) h = (h ^ c) * 1099511628211ull;
        return h;
    }
};

struct DenseStateHash {
    std::size_t operator()(const std::pair<DenseMarking, std::size_t>& s) const noexcept {
        return DenseHash{}(s.first) * 31 + s.second;
    }
};

inline DenseMarking to_dense(const PetriNet& net, const Marking& m) {
    DenseMarking d(net.places().size(), 0);
    for (const auto& [p, n] : m.tokens()) d.at(p) = n;
    return d;
}

inline Marking to_sparse(const DenseMarking& d) {
    Marking m;
    for (PlaceId p = 0; p < d.size(); ++p) m.add(p, d[p]);
    return m;
}

inline bool dense_enabled(const Transition& t, const DenseMarking& m) {
    for (auto p : t.inputs)
        if (m[p] == 0) return false;
    return true;
}

inline DenseMarking dense_fire(const Transition& t, DenseMarking m) {
    for (auto p : t.inputs) --m[p];
    for (auto p : t.outputs) ++m[p];
    return m;
}

[[noreturn]] inline void state_bound_exceeded(std::size_t bound) {
    throw Error(Errc::StateBoundExceeded, "explored more than " + std::to_string(bound) + " states");
}

} // namespace detail

/// True iff some firing sequence whose visible labels spell `trace` leads
/// from the initial to the final marking. Silent transitions are free.
inline bool replays(const PetriNet& net, const std::vector<Label>& trace,
                    std::size_t state_bound = kDefaultReplayBound) {
    using State = std::pair<detail::DenseMarking, std::size_t>;
    const auto goal = detail::to_dense(net, net.final_marking());
    std::unordered_set<State, detail::DenseStateHash> seen;
    std::vector<State> stack{{detail::to_dense(net, net.initial_marking()), 0}};
    seen.insert(stack.back());
    while (!stack.empty()) {
        auto [m, pos] = std::move(stack.back());
        stack.pop_back();
        if (pos == trace.size() && m == goal) return true;
        for (const auto& t : net.transitions()) {
            if (!detail::dense_enabled(t, m)) continue;
            std::size_t next_pos = pos;
            if (!t.silent()) {
                if (pos == trace.size() || *t.label != trace[pos]) continue;
                ++next_pos;
            }
            State next{detail::dense_fire(t, m), next_pos};
            if (seen.insert(next).second) {
                if (seen.size() > state_bound) detail::state_bound_exceeded(state_bound);
                stack.push_back(std::move(next));
            }
        }
    }
    return false;
}

inline bool replays(const PetriNet& net, const Trace& trace, std::size_t state_bound = kDefaultReplayBound) {
    return replays(net, trace.labels(), state_bound);
}

/// Labels of visible transitions enabled in some marking reachable from `m`
/// by silent firings only.
inline std::set<Label> eventually_enabled_labels(const PetriNet& net, const Marking& m,
                                                 std::size_t state_bound = kDefaultReplayBound) {
    std::set<Label> out;
    std::unordered_set<detail::DenseMarking, detail::DenseHash> seen;
    std::vector<detail::DenseMarking> stack{detail::to_dense(net, m)};
    seen.insert(stack.back());
    while (!stack.empty()) {
        auto cur = std::move(stack.back());
        stack.pop_back();
        for (const auto& t : net.transitions()) {
            if (!detail::dense_enabled(t, cur)) continue;
            if (!t.silent()) {
                out.insert(*t.label);
                continue;
            }
            auto next = detail::dense_fire(t, cur);
            if (seen.insert(next).second) {
                if (seen.size() > state_bound) detail::state_bound_exceeded(state_bound);
                stack.push_back(std::move(next));
            }
        }
    }
    return out;
}

/// Fewest visible firings on any path from the initial to the final marking.
inline std::size_t shortest_visible_path(const PetriNet& net, std::size_t state_bound = 1'000'000) {
    // 0-1 BFS: silent moves cost nothing.
    const auto goal = detail::to_dense(net, net.final_marking());
    std::unordered_map<detail::DenseMarking, std::size_t, detail::DenseHash> dist;
    std::deque<std::pair<detail::DenseMarking, std::size_t>> queue;
    auto start = detail::to_dense(net, net.initial_marking());
    dist[start] = 0;
    queue.emplace_back(std::move(start), 0);
    std::unordered_set<detail::DenseMarking, detail::DenseHash> done;
    while (!queue.empty()) {
        auto [m, d] = std::move(queue.front());
        queue.pop_front();
        if (!done.insert(m).second) continue;
        if (m == goal) return d;
        if (done.size() > state_bound) detail::state_bound_exceeded(state_bound);
        for (const auto& t : net.transitions()) {
            if (!detail::dense_enabled(t, m)) continue;
            auto next = detail::dense_fire(t, m);
            std::size_t nd = d + (t.silent() ? 0 : 1);
            auto it = dist.find(next);
            if (it != dist.end() && it->second <= nd) continue;
            dist[next] = nd;
            if (t.silent()) queue.emplace_front(std::move(next), nd);
            else queue.emplace_back(std::move(next), nd);
        }
    }
    throw Error(Errc::FinalMarkingUnreachable, "no firing sequence reaches the final marking");
}

namespace detail {

class TreeCompiler {
public:
    PetriNet compile(const ProcessTree& tree) {
        auto source = net_.add_place("source");
        auto sink = net_.add_place("sink");
        build(tree, source, sink);
        net_.set_initial_marking(Marking{{source, 1}});
        net_.set_final_marking(Marking{{sink, 1}});
        return std::move(net_);
    }

private:
    PlaceId place() { return net_.add_place("p" + std::to_string(++places_)); }

    TransitionId transition(std::optional<Label> label) {
        auto name = (label ? "t" : "tau") + std::to_string(++transitions_);
        return net_.add_transition(std::move(name), std::move(label));
    }

    void connect(PlaceId in, TransitionId t, PlaceId out) {
        net_.add_input_arc(in, t);
        net_.add_output_arc(t, out);
    }

    void build(const ProcessTree& node, PlaceId in, PlaceId out) {
        const auto& ch = node.children();
        switch (node.kind()) {
        case TreeKind::leaf: connect(in, transition(node.label()), out); return;
        case TreeKind::silent: connect(in, transition(std::nullopt), out); return;
        case TreeKind::sequence: {
            PlaceId cur = in;
            for (std::size_t i = 0; i < ch.size(); ++i) {
                PlaceId next = i + 1 == ch.size() ? out : place();
                build(ch[i], cur, next);
                cur = next;
            }
            return;
        }
        case TreeKind::exclusive_choice:
            for (const auto& c : ch) build(c, in, out);
            return;
        case TreeKind::parallel: {
            auto fork = transition(std::nullopt);
            auto join = transition(std::nullopt);
            net_.add_input_arc(in, fork);
            net_.add_output_arc(join, out);
            for (const auto& c : ch) {
                auto b = place(), e = place();
                net_.add_output_arc(fork, b);
                net_.add_input_arc(e, join);
                build(c, b, e);
            }
            return;
        }
        case TreeKind::loop: {
            // Private entry/exit places keep redo paths from leaking into
            // whatever else shares `in` or `out`.
            auto body_in = place(), body_out = place();
            connect(in, transition(std::nullopt), body_in);
            build(ch[0], body_in, body_out);
            for (std::size_t i = 1; i < ch.size(); ++i) build(ch[i], body_out, body_in);
            connect(body_out, transition(std::nullopt), out);
            return;
        }
        }
    }

    PetriNet net_;
    std::size_t places_ = 0;
    std::size_t transitions_ = 0;
};

} // namespace detail

/// Compiles a process tree into a workflow net with the same visible language.
inline PetriNet tree_to_petri(const ProcessTree& tree) { return detail::TreeCompiler{}.compile(tree); }

/// Line-oriented dump:
///   place <name>            transition <name> <label|tau>
///   arc <from> <to>         initial|final <place>[:count] ...
inline std::string to_string(const PetriNet& net) {
    std::ostringstream out;
    out << "petri-net\n";
    for (const auto& p : net.places()) out << "place " << p.name << '\n';
    for (const auto& t : net.transitions())
        out << "transition " << t.name << ' ' << (t.label ? detail::quote_label(*t.label) : "tau") << '\n';
    for (const auto& t : net.transitions()) {
        for (auto p : t.inputs) out << "arc " << net.places()[p].name << ' ' << t.name << '\n';
        for (auto p : t.outputs) out << "arc " << t.name << ' ' << net.places()[p].name << '\n';
    }
    auto marking = [&](const char* tag, const Marking& m) {
        out << tag;
        for (const auto& [p, n] : m.tokens()) out << ' ' << net.places()[p].name << ':' << n;
        out << '\n';
    };
    marking("initial", net.initial_marking());
    marking("final", net.final_marking());
    return out.str();
}

inline PetriNet parse_petri(const std::string& text) {
    PetriNet net;
    std::map<std::string, PlaceId> places;
    std::map<std::string, TransitionId> transitions;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& why) -> Error {
        return Error(Errc::InvalidModel, "net line " + std::to_string(line_no) + ": " + why);
    };
    auto parse_marking = [&](std::istringstream& ls) {
        Marking m;
        std::string tok;
        while (ls >> tok) {
            auto colon = tok.rfind(':');
            std::string name = colon == std::string::npos ? tok : tok.substr(0, colon);
            unsigned n = 1;
            if (colon != std::string::npos) {
                try {
                    n = static_cast<unsigned>(std::stoul(tok.substr(colon + 1)));
                } catch (const std::exception&) {
                    throw fail("bad token count in '" + tok + "'");
                }
            }
            auto it = places.find(name);
            if (it == places.end()) throw fail("unknown place '" + name + "'");
            m.add(it->second, n);
        }
        return m;
    };
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind) || kind[0] == '#') continue;
        if (!header) {
            if (kind != "petri-net") throw fail("expected 'petri-net' header");
            header = true;
            continue;
        }
        if (kind == "place") {
            std::string name;
            if (!(ls >> name) || places.count(name)) throw fail("bad or duplicate place");
            places[name] = net.add_place(name);
        } else if (kind == "transition") {
            std::string name, rest;
            if (!(ls >> name) || transitions.count(name)) throw fail("bad or duplicate transition");
            std::getline(ls, rest);
            rest = std::string(detail::trim(rest));
            if (rest.empty()) throw fail("transition without label");
            std::optional<Label> label;
            if (rest != "tau") {
                auto leaf = parse_tree(rest);
                if (leaf.kind() != TreeKind::leaf) throw fail("bad transition label");
                label = leaf.label();
            }
            transitions[name] = net.add_transition(name, label);
        } else if (kind == "arc") {
            std::string from, to;
            if (!(ls >> from >> to)) throw fail("arc needs two endpoints");
            if (places.count(from) && transitions.count(to)) net.add_input_arc(places[from], transitions[to]);
            else if (transitions.count(from) && places.count(to)) net.add_output_arc(transitions[from], places[to]);
            else throw fail("arc must join a known place and transition");
        } else if (kind == "initial") {
            net.set_initial_marking(parse_marking(ls));
        } else if (kind == "final") {
            net.set_final_marking(parse_marking(ls));
        } else {
            throw fail("unknown directive '" + kind + "'");
        }
    }
    if (!header) throw Error(Errc::InvalidModel, "empty net description");
    net.validate();
    return net;
}

} // namespace thip

#endif // THIP_PETRI_HPP
