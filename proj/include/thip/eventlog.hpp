#ifndef THIP_EVENTLOG_HPP
#define THIP_EVENTLOG_HPP

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "thip/error.hpp"

namespace thip {

using Label = std::string;

/// True when `label` can name an activity: non-empty and not blank.
inline bool is_valid_label(std::string_view label) {
    return std::any_of(label.begin(), label.end(),
                       [](unsigned char c) { return !std::isspace(c); });
}

inline void require_valid_label(std::string_view label) {
    if (!is_valid_label(label))
        throw Error(Errc::InvalidLabel, "activity label must contain non-whitespace content: '" +
                                            std::string(label) + "'");
}

struct Activity {
    Label label;
    std::size_t index = 0;

    friend bool operator==(const Activity&, const Activity&) = default;
};

/// One execution of a process: an ordered sequence of activities.
/// The activity indices always equal their positions.
class Trace {
public:
    Trace() = default;

    Trace(std::string case_id, const std::vector<Label>& labels,
          std::optional<std::string> raw_text = std::nullopt)
        : case_id_(std::move(case_id)), raw_text_(std::move(raw_text)) {
        activities_.reserve(labels.size());
        for (const auto& l : labels) push_back(l);
    }

    void push_back(Label label) {
        require_valid_label(label);
        activities_.push_back(Activity{std::move(label), activities_.size()});
    }

    const std::string& case_id() const noexcept { return case_id_; }
    const std::vector<Activity>& activities() const noexcept { return activities_; }
    const std::optional<std::string>& raw_text() const noexcept { return raw_text_; }
    void set_raw_text(std::optional<std::string> text) { raw_text_ = std::move(text); }

    std::size_t size() const noexcept { return activities_.size(); }
    bool empty() const noexcept { return activities_.empty(); }
    const Label& operator[](std::size_t i) const { return activities_[i].label; }

    std::vector<Label> labels() const {
        std::vector<Label> out;
        out.reserve(activities_.size());
        for (const auto& a : activities_) out.push_back(a.label);
        return out;
    }

    friend bool operator==(const Trace&, const Trace&) = default;

private:
    std::string case_id_;
    std::vector<Activity> activities_;
    std::optional<std::string> raw_text_;
};

/// Ordered collection of traces with pairwise distinct case ids.
class EventLog {
public:
    EventLog() = default;

    explicit EventLog(std::vector<Trace> traces) {
        for (auto& t : traces) add(std::move(t));
    }

    /// Builds a log from bare label sequences, naming cases "t1", "t2", ...
    static EventLog from_sequences(const std::vector<std::vector<Label>>& seqs) {
        EventLog log;
        for (std::size_t i = 0; i < seqs.size(); ++i)
            log.add(Trace("t" + std::to_string(i + 1), seqs[i]));
        return log;
    }

    void add(Trace trace) {
        if (!case_ids_.insert(trace.case_id()).second)
            throw Error(Errc::DuplicateCaseId, "case id '" + trace.case_id() + "' appears twice");
        traces_.push_back(std::move(trace));
    }

    const std::vector<Trace>& traces() const noexcept { return traces_; }
    std::size_t size() const noexcept { return traces_.size(); }
    bool empty() const noexcept { return traces_.empty(); }

    const Trace* find(const std::string& case_id) const {
        for (const auto& t : traces_)
            if (t.case_id() == case_id) return &t;
        return nullptr;
    }

    std::set<Label> alphabet() const {
        std::set<Label> out;
        for (const auto& t : traces_)
            for (const auto& a : t.activities()) out.insert(a.label);
        return out;
    }

    std::vector<std::vector<Label>> sequences() const {
        std::vector<std::vector<Label>> out;
        out.reserve(traces_.size());
        for (const auto& t : traces_) out.push_back(t.labels());
        return out;
    }

    friend bool operator==(const EventLog& a, const EventLog& b) { return a.traces_ == b.traces_; }

private:
    std::vector<Trace> traces_;
    std::unordered_set<std::string> case_ids_;
};

struct DirectlyFollowsGraph {
    std::set<Label> nodes;
    std::map<std::pair<Label, Label>, std::size_t> edges;
    std::map<Label, std::size_t> start_labels;
    std::map<Label, std::size_t> end_labels;

    bool has_edge(const Label& from, const Label& to) const {
        return edges.find({from, to}) != edges.end();
    }

    std::size_t total_edge_count() const {
        std::size_t n = 0;
        for (const auto& [_, c] : edges) n += c;
        return n;
    }
};

template <typename Sequences>
DirectlyFollowsGraph build_dfg_from(const Sequences& seqs) {
    DirectlyFollowsGraph g;
    for (const auto& seq : seqs) {
        if (seq.empty()) continue;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            g.nodes.insert(seq[i]);
            if (i + 1 < seq.size()) ++g.edges[{seq[i], seq[i + 1]}];
        }
        ++g.start_labels[seq.front()];
        ++g.end_labels[seq.back()];
    }
    return g;
}

inline DirectlyFollowsGraph build_dfg(const EventLog& log) { return build_dfg_from(log.sequences()); }

enum class LogFormat { jsonl, xes };

inline std::optional<LogFormat> parse_log_format(std::string_view name) {
    if (name == "jsonl") return LogFormat::jsonl;
    if (name == "xes" || name == "xes-subset") return LogFormat::xes;
    return std::nullopt;
}

/// Picks the format from the file extension; anything but .xes is JSONL.
inline LogFormat guess_log_format(const std::filesystem::path& path) {
    return path.extension() == ".xes" ? LogFormat::xes : LogFormat::jsonl;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw Error(Errc::IoFailure, "write to '" + path.string() + "' failed");
}

inline bool is_blank(std::string_view s) { return !is_valid_label(s); }

inline std::string_view trim(std::string_view s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(s.front())) s.remove_prefix(1);
    while (!s.empty() && issp(s.back())) s.remove_suffix(1);
    return s;
}

inline EventLog parse_jsonl(const std::string& content) {
    EventLog log;
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        auto where = "line " + std::to_string(line_no);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(Errc::MalformedRecord, where + ": " + e.what());
        }
        if (!rec.is_object()) throw Error(Errc::MalformedRecord, where + ": record is not an object");
        auto c = rec.find("case");
        auto ev = rec.find("events");
        if (c == rec.end() || !c->is_string())
            throw Error(Errc::MalformedRecord, where + ": missing string field 'case'");
        if (ev == rec.end() || !ev->is_array())
            throw Error(Errc::MalformedRecord, where + ": missing array field 'events'");
        std::optional<std::string> raw;
        if (auto m = rec.find("meta"); m != rec.end()) {
            if (!m->is_object()) throw Error(Errc::MalformedRecord, where + ": 'meta' must be an object");
            if (auto t = m->find("text"); t != m->end() && t->is_string()) raw = t->get<std::string>();
        }
        Trace trace(c->get<std::string>(), {}, raw);
        for (const auto& e : *ev) {
            if (!e.is_string() || !is_valid_label(e.get_ref<const std::string&>()))
                throw Error(Errc::MalformedRecord, where + ": events must be non-blank strings");
            trace.push_back(e.get<std::string>());
        }
        try {
            log.add(std::move(trace));
        } catch (const Error& err) {
            throw Error(err.code(), where + ": " + err.what());
        }
    }
    return log;
}

inline std::string write_jsonl(const EventLog& log) {
    std::string out;
    for (const auto& t : log.traces()) {
        nlohmann::json rec;
        rec["case"] = t.case_id();
        rec["events"] = t.labels();
        if (t.raw_text()) rec["meta"] = {{"text", *t.raw_text()}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

namespace pt = boost::property_tree;

inline std::optional<std::string> concept_name(const pt::ptree& node) {
    for (const auto& [tag, child] : node) {
        if (tag != "string") continue;
        if (child.get<std::string>("<xmlattr>.key", "") == "concept:name")
            return child.get_optional<std::string>("<xmlattr>.value").value_or("");
    }
    return std::nullopt;
}

inline EventLog parse_xes(const std::string& content) {
    EventLog log;
    if (is_blank(content)) return log;
    pt::ptree doc;
    try {
        std::istringstream in(content);
        pt::read_xml(in, doc, pt::xml_parser::trim_whitespace);
    } catch (const pt::xml_parser_error& e) {
        throw Error(Errc::MalformedRecord, "line " + std::to_string(e.line()) + ": " + e.message());
    }
    auto root = doc.get_child_optional("log");
    if (!root) throw Error(Errc::MalformedRecord, "element 1: missing <log> root");
    std::size_t trace_no = 0;
    for (const auto& [tag, trace_node] : *root) {
        if (tag != "trace") continue;
        ++trace_no;
        auto where = "trace " + std::to_string(trace_no);
        Trace trace(concept_name(trace_node).value_or("trace" + std::to_string(trace_no)), {});
        std::size_t event_no = 0;
        for (const auto& [etag, event_node] : trace_node) {
            if (etag != "event") continue;
            ++event_no;
            auto name = concept_name(event_node);
            if (!name || !is_valid_label(*name))
                throw Error(Errc::MalformedRecord,
                            where + ", event " + std::to_string(event_no) + ": missing concept:name");
            trace.push_back(*name);
        }
        try {
            log.add(std::move(trace));
        } catch (const Error& err) {
            throw Error(err.code(), where + ": " + err.what());
        }
    }
    return log;
}

inline pt::ptree concept_attr(const std::string& value) {
    pt::ptree s;
    s.put("<xmlattr>.key", "concept:name");
    s.put("<xmlattr>.value", value);
    return s;
}

inline std::string write_xes(const EventLog& log) {
    pt::ptree root;
    root.put("<xmlattr>.xes.version", "1.0");
    for (const auto& t : log.traces()) {
        pt::ptree trace;
        trace.add_child("string", concept_attr(t.case_id()));
        for (const auto& a : t.activities()) {
            pt::ptree event;
            event.add_child("string", concept_attr(a.label));
            trace.add_child("event", event);
        }
        root.add_child("trace", trace);
    }
    pt::ptree doc;
    doc.add_child("log", root);
    std::ostringstream out;
    pt::write_xml(out, doc, pt::xml_writer_make_settings<std::string>(' ', 2));
    return out.str();
}

} // namespace detail

/// Reads an event log. An empty file yields an empty log.
inline EventLog parse_log(const std::filesystem::path& path, LogFormat format) {
    auto content = detail::read_file(path);
    return format == LogFormat::jsonl ? detail::parse_jsonl(content) : detail::parse_xes(content);
}

inline EventLog parse_log_string(const std::string& content, LogFormat format) {
    return format == LogFormat::jsonl ? detail::parse_jsonl(content) : detail::parse_xes(content);
}

inline std::string format_log(const EventLog& log, LogFormat format) {
    return format == LogFormat::jsonl ? detail::write_jsonl(log) : detail::write_xes(log);
}

inline void write_log(const EventLog& log, const std::filesystem::path& path, LogFormat format) {
    detail::write_file(path, format_log(log, format));
}

} // namespace thip

#endif // THIP_EVENTLOG_HPP
