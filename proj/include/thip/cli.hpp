#ifndef THIP_CLI_HPP
#define THIP_CLI_HPP

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "thip/config.hpp"
#include "thip/conformance.hpp"
#include "thip/discovery.hpp"
#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/extract.hpp"
#include "thip/gspo.hpp"
#include "thip/petri.hpp"
#include "thip/process_tree.hpp"
#include "thip/remote_labeler.hpp"
#include "thip/reward.hpp"

// Command implementations behind tools/thip.cpp. Each returns the process
// exit code: 0 success, 1 usage or input error, 2 domain error.
namespace thip::cli {

inline int exit_code(const Error& e) {
    switch (e.code()) {
    case Errc::FinalMarkingUnreachable:
    case Errc::StateBoundExceeded: return 2;
    default: return 1;
    }
}

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline LogFormat resolve_format(const std::string& path, const std::string& name) {
    if (name.empty()) return guess_log_format(path);
    if (auto f = parse_log_format(name)) return *f;
    throw Error(Errc::InvalidConfig, "unknown log format '" + name + "' (expected jsonl or xes)");
}

/// Config from `path`, or defaults (plus environment overrides) when empty.
inline RunConfig resolve_config(const std::string& path) {
    auto cfg = path.empty() ? default_config() : load_config(path);
    cfg.validate();
    return cfg;
}

/// Rule-based extraction, or the remote labeler when one is configured.
inline TraceLabeler make_labeler(const RunConfig& cfg) {
    if (cfg.labeler) {
        auto remote = *cfg.labeler;
        return [remote](std::string_view text, std::string id) {
            return extract_trace_remote(std::string(text), remote, std::move(id));
        };
    }
    auto extractor = std::make_shared<Extractor>(cfg.rules);
    return [extractor](std::string_view text, std::string id) { return extractor->extract(text, std::move(id)); };
}

/// A model file is either a net dump or a process-tree expression.
inline PetriNet read_model(const std::string& path) {
    auto text = detail::read_file(path);
    auto body = detail::trim(text);
    if (body.rfind("petri-net", 0) == 0) return parse_petri(text);
    return tree_to_petri(parse_tree(std::string(body)));
}

struct DiscoverArgs {
    std::string log;
    std::string format;
    std::string out;
};

/// Writes the tree expression to `out` and the net dump to `out`.net; with no
/// `out`, prints the tree.
inline int cmd_discover(const DiscoverArgs& a, std::ostream& out, std::ostream& err) {
    try {
        auto log = parse_log(a.log, resolve_format(a.log, a.format));
        auto tree = discover_tree(log);
        auto expr = to_string(tree);
        if (a.out.empty()) {
            out << expr << '\n';
        } else {
            detail::write_file(a.out, expr + "\n");
            detail::write_file(a.out + ".net", to_string(tree_to_petri(tree)));
            out << expr << '\n';
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}

struct ConformArgs {
    std::string model;
    std::string teacher;
    std::string format;
    std::string config;
    bool dump = false;
};

inline int cmd_conform(const ConformArgs& a, std::ostream& out, std::ostream& err) {
    try {
        auto cfg = resolve_config(a.config);
        auto net = read_model(a.model);
        auto teacher = parse_log(a.teacher, resolve_format(a.teacher, a.format));
        AlignOptions opts;
        opts.state_bound = cfg.state_bound;
        auto r = conformance_check(net, teacher, opts);
        if (a.dump) {
            for (const auto& t : teacher.traces()) out << "# " << t.case_id() << '\n' << to_string(align(net, t, opts));
        }
        out << "fitness=" << fixed6(r.fitness) << " precision=" << fixed6(r.precision) << " f1=" << fixed6(r.f1)
            << '\n';
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}

struct RewardArgs {
    std::string responses;
    std::string teacher;
    std::string format;
    std::string config;
    std::string out;
};

/// Scores JSONL records {query_id, text, ground_truth}. Teacher traces whose
/// case id equals the query id are used when present, else the whole log.
inline int cmd_reward(const RewardArgs& a, std::ostream& out, std::ostream& err) {
    try {
        auto cfg = resolve_config(a.config);
        auto teacher = parse_log(a.teacher, resolve_format(a.teacher, a.format));
        if (teacher.empty()) throw Error(Errc::EmptyTeacherLog, "teacher log has no traces");
        auto labeler = make_labeler(cfg);
        AlignOptions opts;
        opts.state_bound = cfg.state_bound;

        std::istringstream in(detail::read_file(a.responses));
        std::ostringstream result;
        std::string line;
        for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
            if (detail::is_blank(line)) continue;
            auto where = "line " + std::to_string(line_no);
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error&) {
                err << "warning: " << where << ": not valid JSON; skipped\n";
                continue;
            }
            if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
                err << "warning: " << where << ": missing text field; skipped\n";
                continue;
            }
            Query q;
            if (auto it = rec.find("query_id"); it != rec.end())
                q.id = it->is_string() ? it->get<std::string>() : it->dump();
            if (auto it = rec.find("ground_truth"); it != rec.end())
                q.ground_truth = it->is_string() ? it->get<std::string>() : it->dump();

            const EventLog* ref = &teacher;
            EventLog matched;
            if (const auto* t = teacher.find(q.id)) {
                matched.add(*t);
                ref = &matched;
            }
            auto r = total_reward(q, RolloutText::parse(rec["text"].get<std::string>()), *ref, labeler, cfg.weights,
                                  opts);
            if (r.diagnostic) err << "warning: " << where << ": conformance scored 0: " << *r.diagnostic << '\n';
            nlohmann::json o{{"query_id", q.id},
                             {"format", r.format},
                             {"answer", r.answer},
                             {"conformance", r.conformance},
                             {"total", r.total}};
            result << o.dump() << '\n';
        }
        if (a.out.empty()) out << result.str();
        else detail::write_file(a.out, result.str());
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}

struct ExtractArgs {
    std::string input;
    std::string format;
    std::string config;
    std::string out;
};

/// Turns JSONL records {query_id, text} into an event log, one trace per
/// record (case id = query id, or caseN when absent).
inline int cmd_extract(const ExtractArgs& a, std::ostream& out, std::ostream& err) {
    try {
        auto cfg = resolve_config(a.config);
        auto labeler = make_labeler(cfg);
        auto fmt = a.out.empty() ? (a.format.empty() ? LogFormat::jsonl : resolve_format("", a.format))
                                 : resolve_format(a.out, a.format);
        std::istringstream in(detail::read_file(a.input));
        EventLog log;
        std::string line;
        std::size_t n = 0;
        for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
            if (detail::is_blank(line)) continue;
            auto where = "line " + std::to_string(line_no);
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(Errc::MalformedRecord, where + ": " + e.what());
            }
            if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
                err << "warning: " << where << ": missing text field; skipped\n";
                continue;
            }
            ++n;
            std::string id = "case" + std::to_string(n);
            if (auto it = rec.find("query_id"); it != rec.end() && it->is_string()) id = it->get<std::string>();
            log.add(labeler(rec["text"].get<std::string>(), id));
        }
        if (a.out.empty()) out << format_log(log, fmt);
        else write_log(log, a.out, fmt);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}

struct TrainArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

/// Runs GSPO on the configured synthetic task and writes report.jsonl and
/// policy.json into the output directory.
inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    try {
        auto cfg = resolve_config(a.config);
        if (a.seed) cfg.seed = cfg.gspo.seed = *a.seed;
        auto task = cfg.task.build();
        auto rules = cfg.custom_labels ? cfg.rules : task_rules(task);
        TrainOptions opts;
        opts.weights = cfg.weights;
        auto report = train(task, cfg.gspo, rules, opts);

        std::filesystem::path dir = a.out.empty() ? cfg.paths.output : a.out;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw Error(Errc::IoFailure, "cannot create output directory " + dir.string());
        detail::write_file(dir / "report.jsonl", to_jsonl(report));
        detail::write_file(dir / "policy.json", to_json(report.final_policy).dump(2) + "\n");

        auto m = report.tail_mean();
        out << "steps=" << report.steps.size() << " mean_format=" << fixed6(m.mean_format)
            << " mean_answer=" << fixed6(m.mean_answer) << " mean_conformance=" << fixed6(m.mean_conformance)
            << " mean_total=" << fixed6(m.mean_total) << '\n';
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}

} // namespace thip::cli

#endif // THIP_CLI_HPP
