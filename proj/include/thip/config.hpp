#ifndef THIP_CONFIG_HPP
#define THIP_CONFIG_HPP

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "thip/error.hpp"
#include "thip/extract.hpp"
#include "thip/gspo.hpp"
#include "thip/process_tree.hpp"
#include "thip/remote_labeler.hpp"
#include "thip/reward.hpp"

namespace thip {

struct TaskConfig {
    std::string teacher = "->(a, b, c)";
    std::string answer = "42";
    std::vector<std::string> distractors{"7", "13"};
    std::size_t teacher_traces = 1;

    SyntheticTask build() const {
        auto task = make_task(parse_tree(teacher), answer, distractors);
        task.teacher_traces = teacher_traces;
        return task;
    }
};

struct PathsConfig {
    std::optional<std::string> log;
    std::optional<std::string> teacher;
    std::optional<std::string> responses;
    std::string output = "out";
};

/// Everything a CLI run needs. Loaded from an INI file with sections
/// [extract], [delimiters], [labels], [reward], [gspo], [task], [labeler],
/// [paths] and [run]; each known key may be overridden by the environment
/// variable THIP_<SECTION>_<KEY>.
struct RunConfig {
    ExtractionRules rules = ExtractionRules::defaults();
    RewardWeights weights;
    std::size_t state_bound = 1'000'000;
    GSPOConfig gspo;
    TaskConfig task;
    std::optional<RemoteLabelerConfig> labeler;
    PathsConfig paths;
    std::uint64_t seed = 1;
    /// True when [labels] was given; otherwise `train` derives rules from the task.
    bool custom_labels = false;

    void validate() const {
        rules.validate();
        gspo.validate();
        if (labeler) labeler->validate();
        for (const auto& p : {paths.log, paths.teacher, paths.responses})
            if (p && !std::filesystem::exists(*p)) throw Error(Errc::InvalidConfig, "path does not exist: " + *p);
    }
};

namespace detail {

namespace pt = boost::property_tree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"extract", {"default_label", "max_steps"}},
        {"reward", {"format_weight", "answer_weight", "conformance_weight", "state_bound"}},
        {"gspo", {"group_size", "clip", "learning_rate", "max_length", "steps", "context_order", "constrained"}},
        {"task", {"teacher", "answer", "distractors", "teacher_traces"}},
        {"labeler", {"endpoint", "timeout_seconds", "max_retries", "auth_token", "backoff_seconds"}},
        {"paths", {"log", "teacher", "responses", "output"}},
        {"run", {"seed"}},
    };
    return keys;
}

inline std::string env_name(const std::string& section, const std::string& key) {
    std::string out = "THIP_";
    for (char c : section + "_" + key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

template <typename T>
T convert(const std::string& section, const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, bool>) {
        auto t = std::string(trim(text));
        if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
        if (t == "false" || t == "0" || t == "no" || t == "off") return false;
        throw Error(Errc::InvalidConfig, "[" + section + "] " + key + ": expected a boolean, got '" + text + "'");
    }
    std::istringstream in(text);
    T v{};
    in >> v;
    if (!in || !(in >> std::ws).eof())
        throw Error(Errc::InvalidConfig, "[" + section + "] " + key + ": cannot parse '" + text + "'");
    return v;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string item; std::getline(in, item, ',');)
        if (auto t = trim(item); !t.empty()) out.emplace_back(t);
    return out;
}

} // namespace detail

/// Parses INI text, rejecting unknown sections and keys, then applies
/// environment overrides.
inline RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error(Errc::InvalidConfig, "line " + std::to_string(e.line()) + ": " + e.message());
    }

    // Flat view: (section, key) -> value, in file order.
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [name, body] : tree) {
        if (!body.data().empty()) throw Error(Errc::InvalidConfig, "key outside of a section: " + name);
        const bool free_form = name == "labels" || name == "delimiters";
        if (!free_form && !detail::known_keys().count(name))
            throw Error(Errc::InvalidConfig, "unknown section [" + name + "]");
        for (const auto& [key, value] : body) {
            if (!free_form && !detail::known_keys().at(name).count(key))
                throw Error(Errc::InvalidConfig, "unknown key '" + key + "' in [" + name + "]");
            sections[name].emplace_back(key, value.data());
        }
    }
    auto lookup = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
        if (const char* env = std::getenv(detail::env_name(section, key).c_str())) return std::string(env);
        if (auto it = sections.find(section); it != sections.end())
            for (const auto& [k, v] : it->second)
                if (k == key) return v;
        return std::nullopt;
    };

    RunConfig cfg;
    auto set = [&]<typename T>(const std::string& section, const std::string& key, T& field) {
        if (auto v = lookup(section, key)) {
            if constexpr (std::is_same_v<T, std::string>) field = *v;
            else field = detail::convert<T>(section, key, *v);
        }
    };

    set("extract", "default_label", cfg.rules.default_label);
    set("extract", "max_steps", cfg.rules.max_steps);
    if (auto it = sections.find("delimiters"); it != sections.end()) {
        cfg.rules.step_delimiters.clear();
        for (const auto& [_, v] : it->second) cfg.rules.step_delimiters.push_back(v);
    }
    if (auto it = sections.find("labels"); it != sections.end()) {
        cfg.rules.label_map.clear();
        for (const auto& [k, v] : it->second) cfg.rules.label_map.push_back({v, k});
        cfg.custom_labels = true;
    }

    set("reward", "format_weight", cfg.weights.format);
    set("reward", "answer_weight", cfg.weights.answer);
    set("reward", "conformance_weight", cfg.weights.conformance);
    set("reward", "state_bound", cfg.state_bound);

    set("gspo", "group_size", cfg.gspo.group_size);
    set("gspo", "clip", cfg.gspo.clip);
    set("gspo", "learning_rate", cfg.gspo.learning_rate);
    set("gspo", "max_length", cfg.gspo.max_length);
    set("gspo", "steps", cfg.gspo.steps);
    set("gspo", "context_order", cfg.gspo.context_order);
    set("gspo", "constrained", cfg.gspo.constrained);

    set("task", "teacher", cfg.task.teacher);
    set("task", "answer", cfg.task.answer);
    if (auto v = lookup("task", "distractors")) cfg.task.distractors = detail::split_list(*v);
    set("task", "teacher_traces", cfg.task.teacher_traces);

    if (auto endpoint = lookup("labeler", "endpoint"); endpoint && !endpoint->empty()) {
        RemoteLabelerConfig l;
        l.endpoint = *endpoint;
        set("labeler", "timeout_seconds", l.timeout_seconds);
        set("labeler", "max_retries", l.max_retries);
        set("labeler", "backoff_seconds", l.backoff_seconds);
        if (auto tok = lookup("labeler", "auth_token")) l.auth_token = *tok;
        cfg.labeler = l;
    }

    for (auto [key, field] : {std::pair{"log", &cfg.paths.log}, std::pair{"teacher", &cfg.paths.teacher},
                              std::pair{"responses", &cfg.paths.responses}})
        if (auto v = lookup("paths", key)) *field = *v;
    set("paths", "output", cfg.paths.output);

    set("run", "seed", cfg.seed);
    cfg.gspo.seed = cfg.seed;
    try {
        parse_tree(cfg.task.teacher);
    } catch (const Error& e) {
        throw Error(Errc::InvalidConfig, std::string("[task] teacher: ") + e.what());
    }
    return cfg;
}

/// Defaults plus environment overrides, as if reading an empty file.
inline RunConfig default_config() { return parse_config(""); }

inline RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    try {
        cfg = parse_config(detail::read_file(path));
    } catch (const Error& e) {
        if (e.code() == Errc::IoFailure) throw Error(Errc::InvalidConfig, "cannot read config " + path);
        throw;
    }
    return cfg;
}

} // namespace thip

#endif // THIP_CONFIG_HPP
