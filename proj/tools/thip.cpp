#include <iostream>

#include <CLI11.hpp>

#include "thip/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Process-mining rewards and sequence-level policy optimization"};
    app.require_subcommand(1);

    thip::cli::DiscoverArgs disc;
    auto* discover = app.add_subcommand("discover", "Mine a process tree from an event log");
    discover->add_option("log", disc.log, "Event log (.jsonl or .xes)")->required();
    discover->add_option("--format", disc.format, "Log format: jsonl or xes");
    discover->add_option("--out", disc.out, "Tree output path; the net dump goes to <out>.net");

    thip::cli::ConformArgs conf;
    auto* conform = app.add_subcommand("conform", "Fitness, precision and F1 of a model against a log");
    conform->add_option("model", conf.model, "Net dump or process-tree expression")->required();
    conform->add_option("teacher", conf.teacher, "Reference event log")->required();
    conform->add_option("--format", conf.format, "Log format: jsonl or xes");
    conform->add_option("--config", conf.config, "Config file");
    conform->add_flag("--dump", conf.dump, "Print the optimal alignment of every trace");

    thip::cli::RewardArgs rew;
    auto* reward = app.add_subcommand("reward", "Score JSONL responses against a teacher log");
    reward->add_option("responses", rew.responses, "JSONL records {query_id, text, ground_truth}")->required();
    reward->add_option("teacher", rew.teacher, "Teacher event log")->required();
    reward->add_option("--format", rew.format, "Teacher log format: jsonl or xes");
    reward->add_option("--config", rew.config, "Config file");
    reward->add_option("--out", rew.out, "Output path (default stdout)");

    thip::cli::ExtractArgs ext;
    auto* extract = app.add_subcommand("extract", "Turn reasoning texts into an event log");
    extract->add_option("input", ext.input, "JSONL records {query_id, text}")->required();
    extract->add_option("--format", ext.format, "Output format: jsonl or xes");
    extract->add_option("--config", ext.config, "Config file");
    extract->add_option("--out", ext.out, "Output path (default stdout)");

    thip::cli::TrainArgs tr;
    std::uint64_t seed = 0;
    auto* train = app.add_subcommand("train", "Train the toy policy on the configured synthetic task");
    train->add_option("--config", tr.config, "Config file");
    auto* seed_opt = train->add_option("--seed", seed, "Override [run] seed");
    train->add_option("--out", tr.out, "Output directory (default [paths] output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (*discover) return thip::cli::cmd_discover(disc, std::cout, std::cerr);
    if (*conform) return thip::cli::cmd_conform(conf, std::cout, std::cerr);
    if (*reward) return thip::cli::cmd_reward(rew, std::cout, std::cerr);
    if (*extract) return thip::cli::cmd_extract(ext, std::cout, std::cerr);
    if (*seed_opt) tr.seed = seed;
    return thip::cli::cmd_train(tr, std::cout, std::cerr);
}
