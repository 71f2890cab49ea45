#include <filesystem>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "thip/eventlog.hpp"

using namespace thip;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "thip_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

template <typename F>
Errc error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::InvalidConfig;
}

} // namespace

TEST(EventLog, ParsesOneJsonlLine) {
    auto log = parse_log_string(R"({"case":"t1","events":["a","b"]})", LogFormat::jsonl);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(log.traces()[0].labels(), (std::vector<Label>{"a", "b"}));
    EXPECT_EQ(log.alphabet(), (std::set<Label>{"a", "b"}));
}

TEST(EventLog, DuplicateCaseIdRejected) {
    EXPECT_EQ(error_of([] {
                  parse_log_string("{\"case\":\"t1\",\"events\":[\"a\"]}\n{\"case\":\"t1\",\"events\":[\"b\"]}\n",
                                   LogFormat::jsonl);
              }),
              Errc::DuplicateCaseId);
    EventLog log;
    log.add(Trace("x", {"a"}));
    EXPECT_EQ(error_of([&] { log.add(Trace("x", {"b"})); }), Errc::DuplicateCaseId);
}

TEST(EventLog, MalformedRecordsReportLine) {
    try {
        parse_log_string("{\"case\":\"t1\",\"events\":[\"a\"]}\n{not json\n", LogFormat::jsonl);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MalformedRecord);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_EQ(error_of([] { parse_log_string(R"({"events":["a"]})", LogFormat::jsonl); }), Errc::MalformedRecord);
    EXPECT_EQ(error_of([] { parse_log_string(R"({"case":"c","events":["  "]})", LogFormat::jsonl); }),
              Errc::MalformedRecord);
}

TEST(EventLog, EmptyFileIsEmptyLog) {
    EXPECT_TRUE(parse_log_string("", LogFormat::jsonl).empty());
    EXPECT_TRUE(parse_log_string("\n  \n", LogFormat::jsonl).empty());
}

TEST(EventLog, ParsesXesSubset) {
    const char* xes = R"(<?xml version="1.0"?>
<log>
  <trace>
    <string key="concept:name" value="c1"/>
    <event><string key="concept:name" value="a"/></event>
    <event><string key="concept:name" value="b"/></event>
    <event><string key="concept:name" value="c"/></event>
  </trace>
</log>)";
    auto log = parse_log_string(xes, LogFormat::xes);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(log.traces()[0].case_id(), "c1");
    EXPECT_EQ(log.traces()[0].labels(), (std::vector<Label>{"a", "b", "c"}));
}

TEST(EventLog, EmptyLogRoundTrip) {
    for (auto fmt : {LogFormat::jsonl, LogFormat::xes}) {
        auto p = temp_path(fmt == LogFormat::xes ? "empty.xes" : "empty.jsonl");
        write_log(EventLog{}, p, fmt);
        EXPECT_TRUE(parse_log(p, fmt).empty());
    }
}

TEST(EventLog, PreservesOrderOfThreeTraces) {
    auto log = EventLog::from_sequences({{"x"}, {"y", "z"}, {"w"}});
    auto text = format_log(log, LogFormat::jsonl);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    auto back = parse_log_string(text, LogFormat::jsonl);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.traces()[0].case_id(), "t1");
    EXPECT_EQ(back.traces()[2].case_id(), "t3");
}

TEST(EventLog, RandomRoundTripBothFormats) {
    Rng rng(7);
    for (int iter = 0; iter < 200; ++iter) {
        EventLog log;
        auto n = rng.below(21);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Label> labels;
            auto len = rng.below(11);
            for (std::size_t k = 0; k < len; ++k) labels.push_back(oracle::letters(6)[rng.below(6)] + (rng.below(4) == 0 ? " & <x>" : ""));
            log.add(Trace("case-" + std::to_string(i), labels));
        }
        for (auto fmt : {LogFormat::jsonl, LogFormat::xes}) {
            auto back = parse_log_string(format_log(log, fmt), fmt);
            ASSERT_EQ(back.sequences(), log.sequences());
            for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(back.traces()[i].case_id(), log.traces()[i].case_id());
        }
    }
}

TEST(EventLog, ActivityIndicesMatchPositions) {
    Trace t("c", {"a", "b", "a"});
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t.activities()[i].index, i);
    EXPECT_EQ(error_of([] { Trace("c", {"a", " "}); }), Errc::InvalidLabel);
}

TEST(EventLog, RawTextSurvivesJsonl) {
    auto log = parse_log_string(R"({"case":"q1","events":["a"],"meta":{"text":"hello"}})", LogFormat::jsonl);
    ASSERT_TRUE(log.traces()[0].raw_text());
    EXPECT_EQ(*log.traces()[0].raw_text(), "hello");
    auto back = parse_log_string(format_log(log, LogFormat::jsonl), LogFormat::jsonl);
    EXPECT_EQ(back, log);
}

TEST(Dfg, CountsRepeatedPair) {
    auto g = build_dfg(EventLog::from_sequences({{"a", "b"}, {"a", "b"}}));
    EXPECT_EQ(g.edges.at({"a", "b"}), 2u);
    EXPECT_EQ(g.start_labels, (std::map<Label, std::size_t>{{"a", 2}}));
    EXPECT_EQ(g.end_labels, (std::map<Label, std::size_t>{{"b", 2}}));
}

TEST(Dfg, SingletonTrace) {
    auto g = build_dfg(EventLog::from_sequences({{"a"}}));
    EXPECT_TRUE(g.edges.empty());
    EXPECT_EQ(g.start_labels.at("a"), 1u);
    EXPECT_EQ(g.end_labels.at("a"), 1u);
}

TEST(Dfg, HandEnumeratedEdges) {
    auto g = build_dfg(EventLog::from_sequences({{"a", "b", "c"}, {"a", "c", "b"}}));
    std::map<std::pair<Label, Label>, std::size_t> expected{
        {{"a", "b"}, 1}, {{"a", "c"}, 1}, {{"b", "c"}, 1}, {{"c", "b"}, 1}};
    EXPECT_EQ(g.edges, expected);
}

TEST(Dfg, PropertiesOnRandomLogs) {
    Rng rng(11);
    for (int iter = 0; iter < 300; ++iter) {
        auto log = oracle::random_log(rng, 10, 6, 8);
        auto g = build_dfg(log);
        std::size_t expected = 0;
        std::set<Label> singles;
        for (const auto& t : log.traces()) {
            expected += t.size() > 0 ? t.size() - 1 : 0;
            if (t.size() == 1) singles.insert(t[0]);
        }
        EXPECT_EQ(g.total_edge_count(), expected);
        auto nodes = g.nodes;
        nodes.insert(singles.begin(), singles.end());
        EXPECT_EQ(nodes, log.alphabet());
        for (const auto& [e, c] : g.edges) {
            EXPECT_GE(c, 1u);
            EXPECT_TRUE(g.nodes.count(e.first) && g.nodes.count(e.second));
        }
    }
}

TEST(EventLog, FormatGuessAndIoFailure) {
    EXPECT_EQ(guess_log_format("x.xes"), LogFormat::xes);
    EXPECT_EQ(guess_log_format("x.jsonl"), LogFormat::jsonl);
    EXPECT_EQ(error_of([] { parse_log("/nonexistent/file.jsonl", LogFormat::jsonl); }), Errc::IoFailure);
    EXPECT_EQ(error_of([] { write_log(EventLog{}, "/nonexistent/dir/out.jsonl", LogFormat::jsonl); }),
              Errc::IoFailure);
}
