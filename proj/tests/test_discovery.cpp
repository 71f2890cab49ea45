#include <algorithm>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "thip/discovery.hpp"

using namespace thip;

namespace {

ProcessTree mine(const std::vector<std::vector<Label>>& seqs) { return discover_tree(EventLog::from_sequences(seqs)); }

Errc error_of(const std::vector<std::vector<Label>>& seqs) {
    try {
        mine(seqs);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::InvalidConfig;
}

} // namespace

TEST(Discovery, SingleActivity) { EXPECT_EQ(mine({{"a"}}), ProcessTree::leaf("a")); }

TEST(Discovery, SequenceWithParallelTail) {
    auto t = mine({{"a", "b", "c"}, {"a", "c", "b"}});
    EXPECT_EQ(to_string(t), "->(a, +(b, c))");
    EXPECT_EQ(oracle::tree_language(t, 6), (oracle::Language{{"a", "b", "c"}, {"a", "c", "b"}}));
}

TEST(Discovery, LinearTrace) { EXPECT_EQ(to_string(mine({{"a", "b", "c"}})), "->(a, b, c)"); }

TEST(Discovery, FlowerWhenNoCutExists) {
    auto t = mine({{"a", "b", "a"}, {"a", "a", "b"}});
    EXPECT_EQ(t, make_flower({"a", "b"}));
    EXPECT_EQ(to_string(t), "*(X(a, b), tau)");
}

TEST(Discovery, RepeatedLabelsFormLoops) {
    EXPECT_EQ(to_string(mine({{"a", "b", "a"}})), "*(a, b)");
    EXPECT_EQ(to_string(mine({{"a", "a"}})), "*(a, tau)");
}

// The five-trace log with repeats of a and b: every trace must replay on the
// result whatever shape the cuts give it.
TEST(Discovery, MixedRepeatLogReplays) {
    std::vector<std::vector<Label>> seqs{{"a", "b"}, {"b", "a"}, {"a"}, {"b"}, {"a", "a", "b"}};
    auto net = tree_to_petri(mine(seqs));
    for (const auto& s : seqs) EXPECT_TRUE(replays(net, s));
}

TEST(Discovery, FlowerAcceptsEverything) {
    auto net = tree_to_petri(make_flower({"a", "b"}));
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        std::vector<Label> w;
        for (std::size_t k = 0, n = 1 + rng.below(7); k < n; ++k) w.push_back(rng.below(2) ? "a" : "b");
        EXPECT_TRUE(replays(net, w));
    }
}

TEST(Discovery, EmptyTraceBecomesOptional) {
    auto t = mine({{"a", "b"}, {}});
    EXPECT_EQ(to_string(t), "X(tau, ->(a, b))");
    auto net = tree_to_petri(t);
    EXPECT_TRUE(replays(net, std::vector<Label>{}));
    EXPECT_TRUE(replays(net, std::vector<Label>{"a", "b"}));
}

TEST(Discovery, Errors) {
    EXPECT_EQ(error_of({}), Errc::EmptyLog);
    EXPECT_EQ(error_of({{}, {}}), Errc::EmptyAlphabet);
}

TEST(Discovery, FitnessGuaranteeOnRandomLogs) {
    Rng rng(31);
    for (int i = 0; i < 300; ++i) {
        auto log = oracle::random_log(rng, 10, 6, 8);
        auto tree = discover_tree(log);
        auto net = tree_to_petri(tree);
        EXPECT_EQ(tree.alphabet(), log.alphabet());
        // The enumeration oracle is exponential in the alphabet; keep it to
        // small logs and rely on replay for the rest.
        const bool small = log.alphabet().size() <= 3;
        for (const auto& t : log.traces()) {
            EXPECT_TRUE(replays(net, t)) << to_string(tree);
            if (small && t.size() <= 6) {
                EXPECT_TRUE(oracle::tree_language(tree, t.size()).count(t.labels())) << to_string(tree);
            }
        }
    }
}

TEST(Discovery, IndependentOfTraceOrder) {
    Rng rng(37);
    for (int i = 0; i < 200; ++i) {
        auto seqs = oracle::random_log(rng, 8, 5, 6).sequences();
        auto expected = mine(seqs);
        for (int k = 0; k < 3; ++k) {
            for (std::size_t j = seqs.size(); j > 1; --j) std::swap(seqs[j - 1], seqs[rng.below(j)]);
            EXPECT_EQ(mine(seqs), expected);
        }
    }
}

TEST(Discovery, TraceOverload) {
    EXPECT_EQ(discover_tree(Trace("c", {"a", "b"})), mine({{"a", "b"}}));
}
