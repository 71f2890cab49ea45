#include <cmath>
#include <limits>
#include <tuple>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "thip/gspo.hpp"

using namespace thip;

namespace {

std::vector<Token> plain_vocab(std::size_t n) {
    std::vector<Token> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back({"w" + std::to_string(i), TokenKind::activity});
    return v;
}

GroupRollout manual_rollout(std::vector<double> ratios, std::vector<double> adv) {
    GroupRollout g;
    g.ratios = std::move(ratios);
    g.advantages = std::move(adv);
    g.responses.resize(g.ratios.size());
    return g;
}

double objective_at(const PolicyParams& p, GroupRollout g, const GSPOConfig& cfg) {
    score_rollout(p, g);
    return gspo_objective(g, cfg);
}

// Central differences of the objective over every parameter.
std::vector<double> numeric_gradient(PolicyParams p, const GroupRollout& g, const GSPOConfig& cfg, double h) {
    std::vector<double> out(p.parameters().size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        double keep = p.parameters()[k];
        p.parameters()[k] = keep + h;
        double up = objective_at(p, g, cfg);
        p.parameters()[k] = keep - h;
        double down = objective_at(p, g, cfg);
        p.parameters()[k] = keep;
        out[k] = (up - down) / (2 * h);
    }
    return out;
}

double norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

SyntheticTask abc_task() { return make_task(parse_tree("->(a, b, c)"), "42"); }

} // namespace

TEST(Advantages, Examples) {
    EXPECT_EQ(advantages(std::vector<double>{1, 0, 1, 0}), (std::vector<double>{0.5, -0.5, 0.5, -0.5}));
    EXPECT_EQ(advantages(std::vector<double>{2.5, 2.5, 2.5}), (std::vector<double>{0, 0, 0}));
    try {
        advantages(std::vector<double>{3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::GroupTooSmall);
    }
}

TEST(Advantages, SumToZero) {
    Rng rng(67);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> r(2 + rng.below(30));
        for (auto& x : r) x = 3.0 * rng.uniform();
        double s = 0;
        for (double a : advantages(r)) s += a;
        EXPECT_LE(std::abs(s), 1e-12);
    }
}

TEST(SeqRatio, Examples) {
    EXPECT_EQ(seq_ratio(-3.25, -3.25, 4), 1.0);
    EXPECT_NEAR(seq_ratio(-5.0, -3.0, 2), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(seq_ratio(-1400.0, -700.0, 700), std::exp(-1.0), 1e-12);
    EXPECT_NEAR(seq_ratio(-900.0, -200.0, 700), std::exp(-1.0), 1e-12);
}

TEST(SeqRatio, Errors) {
    using Case = std::tuple<double, double, std::size_t>;
    const double inf = std::numeric_limits<double>::infinity();
    for (auto [n, o, len] : {Case{std::nan(""), 0.0, 1}, Case{0.0, -inf, 1}, Case{0.0, 0.0, 0}}) {
        try {
            seq_ratio(n, o, len);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::NonFiniteLikelihood);
        }
    }
}

TEST(SeqRatio, LengthNormalizationInvariance) {
    Rng rng(71);
    for (int i = 0; i < 500; ++i) {
        double delta = -10.0 * rng.uniform();
        std::size_t len = 1 + rng.below(20);
        for (std::size_t k : {2ul, 4ul, 8ul, 64ul})
            EXPECT_EQ(seq_ratio(delta * static_cast<double>(k), 0.0, len * k), seq_ratio(delta, 0.0, len));
        EXPECT_NEAR(seq_ratio(3 * delta, 0.0, 3 * len), seq_ratio(delta, 0.0, len), 1e-15);
    }
}

TEST(Objective, Examples) {
    GSPOConfig cfg;
    EXPECT_NEAR(gspo_objective(manual_rollout({1.5, 0.5}, {1.0, -1.0}), cfg), 0.2, 1e-15);
    EXPECT_EQ(gspo_objective(manual_rollout({1.0, 1.0, 1.0}, {0.5, -0.25, -0.25}), cfg), 0.0);
    EXPECT_EQ(gspo_objective(manual_rollout({3.0, 0.1, 1.1}, {0.0, 0.0, 0.0}), cfg), 0.0);
}

TEST(Objective, ClippingInactiveInsideBand) {
    Rng rng(73);
    GSPOConfig cfg;
    for (int i = 0; i < 500; ++i) {
        std::size_t g = 2 + rng.below(8);
        std::vector<double> r(g), rewards(g);
        for (std::size_t k = 0; k < g; ++k) {
            r[k] = 1.0 - cfg.clip + 2 * cfg.clip * rng.uniform();
            rewards[k] = rng.uniform();
        }
        auto a = advantages(rewards);
        double s = 0;
        for (std::size_t k = 0; k < g; ++k) s += r[k] * a[k];
        EXPECT_EQ(gspo_objective(manual_rollout(r, a), cfg), s / static_cast<double>(g));
    }
}

TEST(Policy, ContextsAndMask) {
    auto task = abc_task();
    PolicyParams p(task_vocabulary(task), 1, true);
    EXPECT_EQ(p.context_count(), p.vocab_size() + 1);
    TokenSequence none;
    EXPECT_EQ(p.context_of(none), 0u);
    auto ls = p.log_softmax(none);
    EXPECT_EQ(ls[*p.find(TokenKind::think_open)], 0.0);
    for (TokenId t = 0; t < ls.size(); ++t)
        if (t != *p.find(TokenKind::think_open)) {
            EXPECT_TRUE(std::isinf(ls[t]));
        }
    TokenSequence inside{*p.find(TokenKind::think_open)};
    auto ok = p.allowed(inside);
    EXPECT_TRUE(ok[*p.find(TokenKind::activity, "a")]);
    EXPECT_TRUE(ok[*p.find(TokenKind::think_close)]);
    EXPECT_FALSE(ok[*p.find(TokenKind::answer, "42")]);
    EXPECT_THROW(PolicyParams(plain_vocab(3), 1, true), Error);
}

TEST(Policy, LogSoftmaxNormalizes) {
    Rng rng(79);
    PolicyParams p(plain_vocab(5), 2);
    for (auto& z : p.parameters()) z = 4 * rng.uniform() - 2;
    for (TokenId a = 0; a < 5; ++a) {
        TokenSequence h{a, (a + 1) % 5};
        double s = 0;
        for (double l : p.log_softmax(h)) s += std::exp(l);
        EXPECT_NEAR(s, 1.0, 1e-14);
    }
}

TEST(SampleGroup, DeterministicPolicyRepeatsItself) {
    auto task = abc_task();
    PolicyParams probe(task_vocabulary(task), 1, true);
    auto seq = teacher_tokens(probe, {"a", "b", "c"}, "42");
    auto p = deterministic_policy(task_vocabulary(task), 1, seq, true);
    GSPOConfig cfg;
    auto g = sample_group(p, task.query, cfg, 5);
    for (const auto& r : g.responses) EXPECT_EQ(r, seq);
}

TEST(SampleGroup, SameSeedSameRollout) {
    PolicyParams p(plain_vocab(4), 1);
    Rng rng(83);
    for (auto& z : p.parameters()) z = rng.uniform();
    GSPOConfig cfg;
    cfg.max_length = 6;
    auto a = sample_group(p, Query{}, cfg, 99);
    auto b = sample_group(p, Query{}, cfg, 99);
    EXPECT_EQ(a.responses, b.responses);
    EXPECT_EQ(a.logp_old, b.logp_old);
    auto c = sample_group(p, Query{}, cfg, 100);
    EXPECT_NE(a.responses, c.responses);
}

TEST(SampleGroup, RecordsExactLogLikelihood) {
    PolicyParams p(plain_vocab(4), 1);
    Rng rng(89);
    for (auto& z : p.parameters()) z = 3 * rng.uniform();
    GSPOConfig cfg;
    cfg.max_length = 5;
    auto g = sample_group(p, Query{}, cfg, 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(g.logp_old[i], p.log_prob(g.responses[i]));
        EXPECT_EQ(g.lengths[i], g.responses[i].size());
        EXPECT_EQ(g.responses[i].size(), 5u);
    }
}

TEST(SampleGroup, StopsAtEndToken) {
    auto vocab = plain_vocab(2);
    vocab.push_back({"<eos>", TokenKind::end});
    PolicyParams p(vocab, 0);
    GSPOConfig cfg;
    cfg.group_size = 200;
    cfg.max_length = 4;
    auto g = sample_group(p, Query{}, cfg, 3);
    for (const auto& r : g.responses) {
        ASSERT_GE(r.size(), 1u);
        EXPECT_TRUE(r.back() == 2 || r.size() == 4);
        for (std::size_t k = 0; k + 1 < r.size(); ++k) EXPECT_NE(r[k], 2u);
    }
}

TEST(SampleGroup, UniformFrequenciesWithinThreeSigma) {
    PolicyParams p(plain_vocab(3), 0);
    GSPOConfig cfg;
    cfg.group_size = 3000;
    cfg.max_length = 1;
    auto g = sample_group(p, Query{}, cfg, 2024);
    std::vector<double> counts(3, 0);
    for (const auto& r : g.responses) counts[r.at(0)] += 1;
    const double n = 3000, q = 1.0 / 3.0, sigma = std::sqrt(q * (1 - q) / n);
    for (double c : counts) EXPECT_LE(std::abs(c / n - q), 3 * sigma);
}

TEST(Gradient, OnPolicyEqualRewardsIsZero) {
    PolicyParams p(plain_vocab(3), 1);
    GSPOConfig cfg;
    cfg.max_length = 3;
    auto g = sample_group(p, Query{}, cfg, 4);
    g.advantages = advantages(std::vector<double>(g.size(), 1.5));
    score_rollout(p, g);
    for (double r : g.ratios) EXPECT_EQ(r, 1.0);
    for (double x : gspo_gradient(p, g, cfg)) EXPECT_EQ(x, 0.0);
}

TEST(Gradient, OnPolicyRatiosAreExactlyOne) {
    Rng rng(97);
    GSPOConfig cfg;
    for (int i = 0; i < 100; ++i) {
        PolicyParams p(plain_vocab(2 + rng.below(4)), rng.below(3));
        for (auto& z : p.parameters()) z = 6 * rng.uniform() - 3;
        cfg.max_length = 1 + rng.below(6);
        auto g = sample_group(p, Query{}, cfg, rng.next());
        std::vector<double> rewards(g.size());
        for (auto& r : rewards) r = rng.uniform();
        g.advantages = advantages(rewards);
        score_rollout(p, g);
        double mean = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            EXPECT_EQ(g.ratios[k], 1.0);
            mean += g.advantages[k];
        }
        EXPECT_EQ(gspo_objective(g, cfg), mean / static_cast<double>(g.size()));
    }
}

TEST(Gradient, TwoTokenVocabularyMatchesFiniteDifferences) {
    PolicyParams old_p(plain_vocab(2), 0);
    old_p.parameters() = {0.3, -0.2};
    GSPOConfig cfg;
    cfg.group_size = 2;
    cfg.max_length = 1;
    GroupRollout g;
    g.responses = {{0}, {1}};
    g.lengths = {1, 1};
    g.logp_old = {old_p.log_prob({0}), old_p.log_prob({1})};
    g.advantages = advantages(std::vector<double>{1.0, 0.0});
    auto p = old_p;
    p.parameters() = {0.35, -0.22};
    auto analytic = gspo_gradient(p, g, cfg);
    auto numeric = numeric_gradient(p, g, cfg, 1e-5);
    std::vector<double> diff(analytic.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = analytic[k] - numeric[k];
    EXPECT_LT(norm(diff) / norm(numeric), 1e-4);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomInstances) {
    Rng rng(101);
    int done = 0, clipped_terms = 0;
    while (done < 100) {
        GSPOConfig cfg;
        cfg.group_size = 2 + rng.below(3);
        cfg.max_length = 1 + rng.below(4);
        PolicyParams old_p(plain_vocab(2 + rng.below(4)), rng.below(2));
        for (auto& z : old_p.parameters()) z = 2 * rng.uniform() - 1;
        auto g = sample_group(old_p, Query{}, cfg, rng.next());
        std::vector<double> rewards(g.size());
        for (auto& r : rewards) r = 3 * rng.uniform();
        g.advantages = advantages(rewards);
        auto p = old_p;
        for (auto& z : p.parameters()) z += 0.6 * rng.uniform() - 0.3;
        score_rollout(p, g);
        bool near_kink = false;
        for (double r : g.ratios)
            near_kink |= std::abs(r - (1 - cfg.clip)) < 1e-3 || std::abs(r - (1 + cfg.clip)) < 1e-3;
        if (near_kink) continue;
        for (std::size_t i = 0; i < g.size(); ++i) clipped_terms += clip_active(g.ratios[i], g.advantages[i], cfg.clip);
        auto analytic = gspo_gradient(p, g, cfg);
        auto numeric = numeric_gradient(p, g, cfg, 1e-5);
        std::vector<double> diff(analytic.size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = analytic[k] - numeric[k];
        double scale = std::max(norm(analytic), norm(numeric));
        if (scale < 1e-9) {
            EXPECT_LT(norm(diff), 1e-9);
        } else {
            EXPECT_LT(norm(diff) / scale, 1e-4);
        }
        ++done;
    }
    EXPECT_GT(clipped_terms, 0);
}

TEST(Gradient, ClippedSequenceContributesNothing) {
    PolicyParams p(plain_vocab(3), 1);
    Rng rng(103);
    for (auto& z : p.parameters()) z = rng.uniform();
    GSPOConfig cfg;
    cfg.group_size = 3;
    cfg.max_length = 3;
    auto g = sample_group(p, Query{}, cfg, 8);
    g.advantages = {1.0, -0.5, -0.5};
    // Pretend the old policy gave response 0 far less mass: its ratio
    // exceeds 1 + eps while the advantage is positive.
    g.logp_old[0] -= 3.0;
    score_rollout(p, g);
    ASSERT_GT(g.ratios[0], 1 + cfg.clip);
    ASSERT_TRUE(clip_active(g.ratios[0], g.advantages[0], cfg.clip));
    for (double x : sequence_gradient(p, g, cfg, 0)) EXPECT_EQ(x, 0.0);

    auto full = gspo_gradient(p, g, cfg);
    auto g1 = sequence_gradient(p, g, cfg, 1);
    auto g2 = sequence_gradient(p, g, cfg, 2);
    for (std::size_t k = 0; k < full.size(); ++k) EXPECT_EQ(full[k], g1[k] + g2[k]);
    EXPECT_GT(norm(g1), 0.0);

    // The same response inside the band does contribute.
    g.logp_old[0] += 3.0;
    EXPECT_GT(norm(sequence_gradient(p, g, cfg, 0)), 0.0);
}

TEST(Gradient, StaleRolloutRejected) {
    PolicyParams p(plain_vocab(2), 0);
    GSPOConfig cfg;
    auto g = sample_group(p, Query{}, cfg, 1);
    g.advantages = advantages(std::vector<double>(g.size(), 0.0));
    ++p.generation;
    try {
        gspo_gradient(p, g, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::StaleRollout);
    }
}

TEST(Config, Validation) {
    GSPOConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    for (double eps : {0.0, 1.0, 1.5, -0.1}) {
        cfg.clip = eps;
        try {
            cfg.validate();
            FAIL() << eps;
        } catch (const Error& e) {
            EXPECT_NE(std::string(e.what()).find("clip range"), std::string::npos);
        }
    }
    cfg = GSPOConfig{};
    cfg.group_size = 1;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(Task, RenderedTeacherTracesExtractAndReplay) {
    Rng rng(107);
    for (int i = 0; i < 100; ++i) {
        auto tree = oracle::random_tree(rng, {"restate", "derive", "verify", "conclude"}, 1 + rng.below(5), false);
        auto task = make_task(tree, "12");
        PolicyParams p(task_vocabulary(task), 1, true);
        Extractor ex(task_rules(task));
        auto trace = sample_trace(tree, rng);
        if (trace.empty()) continue;
        auto text = render(p, teacher_tokens(p, trace, "12"));
        EXPECT_EQ(ex.extract(text, "t").labels(), trace) << text;
        EXPECT_EQ(format_reward(text), 1.0);
        task.teacher_traces = 3;
        auto log = teacher_log(task, p, ex, rng.next());
        EXPECT_EQ(log.size(), 3u);
        auto net = tree_to_petri(tree);
        for (const auto& t : log.traces())
            if (t.labels() != std::vector<Label>{"other"}) {
                EXPECT_TRUE(replays(net, t));
            }
    }
}

TEST(Train, OptimalPolicyIsAFixedPoint) {
    auto task = abc_task();
    PolicyParams probe(task_vocabulary(task), 1, true);
    auto start = deterministic_policy(task_vocabulary(task), 1, teacher_tokens(probe, {"a", "b", "c"}, "42"), true);
    GSPOConfig cfg;
    cfg.steps = 20;
    TrainOptions opts;
    opts.initial_policy = start;
    auto report = train(task, cfg, task_rules(task), opts);
    EXPECT_EQ(report.steps.front().mean_total, 3.0);
    for (const auto& s : report.steps) {
        EXPECT_EQ(s.mean_total, 3.0);
        EXPECT_EQ(s.objective, 0.0);
    }
    EXPECT_EQ(report.final_policy.parameters(), start.parameters());
    EXPECT_EQ(report.final_policy.generation, 20u);
}

TEST(Train, SameSeedSameReport) {
    auto task = abc_task();
    GSPOConfig cfg;
    cfg.steps = 150;
    auto a = train(task, cfg, task_rules(task));
    auto b = train(task, cfg, task_rules(task));
    EXPECT_EQ(to_jsonl(a), to_jsonl(b));
    EXPECT_EQ(to_json(a.final_policy).dump(), to_json(b.final_policy).dump());
    cfg.seed = 2;
    EXPECT_NE(to_jsonl(train(task, cfg, task_rules(task))), to_jsonl(a));
}

TEST(Train, LearnsTheLinearTeacher) {
    auto task = abc_task();
    GSPOConfig cfg;
    auto report = train(task, cfg, task_rules(task));
    ASSERT_EQ(report.steps.size(), 2000u);
    auto tail = report.tail_mean(100);
    EXPECT_GE(tail.mean_conformance, 0.9);
    EXPECT_GE(tail.mean_answer, 0.9);
    EXPECT_EQ(report.teacher.traces()[0].labels(), (std::vector<Label>{"a", "b", "c"}));
}

TEST(Train, ReportSerialization) {
    StepRecord r{3, 1.0, 0.5, 0.25, 1.75, -0.125};
    auto j = to_json(r);
    EXPECT_EQ(j.dump(),
              R"({"mean_answer":0.5,"mean_conformance":0.25,"mean_format":1.0,"mean_total":1.75,"objective":-0.125,"step":3})");
    PolicyParams p(plain_vocab(2), 1);
    auto pj = to_json(p);
    EXPECT_EQ(pj["logits"].size(), 3u);
    EXPECT_EQ(pj["vocabulary"][1], "w1");
}
