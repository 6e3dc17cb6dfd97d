#include "cssad/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cssad;

namespace {

Words w(std::string_view s) { return normalize_words(s); }

SpeakerSegment seg(std::string spk, double a, double b) { return SpeakerSegment(0, {a, b}, std::move(spk)); }

} // namespace

TEST(Normalize, Text) {
    EXPECT_EQ(w("Hello, let's START... today?"), (Words{"hello", "let's", "start", "today"}));
    EXPECT_EQ(w("  \t "), Words{});
    EXPECT_EQ(w("'quoted' word."), (Words{"quoted", "word"}));
}

TEST(Levenshtein, Examples) {
    EXPECT_EQ(levenshtein(w("a b c"), w("a b c")).errors(), 0u);
    const auto s = levenshtein(w("a b c"), w("a x c"));
    EXPECT_EQ(s.substitutions, 1u);
    EXPECT_NEAR(s.wer(), 1.0 / 3.0, 1e-12);
    const auto d = levenshtein(w("a b"), {});
    EXPECT_EQ(d.deletions, 2u);
    EXPECT_DOUBLE_EQ(d.wer(), 1.0);
    const auto i = levenshtein({}, w("a b"));
    EXPECT_EQ(i.insertions, 2u);
    EXPECT_DOUBLE_EQ(i.wer(), 2.0);
}

TEST(Levenshtein, MatchesRecursiveOracle) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = oracle::random_words(rng, 0, 12), b = oracle::random_words(rng, 0, 12);
        const auto s = levenshtein(a, b);
        EXPECT_EQ(s.errors(), oracle::edit_distance(a, b));
        EXPECT_EQ(edit_distance(a, b), s.errors());
        EXPECT_EQ(s.reference_length, a.size());
        EXPECT_EQ(s.substitutions + s.deletions + (b.size() - s.insertions - s.substitutions), a.size());
    }
}

TEST(Hungarian, Examples) {
    EXPECT_EQ(hungarian({{1, 9, 9}, {9, 1, 9}, {9, 9, 1}}), (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(hungarian({{4.5}}), std::vector<int>{0});
    const auto wide = hungarian({{5, 1, 9}, {1, 5, 9}});
    EXPECT_EQ(wide, (std::vector<int>{1, 0}));
    const auto tall = hungarian({{5, 1}, {1, 5}, {0, 0}});
    EXPECT_EQ(tall, (std::vector<int>{1, -1, 0}));
    EXPECT_THROW(hungarian({{1, 2}, {3}}), InvalidArgument);
    EXPECT_THROW(hungarian({{std::numeric_limits<double>::infinity()}}), InvalidArgument);
    EXPECT_TRUE(hungarian({}).empty());
}

TEST(Hungarian, MatchesPermutationOracle) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<> u(0.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 5;
        std::vector<std::vector<double>> c(n, std::vector<double>(n));
        for (auto &row : c)
            for (auto &x : row) x = trial % 2 ? std::floor(u(rng)) : u(rng);
        const auto a = hungarian(c);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += c[i][static_cast<std::size_t>(a[i])];
        EXPECT_NEAR(total, oracle::assignment_cost(c), 1e-9);
        std::vector<int> sorted = a;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(sorted[i], static_cast<int>(i));
    }
}

TEST(Orc, Examples) {
    const std::vector<OrcReference> refs{{0.0, w("a b")}, {1.0, w("c d")}, {2.0, w("e")}};
    EXPECT_EQ(orc_wer(refs, {w("a b e"), w("c d")}).stats.errors(), 0u);
    const auto r = orc_wer(refs, {w("a b e"), w("c d")});
    EXPECT_EQ(r.assignment, (std::vector<std::size_t>{0, 1, 0}));
    EXPECT_EQ(orc_wer(refs, {w("a b c d e")}).stats, levenshtein(w("a b c d e"), w("a b c d e")));
    EXPECT_EQ(orc_wer(refs, {w("a x c d")}).stats, levenshtein(w("a b c d e"), w("a x c d")));
    EXPECT_THROW(orc_wer(refs, {}), InvalidArgument);
}

TEST(Orc, MatchesBruteForce) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t n_utt = 1 + rng() % 6;
        const std::size_t n_streams = 1 + rng() % 3;
        std::vector<OrcReference> refs;
        for (std::size_t u = 0; u < n_utt; ++u)
            refs.push_back({static_cast<double>(rng() % 10), oracle::random_words(rng, 1, 4)});
        std::vector<Words> hyps(n_streams);
        for (const auto &r : refs) {
            auto &h = hyps[rng() % n_streams];
            const auto c = oracle::corrupt(r.words, rng, 0.3);
            h.insert(h.end(), c.begin(), c.end());
        }
        const auto expect = oracle::orc_errors(refs, hyps);
        EXPECT_EQ(orc_wer(refs, hyps).stats.errors(), expect) << "trial " << trial;
        OrcOptions dp_only;
        dp_only.exhaustive_limit = 0;
        const auto dp = orc_wer(refs, hyps, dp_only);
        EXPECT_EQ(dp.stats.errors(), expect) << "trial " << trial;
        // The reported assignment realizes the reported errors.
        std::vector<Words> cat(n_streams);
        std::vector<std::size_t> order(n_utt);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return refs[a].start < refs[b].start; });
        for (auto u : order)
            cat[dp.assignment[u]].insert(cat[dp.assignment[u]].end(), refs[u].words.begin(), refs[u].words.end());
        std::size_t e = 0;
        for (std::size_t s = 0; s < n_streams; ++s) e += oracle::edit_distance(cat[s], hyps[s]);
        EXPECT_EQ(e, expect);
    }
}

TEST(Cp, PermutationInvariant) {
    const std::map<std::string, Words> ref{{"A", w("a b c")}, {"B", w("d e")}};
    EXPECT_EQ(cp_wer(ref, {{"x", w("d e")}, {"y", w("a b c")}}).stats.errors(), 0u);
    const auto r = cp_wer(ref, {{"x", w("d e")}, {"y", w("a b c")}});
    EXPECT_EQ(r.mapping.at("A"), "y");
    const auto miss = cp_wer(ref, {{"x", w("a b c")}});
    EXPECT_EQ(miss.stats.deletions, 2u);
    EXPECT_FALSE(miss.mapping.at("B").has_value());
    const auto extra = cp_wer(ref, {{"x", w("a b c")}, {"y", w("d e")}, {"z", w("f")}});
    EXPECT_EQ(extra.stats.insertions, 1u);
    EXPECT_EQ(extra.stats.reference_length, 5u);
}

TEST(Cp, MatchesBruteForce) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 150; ++trial) {
        std::map<std::string, Words> ref, hyp;
        const std::size_t nr = 1 + rng() % 5, nh = 1 + rng() % 5;
        for (std::size_t i = 0; i < nr; ++i) ref["R" + std::to_string(i)] = oracle::random_words(rng, 0, 6);
        for (std::size_t j = 0; j < nh; ++j) hyp["H" + std::to_string(j)] = oracle::random_words(rng, 0, 6);
        const auto got = cp_wer(ref, hyp);
        EXPECT_EQ(got.stats.errors(), oracle::cp_errors(ref, hyp)) << "trial " << trial;
        EXPECT_EQ(got.mapping.size(), nr);
    }
}

TEST(Der, HandExample) {
    const auto d = der({seg("A", 0, 10), seg("B", 5, 15)}, {seg("x", 0, 15)});
    EXPECT_DOUBLE_EQ(d.scored_speech, 20.0);
    EXPECT_DOUBLE_EQ(d.missed_speech, 5.0);
    EXPECT_DOUBLE_EQ(d.speaker_confusion, 5.0);
    EXPECT_DOUBLE_EQ(d.false_alarm, 0.0);
    EXPECT_DOUBLE_EQ(d.der(), 0.5);
}

TEST(Der, TrivialCases) {
    const std::vector<SpeakerSegment> ref{seg("A", 0, 4), seg("B", 3, 7), seg("A", 8, 9)};
    EXPECT_DOUBLE_EQ(der(ref, ref).der(), 0.0);
    const auto empty = der(ref, {});
    EXPECT_DOUBLE_EQ(empty.missed_speech, empty.scored_speech);
    EXPECT_DOUBLE_EQ(empty.der(), 1.0);
    std::vector<SpeakerSegment> renamed;
    for (auto s : ref) {
        s.speaker = s.speaker == "A" ? "spk1" : "spk0";
        renamed.push_back(s);
    }
    EXPECT_DOUBLE_EQ(der(ref, renamed).der(), 0.0);
    EXPECT_DOUBLE_EQ(der({}, {}).der(), 0.0);
    EXPECT_DOUBLE_EQ(der({}, ref).der(), 1.0);
}

TEST(Der, MatchesGridOracle) {
    std::mt19937_64 rng(5);
    const double step = 0.25;
    for (int trial = 0; trial < 200; ++trial) {
        auto random_segs = [&](int speakers) {
            std::vector<oracle::GridSeg> out;
            const int n = static_cast<int>(rng() % 6);
            for (int i = 0; i < n; ++i) {
                const long a = static_cast<long>(rng() % 40);
                out.push_back({static_cast<int>(rng() % speakers), a, a + 1 + static_cast<long>(rng() % 12)});
            }
            return out;
        };
        const int nr = 1 + static_cast<int>(rng() % 3), nh = 1 + static_cast<int>(rng() % 4);
        const auto r = random_segs(nr), h = random_segs(nh);
        auto to_segments = [&](const std::vector<oracle::GridSeg> &g, const char *prefix) {
            std::vector<SpeakerSegment> out;
            for (const auto &s : g)
                out.push_back(seg(prefix + std::to_string(s.speaker), static_cast<double>(s.begin) * step,
                                  static_cast<double>(s.end) * step));
            return out;
        };
        const auto got = der(to_segments(r, "r"), to_segments(h, "h"));
        const auto expect = oracle::der_grid(r, nr, h, nh, step);
        EXPECT_NEAR(got.scored_speech, expect.scored_speech, 1e-9) << trial;
        EXPECT_NEAR(got.missed_speech, expect.missed_speech, 1e-9) << trial;
        EXPECT_NEAR(got.false_alarm, expect.false_alarm, 1e-9) << trial;
        EXPECT_NEAR(got.speaker_confusion, expect.speaker_confusion, 1e-9) << trial;
    }
}
