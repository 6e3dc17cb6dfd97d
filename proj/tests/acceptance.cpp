// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include "oracles.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

using namespace cssad;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

int failures = 0;

void report(bool ok, const char *name, const std::string &detail) {
    std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ─── metric oracles ─────────────────────────────────────────────────────────

void metric_oracles() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    int orc_ok = 0, dp_ok = 0, cp_ok = 0, hung_ok = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 10;
        std::vector<OrcReference> refs;
        for (std::size_t u = 0; u < n; ++u)
            refs.push_back({static_cast<double>(rng() % 20), oracle::random_words(rng, 1, 3)});
        std::vector<Words> hyps(2);
        for (const auto &r : refs) {
            auto &h = hyps[rng() % 2];
            const auto c = oracle::corrupt(r.words, rng, 0.3);
            h.insert(h.end(), c.begin(), c.end());
        }
        const auto expect = oracle::orc_errors(refs, hyps);
        orc_ok += orc_wer(refs, hyps).stats.errors() == expect;
        OrcOptions dp;
        dp.exhaustive_limit = 0;
        dp_ok += orc_wer(refs, hyps, dp).stats.errors() == expect;
    }
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, Words> ref, hyp;
        const std::size_t nr = 1 + rng() % 5, nh = 1 + rng() % 5;
        for (std::size_t i = 0; i < nr; ++i) ref["R" + std::to_string(i)] = oracle::random_words(rng, 0, 8);
        for (std::size_t j = 0; j < nh; ++j) {
            const auto &src = ref["R" + std::to_string(rng() % nr)];
            hyp["H" + std::to_string(j)] = oracle::corrupt(src, rng, 0.4);
        }
        cp_ok += cp_wer(ref, hyp).stats.errors() == oracle::cp_errors(ref, hyp);
    }
    std::uniform_real_distribution<> u(0.0, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<double>> c(5, std::vector<double>(5));
        for (auto &row : c)
            for (auto &x : row) x = trial % 2 ? std::round(u(rng) / 10.0) : u(rng);
        const auto a = hungarian(c);
        double total = 0.0;
        for (std::size_t i = 0; i < 5; ++i) total += c[i][static_cast<std::size_t>(a[i])];
        // Integer-valued cases compare exactly; real-valued cases up to summation order.
        const double best = oracle::assignment_cost(c);
        hung_ok += trial % 2 ? total == best : std::abs(total - best) <= 1e-9 * std::max(1.0, best);
    }
    const double secs = seconds_since(t0);
    report(orc_ok == 200 && dp_ok == 200 && cp_ok == 200 && hung_ok == 200 && secs < 30.0,
           "metric-oracle-equivalence",
           fmt("orc %d/200 (joint DP %d/200), cp %d/200, hungarian %d/200, %.1f s (limit 30 s)", orc_ok,
               dp_ok, cp_ok, hung_ok, secs));
}

// ─── ORC <= cpWER ───────────────────────────────────────────────────────────

void orc_below_cp() {
    std::mt19937_64 rng(202);
    int ok = 0;
    std::size_t orc_total = 0, cp_total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t speakers = 1 + rng() % 4, labels = 1 + rng() % 4, utts = 1 + rng() % 8;
        std::vector<SegmentRecord> ref, hyp;
        std::vector<std::size_t> label_of(speakers);
        for (auto &l : label_of) l = rng() % labels;
        // Speakers overlap each other but never themselves.
        std::vector<double> free_at(speakers, 0.0);
        double t = 0.0;
        for (std::size_t u = 0; u < utts; ++u) {
            const std::size_t spk = rng() % speakers;
            const auto words = oracle::random_words(rng, 1, 5);
            t = std::max(t, free_at[spk]);
            free_at[spk] = t + static_cast<double>(words.size());
            SegmentRecord r{"x", "S" + std::to_string(spk), std::nullopt, {t, free_at[spk]}, {}};
            for (std::size_t k = 0; k < words.size(); ++k)
                r.words.emplace_back(words[k], TimeInterval(t + k, t + k + 1.0));
            ref.push_back(r);
            // Diarized output: corrupted words under a mostly consistent label.
            const auto said = oracle::corrupt(words, rng, 0.25);
            const std::size_t label = rng() % 4 == 0 ? rng() % labels : label_of[spk];
            SegmentRecord h{"x", "L" + std::to_string(label), 0, r.interval, {}};
            for (std::size_t k = 0; k < said.size(); ++k)
                h.words.emplace_back(said[k], TimeInterval(t + k * 0.9, t + k * 0.9 + 0.9));
            if (!h.words.empty()) hyp.push_back(h);
            t += static_cast<double>(rng() % 4);
        }
        std::vector<OrcReference> refs;
        for (const auto &r : ref) {
            Words w;
            for (const auto &x : r.words) w.push_back(x.text);
            refs.push_back({r.interval.start(), w});
        }
        // One hypothesis stream per diarized label.
        const auto by_label = words_by(hyp, [](const SegmentRecord &r) { return *r.speaker; });
        std::vector<Words> streams;
        for (const auto &[l, w] : by_label) streams.push_back(w);
        if (streams.empty()) streams.emplace_back();
        const auto orc = orc_wer(refs, streams).stats.errors();
        const auto cp = cp_wer(words_by(ref, [](const SegmentRecord &r) { return *r.speaker; }), by_label)
                            .stats.errors();
        ok += orc <= cp;
        orc_total += orc;
        cp_total += cp;
    }
    report(ok == 100, "orc-below-cpwer",
           fmt("%d/100 cases ORC errors <= cp errors (totals %zu vs %zu)", ok, orc_total, cp_total));
}

// ─── stitching ──────────────────────────────────────────────────────────────

class SwappingSeparator final : public Separator {
  public:
    SwappingSeparator(const StreamPair &truth, std::vector<bool> swaps) : truth_(truth), swaps_(std::move(swaps)) {}
    std::array<AudioSignal, 2> separate(const AudioSignal &segment, const SegmentContext &ctx) const override {
        std::array<AudioSignal, 2> out{truth_.streams[0].slice(ctx.offset, segment.size()),
                                       truth_.streams[1].slice(ctx.offset, segment.size())};
        if (swaps_[ctx.index]) std::swap(out[0], out[1]);
        return out;
    }

  private:
    const StreamPair &truth_;
    std::vector<bool> swaps_;
};

void stitching() {
    constexpr int kSr = 1000;
    std::mt19937_64 rng(303);
    int ok = 0;
    double worst_inside = 0.0;
    std::size_t outside_mismatch = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 6 * kSr + rng() % (40 * kSr);
        std::normal_distribution<float> a(0.0f, 1.0f), b(0.0f, 0.4f);
        std::vector<float> x(n), y(n), mix(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a(rng);
            y[i] = b(rng);
            mix[i] = x[i] + y[i];
        }
        const StreamPair truth{{AudioSignal(x, kSr), AudioSignal(y, kSr)}};
        const AudioSignal mixture(mix, kSr);
        CssConfig cfg;
        const auto windows = segment_uniform(mixture, cfg);
        std::vector<bool> swaps(windows.size());
        for (std::size_t k = 0; k < swaps.size(); ++k) swaps[k] = rng() & 1;
        auto out = run_css(mixture, SwappingSeparator(truth, swaps), cfg);
        if (out.size() != n) continue;
        if (swaps[0]) std::swap(out.streams[0], out.streams[1]);

        std::vector<int> cover(n, 0);
        for (const auto &w : windows)
            for (std::size_t i = w.offset; i < std::min(n, w.offset + w.audio.size()); ++i) ++cover[i];
        bool good = true;
        for (int c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < n; ++i) {
                const float got = out.streams[c].samples()[i], want = truth.streams[c].samples()[i];
                if (cover[i] > 1) {
                    const double d = std::abs(static_cast<double>(got) - want);
                    worst_inside = std::max(worst_inside, d);
                    good = good && d < 1e-6;
                } else if (got != want) {
                    ++outside_mismatch;
                    good = false;
                }
            }
        ok += good;
    }
    report(ok == 100, "stitching-recovery",
           fmt("%d/100 swap patterns recovered; %zu inexact samples outside overlaps, max deviation "
               "inside %.2e (limit 1e-6)",
               ok, outside_mismatch, worst_inside));
}

// ─── end-to-end ─────────────────────────────────────────────────────────────

SimulationSpec suite_spec(std::uint64_t seed) {
    SimulationSpec s;
    s.meetings = 20;
    s.mix.num_speakers = 8;
    s.mix.num_utterances = 30;
    s.mix.overlap_ratio_target = 0.3;
    s.mix.seed = seed;
    return s;
}

void oracle_end_to_end() {
    const auto t0 = Clock::now();
    const auto spec = suite_spec(1);
    PipelineConfig cfg;
    cfg.seed = 1;
    std::vector<MeetingScore> scores(spec.meetings);
    parallel_for(spec.meetings, workers(), [&](std::size_t m) {
        const auto truth = generate_meeting(spec.meeting(m));
        const auto res = run_pipeline(cfg, truth, 1);
        scores[m] = score_meeting(truth.session_id, truth_records(truth),
                                  diarized_records(truth.session_id, res.diarization), res.diarization.segments());
    });
    const auto pooled = pool(scores).pooled;
    const double secs = seconds_since(t0);
    report(pooled.cp.errors() == 0 && pooled.der.der() < 0.01 && secs < 60.0, "oracle-end-to-end",
           fmt("20 meetings: cpWER %.2f %% (%zu errors / %zu words), ORC WER %.2f %%, DER %.3f %% "
               "(limit 1 %%), %.1f s (limit 60 s)",
               100.0 * pooled.cp.wer(), pooled.cp.errors(), pooled.cp.reference_length, 100.0 * pooled.orc.wer(),
               100.0 * pooled.der.der(), secs));
}

// ─── sub-segmentation ordering ──────────────────────────────────────────────

// Settings fixed by a sweep: longer pauses than the simulation default keep
// whole VAD segments from spanning many speakers.
constexpr double kOrderingSigma = 0.8;
constexpr double kOrderingPunctDrop = 0.25;
constexpr std::pair<double, double> kOrderingGaps{1.0, 3.0};

void subsegmentation_ordering() {
    const std::vector<Scheme> schemes{Scheme::none,     Scheme::uniform2, Scheme::uniform4,
                                      Scheme::sentence, Scheme::word,     Scheme::sentence_word};
    int seeds_ok = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        auto spec = suite_spec(seed);
        spec.mix.gap_range = kOrderingGaps;
        std::vector<std::vector<WerStats>> per_meeting(spec.meetings, std::vector<WerStats>(schemes.size()));
        parallel_for(spec.meetings, workers(), [&](std::size_t m) {
            const auto truth = generate_meeting(spec.meeting(m));
            PipelineConfig cfg;
            cfg.seed = seed;
            cfg.extractor_sigma = kOrderingSigma;
            cfg.punct_drop = kOrderingPunctDrop;
            const auto streams = stage_css(cfg, truth, 1);
            const auto vad = stage_vad(cfg, streams);
            const auto ts = stage_asr(cfg, truth, streams, vad, 1);
            const auto ref = words_by(truth_records(truth), [](const SegmentRecord &r) { return *r.speaker; });
            for (std::size_t s = 0; s < schemes.size(); ++s) {
                cfg.scheme = schemes[s];
                const auto d = stage_diarize(cfg, truth, streams, vad, ts, 1);
                const auto hyp = diarized_records(truth.session_id, d);
                per_meeting[m][s] = cp_wer(ref, words_by(hyp, [](const SegmentRecord &r) { return *r.speaker; })).stats;
            }
        });
        std::vector<WerStats> total(schemes.size());
        for (const auto &row : per_meeting)
            for (std::size_t s = 0; s < schemes.size(); ++s) total[s] += row[s];
        auto e = [&](Scheme s) {
            return total[static_cast<std::size_t>(std::find(schemes.begin(), schemes.end(), s) - schemes.begin())];
        };
        const double none = 100.0 * e(Scheme::none).wer();
        const bool ok = none >= 10.0 && none <= 30.0 &&
                        e(Scheme::sentence_word).errors() < e(Scheme::sentence).errors() &&
                        e(Scheme::sentence).errors() < e(Scheme::uniform4).errors() &&
                        e(Scheme::uniform4).errors() < e(Scheme::none).errors() &&
                        e(Scheme::word).errors() < e(Scheme::sentence).errors();
        seeds_ok += ok;
        detail += fmt("\n    seed %lu: none %.2f, u2 %.2f, u4 %.2f, sentence %.2f, word %.2f, s+w %.2f %s",
                      static_cast<unsigned long>(seed), none, 100.0 * e(Scheme::uniform2).wer(),
                      100.0 * e(Scheme::uniform4).wer(), 100.0 * e(Scheme::sentence).wer(),
                      100.0 * e(Scheme::word).wer(), 100.0 * e(Scheme::sentence_word).wer(), ok ? "ok" : "violated");
    }
    report(seeds_ok >= 2, "subsegmentation-ordering",
           fmt("ordering s+w < sentence < u4 < none, word < sentence, none in [10, 30] %%: %d/3 seeds "
               "(need 2; sigma %.2f, punct_drop %.2f)",
               seeds_ok, kOrderingSigma, kOrderingPunctDrop) +
               detail);
}

// ─── change detection ───────────────────────────────────────────────────────

void change_detection() {
    // Word timings come from simulated utterances; each synthetic segment
    // strings together 2-3 utterances of alternating speakers.
    std::vector<Utterance> pool;
    for (std::uint64_t seed = 0; pool.size() < 1500; ++seed) {
        MixSpec spec;
        spec.num_speakers = 4;
        spec.num_utterances = 30;
        spec.seed = mix_seed(404, seed);
        spec.sample_rate = 8000;
        for (auto &u : generate_meeting(spec).utterances) pool.push_back(std::move(u));
    }
    std::mt19937_64 rng(404);
    const auto centroids = MockExtractor::orthogonal_centroids({"A", "B"}, 64);
    ChangeDetectConfig cfg;
    std::size_t turns = 0, hit = 0, non_turn_gaps = 0, false_flags = 0;
    for (int s = 0; s < 500; ++s) {
        const std::size_t parts = 2 + rng() % 2;
        std::vector<WordToken> words;
        std::vector<SpeakerActivity> act;
        std::vector<std::size_t> true_gaps;
        double t = 0.0;
        for (std::size_t p = 0; p < parts; ++p) {
            const auto &u = pool[rng() % pool.size()];
            const double shift = t - u.interval.start();
            for (const auto &w : u.words)
                words.emplace_back(w.text, TimeInterval(w.interval.start() + shift, w.interval.end() + shift));
            act.push_back({0, p % 2 ? "B" : "A", TimeInterval(t, t + u.interval.duration())});
            t += u.interval.duration();
            if (p + 1 < parts) true_gaps.push_back(words.size() - 1);
        }
        MockExtractorOptions opts;
        opts.sigma = 0.1;
        opts.seed = static_cast<std::uint64_t>(s);
        const MockExtractor mock(act, centroids, opts);
        std::vector<Embedding> embs;
        for (const auto &w : words) embs.push_back(mock.embed(AudioSignal(), 0, w.interval));
        const auto found = detect_speaker_changes(word_change_scores(embs, cfg), cfg);
        auto near = [](std::size_t a, std::size_t b) { return (a > b ? a - b : b - a) <= 1; };
        for (auto g : true_gaps) {
            ++turns;
            hit += std::any_of(found.begin(), found.end(), [&](std::size_t f) { return near(f, g); });
        }
        non_turn_gaps += words.size() - 1 - true_gaps.size();
        for (auto f : found)
            false_flags += std::none_of(true_gaps.begin(), true_gaps.end(), [&](std::size_t g) { return near(f, g); });
    }
    const double recall = static_cast<double>(hit) / static_cast<double>(turns);
    const double fa = static_cast<double>(false_flags) / static_cast<double>(non_turn_gaps);
    report(recall >= 0.95 && fa <= 0.05, "change-detection",
           fmt("500 segments: %zu/%zu turns found within +/-1 word (%.1f %%, need 95 %%), %zu/%zu non-turn "
               "gaps flagged (%.2f %%, limit 5 %%)",
               hit, turns, 100.0 * recall, false_flags, non_turn_gaps, 100.0 * fa));
}

// ─── VAD properties ─────────────────────────────────────────────────────────

void vad_properties() {
    std::mt19937_64 rng(505);
    const VadConfig cfg;
    const auto ext = static_cast<long>(std::llround(cfg.boundary_extension / cfg.frame_hop));
    int mono = 0, idem = 0, bound = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 20 + rng() % 800;
        std::bernoulli_distribution on(0.05 + 0.9 * static_cast<double>(rng() % 100) / 100.0);
        std::vector<bool> small(n), big(n);
        for (std::size_t i = 0; i < n; ++i) {
            small[i] = on(rng);
            big[i] = small[i] || rng() % 4 == 0;
        }
        const ActivityMask a(cfg.frame_hop, small), b(cfg.frame_hop, big);
        const auto fa = morph_close_and_extend(a, cfg), fb = morph_close_and_extend(b, cfg);
        bool subset = true;
        for (std::size_t i = 0; i < n; ++i) subset = subset && (!fa.frames[i] || fb.frames[i]);
        mono += subset;

        const auto closed = close_gaps(a, cfg.closing_gap);
        idem += close_gaps(closed, cfg.closing_gap) == closed;

        // Extension only adds frames, and none farther than 0.4 s from the closed mask.
        bool within = true;
        long last_on = -1'000'000;
        std::vector<long> dist(n, 1'000'000);
        for (long i = 0; i < static_cast<long>(n); ++i) {
            if (closed.frames[i]) last_on = i;
            dist[i] = i - last_on;
        }
        last_on = 1'000'000;
        for (long i = static_cast<long>(n) - 1; i >= 0; --i) {
            if (closed.frames[i]) last_on = i;
            dist[i] = std::min(dist[i], last_on - i);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (closed.frames[i] && !fa.frames[i]) within = false;
            if (fa.frames[i] && dist[i] > ext) within = false;
            if (a.frames[i] && !closed.frames[i]) within = false;
        }
        bound += within;
    }
    report(mono == 1000 && idem == 1000 && bound == 1000, "vad-properties",
           fmt("1000 masks: superset monotonicity %d, closing idempotence %d, 0.4 s extension bound %d", mono,
               idem, bound));
}

// ─── determinism ────────────────────────────────────────────────────────────

std::map<std::string, std::uint64_t> tree_hashes(const fs::path &root) {
    std::map<std::string, std::uint64_t> out;
    for (const auto &e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = hash_file(e.path());
    return out;
}

int cli(const std::string &args) {
    const int rc = std::system((std::string(CSSAD_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void determinism() {
    const fs::path dir = fs::temp_directory_path() / ("cssad_accept_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto d = dir.string();
    write_file(dir / "sim.conf", "meetings = 3\nnum_speakers = 6\nnum_utterances = 16\nseed = 9\n");
    write_file(dir / "run.conf",
               "seed = 5\n[recognizer]\nword_drop = 0.1\ntimestamp_jitter = 0.02\npunct_drop = 0.25\n"
               "[extractor]\nsigma = 0.8\n[diarize]\nk_speakers = 6\n");
    const int rc_sim = cli("simulate --config " + d + "/sim.conf --out " + d + "/corpus");
    const int rc1 = cli("run " + d + "/corpus --config " + d + "/run.conf --out " + d + "/run1 -j 1");
    const int rc2 = cli("run " + d + "/corpus --config " + d + "/run.conf --out " + d + "/run2 -j 4");
    bool same = false;
    std::size_t files = 0;
    if (rc_sim == 0 && rc1 == 0 && rc2 == 0) {
        const auto h1 = tree_hashes(dir / "run1"), h2 = tree_hashes(dir / "run2");
        same = h1 == h2 && !h1.empty();
        files = h1.size();
    }
    fs::remove_all(dir);
    report(same, "run-determinism",
           fmt("two runs (1 and 4 workers) over 3 meetings: %zu files, %s (exit codes %d/%d/%d)", files,
               same ? "byte-identical" : "DIFFERENT", rc_sim, rc1, rc2));
}

} // namespace

int main() {
    const auto t0 = Clock::now();
    try {
        metric_oracles();
        orc_below_cp();
        stitching();
        oracle_end_to_end();
        subsegmentation_ordering();
        change_detection();
        vad_properties();
        determinism();
    } catch (const std::exception &e) {
        std::printf("FAIL %-28s unexpected exception: %s\n", "suite", e.what());
        return 2;
    }
    std::printf("%s: %d failed criteria, %.1f s\n", failures ? "FAILED" : "ALL PASSED", failures,
                seconds_since(t0));
    return failures ? 1 : 0;
}
