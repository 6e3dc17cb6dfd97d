#pragma once

// Meeting transcription metrics: word-level Levenshtein, ORC WER (optimal
// assignment of reference utterances to output streams), cpWER (optimal
// one-to-one speaker mapping) and collar-free DER.

#include "cssad/core.hpp"

#include <cctype>
#include <map>
#include <numeric>

namespace cssad {

using Words = std::vector<std::string>;

/// Lowercases, strips punctuation (apostrophes inside a word are kept) and
/// splits on whitespace.
inline Words normalize_words(std::string_view text) {
    Words out;
    std::string cur;
    auto flush = [&] {
        while (!cur.empty() && cur.back() == '\'') cur.pop_back();
        std::size_t lead = 0;
        while (lead < cur.size() && cur[lead] == '\'') ++lead;
        if (lead < cur.size()) out.push_back(cur.substr(lead));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c == '\'' || !std::ispunct(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

template <typename Range>
Words normalize_tokens(const Range &tokens) {
    Words out;
    for (const auto &t : tokens) {
        auto w = normalize_words(t);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

// ─── Levenshtein ────────────────────────────────────────────────────────────

struct WerStats {
    std::size_t substitutions = 0;
    std::size_t insertions = 0;
    std::size_t deletions = 0;
    std::size_t reference_length = 0;

    std::size_t errors() const noexcept { return substitutions + insertions + deletions; }
    /// (S + I + D) / N; with an empty reference this is I / 1.
    double wer() const noexcept {
        return static_cast<double>(errors()) /
               static_cast<double>(std::max<std::size_t>(1, reference_length));
    }
    WerStats &operator+=(const WerStats &o) noexcept {
        substitutions += o.substitutions;
        insertions += o.insertions;
        deletions += o.deletions;
        reference_length += o.reference_length;
        return *this;
    }
    friend bool operator==(const WerStats &, const WerStats &) = default;
};

/// Minimal number of word edits turning `ref` into `hyp`.
inline std::size_t edit_distance(const Words &ref, const Words &hyp) {
    std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= hyp.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[hyp.size()];
}

/// Unit-cost alignment; the backtrace prefers substitution (or match) over
/// deletion over insertion.
inline WerStats levenshtein(const Words &ref, const Words &hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<std::size_t> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t & { return d[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1,
                                 at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
    WerStats s;
    s.reference_length = n;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const std::size_t sub = ref[i - 1] == hyp[j - 1] ? 0 : 1;
            if (at(i, j) == at(i - 1, j - 1) + sub) {
                s.substitutions += sub;
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            ++s.deletions;
            --i;
        } else {
            ++s.insertions;
            --j;
        }
    }
    return s;
}

// ─── Assignment ─────────────────────────────────────────────────────────────

/// Minimum-cost one-to-one assignment on a rectangular matrix (Hungarian
/// method with potentials). Returns, per row, the assigned column or -1 when
/// the matrix has more rows than columns.
inline std::vector<int> hungarian(const std::vector<std::vector<double>> &costs) {
    if (costs.empty() || costs.front().empty()) return std::vector<int>(costs.size(), -1);
    const std::size_t rows = costs.size(), cols = costs.front().size();
    for (const auto &r : costs) {
        if (r.size() != cols) throw InvalidArgument("hungarian: ragged cost matrix");
        for (double c : r)
            if (!std::isfinite(c)) throw InvalidArgument("hungarian: non-finite cost");
    }
    const bool transposed = rows > cols;
    const std::size_t n = transposed ? cols : rows; // n <= m
    const std::size_t m = transposed ? rows : cols;
    auto cost = [&](std::size_t i, std::size_t j) {
        return transposed ? costs[j - 1][i - 1] : costs[i - 1][j - 1];
    };

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> out(rows, -1);
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] == 0) continue;
        if (transposed)
            out[j - 1] = static_cast<int>(p[j] - 1);
        else
            out[p[j] - 1] = static_cast<int>(j - 1);
    }
    return out;
}

// ─── ORC WER ────────────────────────────────────────────────────────────────

struct OrcReference {
    double start = 0.0;
    Words words;
};

struct OrcResult {
    WerStats stats;
    /// Stream index per reference utterance (input order).
    std::vector<std::size_t> assignment;
};

struct OrcOptions {
    /// Up to this many utterances (two streams) the assignment is found by
    /// enumeration; beyond it by the joint alignment DP.
    std::size_t exhaustive_limit = 12;
    /// Upper bound on DP table cells, to fail loudly instead of thrashing.
    std::size_t max_table_cells = 50'000'000;
};

namespace detail {

inline std::vector<std::size_t> start_order(const std::vector<OrcReference> &refs) {
    std::vector<std::size_t> order(refs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return refs[a].start < refs[b].start; });
    return order;
}

inline std::vector<Words> concatenate_by_stream(const std::vector<OrcReference> &refs,
                                                const std::vector<std::size_t> &order,
                                                const std::vector<std::size_t> &assignment,
                                                std::size_t streams) {
    std::vector<Words> out(streams);
    for (std::size_t u : order)
        out[assignment[u]].insert(out[assignment[u]].end(), refs[u].words.begin(),
                                  refs[u].words.end());
    return out;
}

inline WerStats score_assignment(const std::vector<OrcReference> &refs,
                                 const std::vector<Words> &hyps,
                                 const std::vector<std::size_t> &order,
                                 const std::vector<std::size_t> &assignment) {
    WerStats total;
    const auto refs_by_stream = concatenate_by_stream(refs, order, assignment, hyps.size());
    for (std::size_t s = 0; s < hyps.size(); ++s) total += levenshtein(refs_by_stream[s], hyps[s]);
    return total;
}

inline OrcResult orc_exhaustive(const std::vector<OrcReference> &refs,
                                const std::vector<Words> &hyps,
                                const std::vector<std::size_t> &order) {
    const std::size_t S = hyps.size(), U = refs.size();
    std::vector<std::size_t> assignment(U, 0), best_assignment(U, 0);
    std::size_t best = std::numeric_limits<std::size_t>::max();
    while (true) {
        const auto by_stream = concatenate_by_stream(refs, order, assignment, S);
        std::size_t errors = 0;
        for (std::size_t s = 0; s < S && errors < best; ++s)
            errors += edit_distance(by_stream[s], hyps[s]);
        if (errors < best) {
            best = errors;
            best_assignment = assignment;
        }
        std::size_t u = 0;
        while (u < U && ++assignment[u] == S) assignment[u++] = 0;
        if (u == U) break;
    }
    return {score_assignment(refs, hyps, order, best_assignment), best_assignment};
}

/// Joint alignment over all streams. State = position in every hypothesis
/// stream; utterances are consumed in start order and each one advances a
/// single stream's position by a Levenshtein sweep along that axis.
inline OrcResult orc_dp(const std::vector<OrcReference> &refs, const std::vector<Words> &hyps,
                        const std::vector<std::size_t> &order, const OrcOptions &opts) {
    const std::size_t S = hyps.size(), U = refs.size();
    std::vector<std::size_t> dims(S), stride(S);
    std::size_t cells = 1;
    for (std::size_t s = 0; s < S; ++s) {
        dims[s] = hyps[s].size() + 1;
        stride[s] = cells;
        if (cells > opts.max_table_cells / dims[s])
            throw InvalidArgument("orc_wer: alignment table too large");
        cells *= dims[s];
    }
    using Cost = std::uint32_t;
    auto coord = [&](std::size_t flat, std::size_t s) { return (flat / stride[s]) % dims[s]; };

    // tables[u] holds costs after the first u utterances (in start order).
    std::vector<std::vector<Cost>> tables(U + 1, std::vector<Cost>(cells));
    std::vector<std::vector<std::uint8_t>> choice(U, std::vector<std::uint8_t>(cells, 0));
    for (std::size_t f = 0; f < cells; ++f) {
        Cost c = 0;
        for (std::size_t s = 0; s < S; ++s) c += static_cast<Cost>(coord(f, s));
        tables[0][f] = c;
    }

    std::vector<Cost> prev_row, cur_row;
    for (std::size_t k = 0; k < U; ++k) {
        const auto &words = refs[order[k]].words;
        const auto &before = tables[k];
        auto &after = tables[k + 1];
        std::fill(after.begin(), after.end(), std::numeric_limits<Cost>::max());
        for (std::size_t s = 0; s < S; ++s) {
            const auto &hyp = hyps[s];
            const std::size_t H = dims[s];
            prev_row.resize(H);
            cur_row.resize(H);
            for (std::size_t base = 0; base < cells; ++base) {
                if (coord(base, s) != 0) continue;
                prev_row[0] = before[base];
                for (std::size_t j = 1; j < H; ++j)
                    prev_row[j] = std::min(before[base + j * stride[s]], prev_row[j - 1] + 1);
                for (const auto &w : words) {
                    cur_row[0] = prev_row[0] + 1;
                    for (std::size_t j = 1; j < H; ++j)
                        cur_row[j] = std::min({prev_row[j] + 1, cur_row[j - 1] + 1,
                                               prev_row[j - 1] + (w == hyp[j - 1] ? 0u : 1u)});
                    std::swap(prev_row, cur_row);
                }
                for (std::size_t j = 0; j < H; ++j) {
                    const std::size_t f = base + j * stride[s];
                    if (prev_row[j] < after[f]) {
                        after[f] = prev_row[j];
                        choice[k][f] = static_cast<std::uint8_t>(s);
                    }
                }
            }
        }
    }

    // Trailing insertions: find the final state reached before them.
    const auto &last = tables[U];
    std::size_t state = 0;
    Cost best = std::numeric_limits<Cost>::max();
    for (std::size_t f = 0; f < cells; ++f) {
        Cost c = last[f];
        for (std::size_t s = 0; s < S; ++s) c += static_cast<Cost>(dims[s] - 1 - coord(f, s));
        if (c < best) {
            best = c;
            state = f;
        }
    }

    std::vector<std::size_t> assignment(U, 0);
    for (std::size_t k = U; k-- > 0;) {
        const std::size_t s = choice[k][state];
        assignment[order[k]] = s;
        const auto &words = refs[order[k]].words;
        const std::size_t end = coord(state, s);
        // lev(words, hyp[i:end]) for every i via the reversed problem.
        std::vector<std::size_t> row(end + 1), next(end + 1);
        std::iota(row.begin(), row.end(), std::size_t{0});
        for (std::size_t r = words.size(); r-- > 0;) {
            next[0] = row[0] + 1;
            for (std::size_t m = 1; m <= end; ++m)
                next[m] = std::min({row[m] + 1, next[m - 1] + 1,
                                    row[m - 1] + (words[r] == hyps[s][end - m] ? 0u : 1u)});
            std::swap(row, next);
        }
        const std::size_t base = state - end * stride[s];
        bool found = false;
        for (std::size_t m = 0; m <= end && !found; ++m) {
            const std::size_t f = base + (end - m) * stride[s];
            if (tables[k][f] + row[m] == tables[k + 1][state]) {
                state = f;
                found = true;
            }
        }
        if (!found) throw std::logic_error("orc_wer: backtrace failed");
    }
    return {score_assignment(refs, hyps, order, assignment), assignment};
}

} // namespace detail

/// Assigns every reference utterance to one hypothesis stream so that the
/// summed word errors are minimal; each stream is scored against the
/// start-ordered concatenation of its utterances.
inline OrcResult orc_wer(const std::vector<OrcReference> &refs, const std::vector<Words> &hyps,
                         const OrcOptions &opts = {}) {
    if (hyps.empty()) throw InvalidArgument("orc_wer: no hypothesis streams");
    if (hyps.size() > 255) throw InvalidArgument("orc_wer: too many streams");
    const auto order = detail::start_order(refs);
    if (hyps.size() == 2 && refs.size() <= opts.exhaustive_limit)
        return detail::orc_exhaustive(refs, hyps, order);
    return detail::orc_dp(refs, hyps, order, opts);
}

// ─── cpWER ──────────────────────────────────────────────────────────────────

struct CpResult {
    WerStats stats;
    /// Reference speaker -> hypothesis label (nullopt when left unmatched).
    std::map<std::string, std::optional<std::string>> mapping;
};

/// Concatenated minimum-permutation WER. Unmatched reference speakers count
/// as deletions, unmatched hypothesis labels as insertions.
inline CpResult cp_wer(const std::map<std::string, Words> &ref,
                       const std::map<std::string, Words> &hyp) {
    std::vector<const std::pair<const std::string, Words> *> r, h;
    for (const auto &kv : ref) r.push_back(&kv);
    for (const auto &kv : hyp) h.push_back(&kv);
    const std::size_t n = std::max(r.size(), h.size());
    std::vector<std::vector<double>> costs(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i < r.size() && j < h.size())
                costs[i][j] = static_cast<double>(edit_distance(r[i]->second, h[j]->second));
            else if (i < r.size())
                costs[i][j] = static_cast<double>(r[i]->second.size());
            else if (j < h.size())
                costs[i][j] = static_cast<double>(h[j]->second.size());
        }
    const auto match = hungarian(costs);

    CpResult res;
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(match[i]);
        if (i < r.size() && j < h.size()) {
            res.stats += levenshtein(r[i]->second, h[j]->second);
            res.mapping[r[i]->first] = h[j]->first;
        } else if (i < r.size()) {
            res.stats.deletions += r[i]->second.size();
            res.stats.reference_length += r[i]->second.size();
            res.mapping[r[i]->first] = std::nullopt;
        } else if (j < h.size()) {
            res.stats.insertions += h[j]->second.size();
        }
    }
    return res;
}

// ─── DER ────────────────────────────────────────────────────────────────────

struct DerStats {
    double missed_speech = 0.0;
    double false_alarm = 0.0;
    double speaker_confusion = 0.0;
    double scored_speech = 0.0;

    /// With no reference speech the rate is 0 when nothing was hypothesized
    /// and 1 otherwise.
    double der() const noexcept {
        const double err = missed_speech + false_alarm + speaker_confusion;
        if (scored_speech <= 0.0) return err > 0.0 ? 1.0 : 0.0;
        return err / scored_speech;
    }
    DerStats &operator+=(const DerStats &o) noexcept {
        missed_speech += o.missed_speech;
        false_alarm += o.false_alarm;
        speaker_confusion += o.speaker_confusion;
        scored_speech += o.scored_speech;
        return *this;
    }
};

namespace detail {

using SpeakerTimeline = std::map<std::string, std::vector<TimeInterval>>;

/// Per-speaker union of intervals, sorted.
inline SpeakerTimeline merge_by_speaker(const std::vector<SpeakerSegment> &segs) {
    SpeakerTimeline raw;
    for (const auto &s : segs)
        if (s.interval.duration() > 0.0) raw[s.speaker].push_back(s.interval);
    for (auto &[spk, ivs] : raw) {
        std::sort(ivs.begin(), ivs.end(),
                  [](const TimeInterval &a, const TimeInterval &b) { return a.start() < b.start(); });
        std::vector<TimeInterval> merged;
        for (const auto &iv : ivs) {
            if (!merged.empty() && iv.start() <= merged.back().end())
                merged.back() = TimeInterval(merged.back().start(),
                                             std::max(merged.back().end(), iv.end()));
            else
                merged.push_back(iv);
        }
        ivs = std::move(merged);
    }
    return raw;
}

inline bool active_at(const std::vector<TimeInterval> &ivs, double t) {
    auto it = std::upper_bound(ivs.begin(), ivs.end(), t,
                               [](double x, const TimeInterval &iv) { return x < iv.start(); });
    return it != ivs.begin() && t < std::prev(it)->end();
}

} // namespace detail

/// Collar-free diarization error rate with md-eval semantics: speakers are
/// mapped one-to-one to maximize total overlap, overlapped speech is scored,
/// and on every elementary region
///   miss = max(0, Nref - Nhyp), fa = max(0, Nhyp - Nref),
///   confusion = min(Nref, Nhyp) - Ncorrect  (times the region length).
inline DerStats der(const std::vector<SpeakerSegment> &ref,
                    const std::vector<SpeakerSegment> &hyp) {
    const auto R = detail::merge_by_speaker(ref);
    const auto H = detail::merge_by_speaker(hyp);
    std::vector<const std::vector<TimeInterval> *> rv, hv;
    for (const auto &kv : R) rv.push_back(&kv.second);
    for (const auto &kv : H) hv.push_back(&kv.second);

    std::vector<int> mapping(rv.size(), -1);
    if (!rv.empty() && !hv.empty()) {
        std::vector<std::vector<double>> costs(rv.size(), std::vector<double>(hv.size(), 0.0));
        for (std::size_t i = 0; i < rv.size(); ++i)
            for (std::size_t j = 0; j < hv.size(); ++j) {
                double o = 0.0;
                for (const auto &a : *rv[i])
                    for (const auto &b : *hv[j]) o += interval_overlap(a, b);
                costs[i][j] = -o;
            }
        mapping = hungarian(costs);
    }

    std::vector<double> points;
    for (const auto *v : rv)
        for (const auto &iv : *v) points.insert(points.end(), {iv.start(), iv.end()});
    for (const auto *v : hv)
        for (const auto &iv : *v) points.insert(points.end(), {iv.start(), iv.end()});
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());

    DerStats st;
    std::vector<bool> ref_on(rv.size()), hyp_on(hv.size());
    for (std::size_t p = 0; p + 1 < points.size(); ++p) {
        const double d = points[p + 1] - points[p];
        const double mid = 0.5 * (points[p] + points[p + 1]);
        std::size_t nr = 0, nh = 0, correct = 0;
        for (std::size_t i = 0; i < rv.size(); ++i) nr += (ref_on[i] = detail::active_at(*rv[i], mid));
        for (std::size_t j = 0; j < hv.size(); ++j) nh += (hyp_on[j] = detail::active_at(*hv[j], mid));
        for (std::size_t i = 0; i < rv.size(); ++i)
            if (ref_on[i] && mapping[i] >= 0 && hyp_on[static_cast<std::size_t>(mapping[i])])
                ++correct;
        st.scored_speech += d * static_cast<double>(nr);
        if (nr > nh) st.missed_speech += d * static_cast<double>(nr - nh);
        if (nh > nr) st.false_alarm += d * static_cast<double>(nh - nr);
        st.speaker_confusion += d * static_cast<double>(std::min(nr, nh) - correct);
    }
    return st;
}

} // namespace cssad
