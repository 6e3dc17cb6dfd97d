#pragma once

// Transcription-supported diarization: VAD segments are sub-segmented
// (uniformly, at sentence ends, at speaker changes found from word-level
// embeddings, or sentence ends followed by word-level changes), one
// embedding is extracted per sub-segment and the embeddings are clustered
// with k-means++.

#include "cssad/core.hpp"
#include "cssad/css.hpp"
#include "cssad/kmeans.hpp"
#include "cssad/transcript.hpp"

#include <map>
#include <random>

namespace cssad {

// ─── Embeddings ─────────────────────────────────────────────────────────────

struct Embedding {
    std::vector<double> vector;

    double norm() const {
        double s = 0.0;
        for (double v : vector) s += v * v;
        return std::sqrt(s);
    }
    Embedding normalized() const {
        const double n = norm();
        if (n <= 0.0) throw InvalidArgument("Embedding: cannot normalize a zero vector");
        Embedding out = *this;
        for (auto &v : out.vector) v /= n;
        return out;
    }
    Embedding scaled(double f) const {
        Embedding out = *this;
        for (auto &v : out.vector) v *= f;
        return out;
    }
    friend bool operator==(const Embedding &, const Embedding &) = default;
};

inline double cosine_similarity(const std::vector<double> &a, const std::vector<double> &b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Speaker embedding of a stretch of one stream. Must be deterministic and
/// safe to call concurrently.
class EmbeddingExtractor {
  public:
    virtual ~EmbeddingExtractor() = default;
    virtual Embedding embed(const AudioSignal &stream, int channel,
                            const TimeInterval &interval) const = 0;
};

/// Who speaks where on which stream (ground truth seen by the mock).
struct SpeakerActivity {
    int channel = 0;
    std::string speaker;
    TimeInterval interval;
};

inline std::vector<SpeakerActivity> speaker_activity(const MeetingTruth &truth,
                                                     const std::vector<int> &attribution) {
    std::vector<SpeakerActivity> out;
    for (std::size_t u = 0; u < truth.utterances.size(); ++u)
        if (attribution[u] >= 0)
            out.push_back({attribution[u], truth.utterances[u].speaker,
                           truth.utterances[u].interval});
    return out;
}

struct MockExtractorOptions {
    std::size_t dim = 64;
    /// Noise norm relative to the unit centroid for a one-second interval;
    /// scales with 1/sqrt(duration).
    double sigma = 0.0;
    std::uint64_t seed = 0;
    double min_duration = 0.05;
};

/// Centroid of the speaker with the most activity inside the interval plus
/// Gaussian noise, normalized. Noise is seeded from (channel, interval), so
/// repeated calls agree.
class MockExtractor final : public EmbeddingExtractor {
  public:
    MockExtractor(std::vector<SpeakerActivity> activity,
                  std::map<std::string, Embedding> centroids, MockExtractorOptions opts = {})
        : activity_(std::move(activity)), centroids_(std::move(centroids)), opts_(opts) {
        for (const auto &[spk, c] : centroids_)
            if (c.vector.size() != opts_.dim)
                throw InvalidArgument("MockExtractor: centroid of '" + spk +
                                      "' has wrong dimension");
    }

    static std::map<std::string, Embedding> random_centroids(const std::vector<std::string> &speakers,
                                                             std::size_t dim, std::uint64_t seed) {
        std::map<std::string, Embedding> out;
        for (std::size_t s = 0; s < speakers.size(); ++s) {
            std::mt19937_64 rng(mix_seed(seed, 0x63656e74ULL, s));
            std::normal_distribution<> n(0.0, 1.0);
            Embedding e{std::vector<double>(dim)};
            for (auto &v : e.vector) v = n(rng);
            out[speakers[s]] = e.normalized();
        }
        return out;
    }

    static std::map<std::string, Embedding> orthogonal_centroids(const std::vector<std::string> &speakers,
                                                                 std::size_t dim) {
        if (speakers.size() > dim)
            throw InvalidArgument("orthogonal_centroids: more speakers than dimensions");
        std::map<std::string, Embedding> out;
        for (std::size_t s = 0; s < speakers.size(); ++s) {
            Embedding e{std::vector<double>(dim, 0.0)};
            e.vector[s] = 1.0;
            out[speakers[s]] = e;
        }
        return out;
    }

    std::optional<std::string> dominant_speaker(int channel, const TimeInterval &iv) const {
        std::map<std::string, double> time;
        for (const auto &a : activity_)
            if (a.channel == channel) {
                const double o = interval_overlap(a.interval, iv);
                if (o > 0.0) time[a.speaker] += o;
            }
        std::optional<std::string> best;
        double best_t = 0.0;
        for (const auto &[spk, t] : time)
            if (t > best_t) {
                best_t = t;
                best = spk;
            }
        return best;
    }

    Embedding embed(const AudioSignal &, int channel, const TimeInterval &iv) const override {
        Embedding e{std::vector<double>(opts_.dim, 0.0)};
        if (auto spk = dominant_speaker(channel, iv)) {
            auto it = centroids_.find(*spk);
            if (it == centroids_.end())
                throw DataError("MockExtractor: no centroid for speaker '" + *spk + "'");
            e = it->second;
        }
        std::mt19937_64 rng(mix_seed(opts_.seed, static_cast<std::uint64_t>(channel),
                                     static_cast<std::uint64_t>(std::llround(iv.start() * 1e6)),
                                     static_cast<std::uint64_t>(std::llround(iv.end() * 1e6))));
        std::normal_distribution<> n(0.0, 1.0);
        const double per_dim = opts_.sigma / std::sqrt(static_cast<double>(opts_.dim) *
                                                       std::max(iv.duration(), opts_.min_duration));
        for (auto &v : e.vector) v += per_dim * n(rng);
        if (e.norm() <= 0.0) e.vector[0] = 1.0;
        return e.normalized();
    }

  private:
    std::vector<SpeakerActivity> activity_;
    std::map<std::string, Embedding> centroids_;
    MockExtractorOptions opts_;
};

/// Pre-computed embeddings keyed by (channel, interval), matched to 1e-6 s.
struct StoredEmbedding {
    int channel = 0;
    TimeInterval interval;
    Embedding embedding;
};

class FileExtractor final : public EmbeddingExtractor {
  public:
    explicit FileExtractor(std::vector<StoredEmbedding> entries) : entries_(std::move(entries)) {}

    Embedding embed(const AudioSignal &, int channel, const TimeInterval &iv) const override {
        for (const auto &e : entries_)
            if (e.channel == channel && std::abs(e.interval.start() - iv.start()) <= 1e-6 &&
                std::abs(e.interval.end() - iv.end()) <= 1e-6)
                return e.embedding.normalized();
        throw DataError("FileExtractor: no embedding for channel " + std::to_string(channel) +
                        " [" + std::to_string(iv.start()) + ", " + std::to_string(iv.end()) + "]");
    }

  private:
    std::vector<StoredEmbedding> entries_;
};

// ─── Sub-segmentation ───────────────────────────────────────────────────────

struct SubSegment {
    int channel = 0;
    TimeInterval interval;
    std::vector<WordToken> words;
    std::optional<std::string> speaker;

    friend bool operator==(const SubSegment &, const SubSegment &) = default;
};

struct ChangeDetectConfig {
    std::size_t context_words = 6;
    double similarity_threshold = 0.2;
    std::size_t min_context = 2;

    void validate() const {
        if (context_words < 1) throw InvalidArgument("ChangeDetectConfig: context_words < 1");
        if (min_context < 1 || min_context > context_words)
            throw InvalidArgument("ChangeDetectConfig: min_context must lie in [1, context_words]");
        if (!(similarity_threshold >= -1.0 && similarity_threshold <= 1.0))
            throw InvalidArgument("ChangeDetectConfig: threshold outside [-1, 1]");
    }
};

namespace detail {

/// Splits `words` after each index in `split_after` (sorted). Intervals run
/// from the first word's start to the last word's end and are clamped so
/// that consecutive pieces never overlap.
inline std::vector<SubSegment> group_words(int channel, const std::vector<WordToken> &words,
                                           const std::vector<std::size_t> &split_after) {
    std::vector<SubSegment> out;
    std::size_t first = 0;
    double floor = 0.0;
    auto emit = [&](std::size_t last) {
        SubSegment s;
        s.channel = channel;
        s.words.assign(words.begin() + static_cast<std::ptrdiff_t>(first),
                       words.begin() + static_cast<std::ptrdiff_t>(last + 1));
        double start = std::max(floor, s.words.front().interval.start());
        double end = s.words.front().interval.end();
        for (const auto &w : s.words) end = std::max(end, w.interval.end());
        end = std::max(start, end);
        s.interval = TimeInterval(start, end);
        floor = end;
        out.push_back(std::move(s));
        first = last + 1;
    };
    for (std::size_t g : split_after)
        if (g + 1 < words.size() && g >= first) emit(g);
    if (first < words.size()) emit(words.size() - 1);
    return out;
}

} // namespace detail

/// The whole VAD segment as a single sub-segment.
inline std::vector<SubSegment> subsegment_none(const SpeakerSegment &seg,
                                               const std::vector<WordToken> &words) {
    return {SubSegment{seg.channel, seg.interval, words, std::nullopt}};
}

/// Equal pieces of `length` seconds from the segment start (the last piece
/// may be shorter). Each word joins the piece it overlaps most; ties go to
/// the earlier piece, and a zero-length word joins the piece holding its
/// midpoint.
inline std::vector<SubSegment> subsegment_uniform(const SpeakerSegment &seg,
                                                  const std::vector<WordToken> &words,
                                                  double length) {
    if (!(length > 0.0)) throw InvalidArgument("subsegment_uniform: length must be positive");
    const double s0 = seg.interval.start();
    const double dur = seg.interval.duration();
    const auto pieces = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(dur / length - 1e-9)));
    std::vector<SubSegment> out(pieces);
    for (std::size_t k = 0; k < pieces; ++k) {
        out[k].channel = seg.channel;
        const double a = s0 + length * static_cast<double>(k);
        const double b = (k + 1 == pieces) ? seg.interval.end()
                                           : s0 + length * static_cast<double>(k + 1);
        out[k].interval = TimeInterval(a, std::max(a, b));
    }
    for (const auto &w : words) {
        std::size_t best = 0;
        double best_o = -1.0;
        for (std::size_t k = 0; k < pieces; ++k) {
            const double o = interval_overlap(w.interval, out[k].interval);
            if (o > best_o) {
                best_o = o;
                best = k;
            }
        }
        if (best_o <= 0.0) {
            const double m = std::clamp(w.interval.midpoint(), s0, seg.interval.end());
            best = std::min(pieces - 1, static_cast<std::size_t>((m - s0) / length));
        }
        out[best].words.push_back(w);
    }
    return out;
}

/// A new sub-segment starts after every sentence-final word.
inline std::vector<SubSegment> subsegment_sentence(const SpeakerSegment &seg,
                                                   const std::vector<WordToken> &words) {
    std::vector<std::size_t> cuts;
    for (std::size_t i = 0; i < words.size(); ++i)
        if (words[i].sentence_final) cuts.push_back(i);
    return detail::group_words(seg.channel, words, cuts);
}

struct GapScore {
    std::size_t gap = 0; ///< between word `gap` and word `gap + 1`
    double score = 0.0;

    friend bool operator==(const GapScore &, const GapScore &) = default;
};

/// Cosine similarity between the mean of up to `context_words` embeddings
/// before each gap and the mean of up to `context_words` after it. Gaps with
/// fewer than `min_context` words on either side are not candidates.
inline std::vector<GapScore> word_change_scores(const std::vector<Embedding> &word_embs,
                                                const ChangeDetectConfig &cfg) {
    cfg.validate();
    std::vector<GapScore> out;
    const std::size_t n = word_embs.size();
    if (n < 2 * cfg.min_context) return out;
    const std::size_t dim = word_embs.front().vector.size();
    for (std::size_t g = 0; g + 1 < n; ++g) {
        const std::size_t left_first = g + 1 > cfg.context_words ? g + 1 - cfg.context_words : 0;
        const std::size_t right_last = std::min(n - 1, g + cfg.context_words);
        const std::size_t nl = g + 1 - left_first, nr = right_last - g;
        if (nl < cfg.min_context || nr < cfg.min_context) continue;
        std::vector<double> left(dim, 0.0), right(dim, 0.0);
        for (std::size_t i = left_first; i <= g; ++i)
            for (std::size_t d = 0; d < dim; ++d) left[d] += word_embs[i].vector[d];
        for (std::size_t i = g + 1; i <= right_last; ++i)
            for (std::size_t d = 0; d < dim; ++d) right[d] += word_embs[i].vector[d];
        out.push_back({g, cosine_similarity(left, right)});
    }
    return out;
}

/// Gaps whose score is below the threshold and is the strict minimum within
/// +/- context_words gaps. Among equal scores the earliest gap wins.
inline std::vector<std::size_t> detect_speaker_changes(const std::vector<GapScore> &scores,
                                                       const ChangeDetectConfig &cfg) {
    cfg.validate();
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto &c = scores[i];
        if (!(c.score < cfg.similarity_threshold)) continue;
        bool minimum = true;
        for (std::size_t j = 0; j < scores.size() && minimum; ++j) {
            if (j == i) continue;
            const auto &o = scores[j];
            const std::size_t dist = o.gap > c.gap ? o.gap - c.gap : c.gap - o.gap;
            if (dist > cfg.context_words) continue;
            if (o.score < c.score || (o.score == c.score && o.gap < c.gap)) minimum = false;
        }
        if (minimum) out.push_back(c.gap);
    }
    return out;
}

/// Splits the words of one segment at speaker changes detected from
/// word-level embeddings. The word embeddings serve segmentation only.
inline std::vector<SubSegment> subsegment_word(const SpeakerSegment &seg,
                                               const std::vector<WordToken> &words,
                                               const AudioSignal &stream,
                                               const EmbeddingExtractor &extractor,
                                               const ChangeDetectConfig &cfg) {
    if (words.empty()) return {};
    std::vector<std::size_t> cuts;
    if (words.size() >= 2 * cfg.min_context) {
        std::vector<Embedding> embs;
        embs.reserve(words.size());
        for (const auto &w : words) embs.push_back(extractor.embed(stream, seg.channel, w.interval));
        cuts = detect_speaker_changes(word_change_scores(embs, cfg), cfg);
    }
    return detail::group_words(seg.channel, words, cuts);
}

/// Sentence split first, then word-level change detection inside each
/// sentence.
inline std::vector<SubSegment> subsegment_sentence_word(const SpeakerSegment &seg,
                                                        const std::vector<WordToken> &words,
                                                        const AudioSignal &stream,
                                                        const EmbeddingExtractor &extractor,
                                                        const ChangeDetectConfig &cfg) {
    std::vector<SubSegment> out;
    double floor = 0.0;
    for (const auto &sentence : subsegment_sentence(seg, words)) {
        for (auto &piece : subsegment_word(seg, sentence.words, stream, extractor, cfg)) {
            const double start = std::max(floor, piece.interval.start());
            piece.interval = TimeInterval(start, std::max(start, piece.interval.end()));
            floor = piece.interval.end();
            out.push_back(std::move(piece));
        }
    }
    return out;
}

// ─── Clustering ─────────────────────────────────────────────────────────────

/// k-means++ on unit-norm embeddings; labels in [0, k).
inline std::vector<std::size_t> cluster_kmeanspp(const std::vector<Embedding> &embeddings,
                                                 std::size_t k, std::uint64_t seed,
                                                 const KMeansOptions &opts = {}) {
    std::vector<Point> points;
    points.reserve(embeddings.size());
    for (const auto &e : embeddings) {
        if (std::abs(e.norm() - 1.0) > 1e-6)
            throw InvalidArgument("cluster_kmeanspp: embeddings must be unit-normalized");
        points.push_back(e.vector);
    }
    if (k == 0) throw InvalidArgument("cluster_kmeanspp: k must be at least 1");
    if (k > points.size())
        throw InvalidArgument("cluster_kmeanspp: k=" + std::to_string(k) + " exceeds " +
                              std::to_string(points.size()) + " embeddings");
    return kmeans(points, k, seed, opts).labels;
}

// ─── Pipeline ───────────────────────────────────────────────────────────────

enum class Scheme { none, uniform2, uniform4, sentence, word, sentence_word };

inline std::string_view to_string(Scheme s) {
    switch (s) {
    case Scheme::none: return "none";
    case Scheme::uniform2: return "uniform-2s";
    case Scheme::uniform4: return "uniform-4s";
    case Scheme::sentence: return "sentence";
    case Scheme::word: return "word";
    case Scheme::sentence_word: return "sentence+word";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view s) {
    for (auto v : {Scheme::none, Scheme::uniform2, Scheme::uniform4, Scheme::sentence,
                   Scheme::word, Scheme::sentence_word})
        if (to_string(v) == s) return v;
    throw InvalidArgument("unknown sub-segmentation scheme '" + std::string(s) +
                          "' (expected none, uniform-2s, uniform-4s, sentence, word, "
                          "sentence+word)");
}

struct DiarizeConfig {
    Scheme scheme = Scheme::sentence_word;
    ChangeDetectConfig change;
    std::size_t k_speakers = 8;
    std::uint64_t seed = 0;
    KMeansOptions kmeans{300, 1e-8, 10};
    unsigned jobs = 1;
};

struct AttributedWord {
    int channel = 0;
    std::string speaker;
    WordToken word;

    friend bool operator==(const AttributedWord &, const AttributedWord &) = default;
};

struct DiarizationResult {
    /// Labeled sub-segments that carried at least one word, in stream order.
    std::vector<SubSegment> subsegments;
    /// Every recognized word with the label of its sub-segment.
    std::vector<AttributedWord> words;

    std::vector<SpeakerSegment> segments() const {
        std::vector<SpeakerSegment> out;
        for (const auto &s : subsegments) out.emplace_back(s.channel, s.interval, *s.speaker);
        return out;
    }
};

inline std::vector<SubSegment> subsegment(Scheme scheme, const SpeakerSegment &seg,
                                          const std::vector<WordToken> &words,
                                          const AudioSignal &stream,
                                          const EmbeddingExtractor &extractor,
                                          const ChangeDetectConfig &cfg) {
    switch (scheme) {
    case Scheme::none: return subsegment_none(seg, words);
    case Scheme::uniform2: return subsegment_uniform(seg, words, 2.0);
    case Scheme::uniform4: return subsegment_uniform(seg, words, 4.0);
    case Scheme::sentence: return subsegment_sentence(seg, words);
    case Scheme::word: return subsegment_word(seg, words, stream, extractor, cfg);
    case Scheme::sentence_word:
        return subsegment_sentence_word(seg, words, stream, extractor, cfg);
    }
    return {};
}

/// Sub-segments every VAD segment, embeds each word-bearing sub-segment on
/// its full interval and clusters the embeddings. When fewer sub-segments
/// than speakers exist, k shrinks to their number.
inline DiarizationResult diarize(const StreamPair &streams,
                                 const std::vector<SpeakerSegment> &vad_segments,
                                 const std::vector<SegmentTranscript> &transcripts,
                                 const EmbeddingExtractor &extractor, const DiarizeConfig &cfg) {
    if (vad_segments.size() != transcripts.size())
        throw InvalidArgument("diarize: " + std::to_string(transcripts.size()) +
                              " transcripts for " + std::to_string(vad_segments.size()) +
                              " segments");
    std::vector<std::vector<SubSegment>> per_segment(vad_segments.size());
    parallel_for(vad_segments.size(), cfg.jobs, [&](std::size_t i) {
        const auto &seg = vad_segments[i];
        per_segment[i] = subsegment(cfg.scheme, seg, transcripts[i].words,
                                    streams.streams[seg.channel], extractor, cfg.change);
    });

    DiarizationResult res;
    for (auto &pieces : per_segment)
        for (auto &p : pieces)
            if (!p.words.empty()) res.subsegments.push_back(std::move(p));
    if (res.subsegments.empty()) return res;

    std::vector<Embedding> embs(res.subsegments.size());
    parallel_for(res.subsegments.size(), cfg.jobs, [&](std::size_t i) {
        const auto &s = res.subsegments[i];
        embs[i] = extractor.embed(streams.streams[s.channel], s.channel, s.interval);
    });
    const std::size_t k = std::min(cfg.k_speakers, embs.size());
    const auto labels = cluster_kmeanspp(embs, k, cfg.seed, cfg.kmeans);
    for (std::size_t i = 0; i < res.subsegments.size(); ++i) {
        auto &s = res.subsegments[i];
        s.speaker = speaker_label(labels[i]);
        for (const auto &w : s.words) res.words.push_back({s.channel, *s.speaker, w});
    }
    return res;
}

} // namespace cssad
