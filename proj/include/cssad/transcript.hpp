#pragma once

// Recognizer abstraction: word tokens with absolute timestamps and
// sentence-final flags for every VAD segment of a stream.

#include "cssad/core.hpp"
#include "cssad/css.hpp"
#include "cssad/mixgen.hpp"

#include <random>

namespace cssad {

struct SegmentTranscript {
    int channel = 0;
    TimeInterval segment_interval;
    std::vector<WordToken> words;
    /// Non-empty when the recognizer failed on this segment.
    std::string error;

    friend bool operator==(const SegmentTranscript &, const SegmentTranscript &) = default;
};

inline bool ends_sentence(std::string_view text) {
    text = trim(text);
    if (text.empty()) return false;
    const char c = text.back();
    return c == '.' || c == '?' || c == '!';
}

/// Sentence-final iff the text ends in '.', '?' or '!'. The last word is
/// always sentence-final so that the final sentence is closed.
inline std::vector<WordToken> sentence_flags_from_punct(std::vector<WordToken> words) {
    for (auto &w : words) w.sentence_final = ends_sentence(w.text);
    if (!words.empty()) words.back().sentence_final = true;
    return words;
}

/// Produces the transcript of one VAD segment. Implementations must be
/// deterministic and may be called concurrently.
class Recognizer {
  public:
    virtual ~Recognizer() = default;
    virtual SegmentTranscript transcribe(const AudioSignal &stream,
                                         const SpeakerSegment &segment) const = 0;
};

/// Which output stream carries each reference utterance: the stream whose
/// projection onto the utterance waveform is largest, provided it recovers
/// at least half of the utterance (otherwise -1, the utterance was lost).
inline std::vector<int> attribute_utterances(const MeetingTruth &truth,
                                             const StreamPair &streams) {
    std::vector<int> out(truth.utterances.size(), -1);
    for (std::size_t u = 0; u < truth.utterances.size(); ++u) {
        const auto &ua = truth.utterance_audio[u];
        double norm = 0.0;
        std::array<double, 2> dot{0.0, 0.0};
        for (std::size_t i = 0; i < ua.samples.size(); ++i) {
            const double a = ua.samples[i];
            norm += a * a;
            for (int c = 0; c < 2; ++c) {
                const auto s = streams.streams[c].samples();
                if (ua.offset + i < s.size()) dot[c] += a * s[ua.offset + i];
            }
        }
        if (norm <= 0.0) continue;
        const int best = dot[1] > dot[0] ? 1 : 0;
        if (dot[best] / norm >= 0.5) out[u] = best;
    }
    return out;
}

/// Reference words tagged with the stream that carries them.
struct StreamWord {
    int channel = 0;
    std::string speaker;
    WordToken word;
};

inline std::vector<StreamWord> stream_words(const MeetingTruth &truth,
                                            const std::vector<int> &attribution) {
    std::vector<StreamWord> out;
    for (std::size_t u = 0; u < truth.utterances.size(); ++u) {
        if (attribution[u] < 0) continue;
        for (const auto &w : truth.utterances[u].words)
            out.push_back({attribution[u], truth.utterances[u].speaker, w});
    }
    std::stable_sort(out.begin(), out.end(), [](const StreamWord &a, const StreamWord &b) {
        return a.word.interval.start() < b.word.interval.start();
    });
    return out;
}

inline bool midpoint_in(const TimeInterval &word, const TimeInterval &segment) {
    const double m = word.midpoint();
    return m >= segment.start() && m < segment.end();
}

struct OracleRecognizerOptions {
    double word_drop = 0.0;        ///< probability of deleting a word
    double timestamp_jitter = 0.0; ///< std-dev of boundary noise, seconds
    double punct_drop = 0.0;       ///< probability of losing a sentence mark
    std::uint64_t seed = 0;
};

/// A perfect recognizer reading the reference words carried by each stream,
/// with optional, seeded corruption.
class OracleRecognizer final : public Recognizer {
  public:
    OracleRecognizer(std::vector<StreamWord> words, OracleRecognizerOptions opts = {})
        : words_(std::move(words)), opts_(opts) {}

    SegmentTranscript transcribe(const AudioSignal &,
                                 const SpeakerSegment &segment) const override {
        SegmentTranscript out{segment.channel, segment.interval, {}, {}};
        const auto &iv = segment.interval;
        std::mt19937_64 rng(mix_seed(opts_.seed, static_cast<std::uint64_t>(segment.channel),
                                     static_cast<std::uint64_t>(std::llround(iv.start() * 1e6)),
                                     static_cast<std::uint64_t>(std::llround(iv.end() * 1e6))));
        std::uniform_real_distribution<> coin(0.0, 1.0);
        std::normal_distribution<> jitter(0.0, 1.0);
        for (const auto &sw : words_) {
            if (sw.channel != segment.channel || !midpoint_in(sw.word.interval, iv)) continue;
            WordToken w = sw.word;
            const double u_drop = coin(rng), u_punct = coin(rng);
            const double j0 = jitter(rng), j1 = jitter(rng);
            if (u_drop < opts_.word_drop) continue;
            if (opts_.timestamp_jitter > 0.0) {
                double s = std::clamp(w.interval.start() + opts_.timestamp_jitter * j0,
                                      iv.start(), iv.end());
                double e = std::clamp(w.interval.end() + opts_.timestamp_jitter * j1,
                                      iv.start(), iv.end());
                if (e < s) std::swap(s, e);
                w.interval = TimeInterval(s, e);
            }
            if (u_punct < opts_.punct_drop)
                while (!w.text.empty() && ends_sentence(w.text)) w.text.pop_back();
            if (trim(w.text).empty()) continue;
            out.words.push_back(std::move(w));
        }
        std::stable_sort(out.words.begin(), out.words.end(),
                         [](const WordToken &a, const WordToken &b) {
                             return a.interval.start() < b.interval.start();
                         });
        out.words = sentence_flags_from_punct(std::move(out.words));
        return out;
    }

  private:
    std::vector<StreamWord> words_;
    OracleRecognizerOptions opts_;
};

/// Serves transcripts produced out-of-band: every stored word on the
/// segment's channel whose midpoint falls inside the segment.
class FileRecognizer final : public Recognizer {
  public:
    explicit FileRecognizer(std::vector<SegmentTranscript> transcripts)
        : transcripts_(std::move(transcripts)) {}

    SegmentTranscript transcribe(const AudioSignal &,
                                 const SpeakerSegment &segment) const override {
        SegmentTranscript out{segment.channel, segment.interval, {}, {}};
        for (const auto &t : transcripts_) {
            if (t.channel != segment.channel) continue;
            for (const auto &w : t.words)
                if (midpoint_in(w.interval, segment.interval)) out.words.push_back(w);
        }
        std::stable_sort(out.words.begin(), out.words.end(),
                         [](const WordToken &a, const WordToken &b) {
                             return a.interval.start() < b.interval.start();
                         });
        out.words = sentence_flags_from_punct(std::move(out.words));
        return out;
    }

  private:
    std::vector<SegmentTranscript> transcripts_;
};

/// One transcript per segment. A recognizer exception is recorded on the
/// affected segment and does not abort the others.
inline std::vector<SegmentTranscript> transcribe_segments(const StreamPair &streams,
                                                          const std::vector<SpeakerSegment> &segments,
                                                          const Recognizer &rec,
                                                          unsigned jobs = 1) {
    std::vector<SegmentTranscript> out(segments.size());
    parallel_for(segments.size(), jobs, [&](std::size_t i) {
        const auto &seg = segments[i];
        try {
            if (seg.channel < 0 || seg.channel > 1)
                throw InvalidArgument("segment references stream " + std::to_string(seg.channel));
            out[i] = rec.transcribe(streams.streams[seg.channel], seg);
        } catch (const std::exception &e) {
            out[i] = SegmentTranscript{seg.channel, seg.interval, {}, e.what()};
        }
    });
    return out;
}

} // namespace cssad
