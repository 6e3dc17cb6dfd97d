#pragma once

// Synthetic meeting generator with exact ground truth.
//
// Each speaker owns a narrowband signature (three partials plus a little
// white noise) so that oracle separation and mock embeddings are well
// defined. Utterances are laid out sequentially; every transition between
// consecutive utterances is either an overlap or a short silence, and the
// overlap amounts are budgeted so that the realized ratio
//     overlapped time / speech time
// lands near the requested target.

#include "cssad/core.hpp"

#include <array>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

namespace cssad {

struct MixSpec {
    std::size_t num_speakers = 2;
    std::size_t num_utterances = 2;
    double overlap_ratio_target = 0.0;
    std::pair<double, double> utterance_duration_range{2.0, 6.0};
    std::uint64_t seed = 0;

    int sample_rate = 16000;
    std::string session_id = "meeting";
    /// Enforce the CSS assumption: never more than two active speakers.
    bool two_speaker_limit = true;
    /// Silence inserted between non-overlapping utterances, seconds.
    std::pair<double, double> gap_range{0.1, 1.0};
    double word_length = 0.3;
    std::pair<std::size_t, std::size_t> sentence_words{3, 10};

    void validate() const {
        if (num_speakers == 0 || num_utterances == 0)
            throw InvalidArgument("MixSpec: need at least one speaker and utterance");
        if (!(overlap_ratio_target >= 0.0 && overlap_ratio_target <= 0.4))
            throw InvalidArgument("MixSpec: overlap target must lie in [0, 0.4]");
        const auto [lo, hi] = utterance_duration_range;
        if (!(lo > 0.0 && hi >= lo))
            throw InvalidArgument("MixSpec: invalid utterance duration range");
        if (!(gap_range.first >= 0.0 && gap_range.second >= gap_range.first))
            throw InvalidArgument("MixSpec: invalid gap range");
        if (!(word_length > 0.0) || sample_rate <= 0)
            throw InvalidArgument("MixSpec: word length and sample rate must be positive");
        if (sentence_words.first == 0 || sentence_words.second < sentence_words.first)
            throw InvalidArgument("MixSpec: invalid sentence length range");
        if (overlap_ratio_target > 0.0 && (num_speakers < 2 || num_utterances < 2))
            throw InvalidArgument(
                "MixSpec: overlap target unreachable with fewer than two "
                "speakers or utterances");
    }
};

/// Waveform of one utterance placed at a sample offset of the meeting.
struct UtteranceAudio {
    std::size_t offset = 0;
    std::vector<float> samples;

    friend bool operator==(const UtteranceAudio &, const UtteranceAudio &) = default;
};

struct MeetingTruth {
    std::string session_id;
    /// Speaker labels; source i belongs to speakers[i].
    std::vector<std::string> speakers;
    /// Sorted by start time.
    std::vector<Utterance> utterances;
    /// Parallel to `utterances`.
    std::vector<UtteranceAudio> utterance_audio;
    AudioSignal mixture;

    std::size_t num_speakers() const noexcept { return speakers.size(); }
    int sample_rate() const noexcept { return mixture.sample_rate(); }

    std::size_t speaker_index(std::string_view label) const {
        for (std::size_t i = 0; i < speakers.size(); ++i)
            if (speakers[i] == label) return i;
        throw DataError("unknown speaker '" + std::string(label) + "'");
    }

    /// Speaker's source signal on the meeting timeline (mixture length).
    AudioSignal source(std::size_t speaker) const {
        std::vector<float> out(mixture.size(), 0.0f);
        for (std::size_t u = 0; u < utterances.size(); ++u) {
            if (speaker_index(utterances[u].speaker) != speaker) continue;
            const auto &ua = utterance_audio[u];
            for (std::size_t i = 0; i < ua.samples.size(); ++i)
                out[ua.offset + i] += ua.samples[i];
        }
        return AudioSignal(std::move(out), mixture.sample_rate());
    }

    std::vector<AudioSignal> sources() const {
        std::vector<AudioSignal> out;
        out.reserve(speakers.size());
        for (std::size_t s = 0; s < speakers.size(); ++s) out.push_back(source(s));
        return out;
    }

    friend bool operator==(const MeetingTruth &, const MeetingTruth &) = default;
};

/// Rebuilds the mixture-consistent truth from separately stored parts
/// (used when loading a meeting from disk). Utterance audio is sliced from
/// the matching source on the utterance's sample span.
inline MeetingTruth assemble_truth(std::string session_id,
                                   std::vector<std::string> speakers,
                                   std::vector<Utterance> utterances,
                                   const std::vector<AudioSignal> &sources,
                                   AudioSignal mixture) {
    if (sources.size() != speakers.size())
        throw DataError("assemble_truth: " + std::to_string(sources.size()) +
                        " sources for " + std::to_string(speakers.size()) +
                        " speakers");
    MeetingTruth t;
    t.session_id = std::move(session_id);
    t.speakers = std::move(speakers);
    std::stable_sort(utterances.begin(), utterances.end(),
                     [](const Utterance &a, const Utterance &b) {
                         return a.interval.start() < b.interval.start();
                     });
    t.utterances = std::move(utterances);
    t.mixture = std::move(mixture);
    for (const auto &u : t.utterances) {
        const auto &src = sources[t.speaker_index(u.speaker)];
        if (src.size() != t.mixture.size())
            throw DataError("assemble_truth: source length differs from mixture");
        const std::size_t a = src.index_of(u.interval.start());
        const std::size_t b = src.index_of(u.interval.end());
        const auto s = src.samples().subspan(a, b - a);
        t.utterance_audio.push_back({a, std::vector<float>(s.begin(), s.end())});
    }
    return t;
}

/// Overlapped-speech time divided by total speech time, from the annotation.
inline double measure_overlap_ratio(const std::vector<Utterance> &utterances) {
    if (utterances.empty())
        throw DataError("measure_overlap_ratio: empty meeting");
    std::vector<std::pair<double, int>> events;
    events.reserve(2 * utterances.size());
    for (const auto &u : utterances) {
        events.emplace_back(u.interval.start(), +1);
        events.emplace_back(u.interval.end(), -1);
    }
    std::sort(events.begin(), events.end());
    double speech = 0.0, overlapped = 0.0, last = events.front().first;
    int active = 0;
    for (const auto &[t, delta] : events) {
        const double dt = t - last;
        if (active >= 1) speech += dt;
        if (active >= 2) overlapped += dt;
        active += delta;
        last = t;
    }
    if (speech <= 0.0)
        throw DataError("measure_overlap_ratio: meeting contains no speech");
    return overlapped / speech;
}

inline double measure_overlap_ratio(const MeetingTruth &truth) {
    return measure_overlap_ratio(truth.utterances);
}

/// Largest number of simultaneously active utterances, sampled on a grid.
inline std::size_t max_active_speakers(const std::vector<Utterance> &utterances,
                                       double resolution = 0.01) {
    double end = 0.0;
    for (const auto &u : utterances) end = std::max(end, u.interval.end());
    std::size_t best = 0;
    for (double t = 0.5 * resolution; t < end; t += resolution) {
        std::size_t n = 0;
        for (const auto &u : utterances)
            if (u.interval.start() < t && t < u.interval.end()) ++n;
        best = std::max(best, n);
    }
    return best;
}

namespace detail {

inline constexpr std::array<std::string_view, 48> kVocabulary{
    "meeting", "today",  "project", "budget",  "plan",    "review",
    "design",  "team",   "report",  "update",  "deadline", "client",
    "data",    "model",  "result",  "question", "answer", "issue",
    "release", "test",   "server",  "schedule", "idea",   "point",
    "agree",   "think",  "need",    "start",   "finish",  "discuss",
    "check",   "send",   "write",   "read",    "build",   "move",
    "good",    "new",    "next",    "last",    "small",   "large",
    "we",      "you",    "they",    "it",      "the",     "and"};

struct SpeakerVoice {
    std::array<double, 3> freqs{};
    std::array<double, 3> weights{};
    double gain = 0.5;
};

inline SpeakerVoice make_voice(std::uint64_t seed, std::size_t speaker) {
    std::mt19937_64 rng(mix_seed(seed, 0x766f696365ULL, speaker));
    // Disjoint frequency bands keep signatures of different speakers
    // nearly orthogonal over any window of a few hundred samples.
    SpeakerVoice v;
    for (std::size_t k = 0; k < 3; ++k) {
        const double band = 150.0 + 200.0 * static_cast<double>(speaker % 12) +
                            2600.0 * static_cast<double>(k);
        v.freqs[k] = band + std::uniform_real_distribution<>(10.0, 180.0)(rng);
        v.weights[k] = std::uniform_real_distribution<>(0.5, 1.0)(rng);
    }
    v.gain = std::uniform_real_distribution<>(0.3, 0.8)(rng);
    return v;
}

inline std::vector<float> synthesize(const SpeakerVoice &voice,
                                     std::size_t length, std::size_t n_words,
                                     int sample_rate, std::mt19937_64 &rng) {
    std::vector<float> out(length);
    std::array<double, 3> phase{};
    for (auto &p : phase)
        p = std::uniform_real_distribution<>(0.0, 2.0 * std::numbers::pi)(rng);
    std::normal_distribution<> noise(0.0, 0.02);
    const double wsum = voice.weights[0] + voice.weights[1] + voice.weights[2];
    const double word_len = static_cast<double>(length) / static_cast<double>(n_words);
    for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k)
            s += voice.weights[k] *
                 std::sin(2.0 * std::numbers::pi * voice.freqs[k] * t + phase[k]);
        const double pos = std::fmod(static_cast<double>(i), word_len) / word_len;
        const double env = 0.6 + 0.4 * std::sin(std::numbers::pi * pos);
        out[i] = static_cast<float>(voice.gain * (env * s / wsum + noise(rng)));
    }
    return out;
}

inline std::vector<WordToken> synthesize_words(const MixSpec &spec, double start,
                                               double end, std::size_t n_words,
                                               std::mt19937_64 &rng) {
    std::vector<WordToken> words;
    words.reserve(n_words);
    std::uniform_int_distribution<std::size_t> pick(0, kVocabulary.size() - 1);
    std::uniform_int_distribution<std::size_t> sentence_len(
        spec.sentence_words.first, spec.sentence_words.second);
    std::bernoulli_distribution question(0.2);
    std::size_t until_boundary = sentence_len(rng);
    const double step = (end - start) / static_cast<double>(n_words);
    for (std::size_t w = 0; w < n_words; ++w) {
        const double ws = start + step * static_cast<double>(w);
        const double we = (w + 1 == n_words) ? end : start + step * static_cast<double>(w + 1);
        std::string text(kVocabulary[pick(rng)]);
        const bool is_final = (--until_boundary == 0) || (w + 1 == n_words);
        if (is_final) {
            text += question(rng) ? "?" : ".";
            until_boundary = sentence_len(rng);
        }
        words.emplace_back(std::move(text), TimeInterval(ws, we), is_final);
    }
    return words;
}

} // namespace detail

/// Deterministic in `spec.seed`. Throws InvalidArgument when the spec is
/// malformed or the requested overlap ratio cannot be realized within
/// +/-0.1 absolute.
inline MeetingTruth generate_meeting(const MixSpec &spec) {
    spec.validate();
    const int sr = spec.sample_rate;
    const std::size_t U = spec.num_utterances;
    std::mt19937_64 rng(mix_seed(spec.seed, 0x6d6978ULL));

    // Durations, quantized to whole samples.
    std::vector<std::size_t> length(U);
    std::uniform_real_distribution<> dur(spec.utterance_duration_range.first,
                                         spec.utterance_duration_range.second);
    double total_speech = 0.0;
    for (auto &l : length) {
        l = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dur(rng) * sr)));
        total_speech += static_cast<double>(l) / sr;
    }

    // Transition kinds and overlap weights.
    const double R = spec.overlap_ratio_target;
    std::vector<bool> overlapped(U > 0 ? U - 1 : 0, false);
    std::vector<double> weight(overlapped.size(), 0.0);
    double weight_left = 0.0;
    if (R > 0.0) {
        std::bernoulli_distribution overlap_coin(std::min(1.0, 0.3 + 1.5 * R));
        std::uniform_real_distribution<> w(0.5, 1.5);
        for (std::size_t t = 0; t < overlapped.size(); ++t) {
            overlapped[t] = overlap_coin(rng);
            weight[t] = w(rng);
        }
        if (std::find(overlapped.begin(), overlapped.end(), true) == overlapped.end())
            overlapped[0] = true;
        for (std::size_t t = 0; t < overlapped.size(); ++t)
            if (overlapped[t]) weight_left += weight[t];
    }
    double budget = R * total_speech / (1.0 + R);

    // Placement and speaker sequence.
    std::vector<std::size_t> offset(U, 0), speaker(U, 0);
    std::vector<std::size_t> order(spec.num_speakers);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<> gap(spec.gap_range.first, spec.gap_range.second);
    offset[0] = static_cast<std::size_t>(std::llround(
        std::uniform_real_distribution<>(0.2, 1.0)(rng) * sr));
    speaker[0] = order[0];
    for (std::size_t i = 1; i < U; ++i) {
        const std::size_t prev_end = offset[i - 1] + length[i - 1];
        const std::size_t t = i - 1;
        std::size_t start;
        if (overlapped[t]) {
            const double desired = budget * weight[t] / weight_left;
            std::size_t floor_start = offset[i - 1];
            if (spec.two_speaker_limit && i >= 2)
                floor_start = std::max(floor_start, offset[i - 2] + length[i - 2]);
            const double cap = 0.9 * static_cast<double>(
                std::min(length[i], prev_end - std::min(prev_end, floor_start)));
            const auto ov = static_cast<std::size_t>(
                std::llround(std::min(desired * sr, cap)));
            budget -= static_cast<double>(ov) / sr;
            weight_left -= weight[t];
            start = prev_end - ov;
        } else {
            start = prev_end + static_cast<std::size_t>(std::llround(gap(rng) * sr));
        }
        offset[i] = start;

        // A speaker may not overlap itself: exclude everyone still active.
        std::vector<std::size_t> candidates;
        for (std::size_t s = 0; s < spec.num_speakers; ++s) {
            bool busy = false;
            for (std::size_t j = 0; j < i; ++j)
                if (speaker[j] == s && offset[j] + length[j] > start) busy = true;
            if (s == speaker[i - 1]) busy = true;
            if (!busy) candidates.push_back(s);
        }
        if (i < spec.num_speakers &&
            std::find(candidates.begin(), candidates.end(), order[i]) != candidates.end()) {
            speaker[i] = order[i];
        } else if (candidates.empty()) {
            throw InvalidArgument("generate_meeting: not enough speakers for overlap pattern");
        } else {
            speaker[i] = candidates[std::uniform_int_distribution<std::size_t>(
                0, candidates.size() - 1)(rng)];
        }
    }

    MeetingTruth truth;
    truth.session_id = spec.session_id;
    for (std::size_t s = 0; s < spec.num_speakers; ++s)
        truth.speakers.push_back("S" + std::to_string(s));

    std::size_t total = 0;
    for (std::size_t i = 0; i < U; ++i) total = std::max(total, offset[i] + length[i]);
    total += static_cast<std::size_t>(std::llround(0.5 * sr));

    std::vector<detail::SpeakerVoice> voices;
    for (std::size_t s = 0; s < spec.num_speakers; ++s)
        voices.push_back(detail::make_voice(spec.seed, s));

    std::vector<float> mix(total, 0.0f);
    for (std::size_t i = 0; i < U; ++i) {
        const double start = static_cast<double>(offset[i]) / sr;
        const double end = static_cast<double>(offset[i] + length[i]) / sr;
        const auto n_words = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround((end - start) / spec.word_length)));
        auto words = detail::synthesize_words(spec, start, end, n_words, rng);
        auto samples = detail::synthesize(voices[speaker[i]], length[i], n_words, sr, rng);
        truth.utterances.emplace_back(truth.speakers[speaker[i]], std::move(words),
                                      TimeInterval(start, end));
        truth.utterance_audio.push_back({offset[i], std::move(samples)});
    }
    // Sum in utterance order; sources() reproduces the same order per speaker.
    for (const auto &ua : truth.utterance_audio)
        for (std::size_t k = 0; k < ua.samples.size(); ++k)
            mix[ua.offset + k] += ua.samples[k];
    truth.mixture = AudioSignal(std::move(mix), sr);

    if (R > 0.0) {
        const double realized = measure_overlap_ratio(truth);
        if (std::abs(realized - R) > 0.1)
            throw InvalidArgument("generate_meeting: overlap target " +
                                  std::to_string(R) + " unreachable (realized " +
                                  std::to_string(realized) + ")");
    }
    return truth;
}

} // namespace cssad
