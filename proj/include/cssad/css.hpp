#pragma once

// Continuous speech separation driver.
//
// A recording is cut into overlapping windows, each window goes through a
// two-output separator, and the outputs are stitched back into two
// continuous streams. Separators emit their channels in arbitrary order, so
// every window is aligned to its (already aligned) predecessor by comparing
// the shared region under both channel orders.

#include "cssad/core.hpp"
#include "cssad/mixgen.hpp"

#include <array>
#include <memory>

namespace cssad {

enum class StitchMode {
    crossfade, ///< linear ramp across the whole shared region
    midpoint,  ///< hard cut in the middle of the shared region
};

struct CssConfig {
    double segment_length = 4.0;
    double segment_shift = 2.0;
    StitchMode stitch = StitchMode::crossfade;

    void validate() const {
        if (!(segment_shift > 0.0 && segment_shift < segment_length))
            throw InvalidArgument("CssConfig: require 0 < segment_shift < segment_length");
    }
    std::size_t length_samples(int sr) const {
        return static_cast<std::size_t>(std::llround(segment_length * sr));
    }
    std::size_t shift_samples(int sr) const {
        return static_cast<std::size_t>(std::llround(segment_shift * sr));
    }
};

/// One analysis window. `audio` always has the full window length; the last
/// window is zero-padded and `valid` counts the samples inside the recording.
struct UniformSegment {
    std::size_t index = 0;
    TimeInterval interval;
    std::size_t offset = 0;
    std::size_t valid = 0;
    AudioSignal audio;
};

struct SeparatedSegment {
    std::size_t index = 0;
    TimeInterval interval;
    std::size_t offset = 0;
    std::size_t valid = 0;
    std::array<AudioSignal, 2> channels;
};

struct StreamPair {
    std::array<AudioSignal, 2> streams;

    std::size_t size() const noexcept { return streams[0].size(); }
    friend bool operator==(const StreamPair &, const StreamPair &) = default;
};

inline std::vector<UniformSegment> segment_uniform(const AudioSignal &signal,
                                                   const CssConfig &cfg) {
    cfg.validate();
    if (signal.empty()) throw InvalidArgument("segment_uniform: empty signal");
    const int sr = signal.sample_rate();
    const std::size_t L = cfg.length_samples(sr);
    const std::size_t S = cfg.shift_samples(sr);
    const std::size_t N = signal.size();
    std::size_t count = 1;
    if (N > L) count += (N - L + S - 1) / S;

    std::vector<UniformSegment> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        UniformSegment seg;
        seg.index = k;
        seg.offset = k * S;
        seg.valid = std::min(L, N - seg.offset);
        seg.interval = TimeInterval(static_cast<double>(seg.offset) / sr,
                                    static_cast<double>(seg.offset + seg.valid) / sr);
        seg.audio = signal.slice(seg.offset, L);
        out.push_back(std::move(seg));
    }
    return out;
}

enum class Permutation { identity, swap };

namespace detail {

inline double mse(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

} // namespace detail

/// Channel order for `cur` that best matches `prev` on their shared region:
/// the last `overlap` seconds of prev against the first `overlap` seconds of
/// cur, scored as the sum over channels of the per-sample mean squared error.
/// Equal scores resolve to identity.
inline Permutation align_permutation(const SeparatedSegment &prev,
                                     const SeparatedSegment &cur, double overlap) {
    const int sr = prev.channels[0].sample_rate();
    const auto ov = static_cast<std::size_t>(std::llround(overlap * sr));
    if (ov == 0) throw InvalidArgument("align_permutation: zero-length overlap");
    const std::size_t plen = prev.channels[0].size();
    if (ov > plen || ov > cur.channels[0].size())
        throw InvalidArgument("align_permutation: overlap longer than segment");

    auto tail = [&](int c) { return prev.channels[c].samples().subspan(plen - ov, ov); };
    auto head = [&](int c) { return cur.channels[c].samples().first(ov); };
    const double keep = detail::mse(tail(0), head(0)) + detail::mse(tail(1), head(1));
    const double swap = detail::mse(tail(0), head(1)) + detail::mse(tail(1), head(0));
    return swap < keep ? Permutation::swap : Permutation::identity;
}

inline StreamPair stitch(const std::vector<SeparatedSegment> &segments,
                         const CssConfig &cfg) {
    cfg.validate();
    if (segments.empty()) throw InvalidArgument("stitch: no segments");
    const int sr = segments.front().channels[0].sample_rate();
    const std::size_t L = cfg.length_samples(sr);
    const std::size_t S = cfg.shift_samples(sr);
    for (std::size_t k = 0; k < segments.size(); ++k) {
        const auto &s = segments[k];
        if (s.index != k || s.offset != k * S)
            throw InvalidArgument("stitch: segment " + std::to_string(k) +
                                  " is not contiguous with its predecessor");
        if (s.channels[0].size() != L || s.channels[1].size() != L)
            throw InvalidArgument("stitch: segment " + std::to_string(k) +
                                  " has wrong channel length");
    }
    const std::size_t n = segments.size();
    const std::size_t total = segments.back().offset + segments.back().valid;
    const std::size_t ov = L - S;

    // Weight of segment k at local sample j: rising ramp over the region
    // shared with k-1, falling ramp over the region shared with k+1.
    auto ramp = [&](std::size_t j) -> double {
        if (cfg.stitch == StitchMode::midpoint) return 2 * j >= ov ? 1.0 : 0.0;
        return (static_cast<double>(j) + 0.5) / static_cast<double>(ov);
    };
    auto weight = [&](std::size_t k, std::size_t j) {
        double w = 1.0;
        if (k > 0 && j < ov) w *= ramp(j);
        if (k + 1 < n && j >= S) w *= 1.0 - ramp(j - S);
        return w;
    };

    std::array<std::vector<double>, 2> acc{std::vector<double>(total, 0.0),
                                           std::vector<double>(total, 0.0)};
    std::array<std::vector<double>, 2> plain{std::vector<double>(total, 0.0),
                                             std::vector<double>(total, 0.0)};
    std::vector<double> wsum(total, 0.0);
    std::vector<std::size_t> cover(total, 0);

    SeparatedSegment aligned_prev;
    for (std::size_t k = 0; k < n; ++k) {
        SeparatedSegment cur = segments[k];
        if (k > 0 && align_permutation(aligned_prev, cur, static_cast<double>(ov) / sr) ==
                         Permutation::swap)
            std::swap(cur.channels[0], cur.channels[1]);
        const std::size_t limit = std::min(L, total - cur.offset);
        for (std::size_t j = 0; j < limit; ++j) {
            const double w = weight(k, j);
            const std::size_t t = cur.offset + j;
            for (int c = 0; c < 2; ++c) {
                const double x = cur.channels[c].samples()[j];
                acc[c][t] += w * x;
                plain[c][t] += x;
            }
            wsum[t] += w;
            ++cover[t];
        }
        aligned_prev = std::move(cur);
    }

    StreamPair out;
    for (int c = 0; c < 2; ++c) {
        std::vector<float> s(total);
        for (std::size_t t = 0; t < total; ++t) {
            // Weights sum to one wherever at most two windows meet; denser
            // windowing falls back to normalization, or to a plain mean where
            // a midpoint cut leaves every weight at zero.
            const double v = wsum[t] > 0.0 ? acc[c][t] / wsum[t]
                                           : plain[c][t] / static_cast<double>(cover[t]);
            s[t] = static_cast<float>(v);
        }
        out.streams[c] = AudioSignal(std::move(s), sr);
    }
    return out;
}

/// Context handed to a separator along with each window.
struct SegmentContext {
    std::size_t index = 0;
    TimeInterval interval;
    std::size_t offset = 0;
};

/// Two-output separator applied to one window. Implementations must be
/// deterministic and may be called concurrently.
class Separator {
  public:
    virtual ~Separator() = default;
    virtual std::array<AudioSignal, 2> separate(const AudioSignal &segment,
                                                const SegmentContext &ctx) const = 0;
};

/// No separation: channel 0 carries the input, channel 1 is silent.
class PassthroughSeparator final : public Separator {
  public:
    std::array<AudioSignal, 2> separate(const AudioSignal &segment,
                                        const SegmentContext &) const override {
        return {segment, AudioSignal::silence(segment.size(), segment.sample_rate())};
    }
};

/// Greedy two-colouring of utterances in start order. A speaker keeps the
/// channel of its previous utterance when that channel is free; otherwise
/// the lowest free channel is used. Throws if three utterances are active
/// at once.
inline std::vector<int> assign_oracle_channels(const std::vector<Utterance> &utterances) {
    std::vector<std::size_t> order(utterances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return utterances[a].interval.start() < utterances[b].interval.start();
    });
    std::array<double, 2> busy_until{-1.0, -1.0};
    std::array<std::string, 2> last_speaker;
    std::vector<int> channel(utterances.size(), 0);
    for (std::size_t u : order) {
        const auto &utt = utterances[u];
        const double start = utt.interval.start() + 1e-9;
        int chosen = -1;
        for (int c = 0; c < 2; ++c)
            if (busy_until[c] <= start && last_speaker[c] == utt.speaker) chosen = c;
        if (chosen < 0)
            chosen = busy_until[0] <= start ? 0 : (busy_until[1] <= start ? 1 : -1);
        if (chosen < 0)
            throw DataError("oracle separation: more than two speakers active at " +
                            std::to_string(utt.interval.start()) + " s");
        channel[u] = chosen;
        busy_until[chosen] = utt.interval.end();
        last_speaker[chosen] = utt.speaker;
    }
    return channel;
}

/// Emits the ground-truth utterances packed onto two channels. With a
/// scramble seed, each window's channel order is flipped pseudo-randomly,
/// emulating the permutation ambiguity of a real separator.
class OracleSeparator final : public Separator {
  public:
    explicit OracleSeparator(const MeetingTruth &truth,
                             std::optional<std::uint64_t> scramble_seed = std::nullopt)
        : channel_of_(assign_oracle_channels(truth.utterances)), scramble_(scramble_seed) {
        const std::size_t n = truth.mixture.size();
        std::array<std::vector<float>, 2> ch{std::vector<float>(n, 0.0f),
                                             std::vector<float>(n, 0.0f)};
        for (std::size_t u = 0; u < truth.utterances.size(); ++u) {
            const auto &ua = truth.utterance_audio[u];
            auto &dst = ch[channel_of_[u]];
            for (std::size_t i = 0; i < ua.samples.size(); ++i)
                dst[ua.offset + i] += ua.samples[i];
        }
        for (int c = 0; c < 2; ++c)
            channels_[c] = AudioSignal(std::move(ch[c]), truth.sample_rate());
    }

    std::array<AudioSignal, 2> separate(const AudioSignal &segment,
                                        const SegmentContext &ctx) const override {
        std::array<AudioSignal, 2> out{channels_[0].slice(ctx.offset, segment.size()),
                                       channels_[1].slice(ctx.offset, segment.size())};
        if (scramble_ && (mix_seed(*scramble_, ctx.index) & 1U))
            std::swap(out[0], out[1]);
        return out;
    }

    const std::vector<int> &channel_of_utterance() const noexcept { return channel_of_; }
    const std::array<AudioSignal, 2> &channels() const noexcept { return channels_; }

  private:
    std::vector<int> channel_of_;
    std::array<AudioSignal, 2> channels_;
    std::optional<std::uint64_t> scramble_;
};

/// Replays streams computed elsewhere (e.g. by an external separator).
class PrecomputedSeparator final : public Separator {
  public:
    explicit PrecomputedSeparator(StreamPair streams) : streams_(std::move(streams)) {}

    std::array<AudioSignal, 2> separate(const AudioSignal &segment,
                                        const SegmentContext &ctx) const override {
        return {streams_.streams[0].slice(ctx.offset, segment.size()),
                streams_.streams[1].slice(ctx.offset, segment.size())};
    }

  private:
    StreamPair streams_;
};

/// segment_uniform -> separate (independently per window) -> stitch.
inline StreamPair run_css(const AudioSignal &signal, const Separator &sep,
                          const CssConfig &cfg, unsigned jobs = 1) {
    auto windows = segment_uniform(signal, cfg);
    std::vector<SeparatedSegment> separated(windows.size());
    parallel_for(windows.size(), jobs, [&](std::size_t k) {
        const auto &w = windows[k];
        auto &s = separated[k];
        s.index = w.index;
        s.interval = w.interval;
        s.offset = w.offset;
        s.valid = w.valid;
        s.channels = sep.separate(w.audio, {w.index, w.interval, w.offset});
        for (const auto &c : s.channels)
            if (c.size() != w.audio.size())
                throw DataError("separator returned " + std::to_string(c.size()) +
                                " samples for a window of " +
                                std::to_string(w.audio.size()));
    });
    return stitch(separated, cfg);
}

} // namespace cssad
