#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace cssad {

// ─── Errors ─────────────────────────────────────────────────────────────────

/// Base of all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Input data (files, annotations, audio) is malformed or inconsistent.
class DataError : public Error {
  public:
    using Error::Error;
};

// ─── Time ───────────────────────────────────────────────────────────────────

/// Closed time span in seconds, 0 <= start <= end.
class TimeInterval {
  public:
    TimeInterval() = default;
    TimeInterval(double start, double end) : start_(start), end_(end) {
        if (!std::isfinite(start) || !std::isfinite(end))
            throw InvalidArgument("TimeInterval: non-finite bound");
        if (start < 0.0)
            throw InvalidArgument("TimeInterval: negative start " +
                                  std::to_string(start));
        if (end < start)
            throw InvalidArgument("TimeInterval: end " + std::to_string(end) +
                                  " before start " + std::to_string(start));
    }

    double start() const noexcept { return start_; }
    double end() const noexcept { return end_; }
    double duration() const noexcept { return end_ - start_; }
    double midpoint() const noexcept { return 0.5 * (start_ + end_); }
    bool contains(double t) const noexcept { return t >= start_ && t <= end_; }

    friend bool operator==(const TimeInterval &, const TimeInterval &) = default;

  private:
    double start_ = 0.0;
    double end_ = 0.0;
};

inline double interval_overlap(const TimeInterval &a, const TimeInterval &b) {
    return std::max(0.0, std::min(a.end(), b.end()) -
                             std::max(a.start(), b.start()));
}

/// Frame index containing time t for a given hop. A relative slack of 1e-9
/// absorbs representation error so that e.g. t=0.3, hop=0.1 maps to 3.
inline std::int64_t seconds_to_frames(double t, double hop) {
    if (!(hop > 0.0) || !std::isfinite(hop))
        throw InvalidArgument("seconds_to_frames: hop must be positive");
    if (!(t >= 0.0) || !std::isfinite(t))
        throw InvalidArgument("seconds_to_frames: time must be >= 0");
    return static_cast<std::int64_t>(std::floor(t / hop + 1e-9));
}

// ─── Audio ──────────────────────────────────────────────────────────────────

/// Mono sample buffer. Samples are float so that the on-disk WAV
/// representation (32-bit float) round-trips exactly.
class AudioSignal {
  public:
    AudioSignal() = default;
    AudioSignal(std::vector<float> samples, int sample_rate)
        : samples_(std::move(samples)), sample_rate_(sample_rate) {
        if (sample_rate_ <= 0)
            throw InvalidArgument("AudioSignal: sample rate must be positive");
        for (float s : samples_)
            if (!std::isfinite(s))
                throw InvalidArgument("AudioSignal: non-finite sample");
    }

    static AudioSignal silence(std::size_t n, int sample_rate) {
        return AudioSignal(std::vector<float>(n, 0.0f), sample_rate);
    }

    std::span<const float> samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    int sample_rate() const noexcept { return sample_rate_; }
    double duration_seconds() const noexcept {
        return sample_rate_ > 0
                   ? static_cast<double>(samples_.size()) / sample_rate_
                   : 0.0;
    }

    /// Sample index for time t, rounded to nearest and clamped to [0, size].
    std::size_t index_of(double t) const noexcept {
        const double i = std::round(t * sample_rate_);
        if (i <= 0.0) return 0;
        return std::min(samples_.size(), static_cast<std::size_t>(i));
    }

    /// Copy of [first, first+count), zero-padded past the end.
    AudioSignal slice(std::size_t first, std::size_t count) const {
        std::vector<float> out(count, 0.0f);
        if (first < samples_.size()) {
            const std::size_t n = std::min(count, samples_.size() - first);
            std::copy_n(samples_.begin() + static_cast<std::ptrdiff_t>(first),
                        n, out.begin());
        }
        return AudioSignal(std::move(out), sample_rate_);
    }

    friend bool operator==(const AudioSignal &, const AudioSignal &) = default;

  private:
    std::vector<float> samples_;
    int sample_rate_ = 16000;
};

// ─── Transcription units ────────────────────────────────────────────────────

inline std::string_view trim(std::string_view s) {
    const auto *ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

struct WordToken {
    std::string text;
    TimeInterval interval;
    bool sentence_final = false;

    WordToken() = default;
    WordToken(std::string text_, TimeInterval interval_, bool final_ = false)
        : text(std::move(text_)), interval(interval_), sentence_final(final_) {
        if (trim(text).empty())
            throw InvalidArgument("WordToken: empty text");
    }

    friend bool operator==(const WordToken &, const WordToken &) = default;
};

/// A reference utterance: one speaker, time-ordered words.
struct Utterance {
    std::string speaker;
    std::vector<WordToken> words;
    TimeInterval interval;

    Utterance() = default;
    Utterance(std::string speaker_, std::vector<WordToken> words_,
              TimeInterval interval_)
        : speaker(std::move(speaker_)), words(std::move(words_)),
          interval(interval_) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (words[i].interval.start() < interval.start() - 1e-9 ||
                words[i].interval.end() > interval.end() + 1e-9)
                throw InvalidArgument("Utterance: word outside interval");
            if (i > 0 && words[i].interval.start() <
                             words[i - 1].interval.start())
                throw InvalidArgument("Utterance: words not sorted");
        }
    }

    friend bool operator==(const Utterance &, const Utterance &) = default;
};

/// Per-frame speech activity; frame i covers [i*hop, (i+1)*hop).
struct ActivityMask {
    double frame_hop = 0.01;
    std::vector<bool> frames;

    ActivityMask() = default;
    ActivityMask(double hop, std::vector<bool> f)
        : frame_hop(hop), frames(std::move(f)) {
        if (!(frame_hop > 0.0))
            throw InvalidArgument("ActivityMask: frame hop must be positive");
    }

    std::size_t size() const noexcept { return frames.size(); }
    std::size_t active_count() const noexcept {
        return static_cast<std::size_t>(
            std::count(frames.begin(), frames.end(), true));
    }

    friend bool operator==(const ActivityMask &, const ActivityMask &) = default;
};

/// A stretch of one CSS output stream, optionally attributed to a speaker.
/// An empty speaker string means "not yet clustered".
struct SpeakerSegment {
    int channel = 0;
    TimeInterval interval;
    std::string speaker;

    SpeakerSegment() = default;
    SpeakerSegment(int channel_, TimeInterval interval_, std::string speaker_ = {})
        : channel(channel_), interval(interval_), speaker(std::move(speaker_)) {
        if (channel != 0 && channel != 1)
            throw InvalidArgument("SpeakerSegment: channel must be 0 or 1");
    }

    friend bool operator==(const SpeakerSegment &, const SpeakerSegment &) = default;
};

inline std::string speaker_label(std::size_t cluster) {
    return "spk" + std::to_string(cluster);
}

// ─── Determinism helpers ────────────────────────────────────────────────────

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Order-sensitive combination of seed material.
template <typename... Ts>
std::uint64_t mix_seed(std::uint64_t seed, Ts... parts) noexcept {
    std::uint64_t h = splitmix64(seed);
    ((h = splitmix64(h ^ static_cast<std::uint64_t>(parts))), ...);
    return h;
}

class Fnv1a {
  public:
    void update(std::span<const std::byte> bytes) noexcept {
        for (auto b : bytes) {
            hash_ ^= static_cast<std::uint64_t>(b);
            hash_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) noexcept {
        update(std::as_bytes(std::span(s.data(), s.size())));
    }
    std::uint64_t digest() const noexcept { return hash_; }

  private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_string(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.digest();
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is
/// processed exactly once; fn must not touch shared mutable state.
inline void parallel_for(std::size_t n, unsigned jobs,
                         const std::function<void(std::size_t)> &fn) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (unsigned w = 0; w < jobs; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += jobs) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace cssad
