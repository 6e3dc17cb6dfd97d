#pragma once

// Energy VAD with morphological smoothing.
//
// Frame energies are computed in the time domain (equal to the STFT-domain
// energy by Parseval). Frames within `threshold_db_below_max` of the loudest
// frame are active. Short gaps are closed and every run is then widened on
// both sides so that speech activity is deliberately over-estimated.

#include "cssad/core.hpp"

namespace cssad {

struct VadConfig {
    double frame_length = 0.025;
    double frame_hop = 0.010;
    double threshold_db_below_max = 40.0;
    double closing_gap = 0.5;
    double boundary_extension = 0.4;

    void validate() const {
        if (!(frame_length > 0.0 && frame_hop > 0.0 && threshold_db_below_max > 0.0 &&
              closing_gap > 0.0 && boundary_extension > 0.0))
            throw InvalidArgument("VadConfig: all parameters must be positive");
        if (frame_hop > frame_length)
            throw InvalidArgument("VadConfig: frame_hop must not exceed frame_length");
    }
};

inline constexpr double kEnergyFloor = 1e-12;

/// Per-frame energy in dB, 10*log10(sum x^2 + 1e-12). Frame count is
/// ceil((len - frame_length) / hop) + 1; a trailing partial frame is
/// zero-padded.
inline std::vector<double> frame_energy(const AudioSignal &signal, const VadConfig &cfg) {
    cfg.validate();
    if (signal.empty()) throw InvalidArgument("frame_energy: empty signal");
    const int sr = signal.sample_rate();
    const auto flen = static_cast<std::size_t>(std::llround(cfg.frame_length * sr));
    const auto hop = static_cast<std::size_t>(std::llround(cfg.frame_hop * sr));
    if (flen == 0 || hop == 0)
        throw InvalidArgument("frame_energy: frame shorter than one sample");
    const std::size_t n = signal.size();
    std::size_t frames = 1;
    if (n > flen) frames += (n - flen + hop - 1) / hop;

    const auto x = signal.samples();
    std::vector<double> out(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t a = f * hop;
        const std::size_t b = std::min(n, a + flen);
        double e = 0.0;
        for (std::size_t i = a; i < b; ++i) e += static_cast<double>(x[i]) * x[i];
        out[f] = 10.0 * std::log10(e + kEnergyFloor);
    }
    return out;
}

/// A frame is active iff its energy exceeds (max energy - threshold).
inline ActivityMask threshold_activity(std::span<const double> energy,
                                       const VadConfig &cfg) {
    if (energy.empty()) throw InvalidArgument("threshold_activity: no frames");
    const double floor = *std::max_element(energy.begin(), energy.end()) -
                         cfg.threshold_db_below_max;
    std::vector<bool> frames(energy.size());
    for (std::size_t i = 0; i < energy.size(); ++i) frames[i] = energy[i] > floor;
    return ActivityMask(cfg.frame_hop, std::move(frames));
}

/// Maximal runs of active frames as [first, last] frame index pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> active_runs(const ActivityMask &mask) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    const auto &f = mask.frames;
    for (std::size_t i = 0; i < f.size();) {
        if (!f[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < f.size() && f[j + 1]) ++j;
        runs.emplace_back(i, j);
        i = j + 1;
    }
    return runs;
}

/// Morphological closing: fills interior gaps of at most `gap` seconds.
inline ActivityMask close_gaps(const ActivityMask &mask, double gap) {
    const auto max_gap = static_cast<std::size_t>(std::llround(gap / mask.frame_hop));
    ActivityMask out = mask;
    const auto runs = active_runs(mask);
    for (std::size_t r = 1; r < runs.size(); ++r) {
        const std::size_t a = runs[r - 1].second + 1;
        const std::size_t b = runs[r].first;
        if (b - a <= max_gap)
            for (std::size_t i = a; i < b; ++i) out.frames[i] = true;
    }
    return out;
}

/// Widens every active run by `extension` seconds on both sides, clipped to
/// the mask.
inline ActivityMask extend_runs(const ActivityMask &mask, double extension) {
    const auto ext = static_cast<std::size_t>(std::llround(extension / mask.frame_hop));
    ActivityMask out = mask;
    const std::size_t n = mask.size();
    for (const auto &[a, b] : active_runs(mask)) {
        const std::size_t lo = a > ext ? a - ext : 0;
        const std::size_t hi = std::min(n - 1, b + ext);
        for (std::size_t i = lo; i <= hi; ++i) out.frames[i] = true;
    }
    return out;
}

inline ActivityMask morph_close_and_extend(const ActivityMask &mask, const VadConfig &cfg) {
    if (mask.frames.empty()) return mask;
    return extend_runs(close_gaps(mask, cfg.closing_gap), cfg.boundary_extension);
}

/// Active runs as unlabeled segments on `channel`. When `duration` is given
/// the last interval is clipped to it.
inline std::vector<SpeakerSegment> mask_to_segments(const ActivityMask &mask, int channel,
                                                    std::optional<double> duration = {}) {
    std::vector<SpeakerSegment> out;
    for (const auto &[a, b] : active_runs(mask)) {
        const double start = static_cast<double>(a) * mask.frame_hop;
        double end = static_cast<double>(b + 1) * mask.frame_hop;
        if (duration) end = std::min(end, *duration);
        out.emplace_back(channel, TimeInterval(start, std::max(start, end)));
    }
    return out;
}

/// Full VAD on one stream. A stream that is digitally silent throughout
/// yields no segments (relative thresholding alone would mark it active).
inline std::vector<SpeakerSegment> detect_speech(const AudioSignal &stream, int channel,
                                                 const VadConfig &cfg) {
    const auto energy = frame_energy(stream, cfg);
    if (*std::max_element(energy.begin(), energy.end()) <=
        10.0 * std::log10(kEnergyFloor) + 1e-6)
        return {};
    const auto mask = morph_close_and_extend(threshold_activity(energy, cfg), cfg);
    return mask_to_segments(mask, channel, stream.duration_seconds());
}

} // namespace cssad
