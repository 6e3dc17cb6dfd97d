#pragma once

// End-to-end pipeline over meeting directories: simulate, run (CSS -> VAD ->
// ASR -> sub-segmentation + clustering, with per-stage content-hash
// caching) and evaluate.

#include "cssad/css.hpp"
#include "cssad/diarize.hpp"
#include "cssad/io.hpp"
#include "cssad/metrics.hpp"
#include "cssad/mixgen.hpp"
#include "cssad/transcript.hpp"
#include "cssad/vad.hpp"

#include <cstdio>

namespace cssad {

/// A stage failed; carries the stage name.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string &what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string &stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

enum class Stage { css = 0, vad = 1, asr = 2, diarize = 3 };

inline constexpr std::array<std::string_view, 4> kStageNames{"css", "vad", "asr", "diarize"};

inline Stage parse_stage(std::string_view s) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i)
        if (kStageNames[i] == s) return static_cast<Stage>(i);
    throw InvalidArgument("unknown stage '" + std::string(s) +
                          "' (expected css, vad, asr or diarize)");
}

// ─── Configuration ──────────────────────────────────────────────────────────

struct PipelineConfig {
    CssConfig css;
    VadConfig vad;
    Scheme scheme = Scheme::sentence_word;
    ChangeDetectConfig change;
    std::size_t k_speakers = 8;
    std::size_t kmeans_restarts = 10;
    std::uint64_t seed = 0;

    std::string separator = "oracle"; ///< oracle | passthrough | file
    bool separator_scramble = true;
    std::string separator_path;

    std::string recognizer = "oracle"; ///< oracle | file
    std::string recognizer_path;
    double word_drop = 0.0;
    double timestamp_jitter = 0.0;
    double punct_drop = 0.0;

    std::string extractor = "mock"; ///< mock | file
    std::string extractor_path;
    double extractor_sigma = 0.0;
    std::size_t extractor_dim = 64;

    void validate() const {
        css.validate();
        vad.validate();
        change.validate();
        if (k_speakers == 0) throw InvalidArgument("diarize.k_speakers must be at least 1");
        if (separator != "oracle" && separator != "passthrough" && separator != "file")
            throw InvalidArgument("separator.type must be oracle, passthrough or file");
        if (recognizer != "oracle" && recognizer != "file")
            throw InvalidArgument("recognizer.type must be oracle or file");
        if (extractor != "mock" && extractor != "file")
            throw InvalidArgument("extractor.type must be mock or file");
        for (auto [p, name] : {std::pair{word_drop, "recognizer.word_drop"},
                               std::pair{punct_drop, "recognizer.punct_drop"}})
            if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(std::string(name) + " outside [0, 1]");
        if (!(timestamp_jitter >= 0.0)) throw InvalidArgument("recognizer.timestamp_jitter < 0");
        if (!(extractor_sigma >= 0.0)) throw InvalidArgument("extractor.sigma < 0");
        if (extractor_dim == 0) throw InvalidArgument("extractor.dim must be positive");
        if (separator == "file" && separator_path.empty())
            throw InvalidArgument("separator.path is required for separator.type = file");
        if (recognizer == "file" && recognizer_path.empty())
            throw InvalidArgument("recognizer.path is required for recognizer.type = file");
        if (extractor == "file" && extractor_path.empty())
            throw InvalidArgument("extractor.path is required for extractor.type = file");
    }

    static PipelineConfig from(const KeyValues &kv) {
        PipelineConfig c;
        auto stitch = kv.str("css.stitch");
        if (stitch) {
            if (*stitch == "crossfade") c.css.stitch = StitchMode::crossfade;
            else if (*stitch == "midpoint") c.css.stitch = StitchMode::midpoint;
            else throw DataError("css.stitch must be crossfade or midpoint");
        }
        c.css.segment_length = kv.real("css.segment_length").value_or(c.css.segment_length);
        c.css.segment_shift = kv.real("css.segment_shift").value_or(c.css.segment_shift);
        c.vad.frame_length = kv.real("vad.frame_length").value_or(c.vad.frame_length);
        c.vad.frame_hop = kv.real("vad.frame_hop").value_or(c.vad.frame_hop);
        c.vad.threshold_db_below_max =
            kv.real("vad.threshold_db").value_or(c.vad.threshold_db_below_max);
        c.vad.closing_gap = kv.real("vad.closing_gap").value_or(c.vad.closing_gap);
        c.vad.boundary_extension =
            kv.real("vad.boundary_extension").value_or(c.vad.boundary_extension);
        if (auto s = kv.str("diarize.scheme")) c.scheme = parse_scheme(*s);
        c.k_speakers = kv.integer("diarize.k_speakers").value_or(c.k_speakers);
        c.kmeans_restarts = kv.integer("diarize.kmeans_restarts").value_or(c.kmeans_restarts);
        c.change.context_words = kv.integer("diarize.context_words").value_or(c.change.context_words);
        c.change.similarity_threshold =
            kv.real("diarize.similarity_threshold").value_or(c.change.similarity_threshold);
        c.change.min_context = kv.integer("diarize.min_context").value_or(c.change.min_context);
        c.seed = kv.integer("seed").value_or(c.seed);
        c.separator = kv.str("separator.type").value_or(c.separator);
        c.separator_scramble = kv.boolean("separator.scramble").value_or(c.separator_scramble);
        c.separator_path = kv.str("separator.path").value_or(c.separator_path);
        c.recognizer = kv.str("recognizer.type").value_or(c.recognizer);
        c.recognizer_path = kv.str("recognizer.path").value_or(c.recognizer_path);
        c.word_drop = kv.real("recognizer.word_drop").value_or(c.word_drop);
        c.timestamp_jitter = kv.real("recognizer.timestamp_jitter").value_or(c.timestamp_jitter);
        c.punct_drop = kv.real("recognizer.punct_drop").value_or(c.punct_drop);
        c.extractor = kv.str("extractor.type").value_or(c.extractor);
        c.extractor_path = kv.str("extractor.path").value_or(c.extractor_path);
        c.extractor_sigma = kv.real("extractor.sigma").value_or(c.extractor_sigma);
        c.extractor_dim = kv.integer("extractor.dim").value_or(c.extractor_dim);
        kv.reject_unknown();
        return c;
    }

    /// Canonical key=value form; also the basis of the stage cache keys.
    std::map<std::string, std::string> to_map() const {
        auto d = format_double;
        return {
            {"css.segment_length", d(css.segment_length)},
            {"css.segment_shift", d(css.segment_shift)},
            {"css.stitch", css.stitch == StitchMode::crossfade ? "crossfade" : "midpoint"},
            {"vad.frame_length", d(vad.frame_length)},
            {"vad.frame_hop", d(vad.frame_hop)},
            {"vad.threshold_db", d(vad.threshold_db_below_max)},
            {"vad.closing_gap", d(vad.closing_gap)},
            {"vad.boundary_extension", d(vad.boundary_extension)},
            {"diarize.scheme", std::string(to_string(scheme))},
            {"diarize.k_speakers", std::to_string(k_speakers)},
            {"diarize.kmeans_restarts", std::to_string(kmeans_restarts)},
            {"diarize.context_words", std::to_string(change.context_words)},
            {"diarize.similarity_threshold", d(change.similarity_threshold)},
            {"diarize.min_context", std::to_string(change.min_context)},
            {"seed", std::to_string(seed)},
            {"separator.type", separator},
            {"separator.scramble", separator_scramble ? "true" : "false"},
            {"separator.path", separator_path},
            {"recognizer.type", recognizer},
            {"recognizer.path", recognizer_path},
            {"recognizer.word_drop", d(word_drop)},
            {"recognizer.timestamp_jitter", d(timestamp_jitter)},
            {"recognizer.punct_drop", d(punct_drop)},
            {"extractor.type", extractor},
            {"extractor.path", extractor_path},
            {"extractor.sigma", d(extractor_sigma)},
            {"extractor.dim", std::to_string(extractor_dim)},
        };
    }

    /// Lines "key = value" for every key starting with one of `prefixes`.
    std::string section_text(std::initializer_list<std::string_view> prefixes) const {
        std::string out;
        for (const auto &[k, v] : to_map())
            for (auto p : prefixes)
                if (std::string_view(k).starts_with(p)) {
                    out += k + " = " + v + "\n";
                    break;
                }
        return out;
    }

    DiarizeConfig diarize_config(std::uint64_t meeting_seed, unsigned jobs) const {
        DiarizeConfig d;
        d.scheme = scheme;
        d.change = change;
        d.k_speakers = k_speakers;
        d.seed = mix_seed(meeting_seed, 0x6b6d65616e73ULL);
        d.kmeans = KMeansOptions{300, 1e-8, kmeans_restarts};
        d.jobs = jobs;
        return d;
    }
};

inline PipelineConfig load_pipeline_config(const fs::path &path) {
    auto c = PipelineConfig::from(KeyValues::load(path));
    c.validate();
    return c;
}

// ─── Simulation spec and meeting directories ────────────────────────────────

struct SimulationSpec {
    std::size_t meetings = 1;
    std::string prefix = "session";
    MixSpec mix;

    static SimulationSpec from(const KeyValues &kv) {
        SimulationSpec s;
        s.meetings = kv.integer("meetings").value_or(s.meetings);
        s.prefix = kv.str("prefix").value_or(s.prefix);
        auto &m = s.mix;
        m.num_speakers = kv.integer("num_speakers").value_or(m.num_speakers);
        m.num_utterances = kv.integer("num_utterances").value_or(m.num_utterances);
        m.overlap_ratio_target = kv.real("overlap_ratio").value_or(m.overlap_ratio_target);
        m.utterance_duration_range.first =
            kv.real("utterance_min").value_or(m.utterance_duration_range.first);
        m.utterance_duration_range.second =
            kv.real("utterance_max").value_or(m.utterance_duration_range.second);
        m.seed = kv.integer("seed").value_or(m.seed);
        m.sample_rate = static_cast<int>(kv.integer("sample_rate").value_or(m.sample_rate));
        m.two_speaker_limit = kv.boolean("two_speaker_limit").value_or(m.two_speaker_limit);
        m.gap_range.first = kv.real("gap_min").value_or(m.gap_range.first);
        m.gap_range.second = kv.real("gap_max").value_or(m.gap_range.second);
        m.word_length = kv.real("word_length").value_or(m.word_length);
        kv.reject_unknown();
        if (s.meetings == 0) throw InvalidArgument("meetings must be at least 1");
        if (s.prefix.empty()) throw InvalidArgument("prefix must not be empty");
        m.validate();
        return s;
    }

    /// Spec of meeting `i`: own seed and session id.
    MixSpec meeting(std::size_t i) const {
        MixSpec m = mix;
        m.seed = mix_seed(mix.seed, i);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%03zu", i);
        m.session_id = prefix + buf;
        return m;
    }
};

inline std::vector<SegmentRecord> truth_records(const MeetingTruth &t) {
    std::vector<SegmentRecord> out;
    for (const auto &u : t.utterances)
        out.push_back({t.session_id, u.speaker, std::nullopt, u.interval, u.words});
    return out;
}

inline std::vector<Utterance> utterances_from_records(const std::vector<SegmentRecord> &recs,
                                                      const std::string &name) {
    std::vector<Utterance> out;
    for (const auto &r : recs) {
        if (!r.speaker) throw DataError(name + ": reference segment without speaker");
        try {
            out.emplace_back(*r.speaker, r.words, r.interval);
        } catch (const InvalidArgument &e) {
            throw DataError(name + ": " + e.what());
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Utterance &a, const Utterance &b) {
        return a.interval.start() < b.interval.start();
    });
    return out;
}

inline void write_meeting(const fs::path &dir, const MeetingTruth &t) {
    fs::create_directories(dir);
    write_wav(dir / "mixture.wav", t.mixture);
    for (std::size_t s = 0; s < t.num_speakers(); ++s)
        write_wav(dir / ("src" + std::to_string(s) + ".wav"), t.source(s));
    write_segment_json(dir / "truth.json", truth_records(t));
    nlohmann::ordered_json meta;
    meta["session_id"] = t.session_id;
    meta["sample_rate"] = t.sample_rate();
    meta["speakers"] = t.speakers;
    write_file(dir / "meeting.json", meta.dump(2) + "\n");
}

struct MeetingInfo {
    std::string session_id;
    int sample_rate = 0;
    std::vector<std::string> speakers;
};

inline MeetingInfo read_meeting_info(const fs::path &dir) {
    const auto path = dir / "meeting.json";
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        return {j.at("session_id").get<std::string>(), j.at("sample_rate").get<int>(),
                j.at("speakers").get<std::vector<std::string>>()};
    } catch (const nlohmann::json::exception &e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline MeetingTruth load_meeting(const fs::path &dir) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
    auto info = read_meeting_info(dir);
    auto mixture = read_wav(dir / "mixture.wav");
    if (mixture.sample_rate() != info.sample_rate)
        throw DataError((dir / "mixture.wav").string() + ": sample rate differs from meeting.json");
    std::vector<AudioSignal> sources;
    for (std::size_t s = 0; s < info.speakers.size(); ++s)
        sources.push_back(read_wav(dir / ("src" + std::to_string(s) + ".wav")));
    const auto truth_path = dir / "truth.json";
    auto utts = utterances_from_records(read_segment_json(truth_path), truth_path.string());
    try {
        return assemble_truth(info.session_id, info.speakers, std::move(utts), sources,
                              std::move(mixture));
    } catch (const DataError &e) {
        throw DataError(dir.string() + ": " + e.what());
    }
}

/// A directory holding meeting.json is one meeting; otherwise every
/// subdirectory holding one, sorted by name.
inline std::vector<fs::path> list_meetings(const fs::path &root,
                                           std::string_view marker = "meeting.json") {
    if (!fs::is_directory(root)) throw DataError(root.string() + ": no such directory");
    if (fs::exists(root / marker)) return {root};
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / marker)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty())
        throw DataError(root.string() + ": no meetings found (no " + std::string(marker) + ")");
    return out;
}

inline std::vector<fs::path> simulate_corpus(const SimulationSpec &spec, const fs::path &out_dir,
                                             unsigned jobs = 1) {
    std::vector<fs::path> dirs(spec.meetings);
    parallel_for(spec.meetings, jobs, [&](std::size_t i) {
        const auto m = spec.meeting(i);
        dirs[i] = out_dir / m.session_id;
        write_meeting(dirs[i], generate_meeting(m));
    });
    return dirs;
}

// ─── Back-ends ──────────────────────────────────────────────────────────────

inline std::uint64_t meeting_seed(const PipelineConfig &cfg, std::string_view session_id) {
    return mix_seed(cfg.seed, hash_string(session_id));
}

inline StreamPair load_streams(const fs::path &dir, std::string_view stem) {
    return {{read_wav(dir / (std::string(stem) + ".stream0.wav")),
             read_wav(dir / (std::string(stem) + ".stream1.wav"))}};
}

inline std::unique_ptr<Separator> make_separator(const PipelineConfig &cfg,
                                                 const MeetingTruth &truth) {
    if (cfg.separator == "passthrough") return std::make_unique<PassthroughSeparator>();
    if (cfg.separator == "file") {
        auto streams = load_streams(cfg.separator_path, truth.session_id);
        for (const auto &s : streams.streams)
            if (s.size() != truth.mixture.size())
                throw DataError("separator file streams differ in length from the mixture");
        return std::make_unique<PrecomputedSeparator>(std::move(streams));
    }
    std::optional<std::uint64_t> scramble;
    if (cfg.separator_scramble) scramble = mix_seed(meeting_seed(cfg, truth.session_id), 0x73ULL);
    return std::make_unique<OracleSeparator>(truth, scramble);
}

inline std::vector<SegmentTranscript> transcripts_from_records(const std::vector<SegmentRecord> &recs,
                                                               const std::string &name) {
    std::vector<SegmentTranscript> out;
    for (const auto &r : recs) {
        if (!r.channel || (*r.channel != 0 && *r.channel != 1))
            throw DataError(name + ": transcript segment needs channel 0 or 1");
        out.push_back({*r.channel, r.interval, r.words, {}});
    }
    return out;
}

inline std::unique_ptr<Recognizer> make_recognizer(const PipelineConfig &cfg,
                                                   const MeetingTruth &truth,
                                                   const StreamPair &streams) {
    if (cfg.recognizer == "file") {
        const auto path = fs::path(cfg.recognizer_path) / (truth.session_id + ".json");
        return std::make_unique<FileRecognizer>(
            transcripts_from_records(read_segment_json(path), path.string()));
    }
    OracleRecognizerOptions o;
    o.word_drop = cfg.word_drop;
    o.timestamp_jitter = cfg.timestamp_jitter;
    o.punct_drop = cfg.punct_drop;
    o.seed = mix_seed(meeting_seed(cfg, truth.session_id), 0x617372ULL);
    return std::make_unique<OracleRecognizer>(
        stream_words(truth, attribute_utterances(truth, streams)), o);
}

/// Embedding file: one JSON object per line,
/// {"channel": int, "start_time": s, "end_time": s, "embedding": [..]}.
inline std::vector<StoredEmbedding> read_embeddings(const fs::path &path) {
    std::vector<StoredEmbedding> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("channel").get<int>(),
                           TimeInterval(j.at("start_time").get<double>(),
                                        j.at("end_time").get<double>()),
                           Embedding{j.at("embedding").get<std::vector<double>>()}});
        } catch (const std::exception &e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline std::unique_ptr<EmbeddingExtractor> make_extractor(const PipelineConfig &cfg,
                                                          const MeetingTruth &truth,
                                                          const StreamPair &streams) {
    if (cfg.extractor == "file")
        return std::make_unique<FileExtractor>(read_embeddings(
            fs::path(cfg.extractor_path) / (truth.session_id + ".embeddings.json")));
    const auto seed = meeting_seed(cfg, truth.session_id);
    MockExtractorOptions o;
    o.dim = cfg.extractor_dim;
    o.sigma = cfg.extractor_sigma;
    o.seed = mix_seed(seed, 0x656d62ULL);
    return std::make_unique<MockExtractor>(
        speaker_activity(truth, attribute_utterances(truth, streams)),
        MockExtractor::random_centroids(truth.speakers, o.dim, mix_seed(seed, 0x63ULL)), o);
}

// ─── Stages ─────────────────────────────────────────────────────────────────

inline StreamPair stage_css(const PipelineConfig &cfg, const MeetingTruth &truth, unsigned jobs) {
    return run_css(truth.mixture, *make_separator(cfg, truth), cfg.css, jobs);
}

inline std::vector<SpeakerSegment> stage_vad(const PipelineConfig &cfg, const StreamPair &streams) {
    std::vector<SpeakerSegment> out;
    for (int c = 0; c < 2; ++c) {
        auto segs = detect_speech(streams.streams[c], c, cfg.vad);
        out.insert(out.end(), segs.begin(), segs.end());
    }
    return out;
}

inline std::vector<SegmentTranscript> stage_asr(const PipelineConfig &cfg,
                                                const MeetingTruth &truth,
                                                const StreamPair &streams,
                                                const std::vector<SpeakerSegment> &vad,
                                                unsigned jobs) {
    auto out = transcribe_segments(streams, vad, *make_recognizer(cfg, truth, streams), jobs);
    std::string failures;
    for (const auto &t : out)
        if (!t.error.empty())
            failures += "\n  channel " + std::to_string(t.channel) + " [" +
                        format_double(t.segment_interval.start()) + ", " +
                        format_double(t.segment_interval.end()) + "]: " + t.error;
    if (!failures.empty()) throw StageError("asr", "recognizer failed on" + failures);
    return out;
}

inline DiarizationResult stage_diarize(const PipelineConfig &cfg, const MeetingTruth &truth,
                                       const StreamPair &streams,
                                       const std::vector<SpeakerSegment> &vad,
                                       const std::vector<SegmentTranscript> &transcripts,
                                       unsigned jobs) {
    return diarize(streams, vad, transcripts, *make_extractor(cfg, truth, streams),
                   cfg.diarize_config(meeting_seed(cfg, truth.session_id), jobs));
}

struct PipelineResult {
    StreamPair streams;
    std::vector<SpeakerSegment> vad;
    std::vector<SegmentTranscript> transcripts;
    DiarizationResult diarization;
};

/// All stages in memory, without touching the file system.
inline PipelineResult run_pipeline(const PipelineConfig &cfg, const MeetingTruth &truth,
                                   unsigned jobs = 1) {
    PipelineResult r;
    r.streams = stage_css(cfg, truth, jobs);
    r.vad = stage_vad(cfg, r.streams);
    r.transcripts = stage_asr(cfg, truth, r.streams, r.vad, jobs);
    r.diarization = stage_diarize(cfg, truth, r.streams, r.vad, r.transcripts, jobs);
    return r;
}

// ─── Artifacts ──────────────────────────────────────────────────────────────

inline std::vector<SegmentRecord> vad_records(std::string_view session,
                                              const std::vector<SpeakerSegment> &vad) {
    std::vector<SegmentRecord> out;
    for (const auto &s : vad)
        out.push_back({std::string(session), std::nullopt, s.channel, s.interval, {}});
    return out;
}

inline std::vector<SpeakerSegment> vad_from_records(const std::vector<SegmentRecord> &recs,
                                                    const std::string &name) {
    std::vector<SpeakerSegment> out;
    for (const auto &r : recs) {
        if (!r.channel || (*r.channel != 0 && *r.channel != 1))
            throw DataError(name + ": VAD segment needs channel 0 or 1");
        out.emplace_back(*r.channel, r.interval);
    }
    return out;
}

inline std::vector<SegmentRecord> transcript_records(std::string_view session,
                                                     const std::vector<SegmentTranscript> &ts) {
    std::vector<SegmentRecord> out;
    for (const auto &t : ts)
        out.push_back({std::string(session), std::nullopt, t.channel, t.segment_interval, t.words});
    return out;
}

inline std::vector<SegmentRecord> diarized_records(std::string_view session,
                                                   const DiarizationResult &d) {
    std::vector<SegmentRecord> out;
    for (const auto &s : d.subsegments)
        out.push_back({std::string(session), s.speaker, s.channel, s.interval, s.words});
    return out;
}

struct RunOptions {
    Stage last_stage = Stage::diarize;
    bool force = false;
    unsigned jobs = 1;
};

struct RunReport {
    std::string session_id;
    /// Per executed stage: true if it was served from cache.
    std::vector<std::pair<Stage, bool>> stages;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

class StageCache {
  public:
    explicit StageCache(fs::path path) : path_(std::move(path)) {
        if (!fs::exists(path_)) return;
        try {
            entries_ = nlohmann::json::parse(read_file(path_)).get<std::map<std::string, std::string>>();
        } catch (const nlohmann::json::exception &) {
            entries_.clear(); // a corrupt cache only costs a recomputation
        }
    }
    bool hit(Stage s, const std::string &key) const {
        auto it = entries_.find(std::string(kStageNames[static_cast<int>(s)]));
        return it != entries_.end() && it->second == key;
    }
    void record(Stage s, const std::string &key) {
        entries_[std::string(kStageNames[static_cast<int>(s)])] = key;
        write_file(path_, nlohmann::json(entries_).dump(2) + "\n");
    }
    void invalidate_from(Stage s) {
        for (int i = static_cast<int>(s); i < 4; ++i) entries_.erase(std::string(kStageNames[i]));
    }

  private:
    fs::path path_;
    std::map<std::string, std::string> entries_;
};

} // namespace detail

/// Runs one meeting into `out_dir`, skipping every stage whose inputs
/// (configuration section plus the content of every file it reads) hash
/// to the value recorded in `.cache.json` and whose outputs exist.
inline RunReport run_meeting(const PipelineConfig &cfg, const fs::path &meeting_dir,
                             const fs::path &out_dir, const RunOptions &opts = {}) {
    const auto truth = load_meeting(meeting_dir);
    const std::string &sid = truth.session_id;
    fs::create_directories(out_dir);
    detail::StageCache cache(out_dir / ".cache.json");
    RunReport report{sid, {}};

    auto file_hashes = [](std::initializer_list<fs::path> paths) {
        std::string s;
        for (const auto &p : paths) s += p.filename().string() + "=" + detail::hex64(hash_file(p)) + "\n";
        return s;
    };
    std::string truth_inputs = file_hashes({meeting_dir / "mixture.wav", meeting_dir / "truth.json",
                                            meeting_dir / "meeting.json"});
    for (std::size_t s = 0; s < truth.num_speakers(); ++s)
        truth_inputs += file_hashes({meeting_dir / ("src" + std::to_string(s) + ".wav")});

    const fs::path s0 = out_dir / "mixture.stream0.wav", s1 = out_dir / "mixture.stream1.wav";
    const fs::path vad_json = out_dir / "vad.json", vad_rttm = out_dir / "vad.rttm";
    const fs::path asr_json = out_dir / "transcripts.json";
    const fs::path dia_rttm = out_dir / "diarization.rttm", words_json = out_dir / "words.json";

    auto run_stage = [&](Stage st, const std::string &inputs,
                         std::initializer_list<fs::path> outputs, const auto &compute) {
        const std::string name(kStageNames[static_cast<int>(st)]);
        const std::string key = detail::hex64(hash_string(name + "\n" + inputs));
        bool present = true;
        for (const auto &o : outputs) present = present && fs::exists(o);
        if (!opts.force && present && cache.hit(st, key)) {
            report.stages.emplace_back(st, true);
            return;
        }
        cache.invalidate_from(st);
        try {
            compute();
        } catch (const StageError &) {
            throw;
        } catch (const std::exception &e) {
            throw StageError(name, e.what());
        }
        cache.record(st, key);
        report.stages.emplace_back(st, false);
    };
    auto wants = [&](Stage s) { return static_cast<int>(s) <= static_cast<int>(opts.last_stage); };
    const std::string seed_line = "session = " + sid + "\nseed = " + std::to_string(cfg.seed) + "\n";
    const bool needs_truth_css = cfg.separator == "oracle";

    // css
    {
        std::string inputs = seed_line + cfg.section_text({"css.", "separator."});
        inputs += needs_truth_css ? truth_inputs : file_hashes({meeting_dir / "mixture.wav"});
        if (cfg.separator == "file") {
            const fs::path base = fs::path(cfg.separator_path) / sid;
            inputs += file_hashes({base.string() + ".stream0.wav", base.string() + ".stream1.wav"});
        }
        run_stage(Stage::css, inputs, {s0, s1}, [&] {
            const auto streams = stage_css(cfg, truth, opts.jobs);
            write_wav(s0, streams.streams[0]);
            write_wav(s1, streams.streams[1]);
        });
    }
    if (!wants(Stage::vad)) return report;
    const std::string stream_inputs = file_hashes({s0, s1});
    auto streams = [&, cached = std::optional<StreamPair>()]() mutable -> const StreamPair & {
        if (!cached) cached = load_streams(out_dir, "mixture");
        return *cached;
    };

    run_stage(Stage::vad, cfg.section_text({"vad."}) + stream_inputs, {vad_json, vad_rttm}, [&] {
        const auto vad = stage_vad(cfg, streams());
        write_segment_json(vad_json, vad_records(sid, vad));
        write_file(vad_rttm, encode_rttm(to_rttm(sid, vad)));
    });
    if (!wants(Stage::asr)) return report;
    auto load_vad = [&] { return vad_from_records(read_segment_json(vad_json), vad_json.string()); };

    {
        std::string inputs = seed_line + cfg.section_text({"recognizer."}) + stream_inputs +
                             file_hashes({vad_json});
        if (cfg.recognizer == "oracle") inputs += truth_inputs;
        else inputs += file_hashes({fs::path(cfg.recognizer_path) / (sid + ".json")});
        run_stage(Stage::asr, inputs, {asr_json}, [&] {
            const auto ts = stage_asr(cfg, truth, streams(), load_vad(), opts.jobs);
            write_segment_json(asr_json, transcript_records(sid, ts));
        });
    }
    if (!wants(Stage::diarize)) return report;

    {
        std::string inputs = seed_line + cfg.section_text({"diarize.", "extractor."}) +
                             stream_inputs + file_hashes({vad_json, asr_json});
        if (cfg.extractor == "mock") inputs += truth_inputs;
        else inputs += file_hashes({fs::path(cfg.extractor_path) / (sid + ".embeddings.json")});
        run_stage(Stage::diarize, inputs, {dia_rttm, words_json}, [&] {
            const auto vad = load_vad();
            const auto ts = transcripts_from_records(read_segment_json(asr_json), asr_json.string());
            if (ts.size() != vad.size())
                throw DataError("transcripts.json does not match vad.json");
            const auto d = stage_diarize(cfg, truth, streams(), vad, ts, opts.jobs);
            write_file(dia_rttm, encode_rttm(to_rttm(sid, d.segments())));
            write_segment_json(words_json, diarized_records(sid, d));
        });
    }
    return report;
}

/// Runs every meeting under `meetings_root` into `out_root/<session_id>`,
/// meetings in parallel. Within a meeting stages run sequentially.
inline std::vector<RunReport> run_corpus(const PipelineConfig &cfg, const fs::path &meetings_root,
                                         const fs::path &out_root, const RunOptions &opts = {}) {
    const auto dirs = list_meetings(meetings_root);
    std::vector<RunReport> out(dirs.size());
    const unsigned outer = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(dirs.size())));
    RunOptions inner = opts;
    inner.jobs = std::max(1u, opts.jobs / outer);
    parallel_for(dirs.size(), outer, [&](std::size_t i) {
        const auto info = read_meeting_info(dirs[i]);
        out[i] = run_meeting(cfg, dirs[i], out_root / info.session_id, inner);
    });
    return out;
}

// ─── Evaluation ─────────────────────────────────────────────────────────────

struct MeetingScore {
    std::string session_id;
    WerStats orc;
    WerStats cp;
    DerStats der;
    std::map<std::string, std::optional<std::string>> speaker_mapping;
};

/// Words of segment records grouped by `key`, each group in start-time order.
template <typename KeyFn>
std::map<std::string, Words> words_by(const std::vector<SegmentRecord> &recs, KeyFn key) {
    std::map<std::string, std::vector<std::pair<double, std::string>>> timed;
    for (const auto &r : recs) {
        auto &dst = timed[key(r)];
        for (const auto &w : r.words)
            for (auto &t : normalize_words(w.text)) dst.emplace_back(w.interval.start(), std::move(t));
    }
    std::map<std::string, Words> out;
    for (auto &[k, v] : timed) {
        std::stable_sort(v.begin(), v.end(),
                         [](const auto &a, const auto &b) { return a.first < b.first; });
        auto &dst = out[k];
        for (auto &p : v) dst.push_back(std::move(p.second));
    }
    return out;
}

/// Scores one meeting: reference utterances versus diarized hypothesis
/// records (channel and speaker set). DER uses `hyp_segments` when given,
/// else the hypothesis record intervals.
inline MeetingScore score_meeting(std::string session_id, const std::vector<SegmentRecord> &ref,
                                  const std::vector<SegmentRecord> &hyp,
                                  std::optional<std::vector<SpeakerSegment>> hyp_segments = {}) {
    MeetingScore s;
    s.session_id = std::move(session_id);
    std::vector<OrcReference> refs;
    std::vector<SpeakerSegment> ref_segs;
    for (const auto &r : ref) {
        if (!r.speaker) throw DataError(s.session_id + ": reference segment without speaker");
        Words w;
        for (const auto &t : r.words) {
            auto n = normalize_words(t.text);
            w.insert(w.end(), n.begin(), n.end());
        }
        refs.push_back({r.interval.start(), std::move(w)});
        ref_segs.emplace_back(0, r.interval, *r.speaker);
    }

    std::size_t streams = 1;
    for (const auto &r : hyp) {
        if (!r.channel || *r.channel < 0)
            throw DataError(s.session_id + ": hypothesis segment without channel");
        streams = std::max<std::size_t>(streams, static_cast<std::size_t>(*r.channel) + 1);
    }
    std::vector<Words> hyp_streams(std::max<std::size_t>(2, streams));
    for (auto &[ch, w] : words_by(hyp, [](const SegmentRecord &r) { return std::to_string(*r.channel); }))
        hyp_streams[std::stoul(ch)] = std::move(w);
    s.orc = orc_wer(refs, hyp_streams).stats;

    const auto ref_by = words_by(ref, [](const SegmentRecord &r) { return *r.speaker; });
    const auto hyp_by = words_by(hyp, [](const SegmentRecord &r) { return r.speaker.value_or("unk"); });
    auto cp = cp_wer(ref_by, hyp_by);
    s.cp = cp.stats;
    s.speaker_mapping = std::move(cp.mapping);

    if (!hyp_segments) {
        hyp_segments.emplace();
        for (const auto &r : hyp) hyp_segments->emplace_back(0, r.interval, r.speaker.value_or("unk"));
    }
    s.der = der(ref_segs, *hyp_segments);
    return s;
}

inline nlohmann::ordered_json wer_json(const WerStats &w) {
    nlohmann::ordered_json j;
    j["wer"] = w.wer();
    j["errors"] = w.errors();
    j["substitutions"] = w.substitutions;
    j["insertions"] = w.insertions;
    j["deletions"] = w.deletions;
    j["reference_words"] = w.reference_length;
    return j;
}

inline nlohmann::ordered_json der_json(const DerStats &d) {
    nlohmann::ordered_json j;
    j["der"] = d.der();
    j["missed_speech"] = d.missed_speech;
    j["false_alarm"] = d.false_alarm;
    j["speaker_confusion"] = d.speaker_confusion;
    j["scored_speech"] = d.scored_speech;
    return j;
}

inline nlohmann::ordered_json score_json(const MeetingScore &s) {
    nlohmann::ordered_json j;
    j["session_id"] = s.session_id;
    j["orc_wer"] = wer_json(s.orc);
    j["cp_wer"] = wer_json(s.cp);
    j["der"] = der_json(s.der);
    auto mapping = nlohmann::ordered_json::object();
    for (const auto &[r, h] : s.speaker_mapping)
        mapping[r] = h ? nlohmann::ordered_json(*h) : nlohmann::ordered_json();
    j["speaker_mapping"] = std::move(mapping);
    return j;
}

struct EvaluationReport {
    std::vector<MeetingScore> meetings;
    /// Errors and durations pooled over meetings (micro-average).
    MeetingScore pooled;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["meetings"] = nlohmann::ordered_json::array();
        for (const auto &m : meetings) j["meetings"].push_back(score_json(m));
        nlohmann::ordered_json p;
        p["meetings"] = meetings.size();
        p["orc_wer"] = wer_json(pooled.orc);
        p["cp_wer"] = wer_json(pooled.cp);
        p["der"] = der_json(pooled.der);
        j["pooled"] = std::move(p);
        return j;
    }

    std::string to_text() const {
        std::string out;
        char line[160];
        std::snprintf(line, sizeof line, "%-20s %9s %9s %9s\n", "session", "ORC WER", "cpWER", "DER");
        out += line;
        auto row = [&](const std::string &name, const MeetingScore &s) {
            std::snprintf(line, sizeof line, "%-20s %8.2f%% %8.2f%% %8.2f%%\n", name.c_str(),
                          100.0 * s.orc.wer(), 100.0 * s.cp.wer(), 100.0 * s.der.der());
            out += line;
        };
        for (const auto &m : meetings) row(m.session_id, m);
        row("pooled", pooled);
        return out;
    }
};

inline EvaluationReport pool(std::vector<MeetingScore> scores) {
    EvaluationReport r;
    r.pooled.session_id = "pooled";
    for (const auto &s : scores) {
        r.pooled.orc += s.orc;
        r.pooled.cp += s.cp;
        r.pooled.der += s.der;
    }
    r.meetings = std::move(scores);
    return r;
}

/// Matches meetings of `truth_root` (truth.json) with run outputs of
/// `hyp_root` (words.json, diarization.rttm) by session id.
inline EvaluationReport evaluate_corpus(const fs::path &truth_root, const fs::path &hyp_root,
                                        unsigned jobs = 1) {
    std::map<std::string, fs::path> truth, hyp;
    for (const auto &d : list_meetings(truth_root)) truth[read_meeting_info(d).session_id] = d;
    for (const auto &d : list_meetings(hyp_root, "words.json")) {
        const auto recs = read_segment_json(d / "words.json");
        hyp[recs.empty() ? d.filename().string() : recs.front().session_id] = d;
    }
    std::string mismatch;
    for (const auto &[id, _] : truth)
        if (!hyp.count(id)) mismatch += "\n  missing hypothesis: " + id;
    for (const auto &[id, _] : hyp)
        if (!truth.count(id)) mismatch += "\n  hypothesis without truth: " + id;
    if (!mismatch.empty()) throw DataError("meeting id mismatch:" + mismatch);

    std::vector<std::pair<std::string, fs::path>> pairs(truth.begin(), truth.end());
    std::vector<MeetingScore> scores(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t i) {
        const auto &[id, tdir] = pairs[i];
        const auto &hdir = hyp.at(id);
        std::optional<std::vector<SpeakerSegment>> segs;
        if (fs::exists(hdir / "diarization.rttm"))
            segs = from_rttm(decode_rttm(read_file(hdir / "diarization.rttm"),
                                         (hdir / "diarization.rttm").string()));
        scores[i] = score_meeting(id, read_segment_json(tdir / "truth.json"),
                                  read_segment_json(hdir / "words.json"), std::move(segs));
    });
    return pool(std::move(scores));
}

} // namespace cssad
