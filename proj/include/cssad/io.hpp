#pragma once

// File formats: mono WAV, segment-JSON lines, RTTM and the flat key=value
// configuration document.

#include "cssad/core.hpp"

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cssad {

namespace fs = std::filesystem;

// ─── Plain files ────────────────────────────────────────────────────────────

inline std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes via a temporary sibling and rename, so readers never observe a
/// half-written artifact.
inline void write_file(const fs::path &path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(tmp.string() + ": cannot open for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError(tmp.string() + ": write failed");
    }
    fs::rename(tmp, path);
}

inline std::uint64_t hash_file(const fs::path &path) { return hash_string(read_file(path)); }

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string &what) {
    s = trim(s);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw DataError(what + ": not a number: '" + std::string(s) + "'");
    return v;
}

// ─── WAV ────────────────────────────────────────────────────────────────────

namespace detail {

template <typename T>
void put_le(std::string &out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view b, std::size_t at) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
    return static_cast<T>(v);
}

} // namespace detail

/// IEEE-float 32-bit mono WAV (format tag 3, with a fact chunk).
inline std::string encode_wav(const AudioSignal &signal) {
    const auto n = static_cast<std::uint32_t>(signal.size());
    const std::uint32_t data_bytes = n * 4;
    const auto sr = static_cast<std::uint32_t>(signal.sample_rate());
    std::string out;
    out.reserve(58 + data_bytes);
    out += "RIFF";
    detail::put_le<std::uint32_t>(out, 50 + data_bytes);
    out += "WAVEfmt ";
    detail::put_le<std::uint32_t>(out, 18);
    detail::put_le<std::uint16_t>(out, 3);
    detail::put_le<std::uint16_t>(out, 1);
    detail::put_le<std::uint32_t>(out, sr);
    detail::put_le<std::uint32_t>(out, sr * 4);
    detail::put_le<std::uint16_t>(out, 4);
    detail::put_le<std::uint16_t>(out, 32);
    detail::put_le<std::uint16_t>(out, 0);
    out += "fact";
    detail::put_le<std::uint32_t>(out, 4);
    detail::put_le<std::uint32_t>(out, n);
    out += "data";
    detail::put_le<std::uint32_t>(out, data_bytes);
    for (float f : signal.samples()) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_le<std::uint32_t>(out, bits);
    }
    return out;
}

/// Reads mono PCM16 or float32 WAV (plain or extensible format).
inline AudioSignal decode_wav(std::string_view b, const std::string &name = "wav") {
    auto fail = [&](const std::string &msg) { return DataError(name + ": " + msg); };
    if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE")
        throw fail("not a RIFF/WAVE file");
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= b.size()) {
        const auto id = b.substr(pos, 4);
        const auto size = detail::get_le<std::uint32_t>(b, pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > b.size()) throw fail("truncated chunk '" + std::string(id) + "'");
        if (id == "fmt ") {
            if (size < 16) throw fail("short fmt chunk");
            format = detail::get_le<std::uint16_t>(b, body);
            channels = detail::get_le<std::uint16_t>(b, body + 2);
            rate = detail::get_le<std::uint32_t>(b, body + 4);
            bits = detail::get_le<std::uint16_t>(b, body + 14);
            if (format == 0xFFFE) {
                if (size < 26) throw fail("short extensible fmt chunk");
                format = detail::get_le<std::uint16_t>(b, body + 24);
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw fail("data chunk before fmt chunk");
            if (channels != 1) throw fail(std::to_string(channels) + " channels, expected mono");
            std::vector<float> x;
            if (format == 3 && bits == 32) {
                x.resize(size / 4);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const auto u = detail::get_le<std::uint32_t>(b, body + 4 * i);
                    std::memcpy(&x[i], &u, 4);
                }
            } else if (format == 1 && bits == 16) {
                x.resize(size / 2);
                for (std::size_t i = 0; i < x.size(); ++i)
                    x[i] = static_cast<float>(detail::get_le<std::int16_t>(b, body + 2 * i)) /
                           32768.0f;
            } else {
                throw fail("unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)");
            }
            try {
                return AudioSignal(std::move(x), static_cast<int>(rate));
            } catch (const Error &e) {
                throw fail(e.what());
            }
        }
        pos = body + size + (size & 1U);
    }
    throw fail("no data chunk");
}

inline void write_wav(const fs::path &path, const AudioSignal &signal) {
    write_file(path, encode_wav(signal));
}

inline AudioSignal read_wav(const fs::path &path) {
    return decode_wav(read_file(path), path.string());
}

// ─── Segment-JSON ───────────────────────────────────────────────────────────

/// One line of the segment-JSON format. Serves reference utterances
/// (speaker set, channel null), transcripts (channel set, speaker null) and
/// diarized output (both set).
struct SegmentRecord {
    std::string session_id;
    std::optional<std::string> speaker;
    std::optional<int> channel;
    TimeInterval interval;
    std::vector<WordToken> words;

    friend bool operator==(const SegmentRecord &, const SegmentRecord &) = default;
};

inline nlohmann::ordered_json to_json(const SegmentRecord &r) {
    nlohmann::ordered_json j;
    j["session_id"] = r.session_id;
    j["speaker"] = r.speaker ? nlohmann::ordered_json(*r.speaker) : nlohmann::ordered_json();
    j["channel"] = r.channel ? nlohmann::ordered_json(*r.channel) : nlohmann::ordered_json();
    j["start_time"] = r.interval.start();
    j["end_time"] = r.interval.end();
    std::string text;
    auto timings = nlohmann::ordered_json::array();
    for (const auto &w : r.words) {
        if (!text.empty()) text += ' ';
        text += w.text;
        timings.push_back({w.interval.start(), w.interval.end(), w.sentence_final});
    }
    j["words"] = text;
    j["word_timings"] = std::move(timings);
    return j;
}

inline SegmentRecord segment_record_from_json(const nlohmann::json &j) {
    if (!j.is_object()) throw DataError("expected a JSON object");
    SegmentRecord r;
    try {
        r.session_id = j.at("session_id").get<std::string>();
        if (j.contains("speaker") && !j["speaker"].is_null())
            r.speaker = j["speaker"].get<std::string>();
        if (j.contains("channel") && !j["channel"].is_null()) r.channel = j["channel"].get<int>();
        r.interval = TimeInterval(j.at("start_time").get<double>(), j.at("end_time").get<double>());
        std::istringstream text(j.value("words", std::string()));
        std::vector<std::string> tokens{std::istream_iterator<std::string>(text), {}};
        const auto &timings = j.contains("word_timings") ? j["word_timings"]
                                                         : nlohmann::json::array();
        if (timings.size() != tokens.size())
            throw DataError(std::to_string(tokens.size()) + " words but " +
                            std::to_string(timings.size()) + " word timings");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const auto &t = timings[i];
            if (!t.is_array() || t.size() < 2) throw DataError("malformed word timing");
            const bool final = t.size() > 2 && t[2].get<bool>();
            r.words.emplace_back(tokens[i], TimeInterval(t[0].get<double>(), t[1].get<double>()),
                                 final);
        }
    } catch (const nlohmann::json::exception &e) {
        throw DataError(e.what());
    } catch (const InvalidArgument &e) {
        throw DataError(e.what());
    }
    return r;
}

inline std::string encode_segment_json(const std::vector<SegmentRecord> &records) {
    std::string out;
    for (const auto &r : records) {
        out += to_json(r).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<SegmentRecord> decode_segment_json(std::string_view text,
                                                      const std::string &name = "segment-json") {
    std::vector<SegmentRecord> out;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = trim(text.substr(pos, nl == std::string_view::npos ? nl : nl - pos));
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(segment_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception &e) {
            throw DataError(name + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError &e) {
            throw DataError(name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline void write_segment_json(const fs::path &path, const std::vector<SegmentRecord> &records) {
    write_file(path, encode_segment_json(records));
}

inline std::vector<SegmentRecord> read_segment_json(const fs::path &path) {
    return decode_segment_json(read_file(path), path.string());
}

// ─── RTTM ───────────────────────────────────────────────────────────────────

struct RttmEntry {
    std::string session_id;
    std::string speaker;
    TimeInterval interval;

    friend bool operator==(const RttmEntry &, const RttmEntry &) = default;
};

inline std::string encode_rttm(const std::vector<RttmEntry> &entries) {
    std::string out;
    for (const auto &e : entries) {
        out += "SPEAKER " + e.session_id + " 1 " + format_double(e.interval.start()) + " " +
               format_double(e.interval.duration()) + " <NA> <NA> " + e.speaker +
               " <NA> <NA>\n";
    }
    return out;
}

/// Reads SPEAKER lines; other record types and ';;' comments are skipped.
inline std::vector<RttmEntry> decode_rttm(std::string_view text, const std::string &name = "rttm") {
    std::vector<RttmEntry> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> f{std::istream_iterator<std::string>(ls), {}};
        if (f.empty() || f[0].starts_with(";;") || f[0] != "SPEAKER") continue;
        const std::string where = name + ":" + std::to_string(line_no);
        if (f.size() < 8) throw DataError(where + ": expected 10 fields");
        const double tbeg = parse_double(f[3], where);
        const double tdur = parse_double(f[4], where);
        if (tbeg < 0.0 || tdur < 0.0) throw DataError(where + ": negative time");
        out.push_back({f[1], f[7], TimeInterval(tbeg, tbeg + tdur)});
    }
    return out;
}

inline std::vector<RttmEntry> to_rttm(std::string_view session_id,
                                      const std::vector<SpeakerSegment> &segs,
                                      std::string_view unlabeled = "unk") {
    std::vector<RttmEntry> out;
    for (const auto &s : segs)
        out.push_back({std::string(session_id),
                       s.speaker.empty() ? std::string(unlabeled) : s.speaker, s.interval});
    return out;
}

inline std::vector<SpeakerSegment> from_rttm(const std::vector<RttmEntry> &entries) {
    std::vector<SpeakerSegment> out;
    for (const auto &e : entries) out.emplace_back(0, e.interval, e.speaker);
    return out;
}

// ─── Key=value configuration ────────────────────────────────────────────────

/// Flat configuration: `key = value` lines, `#` comments, and `[section]`
/// headers that prefix following keys with "section.".
class KeyValues {
  public:
    static KeyValues parse(std::string_view text, const std::string &name = "config") {
        KeyValues kv;
        std::string section;
        std::size_t line_no = 0, pos = 0;
        while (pos <= text.size()) {
            const auto nl = text.find('\n', pos);
            auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
            pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string_view::npos)
                line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::string where = name + ":" + std::to_string(line_no);
            if (line.front() == '[') {
                if (line.back() != ']') throw DataError(where + ": unterminated section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw DataError(where + ": expected key = value");
            std::string key(trim(line.substr(0, eq)));
            if (key.empty()) throw DataError(where + ": empty key");
            if (!section.empty()) key = section + "." + key;
            if (kv.values_.count(key)) throw DataError(where + ": duplicate key '" + key + "'");
            kv.values_[key] = std::string(trim(line.substr(eq + 1)));
            kv.lines_[key] = where;
        }
        return kv;
    }

    static KeyValues load(const fs::path &path) { return parse(read_file(path), path.string()); }

    bool has(const std::string &key) const { return values_.count(key) > 0; }
    void set(const std::string &key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string> &values() const noexcept { return values_; }

    std::optional<std::string> str(const std::string &key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        used_.insert(key);
        return it->second;
    }
    std::optional<double> real(const std::string &key) const {
        auto v = str(key);
        if (!v) return std::nullopt;
        return parse_double(*v, where(key) + ": " + key);
    }
    std::optional<std::uint64_t> integer(const std::string &key) const {
        auto v = str(key);
        if (!v) return std::nullopt;
        std::uint64_t out = 0;
        const auto r = std::from_chars(v->data(), v->data() + v->size(), out);
        if (r.ec != std::errc{} || r.ptr != v->data() + v->size())
            throw DataError(where(key) + ": " + key + ": not a non-negative integer: '" + *v + "'");
        return out;
    }
    std::optional<bool> boolean(const std::string &key) const {
        auto v = str(key);
        if (!v) return std::nullopt;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw DataError(where(key) + ": " + key + ": not a boolean: '" + *v + "'");
    }

    /// Throws on the first key never read through an accessor.
    void reject_unknown() const {
        for (const auto &[k, v] : values_)
            if (!used_.count(k)) throw DataError(where(k) + ": unknown key '" + k + "'");
    }

  private:
    std::string where(const std::string &key) const {
        auto it = lines_.find(key);
        return it == lines_.end() ? std::string("config") : it->second;
    }

    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> lines_;
    mutable std::set<std::string> used_;
};

} // namespace cssad
