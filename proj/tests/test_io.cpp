#include "cssad/pipeline.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cssad;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cssad_io_" + std::to_string(std::random_device{}()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void put16(std::string &b, std::uint16_t v) { b.append({static_cast<char>(v & 0xff), static_cast<char>(v >> 8)}); }
void put32(std::string &b, std::uint32_t v) {
    put16(b, static_cast<std::uint16_t>(v & 0xffff));
    put16(b, static_cast<std::uint16_t>(v >> 16));
}

} // namespace

TEST(Wav, FloatRoundTripIsExact) {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 0.3f);
    std::vector<float> x(12345);
    for (auto &v : x) v = n(rng);
    const AudioSignal s(x, 16000);
    EXPECT_EQ(decode_wav(encode_wav(s)), s);
    const AudioSignal empty({}, 8000);
    EXPECT_EQ(decode_wav(encode_wav(empty)), empty);
}

TEST(Wav, ReadsPcm16) {
    std::string b = "RIFF";
    put32(b, 36 + 6);
    b += "WAVEfmt ";
    put32(b, 16);
    put16(b, 1);
    put16(b, 1);
    put32(b, 8000);
    put32(b, 16000);
    put16(b, 2);
    put16(b, 16);
    b += "data";
    put32(b, 6);
    put16(b, 0);
    put16(b, 16384);
    put16(b, static_cast<std::uint16_t>(-32768));
    const auto s = decode_wav(b);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.sample_rate(), 8000);
    EXPECT_FLOAT_EQ(s.samples()[0], 0.0f);
    EXPECT_FLOAT_EQ(s.samples()[1], 0.5f);
    EXPECT_FLOAT_EQ(s.samples()[2], -1.0f);
}

TEST(Wav, RejectsGarbage) {
    EXPECT_THROW(decode_wav("not a wav file"), DataError);
    auto b = encode_wav(AudioSignal({0.1f, 0.2f}, 16000));
    b.resize(b.size() - 3);
    EXPECT_THROW(decode_wav(b), DataError);
    EXPECT_THROW(read_wav("/nonexistent/x.wav"), DataError);
}

TEST(SegmentJson, RoundTripIsExact) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<> u(0.0, 100.0);
    std::vector<SegmentRecord> recs;
    for (int i = 0; i < 50; ++i) {
        SegmentRecord r;
        r.session_id = "s" + std::to_string(i % 3);
        if (i % 2) r.speaker = "spk" + std::to_string(i % 5);
        if (i % 3) r.channel = i % 2;
        const double a = u(rng), d = u(rng) / 10.0;
        r.interval = TimeInterval(a, a + d);
        for (int k = 0; k < i % 4; ++k)
            r.words.emplace_back(k == 1 ? "let's" : "w" + std::to_string(k),
                                 TimeInterval(a + d * k / 4.0, a + d * (k + 1) / 4.0), k == 2);
        recs.push_back(std::move(r));
    }
    EXPECT_EQ(decode_segment_json(encode_segment_json(recs)), recs);
}

TEST(SegmentJson, Errors) {
    EXPECT_THROW(decode_segment_json("{\"session_id\": \"a\"}\n"), DataError);
    EXPECT_THROW(decode_segment_json("{not json}\n"), DataError);
    const std::string inverted =
        R"({"session_id":"a","start_time":0,"end_time":2,"words":"x","word_timings":[[1,0.5,true]]})";
    EXPECT_THROW(decode_segment_json(inverted + "\n"), DataError);
    const std::string count_mismatch =
        R"({"session_id":"a","start_time":0,"end_time":2,"words":"x y","word_timings":[[0,1,true]]})";
    EXPECT_THROW(decode_segment_json(count_mismatch + "\n"), DataError);
    EXPECT_TRUE(decode_segment_json("\n\n").empty());
}

TEST(Rttm, RoundTripWithinPrecision) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<> u(0.0, 500.0);
    std::vector<SpeakerSegment> segs;
    for (int i = 0; i < 100; ++i) {
        const double a = u(rng);
        segs.emplace_back(0, TimeInterval(a, a + u(rng) / 50.0), "spk" + std::to_string(i % 4));
    }
    const auto back = from_rttm(decode_rttm(encode_rttm(to_rttm("mtg", segs))));
    ASSERT_EQ(back.size(), segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
        EXPECT_EQ(back[i].speaker, segs[i].speaker);
        EXPECT_NEAR(back[i].interval.start(), segs[i].interval.start(), 1e-9);
        EXPECT_NEAR(back[i].interval.end(), segs[i].interval.end(), 1e-9);
    }
}

TEST(Rttm, ParsesReferenceStyleLines) {
    const auto e = decode_rttm(";; comment\nSPKR-INFO x 1 <NA> <NA> <NA> unknown A <NA> <NA>\n"
                               "SPEAKER mtg 1 1.50 2.25 <NA> <NA> A <NA> <NA>\n");
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].session_id, "mtg");
    EXPECT_EQ(e[0].interval, TimeInterval(1.5, 3.75));
    EXPECT_THROW(decode_rttm("SPEAKER mtg 1 abc 2 <NA> <NA> A <NA> <NA>\n"), DataError);
    EXPECT_EQ(to_rttm("m", {SpeakerSegment(0, {0, 1})})[0].speaker, "unk");
}

TEST(KeyValues, Parsing) {
    const auto kv = KeyValues::parse("# top\nseed = 4\n[vad]\nthreshold_db = 35.5  # inline\n[css]\nstitch=midpoint\n");
    EXPECT_EQ(kv.integer("seed"), 4u);
    EXPECT_EQ(kv.real("vad.threshold_db"), 35.5);
    EXPECT_EQ(kv.str("css.stitch"), "midpoint");
    EXPECT_FALSE(kv.str("missing").has_value());
    EXPECT_NO_THROW(kv.reject_unknown());

    EXPECT_THROW(KeyValues::parse("a = 1\na = 2\n"), DataError);
    EXPECT_THROW(KeyValues::parse("just words\n"), DataError);
    EXPECT_THROW(KeyValues::parse("[open\n"), DataError);
    EXPECT_THROW(KeyValues::parse("n = -3\n").integer("n"), DataError);
    EXPECT_THROW(KeyValues::parse("b = maybe\n").boolean("b"), DataError);
    const auto unknown = KeyValues::parse("seed = 1\ntypo = 2\n");
    unknown.integer("seed");
    EXPECT_THROW(unknown.reject_unknown(), DataError);
}

TEST(PipelineConfig, RoundTripAndValidation) {
    PipelineConfig c;
    c.scheme = Scheme::word;
    c.vad.threshold_db_below_max = 30.0;
    c.extractor_sigma = 0.7;
    c.change.context_words = 4;
    std::string text;
    for (const auto &[k, v] : c.to_map()) text += k + " = " + v + "\n";
    const auto back = PipelineConfig::from(KeyValues::parse(text));
    EXPECT_EQ(back.to_map(), c.to_map());

    EXPECT_THROW(PipelineConfig::from(KeyValues::parse("diarize.scheme = bogus\n")), InvalidArgument);
    EXPECT_THROW(PipelineConfig::from(KeyValues::parse("nonsense = 1\n")), DataError);
    PipelineConfig bad;
    bad.k_speakers = 0;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Meeting, DirectoryRoundTrip) {
    TempDir tmp;
    MixSpec spec;
    spec.num_speakers = 3;
    spec.num_utterances = 6;
    spec.seed = 11;
    spec.sample_rate = 8000;
    spec.session_id = "m001";
    const auto t = generate_meeting(spec);
    write_meeting(tmp.path / "m001", t);
    for (const char *f : {"mixture.wav", "truth.json", "meeting.json", "src0.wav", "src2.wav"})
        EXPECT_TRUE(fs::exists(tmp.path / "m001" / f)) << f;
    const auto back = load_meeting(tmp.path / "m001");
    EXPECT_EQ(back.session_id, t.session_id);
    EXPECT_EQ(back.speakers, t.speakers);
    EXPECT_EQ(back.utterances, t.utterances);
    EXPECT_EQ(back.mixture, t.mixture);
    EXPECT_EQ(back.sources(), t.sources());
    EXPECT_EQ(list_meetings(tmp.path), std::vector<fs::path>{tmp.path / "m001"});
    EXPECT_EQ(list_meetings(tmp.path / "m001"), std::vector<fs::path>{tmp.path / "m001"});
    EXPECT_THROW(load_meeting(tmp.path / "nope"), DataError);
}
