// cssad: simulate meetings, run the separation + diarization pipeline and
// score the results.
//
// Exit codes: 0 success, 1 usage or invalid setting, 2 data error, 3 stage
// failure.

#include "cssad/cssad.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace cssad;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitStage = 3;

struct Options {
    std::string config;
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    std::string scheme;
    std::string stage = "diarize";
    bool force = false;

    std::string input;
    std::string out;
    std::string ref;
    std::string hyp;
    std::string hyp_rttm;
};

PipelineConfig pipeline_config(const Options &o) {
    PipelineConfig cfg;
    if (!o.config.empty()) cfg = PipelineConfig::from(KeyValues::load(o.config));
    if (o.seed) cfg.seed = *o.seed;
    if (!o.scheme.empty()) cfg.scheme = parse_scheme(o.scheme);
    cfg.validate();
    return cfg;
}

int cmd_simulate(const Options &o) {
    if (o.config.empty()) throw InvalidArgument("simulate needs --config <spec file>");
    auto spec = SimulationSpec::from(KeyValues::load(o.config));
    if (o.seed) spec.mix.seed = *o.seed;
    const auto dirs = simulate_corpus(spec, o.out, o.jobs);
    for (const auto &d : dirs) {
        const auto truth = load_meeting(d);
        std::printf("%s  %zu utterances  overlap %.3f  %.1f s\n", truth.session_id.c_str(),
                    truth.utterances.size(), measure_overlap_ratio(truth),
                    truth.mixture.duration_seconds());
    }
    return 0;
}

int cmd_run(const Options &o) {
    const auto cfg = pipeline_config(o);
    RunOptions ro;
    ro.last_stage = parse_stage(o.stage);
    ro.force = o.force;
    ro.jobs = o.jobs;
    for (const auto &r : run_corpus(cfg, o.input, o.out, ro)) {
        std::printf("%s:", r.session_id.c_str());
        for (const auto &[st, cached] : r.stages)
            std::printf(" %s%s", std::string(kStageNames[static_cast<int>(st)]).c_str(),
                        cached ? "(cached)" : "");
        std::printf("\n");
    }
    return 0;
}

int cmd_evaluate(const Options &o) {
    const auto report = evaluate_corpus(o.ref, o.hyp, o.jobs);
    const fs::path out = o.out.empty() ? fs::path(o.hyp) : fs::path(o.out);
    write_file(out / "report.json", report.to_json().dump(2) + "\n");
    write_file(out / "report.txt", report.to_text());
    std::cout << report.to_text();
    return 0;
}

int cmd_metrics(const Options &o) {
    const auto ref = read_segment_json(o.ref);
    const auto hyp = read_segment_json(o.hyp);
    std::optional<std::vector<SpeakerSegment>> segs;
    if (!o.hyp_rttm.empty()) segs = from_rttm(decode_rttm(read_file(o.hyp_rttm), o.hyp_rttm));
    const std::string sid = ref.empty() ? std::string("meeting") : ref.front().session_id;
    std::cout << score_json(score_meeting(sid, ref, hyp, std::move(segs))).dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Continuous speech separation with word-level speaker diarization"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--jobs,-j", o.jobs, "Parallel workers")->check(CLI::PositiveNumber);
    };

    auto *sim = app.add_subcommand("simulate", "Generate a synthetic meeting corpus");
    sim->add_option("--config,-c", o.config, "Simulation spec (key = value)")->required()->check(CLI::ExistingFile);
    sim->add_option("--out,-o", o.out, "Output corpus directory")->required();
    sim->add_option("--seed", o.seed, "Override the spec seed");
    common(sim);

    auto *run = app.add_subcommand("run", "Run the pipeline over a meeting or corpus directory");
    run->add_option("input", o.input, "Meeting or corpus directory")->required();
    run->add_option("--out,-o", o.out, "Output directory")->required();
    run->add_option("--config,-c", o.config, "Pipeline config (key = value)")->check(CLI::ExistingFile);
    run->add_option("--seed", o.seed, "Override the config seed");
    run->add_option("--scheme", o.scheme,
                    "Sub-segmentation: none, uniform-2s, uniform-4s, sentence, word, sentence+word");
    run->add_option("--stage", o.stage, "Last stage to run: css, vad, asr, diarize");
    run->add_flag("--force", o.force, "Ignore the stage cache");
    common(run);

    auto *eval = app.add_subcommand("evaluate", "Score run outputs against the simulated truth");
    eval->add_option("truth", o.ref, "Corpus directory with truth.json files")->required();
    eval->add_option("hyp", o.hyp, "Run output directory")->required();
    eval->add_option("--out,-o", o.out, "Where to write report.json/report.txt (default: hyp)");
    common(eval);

    auto *met = app.add_subcommand("metrics", "Score a single hypothesis file");
    met->add_option("--ref", o.ref, "Reference segment-JSON")->required()->check(CLI::ExistingFile);
    met->add_option("--hyp", o.hyp, "Hypothesis segment-JSON (speaker and channel set)")
        ->required()
        ->check(CLI::ExistingFile);
    met->add_option("--hyp-rttm", o.hyp_rttm, "Hypothesis RTTM for DER")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*run) return cmd_run(o);
        if (*eval) return cmd_evaluate(o);
        return cmd_metrics(o);
    } catch (const StageError &e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const InvalidArgument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
