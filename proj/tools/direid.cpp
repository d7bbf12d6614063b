// Command-line front end for the DI-REID pipeline.
#include <torch/torch.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "direid/checkpoint.hpp"
#include "direid/config.hpp"
#include "direid/degradations.hpp"
#include "direid/error.hpp"
#include "direid/pipeline.hpp"

namespace fs = std::filesystem;
using namespace direid;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_file, "JSON experiment config");
    cmd->add_option("--set", c.overrides, "dotted override, e.g. train.ddgan.iterations=5000");
}

// Relative output directories live under $DIREID_OUT when it is set.
ExperimentConfig load_config(const Common& c) {
    auto cfg = resolve_config(c.config_file, c.overrides);
    if (const char* root = std::getenv("DIREID_OUT"); root && *root && cfg.output_dir.is_relative()) {
        cfg.output_dir = fs::path(root) / cfg.output_dir;
    }
    fs::create_directories(cfg.output_dir);
    std::ofstream(cfg.output_dir / "config.json") << to_json(cfg).dump(2) << '\n';
    return cfg;
}

void print_metrics(const MetricsReport& r) {
    std::cout << r.to_json().dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"Degradation-invariant person re-identification"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "render the synthetic pedestrian corpus");
    int ids = 100, per_id = 8, cameras = 2, height = 64, width = 32;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--ids", ids, "identities")->capture_default_str();
    gen->add_option("--per-id", per_id, "images per identity")->capture_default_str();
    gen->add_option("--cameras", cameras, "cameras")->capture_default_str();
    gen->add_option("--seed", gen_seed, "root seed")->capture_default_str();
    gen->add_option("--height", height)->capture_default_str();
    gen->add_option("--width", width)->capture_default_str();
    gen->add_option("--out", gen_out, "output directory")->required();

    // degrade
    auto* deg = app.add_subcommand("degrade", "apply one degradation operator to a PNG");
    std::string kind, deg_in, deg_out;
    double param = 0.0;
    deg->add_option("--kind", kind, "resolution | illumination")->required();
    deg->add_option("--param", param, "ratio r or gamma")->required();
    deg->add_option("--in", deg_in, "input PNG")->required()->check(CLI::ExistingFile);
    deg->add_option("--out", deg_out, "output PNG")->required();

    // stages
    Common pre_c, ddgan_c, dfen_c, eval_c, abl_c;
    auto* pre = app.add_subcommand("pretrain-id", "stage 0: train the identity encoder");
    add_common(pre, pre_c);

    auto* ddgan = app.add_subcommand("train-ddgan", "stage 1: degradation disentanglement GAN");
    add_common(ddgan, ddgan_c);
    std::string ddgan_stage0, resume;
    ddgan->add_option("--stage0", ddgan_stage0, "stage-0 checkpoint")->required();
    ddgan->add_option("--resume", resume, "stage-1 checkpoint to continue from");

    auto* dfen = app.add_subcommand("train-dfen", "stage 2: feature embedding network");
    add_common(dfen, dfen_c);
    std::string dfen_stage0, dfen_stage1;
    dfen->add_option("--stage0", dfen_stage0, "stage-0 checkpoint")->required();
    dfen->add_option("--stage1", dfen_stage1, "stage-1 checkpoint (omit to skip DIL)");

    auto* evaluate = app.add_subcommand("evaluate", "single-shot retrieval metrics of a checkpoint");
    add_common(evaluate, eval_c);
    std::string eval_ckpt, eval_out;
    evaluate->add_option("--checkpoint", eval_ckpt, "stage-2 checkpoint")->required();
    evaluate->add_option("--metrics", eval_out, "metrics JSON path (default <output_dir>/metrics.json)");

    auto* ablate = app.add_subcommand("ablate", "run one ablation preset end to end");
    add_common(ablate, abl_c);
    std::string preset;
    ablate->add_option("--preset", preset, "full | no-dil | no-multiscale | no-attention | finv-only | fsen-only")
        ->required();

    auto* report = app.add_subcommand("report", "compare metrics reports");
    std::vector<std::string> metric_files;
    report->add_option("files", metric_files, "metrics JSON files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            build_synthetic_dataset(ids, per_id, cameras, gen_seed, gen_out, {height, width, 3});
            std::cout << (fs::path(gen_out) / "manifest.csv").string() << '\n';
        } else if (*deg) {
            const auto type = parse_degradation_type(kind);
            write_png(deg_out, apply_degradation(read_png(deg_in), type, param));
        } else if (*pre) {
            const auto cfg = load_config(pre_c);
            const auto data = prepare_data(cfg);
            std::cout << run_pretrain(cfg, data).string() << '\n';
        } else if (*ddgan) {
            const auto cfg = load_config(ddgan_c);
            const auto data = prepare_data(cfg);
            if (resume.empty()) {
                std::cout << run_ddgan(cfg, data, ddgan_stage0).string() << '\n';
            } else {
                auto tc = cfg.stage_config(Stage::ddgan);
                Networks nets(network_for(cfg, data));
                DdganTrainer trainer(nets, tc);
                const long start = trainer.resume(resume);
                TrainingLog log(cfg.output_dir / "ddgan-resume.jsonl", true);
                std::cout << trainer.run(data.train, &log, start).checkpoint.string() << '\n';
            }
        } else if (*dfen) {
            const auto cfg = load_config(dfen_c);
            const auto data = prepare_data(cfg);
            std::optional<fs::path> stage1;
            if (!dfen_stage1.empty()) stage1 = dfen_stage1;
            std::cout << run_dfen(cfg, data, dfen_stage0, stage1).string() << '\n';
        } else if (*evaluate) {
            const auto cfg = load_config(eval_c);
            const auto data = prepare_data(cfg);
            const auto r = evaluate_checkpoint(cfg, data.split.test, eval_ckpt);
            write_metrics(eval_out.empty() ? cfg.output_dir / "metrics.json" : fs::path(eval_out), r);
            print_metrics(r);
        } else if (*ablate) {
            const auto cfg = load_config(abl_c);
            print_metrics(run_ablation(cfg, preset));
        } else if (*report) {
            std::vector<std::pair<std::string, MetricsReport>> runs;
            for (const auto& f : metric_files) runs.emplace_back(f, read_metrics(f));
            std::cout << render_report(runs);
        }
    } catch (const std::exception& e) {
        std::cerr << "direid: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
