#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "direid/config.hpp"
#include "direid/error.hpp"
#include "direid/pipeline.hpp"
#include "helpers.hpp"

using namespace direid;
using testing_helpers::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int status;
    std::string out, err;
};

Run run_cli(const std::string& args, const TempDir& dir) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(DIREID_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

MetricsReport report_with_rank1(double r1) {
    MetricsReport r;
    r.variant = "fused";
    r.cmc = {r1, 0.6, 0.7, 0.75, 0.8, 0.82, 0.84, 0.86, 0.88, 0.9};
    r.map = 0.5;
    r.trials = 10;
    r.seed = 1;
    r.checkpoint = "stage2_iter10.ckpt";
    return r;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const auto cfg = default_experiment_config();
    const auto doc = to_json(cfg);
    EXPECT_EQ(to_json(from_json(doc)), doc);
    EXPECT_EQ(cfg.ddgan.iterations, 5000);
    EXPECT_EQ(cfg.synthetic.identities, 100);
    EXPECT_EQ(cfg.network.geometry, (Geometry{64, 32, 3}));
}

TEST(Config, OverridesApplyByDottedPath) {
    auto doc = to_json(default_experiment_config());
    apply_override(doc, "train.ddgan.iterations=12");
    apply_override(doc, "degradation.kind=resolution");
    apply_override(doc, "weights.recon=2.5");
    const auto cfg = from_json(doc);
    EXPECT_EQ(cfg.ddgan.iterations, 12);
    EXPECT_EQ(cfg.degradation.type, DegradationType::resolution);
    EXPECT_EQ(cfg.weights.recon, 2.5);
    EXPECT_EQ(cfg.stage_config(Stage::ddgan).weights.recon, 2.5);
    EXPECT_EQ(cfg.stage_config(Stage::ddgan).stage, Stage::ddgan);
}

TEST(Config, UnknownKeysAreNamed) {
    auto doc = to_json(default_experiment_config());
    try {
        apply_override(doc, "train.ddgan.iters=5");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.ddgan.iters"), std::string::npos) << e.what();
    }
    EXPECT_THROW(apply_override(doc, "no-equals-sign"), ConfigError);

    auto extra = to_json(default_experiment_config());
    extra["network"]["depth"] = 3;
    try {
        from_json(extra);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("network.depth"), std::string::npos) << e.what();
    }
}

TEST(Config, FileThenOverrides) {
    TempDir dir("config");
    std::ofstream(dir / "c.json") << R"({"seed": 7, "train": {"dfen": {"iterations": 3}}})";
    const auto cfg = resolve_config(dir / "c.json", {"seed=9"});
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.dfen.iterations, 3);
    EXPECT_EQ(cfg.pretrain.iterations, default_experiment_config().pretrain.iterations);
    EXPECT_THROW(resolve_config(dir / "absent.json", {}), Error);
}

TEST(Report, SingleFileHasZeroDeltas) {
    const auto table = render_report({{"full", report_with_rank1(0.512)}});
    std::istringstream in(table);
    std::string header, row, extra;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_FALSE(std::getline(in, extra));
    EXPECT_NE(header.find("rank-1"), std::string::npos);
    EXPECT_NE(header.find("mAP"), std::string::npos);
    EXPECT_NE(row.find("0.512"), std::string::npos);
    EXPECT_NE(row.find("+0.000"), std::string::npos);
    EXPECT_EQ(row.find("+0.0001"), std::string::npos);
}

TEST(Report, TwoFilesShowRankOneDelta) {
    const auto table = render_report({{"no-dil", report_with_rank1(0.446)}, {"full", report_with_rank1(0.512)}});
    std::istringstream in(table);
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    EXPECT_EQ(second.rfind("full", 0), 0u);
    EXPECT_NE(second.find("+0.066"), std::string::npos) << table;
    // Columns line up.
    EXPECT_EQ(header.size(), first.size());
    EXPECT_EQ(first.size(), second.size());
}

TEST(Report, EmptyListIsRejected) {
    EXPECT_THROW(render_report({}), ParameterError);
}

TEST(Report, SchemaMismatchNamesFile) {
    TempDir dir("report");
    std::ofstream(dir / "bad.json") << R"({"variant": "fused", "map": 0.3})";
    try {
        read_metrics(dir / "bad.json");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos) << e.what();
    }
    write_metrics(dir / "good.json", report_with_rank1(0.4));
    const auto back = read_metrics(dir / "good.json");
    EXPECT_EQ(back.cmc, report_with_rank1(0.4).cmc);
    EXPECT_EQ(back.checkpoint, "stage2_iter10.ckpt");
}

TEST(Presets, EncodeTheAblationRows) {
    const auto base = default_experiment_config();
    const auto no_dil = preset_config(base, "no-dil");
    EXPECT_FALSE(preset_uses_ddgan("no-dil"));
    EXPECT_TRUE(preset_uses_ddgan("full"));
    EXPECT_FALSE(no_dil.dfen.attention);
    EXPECT_FALSE(no_dil.eval.attention);
    EXPECT_EQ(preset_config(base, "no-multiscale").network.encoder_scales, 1);
    EXPECT_FALSE(preset_config(base, "no-attention").eval.attention);
    EXPECT_EQ(preset_config(base, "finv-only").eval.variant, FeatureVariant::f_inv);
    EXPECT_EQ(preset_config(base, "fsen-only").eval.variant, FeatureVariant::f_sen_weighted);
    EXPECT_EQ(to_json(preset_config(base, "full")), to_json(base));
    EXPECT_THROW(preset_config(base, "no-gan"), ParameterError);
}

TEST(Cli, EvaluateWithoutCheckpointFails) {
    TempDir dir("cli");
    const auto r = run_cli("evaluate", dir);
    EXPECT_NE(r.status, 0);
    EXPECT_NE((r.out + r.err).find("checkpoint"), std::string::npos) << r.out << r.err;
}

TEST(Cli, UnknownSubcommandAndKeyFail) {
    TempDir dir("cli");
    EXPECT_NE(run_cli("train-everything", dir).status, 0);
    const auto r = run_cli("pretrain-id --set train.bogus=1", dir);
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find("train.bogus"), std::string::npos) << r.err;
}

TEST(Cli, GenerateDataIsDeterministic) {
    TempDir dir("cli");
    const auto a = dir / "a", b = dir / "b";
    ASSERT_EQ(run_cli("generate-data --ids 4 --per-id 3 --cameras 2 --seed 1 --out " + a.string(), dir).status, 0);
    ASSERT_EQ(run_cli("generate-data --ids 4 --per-id 3 --cameras 2 --seed 1 --out " + b.string(), dir).status, 0);
    EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / std::filesystem::relative(e.path(), a))) << e.path();
    }
    EXPECT_EQ(files, 13u);
}

TEST(Cli, DegradeWritesPng) {
    TempDir dir("cli");
    ASSERT_EQ(run_cli("generate-data --ids 1 --per-id 1 --cameras 1 --out " + (dir / "d").string(), dir).status, 0);
    const auto m = load_manifest(dir / "d" / "manifest.csv");
    const auto src = m.root / m.entries[0].path;
    ASSERT_EQ(run_cli("degrade --kind illumination --param 2 --in " + src.string() + " --out " + (dir / "g.png").string(), dir)
                  .status,
              0);
    const auto clean = read_png(src), dark = read_png(dir / "g.png");
    EXPECT_LT(dark.mean(), clean.mean());
    EXPECT_NE(run_cli("degrade --kind blur --param 2 --in " + src.string() + " --out " + (dir / "x.png").string(), dir).status,
              0);
}

// Tiny end-to-end run through every stage subcommand.
TEST(Cli, StagesRunEndToEnd) {
    TempDir dir("cli");
    const std::string common = "--set output_dir=" + (dir / "run").string() +
                               " --set synthetic.identities=6 --set synthetic.per_identity=4"
                               " --set network.height=16 --set network.width=8 --set network.content_channels=8"
                               " --set network.degradation_channels=4 --set network.sensitive_channels=8"
                               " --set network.cue_channels=6 --set network.base_width=4"
                               " --set train.pretrain_id.iterations=2 --set train.ddgan.iterations=1"
                               " --set train.ddgan.batch_size=2 --set train.dfen.iterations=2"
                               " --set train.pretrain_id.identities_per_batch=2 --set train.dfen.identities_per_batch=2"
                               " --set eval.trials=2 --set eval.max_rank=3";
    auto pre = run_cli("pretrain-id " + common, dir);
    ASSERT_EQ(pre.status, 0) << pre.err;
    const std::string stage0 = pre.out.substr(0, pre.out.find('\n'));
    EXPECT_TRUE(std::filesystem::exists(stage0));
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / "config.json"));

    auto ddgan = run_cli("train-ddgan " + common + " --stage0 " + stage0, dir);
    ASSERT_EQ(ddgan.status, 0) << ddgan.err;
    const std::string stage1 = ddgan.out.substr(0, ddgan.out.find('\n'));

    auto dfen = run_cli("train-dfen " + common + " --stage0 " + stage0 + " --stage1 " + stage1, dir);
    ASSERT_EQ(dfen.status, 0) << dfen.err;
    const std::string stage2 = dfen.out.substr(0, dfen.out.find('\n'));

    auto eval = run_cli("evaluate " + common + " --checkpoint " + stage2 + " --metrics " + (dir / "m.json").string(), dir);
    ASSERT_EQ(eval.status, 0) << eval.err;
    const auto m = read_metrics(dir / "m.json");
    EXPECT_EQ(m.cmc.size(), 3u);
    EXPECT_EQ(m.trials, 2);

    auto rep = run_cli("report " + (dir / "m.json").string() + " " + (dir / "m.json").string(), dir);
    ASSERT_EQ(rep.status, 0) << rep.err;
    EXPECT_NE(rep.out.find("rank-10"), std::string::npos);

    // The resolved config reproduces the run configuration.
    const auto saved = from_json(nlohmann::json::parse(slurp(dir / "run" / "config.json")));
    EXPECT_EQ(saved.network.content_channels, 8);
    EXPECT_EQ(saved.ddgan.iterations, 1);
}
