#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pman/error.hpp"
#include "pman/panet/part_masks.hpp"
#include "pman/pipeline/commands.hpp"
#include "pman/pipeline/config.hpp"
#include "pman/pipeline/dataset.hpp"
#include "pman/pipeline/synthetic.hpp"
#include "pman/vision/png_io.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using namespace pman;
using namespace pman::pipeline;

using fixtures::scratch;
using fixtures::slurp;
using fixtures::tiny_run;

// ---------------------------------------------------------------- config

TEST(Config, DefaultsCarryTheReferenceValues) {
    const RunConfig c;
    EXPECT_EQ(c.pmnet.K, 3);
    EXPECT_DOUBLE_EQ(c.pmnet.margin, 0.7);
    EXPECT_EQ(c.training.P, 4);
    EXPECT_EQ(c.training.Q, 8);
    EXPECT_DOUBLE_EQ(c.training.augment.flip, 0.5);
    EXPECT_DOUBLE_EQ(c.training.augment.erase, 0.5);
    EXPECT_DOUBLE_EQ(c.training.augment.occlusion_prob, 0.3);
    EXPECT_DOUBLE_EQ(c.training.lr, 1.5e-4);
    EXPECT_DOUBLE_EQ(c.panet_training.lr, 1.5e-4);
    EXPECT_EQ(c.panet_training.epochs, 100);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, RoundTripsThroughText) {
    auto c = tiny_run();
    c.pmnet.weighting = pmnet::Weighting::Fixed;
    c.pmnet.fixed_weights = {4, 1, 1};
    c.eval.lambda = std::array<double, 3>{0.5, 0.25, 0.125};
    c.eval.protocol = EvalSettings::Protocol::VehicleId;
    c.training.augment.occlusion = true;
    c.training.lr = 3.5e-4;
    const auto text = to_ini(c);
    const auto back = parse_config(text);
    EXPECT_EQ(to_ini(back), text);
    EXPECT_EQ(back.backbone.widths, c.backbone.widths);
    EXPECT_EQ(back.pmnet.weighting, pmnet::Weighting::Fixed);
    EXPECT_EQ(*back.eval.lambda, *c.eval.lambda);
    EXPECT_DOUBLE_EQ(back.training.lr, 3.5e-4);
}

TEST(Config, PartialFileKeepsDefaults) {
    const auto c = parse_config("[training]\nlr = 0.001\n\n; comment\n[pmnet]\nK = 2\n");
    EXPECT_DOUBLE_EQ(c.training.lr, 0.001);
    EXPECT_EQ(c.pmnet.K, 2);
    EXPECT_EQ(c.training.P, 4);
}

TEST(Config, StrictParsing) {
    EXPECT_THROW(parse_config("[training]\nlearning_rate = 1\n"), ValidationError);
    EXPECT_THROW(parse_config("[trainingz]\nlr = 1\n"), ValidationError);
    EXPECT_THROW(parse_config("lr = 1\n"), ValidationError);
    EXPECT_THROW(parse_config("[training]\nP = four\n"), ValidationError);
    EXPECT_THROW(parse_config("[training]\nP = 4.5\n"), ValidationError);
    EXPECT_THROW(parse_config("[training]\nflip = maybe\n"), ValidationError);
    EXPECT_THROW(parse_config("[eval]\nlambda = 1,2\n"), ValidationError);
    EXPECT_THROW(parse_config("[eval]\nprotocol = market\n"), ValidationError);
    EXPECT_THROW(parse_config("[pmnet]\nweighting = softmax\n"), ValidationError);
}

TEST(Config, ValuesAreValidated) {
    EXPECT_THROW(parse_config("[training]\nP = 1\n"), ValidationError);
    EXPECT_THROW(parse_config("[synthetic]\nidentities = 1\n"), ValidationError);
    EXPECT_THROW(parse_config("[training]\nflip = 1\nerase = 2\n"), ValidationError);
    EXPECT_THROW(parse_config("[pmnet]\nK = 0\n"), ValidationError);
    EXPECT_THROW(parse_config("[eval]\nlambda = 1,-1,0\n"), ValidationError);
    EXPECT_THROW(parse_config("[backbone]\nwidths = 8,8\nstrides = 2\n"), ValidationError);
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/run.ini"), ValidationError); }

// ---------------------------------------------------------------- synthetic data

TEST(Synthetic, CountsAndSplit) {
    SyntheticSpec spec;
    spec.identities = 8;
    spec.images_per_identity = 16;
    const auto out = scratch("counts");
    write_synthetic_dataset(spec, out, false);
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(out)) pngs += e.path().extension() == ".png";
    EXPECT_EQ(pngs, 128u);
    const auto d = load_dataset(out);
    EXPECT_EQ(d.train.size(), 96u);
    EXPECT_EQ(d.query.size(), 16u);
    EXPECT_EQ(d.gallery.size(), 16u);
    std::map<int, std::set<int>> cams;
    for (const auto* s : {&d.train, &d.query, &d.gallery})
        for (const auto& x : *s) cams[x.identity].insert(x.camera);
    for (const auto& [id, c] : cams) EXPECT_GE(c.size(), 2u) << id;
    fs::remove_all(out);
}

TEST(Synthetic, SameSeedGivesIdenticalBytes) {
    SyntheticSpec spec;
    spec.identities = 3;
    spec.images_per_identity = 8;
    spec.clutter = 0.5;
    const auto a = scratch("bytes_a"), b = scratch("bytes_b");
    write_synthetic_dataset(spec, a, false);
    write_synthetic_dataset(spec, b, false);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
        ++files;
    }
    EXPECT_EQ(files, 24u + 3u);
    const auto first = render_synthetic(spec);
    spec.seed = 2;
    EXPECT_NE(render_synthetic(spec).front().image.pixels, first.front().image.pixels);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Synthetic, NonEmptyOutputNeedsForce) {
    SyntheticSpec spec;
    spec.identities = 2;
    spec.images_per_identity = 4;
    const auto out = scratch("force");
    write_synthetic_dataset(spec, out, false);
    EXPECT_THROW(write_synthetic_dataset(spec, out, false), ValidationError);
    EXPECT_NO_THROW(write_synthetic_dataset(spec, out, true));
    fs::remove_all(out);
}

TEST(Synthetic, PlainBackgroundIsSeparableByColour) {
    SyntheticSpec spec;
    spec.identities = 6;
    spec.images_per_identity = 4;
    spec.clutter = 0.0;
    const auto bg = background_color();
    for (const auto& img : render_synthetic(spec)) {
        for (int y = 0; y < img.image.height; ++y)
            for (int x = 0; x < img.image.width; ++x) {
                double d2 = 0;
                for (int k = 0; k < 3; ++k) {
                    const double diff = img.image.at(x, y, k) - double(bg[static_cast<std::size_t>(k)]);
                    d2 += diff * diff;
                }
                ASSERT_EQ(d2 > 30.0 * 30.0, img.foreground.at(x, y) != 0) << img.name << " " << x << "," << y;
            }
    }
}

TEST(Synthetic, PartsInsideChassisAndMarksLargeEnough) {
    SyntheticSpec spec;
    spec.identities = 10;
    spec.images_per_identity = 4;
    for (const auto& img : render_synthetic(spec)) {
        for (const auto& p : img.parts) {
            EXPECT_GE(p.x0, img.chassis.x0);
            EXPECT_LE(p.x1, img.chassis.x1);
            EXPECT_GE(p.y0, img.chassis.y0);
            EXPECT_LE(p.y1, img.chassis.y1);
        }
        EXPECT_LT(img.parts[0].y1, img.parts[1].y0);
        EXPECT_LT(img.parts[1].y1, img.parts[2].y0);
        const double area = double(img.chassis.width()) * img.chassis.height();
        EXPECT_GE(double(img.mark.width()) * img.mark.height(), 0.01 * area) << img.name;
        EXPECT_GE(img.mark.x0, img.chassis.x0);
        EXPECT_LE(img.mark.y1, img.chassis.y1);
    }
}

TEST(Synthetic, InvalidSpecRejected) {
    SyntheticSpec spec;
    spec.identities = 1;
    EXPECT_THROW(render_synthetic(spec), ValidationError);
    spec.identities = 4;
    spec.clutter = 1.5;
    EXPECT_THROW(render_synthetic(spec), ValidationError);
}

// ---------------------------------------------------------------- dataset

TEST(Dataset, NameParsing) {
    const auto s = parse_sample_name("0012_03_007");
    EXPECT_EQ(s.identity, 12);
    EXPECT_EQ(s.camera, 3);
    EXPECT_EQ(s.index, 7);
    EXPECT_THROW(parse_sample_name("12_3"), ValidationError);
    EXPECT_THROW(parse_sample_name("a_b_c"), ValidationError);
    EXPECT_THROW(parse_sample_name("1_2_3_4"), ValidationError);
}

TEST(Dataset, MissingPiecesAreReported) {
    EXPECT_THROW(load_dataset("/nonexistent/data"), ValidationError);
    const auto out = scratch("missing");
    fs::create_directories(out);
    EXPECT_THROW(load_dataset(out), ValidationError);
    std::ofstream(out / "train.txt") << "0000_00_000.png\n";
    std::ofstream(out / "query.txt") << "";
    std::ofstream(out / "gallery.txt") << "";
    EXPECT_THROW(load_dataset(out), ValidationError);
    fs::remove_all(out);
}

TEST(Dataset, TrainingLabelsAreContiguous) {
    SyntheticSpec spec;
    spec.identities = 3;
    spec.images_per_identity = 8;
    const auto out = scratch("labels");
    write_synthetic_dataset(spec, out, false);
    const auto ts = training_set(load_dataset(out));
    EXPECT_EQ(ts.num_classes, 3);
    EXPECT_EQ(ts.size(), 18u);
    EXPECT_NO_THROW(ts.validate());
    fs::remove_all(out);
}

// ---------------------------------------------------------------- commands

class Commands : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = scratch("commands");
        cfg_ = tiny_run();
        cmd_gen_data(cfg_, root_ / "data", false);
        cmd_train_panet(cfg_, root_ / "data", root_ / "panet.ckpt");
        cmd_train_pmnet(cfg_, root_ / "data", root_ / "panet.ckpt", root_ / "pmnet.ckpt");
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static eval::EvalReport run_eval(bool teachers, bool occluded, std::optional<fs::path> report) {
        EvalRequest r;
        r.pmnet = root_ / "pmnet.ckpt";
        if (teachers) r.panet = root_ / "panet.ckpt";
        r.data = root_ / "data";
        r.teachers = teachers;
        r.occluded_queries = occluded;
        r.report = report;
        r.config = cfg_;
        return cmd_eval(r);
    }

    static inline fs::path root_;
    static inline RunConfig cfg_;
};

TEST_F(Commands, PseudoLabelsAreCached) {
    EXPECT_TRUE(fs::exists(root_ / "data" / "pseudo"));
    const auto data = load_dataset(root_ / "data");
    const auto a = pseudo_labels(data, cfg_.grabcut);
    EXPECT_EQ(a.size(), data.train.size());
    auto other = cfg_.grabcut;
    other.options.iters = 3;
    const auto b = pseudo_labels(data, other);
    EXPECT_EQ(b.size(), a.size());
    const auto c = pseudo_labels(data, cfg_.grabcut);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], c[i]);
}

TEST_F(Commands, TrainingLogWritten) {
    const auto log = slurp(root_ / "pmnet.ckpt.log.csv");
    EXPECT_EQ(log.substr(0, log.find('\n')), "step,J,J_ID,J_Tri,L_PT,sigma2_G,sigma2_S,sigma2_T,lr");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 2 * 3);
}

TEST_F(Commands, GenMasksWritesEveryImage) {
    const auto out = root_ / "masks";
    const auto stats = cmd_gen_masks(root_ / "panet.ckpt", root_ / "data", out, 3, 0.5);
    EXPECT_EQ(stats.images, 32u);
    const auto set = panet::read_part_masks(out, "0000_00_000", 4);
    EXPECT_EQ(set.size(), 3u);
    EXPECT_TRUE(fs::exists(out / "0000_00_000_overlay.png"));
    EXPECT_TRUE(fs::exists(out / "0000_00_000_part2.png"));
}

TEST_F(Commands, EvalModesAndReproducibility) {
    const auto full = run_eval(true, false, root_ / "full.csv");
    const auto again = run_eval(true, false, root_ / "full2.csv");
    EXPECT_EQ(slurp(root_ / "full.csv"), slurp(root_ / "full2.csv"));
    EXPECT_EQ(full.valid_queries, 4u);
    const auto lite = run_eval(false, false, root_ / "lite.csv");
    EXPECT_EQ(lite.valid_queries, 4u);
    const auto occ = run_eval(true, true, root_ / "occ.csv");
    EXPECT_EQ(slurp(root_ / "occ.csv"), run_eval(true, true, std::nullopt).to_csv());
    EXPECT_GE(full.mAP, 0.0);
    EXPECT_LE(occ.mAP, 1.0);
    (void)again;
}

TEST_F(Commands, FullModeNeedsPanet) {
    EvalRequest r;
    r.pmnet = root_ / "pmnet.ckpt";
    r.data = root_ / "data";
    r.config = cfg_;
    EXPECT_THROW(cmd_eval(r), ValidationError);
}

TEST_F(Commands, VehicleIdProtocol) {
    EvalRequest r;
    r.pmnet = root_ / "pmnet.ckpt";
    r.data = root_ / "data";
    r.teachers = false;
    r.config = cfg_;
    r.config.eval.protocol = EvalSettings::Protocol::VehicleId;
    r.config.eval.repeats = 3;
    const auto a = cmd_eval(r), b = cmd_eval(r);
    EXPECT_EQ(a.to_csv(), b.to_csv());
    EXPECT_EQ(a.valid_queries, 4u);
}

TEST_F(Commands, Visualize) {
    const auto out = root_ / "vis";
    cmd_visualize(root_ / "pmnet.ckpt", root_ / "data" / "0000_00_000.png", out);
    for (int k = 0; k < 3; ++k)
        for (const char* what : {"_before.png", "_after.png", "_spatial.png"})
            EXPECT_TRUE(fs::exists(out / ("0000_00_000_stream" + std::to_string(k) + what))) << k << what;
    vision::RgbImage wrong(16, 16);
    vision::write_png(root_ / "wrong.png", wrong);
    EXPECT_THROW(cmd_visualize(root_ / "pmnet.ckpt", root_ / "wrong.png", out), ValidationError);
}

TEST_F(Commands, GlobalOnlyTrainsWithoutPanet) {
    auto c = cfg_;
    c.pmnet.global_only = true;
    const auto m = cmd_train_pmnet(c, root_ / "data", std::nullopt, root_ / "global.ckpt");
    EXPECT_TRUE(m.config().global_only);
    EXPECT_THROW(cmd_train_pmnet(cfg_, root_ / "data", std::nullopt, root_ / "x.ckpt"), ValidationError);
}

TEST_F(Commands, FusedRankingIgnoresLambdaScale) {
    EvalRequest r;
    r.pmnet = root_ / "pmnet.ckpt";
    r.panet = root_ / "panet.ckpt";
    r.data = root_ / "data";
    r.config = cfg_;
    r.config.eval.lambda = std::array<double, 3>{1.0, 0.5, 0.25};
    const auto base = cmd_eval(r);
    for (double s : {0.001, 3.0, 1000.0}) {
        r.config.eval.lambda = std::array<double, 3>{s, 0.5 * s, 0.25 * s};
        EXPECT_EQ(cmd_eval(r).to_csv(), base.to_csv()) << s;
    }
    EXPECT_LE(base.cmc1, base.cmc5);
}

TEST(ExitCodes, BadInputIsOneInternalIsTwo) {
    EXPECT_EQ(exit_code_for(ValidationError("x")), 1);
    EXPECT_EQ(exit_code_for(FormatError("x")), 1);
    EXPECT_EQ(exit_code_for(InsufficientEvidence("x")), 1);
    EXPECT_EQ(exit_code_for(ShapeError("x")), 2);
    EXPECT_EQ(exit_code_for(NonFiniteError("x")), 2);
    EXPECT_EQ(exit_code_for(InvariantError("x")), 2);
    EXPECT_EQ(exit_code_for(std::runtime_error("x")), 2);
}
