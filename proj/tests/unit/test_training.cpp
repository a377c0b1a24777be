#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "svan/error.hpp"
#include "svan/image.hpp"
#include "svan/training.hpp"

using namespace svan;
namespace fs = std::filesystem;

namespace {

const fs::path kImages = fs::path(SVAN_TEST_DATA) / "images";

SvanConfig tiny_config() {
    SvanConfig c;
    c.scale = 2;
    c.base_channels = 4;
    c.inner_channels = 8;
    c.num_blocks = 1;
    c.seed = 3;
    return c;
}

std::vector<StagePlan> tiny_protocol(std::size_t epochs) {
    return {StagePlan{"a", epochs, LossKind::L1, 1e-3, Schedule::halve_every(2), {8}, 2},
            StagePlan{"b", epochs, LossKind::L2, 5e-4, Schedule::cosine(2), {8, 6}, 2}};
}

Dataset tiny_data() { return load_dataset(kImages, 2, DatasetOptions{std::nullopt, 24}); }

}  // namespace

TEST_CASE("learning-rate schedules") {
    const auto protocol = default_protocol();
    REQUIRE(protocol.size() == 3);
    const StagePlan& s1 = protocol[0];
    CHECK(lr_at(s1, 0) == 1e-3);
    CHECK(lr_at(s1, 499) == 1e-3);
    CHECK(lr_at(s1, 500) == 5e-4);
    CHECK(lr_at(s1, 1000) == 2.5e-4);
    const StagePlan& s3 = protocol[2];
    CHECK(lr_at(s3, 0) == 5e-4);
    CHECK(lr_at(s3, 300) == 2.5e-4);
    const StagePlan& s2 = protocol[1];
    CHECK(lr_at(s2, 0) == 1e-4);
    CHECK(lr_at(s2, 10) == doctest::Approx(0.5e-4).epsilon(1e-12));
    for (std::size_t e = 0; e < 200; ++e) {
        CHECK(lr_at(s2, e) == lr_at(s2, e + 20));
        CHECK(lr_at(s1, e * 7 + 7) <= lr_at(s1, e * 7));
    }
}

TEST_CASE("default protocol constants") {
    const auto p = default_protocol();
    CHECK(p[0].epochs == 2000);
    CHECK(p[0].loss == LossKind::L1);
    CHECK(p[0].patch_sizes == std::vector<std::size_t>{64});
    CHECK(p[1].epochs == 3000);
    CHECK(p[1].patch_sizes == std::vector<std::size_t>{64, 128});
    CHECK(p[1].total_epochs() == 6000);
    CHECK(p[1].schedule.kind == Schedule::Kind::Cosine);
    CHECK(p[1].schedule.period == 20);
    CHECK(p[2].epochs == 3000);
    CHECK(p[2].loss == LossKind::L2);
    CHECK(p[2].initial_lr == 5e-4);
    for (const StagePlan& s : p) CHECK(s.batch == 64);
}

TEST_CASE("run config parsing") {
    const RunConfig cfg = parse_run_config(
        "# toy\n"
        "scale = 2\nchannels = 8\nblocks = 2\narrangement = 1-17-17-1\nseed = 9\n"
        "train_dir = imgs\nhr_crop = 64\nepochs = 500\nbatch = 4\n"
        "stage3.loss = l1\nstage2.patch = 16, 32\nstage1.schedule = cosine:10\nstages = 1,3\n",
        "/base");
    CHECK(cfg.model.scale == 2);
    CHECK(cfg.model.base_channels == 8);
    CHECK(cfg.model.inner_channels == 16);
    CHECK(cfg.model.arrangement == Arrangement::InverseBottleneck);
    CHECK(cfg.train_dir == fs::path("/base/imgs"));
    CHECK(cfg.effective_shave() == 2);
    REQUIRE(cfg.protocol.size() == 2);
    CHECK(cfg.protocol[0].epochs == 500);
    CHECK(cfg.protocol[0].batch == 4);
    CHECK(cfg.protocol[0].schedule.kind == Schedule::Kind::Cosine);
    CHECK(cfg.protocol[1].loss == LossKind::L1);

    try {
        parse_run_config("scale = 2\ntrain_dir = x\nbogus = 1\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse_run_config("train_dir = x\nscale = five\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("train_dir = x\nstage1.loss = l3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("train_dir = x\narrangement = 17-17-1-1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("train_dir = x\nstage1.lr = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("scale = 2\n"), ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("dataset loading") {
    const Dataset d = tiny_data();
    REQUIRE(d.samples.size() == 3);
    CHECK(d.samples[0].id == "astronaut");
    CHECK(d.samples[1].id == "chelsea");
    CHECK(d.samples[0].hr.shape() == Shape{1, 3, 24, 24});
    CHECK(d.samples[0].lr.shape() == Shape{1, 3, 12, 12});
    CHECK(quantize(d.samples[0].lr).bitwise_equal(d.samples[0].lr));
    CHECK_THROWS_AS(load_dataset(kImages / "nope", 2), IoError);
    CHECK(load_dataset(fs::path(SVAN_TEST_DATA) / "golden", 2).empty());
}

TEST_CASE("training contracts") {
    const Dataset data = tiny_data();
    SUBCASE("zero epochs returns the initialization") {
        const TrainResult r = train(tiny_config(), data, tiny_protocol(0), 1);
        CHECK(r.params.bitwise_equal(init_params(tiny_config())));
        CHECK(r.log.steps.empty());
    }
    SUBCASE("same seed, same log; steps increase; loss finite") {
        TrainOptions opts;
        opts.steps_per_epoch = 2;
        opts.validation = &data;
        opts.validate_every = 2;
        const TrainResult a = train(tiny_config(), data, tiny_protocol(2), 7, opts);
        const TrainResult b = train(tiny_config(), data, tiny_protocol(2), 7, opts);
        CHECK(a.log.steps_csv() == b.log.steps_csv());
        CHECK(a.log.validation_csv() == b.log.validation_csv());
        CHECK(a.params.bitwise_equal(b.params));
        REQUIRE(a.log.steps.size() == 2 * 2 + 2 * 2 * 2);
        for (std::size_t i = 0; i < a.log.steps.size(); ++i) {
            CHECK(a.log.steps[i].step == i + 1);
            CHECK(std::isfinite(a.log.steps[i].loss));
        }
        CHECK(a.log.steps.back().stage == 2);
        CHECK(a.log.steps.back().epoch == 3);
        CHECK_FALSE(a.log.validation.empty());
        const TrainResult c = train(tiny_config(), data, tiny_protocol(2), 8, opts);
        CHECK(c.log.steps_csv() != a.log.steps_csv());
    }
    SUBCASE("checkpoints") {
        const fs::path dir = fs::temp_directory_path() / "svan_train_ckpt";
        fs::remove_all(dir);
        TrainOptions opts;
        opts.steps_per_epoch = 1;
        opts.validation = &data;
        opts.checkpoint_dir = dir;
        const TrainResult r = train(tiny_config(), data, tiny_protocol(1), 2, opts);
        for (const char* f : {"stage1.ckpt", "stage2.ckpt", "best.ckpt", "last.ckpt"}) CHECK(fs::exists(dir / f));
        CHECK(load_params(dir / "last.ckpt").bitwise_equal(r.params));
        fs::remove_all(dir);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(train(tiny_config(), Dataset{2, {}}, tiny_protocol(1), 1), DimensionError);
        auto big = tiny_protocol(1);
        big[0].patch_sizes = {13};
        CHECK_THROWS_AS(train(tiny_config(), data, big, 1), DimensionError);
        SvanParams broken = init_params(tiny_config());
        broken.at("recon.bias")[0] = std::numeric_limits<double>::quiet_NaN();
        TrainOptions opts;
        opts.steps_per_epoch = 1;
        CHECK_THROWS_AS(train(broken, data, tiny_protocol(1), 1, opts), NumericError);
    }
}

TEST_CASE("evaluation") {
    const Dataset data = tiny_data();
    const EvalReport identity = evaluate([&](const Tensor4& lr) {
        for (const Sample& s : data.samples)
            if (s.lr.bitwise_equal(lr)) return s.hr;
        return Tensor4{};
    }, data, 2);
    for (const EvalRecord& r : identity.records) {
        CHECK(std::isinf(r.psnr_y));
        CHECK(r.ssim_y == 1.0);
    }
    CHECK(identity.to_csv().find("inf") != std::string::npos);

    const EvalReport bic = evaluate(bicubic_upscaler(2), data, 2);
    CHECK(bic.mean_psnr_y == doctest::Approx(bic.mean_bicubic_psnr_y).epsilon(1e-12));
    CHECK(bic.mean_psnr_y > 20.0);
    CHECK(bic.to_csv().rfind("image,psnr_y,ssim_y,bicubic_psnr_y,bicubic_ssim_y\n", 0) == 0);
    CHECK(bic.to_csv().find("\nmean,") != std::string::npos);
    CHECK_THROWS_AS(evaluate(bicubic_upscaler(2), Dataset{2, {}}, 2), DimensionError);
}
