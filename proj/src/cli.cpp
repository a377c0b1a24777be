#include "svan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "svan/analysis.hpp"
#include "svan/error.hpp"
#include "svan/image.hpp"
#include "svan/model.hpp"
#include "svan/ops.hpp"
#include "svan/training.hpp"

namespace svan::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed: " + path.string());
}

void emit(std::ostream& out, const std::optional<fs::path>& path, const std::string& text) {
    if (path) write_text(*path, text);
    else out << text;
}

void apply_threads(std::size_t threads) { set_num_threads(std::max<std::size_t>(1, threads)); }

fs::path resolve_run_dir(const RunConfig& cfg, const fs::path& config_path, const std::optional<fs::path>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("SVAN_RUN_DIR"); env && *env) return fs::path(env) / config_path.stem();
    if (cfg.run_dir) return *cfg.run_dir;
    return fs::path("runs") / config_path.stem();
}

Dataset training_data(const RunConfig& cfg) {
    DatasetOptions opts{cfg.lr_dir, cfg.hr_crop};
    Dataset data = load_dataset(cfg.train_dir, cfg.model.scale, opts);
    if (data.empty()) throw IoError("no PNG images in " + cfg.train_dir.string());
    return data;
}

/// Validation set: val_dir when configured, otherwise the training images.
Dataset validation_data(const RunConfig& cfg, const Dataset& train) {
    if (!cfg.val_dir) return train;
    Dataset data = load_dataset(*cfg.val_dir, cfg.model.scale, DatasetOptions{std::nullopt, cfg.hr_crop});
    if (data.empty()) throw IoError("no PNG images in " + cfg.val_dir->string());
    return data;
}

TrainOptions train_options(const RunConfig& cfg, const Dataset* validation) {
    TrainOptions opts;
    opts.steps_per_epoch = cfg.steps_per_epoch;
    opts.validate_every = cfg.validate_every;
    opts.validation = validation;
    opts.shave = cfg.effective_shave();
    return opts;
}

// ---- analyze ------------------------------------------------------------------

struct AnalyzeArgs {
    std::size_t scale = 4;
    std::vector<std::size_t> size{256, 256};
    std::string convention = "padded";
    bool table3 = false;
    bool csv = false;
    std::optional<fs::path> out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    const std::size_t h = a.size.at(0);
    const std::size_t w = a.size.at(1);
    if (a.table3) {
        const auto rows = table3(h, w);
        emit(out, a.out, a.csv ? table3_csv(rows) : table3_text(rows));
        return kOk;
    }
    SvanConfig config;
    config.scale = a.scale;
    config.validate();
    const EfficiencyReport report = count_flops(config, h, w, parse_convention(a.convention));
    emit(out, a.out, a.csv ? report.to_csv() : report.to_text());
    return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<fs::path> out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    RunConfig cfg = load_run_config(a.config);
    if (a.seed) cfg.model.seed = *a.seed;
    apply_threads(a.threads.value_or(cfg.threads));
    const Dataset data = training_data(cfg);
    const Dataset validation = validation_data(cfg, data);

    const fs::path run_dir = resolve_run_dir(cfg, a.config, a.out);
    fs::create_directories(run_dir / "logs");
    fs::copy_file(a.config, run_dir / "config.txt", fs::copy_options::overwrite_existing);

    TrainOptions opts = train_options(cfg, &validation);
    opts.checkpoint_dir = run_dir / "checkpoints";
    const TrainResult result = train(cfg.model, data, cfg.protocol, cfg.model.seed, opts);
    write_text(run_dir / "logs" / "steps.csv", result.log.steps_csv());
    write_text(run_dir / "logs" / "validation.csv", result.log.validation_csv());

    out << "run directory: " << run_dir.string() << "\n";
    out << "steps: " << result.log.steps.size() << "\n";
    if (!result.log.steps.empty()) {
        out << "first loss: " << result.log.steps.front().loss << "\n";
        out << "final loss: " << result.log.steps.back().loss << "\n";
    }
    if (!result.log.validation.empty()) out << "final validation PSNR-Y: " << result.log.validation.back().psnr_y << "\n";
    return kOk;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
    fs::path checkpoint;
    fs::path input;
    fs::path out;
    std::optional<std::size_t> scale;
    std::size_t threads = 1;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
    apply_threads(a.threads);
    const SvanParams params = load_params(a.checkpoint);
    if (a.scale && *a.scale != params.config.scale)
        throw DimensionError("checkpoint is x" + std::to_string(params.config.scale) + " but x" +
                             std::to_string(*a.scale) + " was requested");
    const Tensor4 lr = to_tensor(load_png(a.input));
    const ImageRGB sr = to_image(svan_forward(lr, params));
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    save_png(sr, a.out);
    out << a.out.string() << ": " << sr.width << "x" << sr.height << "\n";
    return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    fs::path data;
    std::optional<fs::path> checkpoint;
    bool bicubic = false;
    std::optional<std::size_t> scale;
    std::optional<std::size_t> shave;
    std::optional<fs::path> lr_dir;
    std::size_t threads = 1;
    std::optional<fs::path> out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    apply_threads(a.threads);
    std::optional<SvanParams> params;
    std::size_t scale = a.scale.value_or(4);
    if (a.checkpoint) {
        params = load_params(*a.checkpoint);
        if (a.scale && *a.scale != params->config.scale)
            throw DimensionError("checkpoint is x" + std::to_string(params->config.scale) + " but x" +
                                 std::to_string(*a.scale) + " was requested");
        scale = params->config.scale;
    }
    const Dataset data = load_dataset(a.data, scale, DatasetOptions{a.lr_dir, std::nullopt});
    if (data.empty()) throw IoError("no PNG images in " + a.data.string());
    const Upscaler up = params ? model_upscaler(*params) : bicubic_upscaler(scale);
    const EvalReport report = evaluate(up, data, a.shave.value_or(scale));
    emit(out, a.out, report.to_csv());
    return kOk;
}

// ---- ablate ------------------------------------------------------------------

struct AblateArgs {
    fs::path config;
    std::vector<std::string> arrangements;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<fs::path> out;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
    std::vector<Arrangement> variants;
    for (const std::string& item : a.arrangements) {
        std::stringstream ss(item);
        std::string label;
        while (std::getline(ss, label, ','))
            if (!label.empty()) variants.push_back(parse_arrangement(label));
    }
    if (variants.empty()) variants.assign(kAllArrangements.begin(), kAllArrangements.end());

    RunConfig cfg = load_run_config(a.config);
    if (a.seed) cfg.model.seed = *a.seed;
    apply_threads(a.threads.value_or(cfg.threads));
    const Dataset data = training_data(cfg);
    const Dataset validation = validation_data(cfg, data);
    const TrainOptions opts = train_options(cfg, nullptr);

    std::ostringstream csv;
    csv << "arrangement,params,final_loss,val_psnr_y\n";
    std::optional<std::size_t> reference_params;
    for (Arrangement arrangement : variants) {
        SvanConfig model = cfg.model;
        model.arrangement = arrangement;
        const TrainResult result = train(model, data, cfg.protocol, model.seed, opts);
        const std::size_t params = result.params.count();
        if (reference_params && *reference_params != params)
            throw DimensionError("arrangement " + std::string(arrangement_label(arrangement)) +
                                 " changes the parameter count");
        reference_params = params;
        const double loss = result.log.steps.empty() ? 0.0 : result.log.steps.back().loss;
        const double psnr = evaluate(model_upscaler(result.params), validation, cfg.effective_shave()).mean_psnr_y;
        csv << arrangement_label(arrangement) << ',' << params << ',' << format_number(loss) << ',' << format_number(psnr) << '\n';
    }
    emit(out, a.out, csv.str());
    return kOk;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return kUsage;
        case ErrorKind::Config: return kConfig;
        case ErrorKind::Io: return kIo;
        case ErrorKind::Corrupt: return kCorrupt;
        case ErrorKind::Dimension: return kDimension;
        case ErrorKind::Numeric: return kNumeric;
        case ErrorKind::Unsupported: return kUnsupported;
    }
    return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"SVAN lightweight super-resolution"};
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "Parameter, FLOPs and receptive-field accounting");
    an->add_option("--scale", analyze.scale, "Upscaling factor")->check(CLI::IsMember({2, 3, 4}));
    an->add_option("--size", analyze.size, "Input height and width for FLOPs")->expected(2)->check(CLI::PositiveNumber);
    an->add_option("--convention", analyze.convention, "FLOPs convention")->check(CLI::IsMember({"padded", "valid"}));
    an->add_flag("--table3", analyze.table3, "Dense vs decomposed large-kernel comparison");
    an->add_flag("--csv", analyze.csv, "Machine-readable output");
    an->add_option("--out", analyze.out, "Write to file instead of stdout");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "Run the training protocol from a config file");
    tr->add_option("--config", train_args.config, "Run config")->required();
    tr->add_option("--seed", train_args.seed, "Override the config seed");
    tr->add_option("--threads", train_args.threads, "Worker threads")->check(CLI::PositiveNumber);
    tr->add_option("--out", train_args.out, "Run directory");

    InferArgs infer;
    auto* in = app.add_subcommand("infer", "Upscale one PNG");
    in->add_option("--checkpoint", infer.checkpoint, "Model checkpoint")->required();
    in->add_option("input", infer.input, "Input PNG")->required();
    in->add_option("--out", infer.out, "Output PNG")->required();
    in->add_option("--scale", infer.scale, "Expected scale")->check(CLI::IsMember({2, 3, 4}));
    in->add_option("--threads", infer.threads, "Worker threads")->check(CLI::PositiveNumber);

    EvalArgs eval;
    auto* ev = app.add_subcommand("eval", "PSNR-Y / SSIM-Y over a directory of HR PNGs");
    ev->add_option("data", eval.data, "Directory of HR PNGs")->required();
    auto* ck = ev->add_option("--checkpoint", eval.checkpoint, "Model checkpoint");
    auto* bi = ev->add_flag("--bicubic", eval.bicubic, "Evaluate the bicubic baseline");
    ck->excludes(bi);
    ev->add_option("--scale", eval.scale, "Upscaling factor")->check(CLI::IsMember({2, 3, 4}));
    ev->add_option("--shave", eval.shave, "Border pixels excluded (default: scale)");
    ev->add_option("--lr-dir", eval.lr_dir, "Directory of matching LR PNGs");
    ev->add_option("--threads", eval.threads, "Worker threads")->check(CLI::PositiveNumber);
    ev->add_option("--out", eval.out, "Write CSV to file instead of stdout");

    AblateArgs ablate;
    auto* ab = app.add_subcommand("ablate", "Train each attention arrangement under one budget");
    ab->add_option("--config", ablate.config, "Run config")->required();
    ab->add_option("arrangements", ablate.arrangements, "Arrangement labels (default: all four)");
    ab->add_option("--seed", ablate.seed, "Override the config seed");
    ab->add_option("--threads", ablate.threads, "Worker threads")->check(CLI::PositiveNumber);
    ab->add_option("--out", ablate.out, "Write CSV to file instead of stdout");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    if (ev->parsed() && !eval.bicubic && !eval.checkpoint) {
        err << "usage error: eval needs --checkpoint or --bicubic\n";
        return kUsage;
    }

    try {
        if (an->parsed()) return cmd_analyze(analyze, out);
        if (tr->parsed()) return cmd_train(train_args, out);
        if (in->parsed()) return cmd_infer(infer, out);
        if (ev->parsed()) return cmd_eval(eval, out);
        if (ab->parsed()) return cmd_ablate(ablate, out);
    } catch (const Error& e) {
        err << to_string(e.kind()) << " error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace svan::cli
