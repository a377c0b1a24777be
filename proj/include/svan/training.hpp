#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "svan/model.hpp"
#include "svan/tensor.hpp"

namespace svan {

enum class LossKind { L1, L2 };

struct Schedule {
    enum class Kind { HalveEvery, Cosine };
    Kind kind = Kind::HalveEvery;
    std::size_t period = 500;

    static Schedule halve_every(std::size_t n) { return {Kind::HalveEvery, n}; }
    static Schedule cosine(std::size_t t) { return {Kind::Cosine, t}; }
};

/// One training stage. Each entry of patch_sizes is a sub-phase of `epochs` epochs.
struct StagePlan {
    std::string name;
    std::size_t epochs = 1;
    LossKind loss = LossKind::L1;
    double initial_lr = 1e-3;
    Schedule schedule{};
    std::vector<std::size_t> patch_sizes{64};
    std::size_t batch = 64;

    std::size_t total_epochs() const { return epochs * patch_sizes.size(); }
    void validate() const;
};

/// Learning rate at a stage-relative epoch. Cosine restarts every period.
double lr_at(const StagePlan& plan, std::size_t epoch);

/// Pre-training (L1, 1e-3 halved every 500, 2000 epochs, patch 64), cosine warm-restart
/// stage (L1, 1e-4, period 20, 3000 epochs at patch 64 then 3000 at 128) and L2
/// fine-tuning (5e-4 halved every 300, 3000 epochs, patch 64). Batch 64 throughout.
std::vector<StagePlan> default_protocol();

struct Sample {
    std::string id;
    Tensor4 lr;  // (1, 3, h, w)
    Tensor4 hr;  // (1, 3, s*h, s*w)
};

struct Dataset {
    std::size_t scale = 4;
    std::vector<Sample> samples;

    bool empty() const { return samples.empty(); }
};

/// modcrop(hr) and its anti-aliased bicubic downscale, both on the 8-bit grid.
Sample make_sample(std::string id, const Tensor4& hr, std::size_t scale);

struct DatasetOptions {
    /// Sibling directory of LR PNGs with the same file names; synthesized when absent.
    std::optional<std::filesystem::path> lr_dir;
    /// Keep only the top-left crop x crop region of every HR image.
    std::optional<std::size_t> hr_crop;
};

/// HR PNGs of `dir` in file-name order. Throws IoError for a missing directory and
/// DimensionError for inconsistent LR/HR sizes. An empty directory yields an empty dataset.
Dataset load_dataset(const std::filesystem::path& dir, std::size_t scale, const DatasetOptions& options = {});

struct StepRecord {
    std::size_t step = 0;   // global, starting at 1
    std::size_t stage = 0;  // 1-based
    std::size_t epoch = 0;  // stage-relative
    double lr = 0.0;
    double loss = 0.0;
};

struct ValidationRecord {
    std::size_t stage = 0;
    std::size_t epoch = 0;
    double psnr_y = 0.0;
};

/// Shortest round-trippable decimal; "inf", "-inf" or "nan" for non-finite values.
std::string format_number(double v);

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<ValidationRecord> validation;

    /// "step,stage,epoch,lr,loss" with round-trippable numbers.
    std::string steps_csv() const;
    std::string validation_csv() const;
};

struct TrainOptions {
    /// Iterations per epoch; 0 means ceil(dataset size / batch).
    std::size_t steps_per_epoch = 0;
    std::size_t validate_every = 50;
    const Dataset* validation = nullptr;
    std::size_t shave = 0;
    /// When set: checkpoints/stage<k>.ckpt at stage ends plus best.ckpt and last.ckpt.
    std::optional<std::filesystem::path> checkpoint_dir;
    std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
    SvanParams params;
    TrainLog log;
};

/// Adam over randomly cropped, dihedrally augmented minibatches. Starts from
/// init_params(config); patch sampling is driven by `seed`. Throws NumericError if a
/// loss becomes non-finite.
TrainResult train(const SvanConfig& config, const Dataset& data, const std::vector<StagePlan>& protocol,
                  std::uint64_t seed, const TrainOptions& options = {});
/// Continues from existing parameters.
TrainResult train(SvanParams initial, const Dataset& data, const std::vector<StagePlan>& protocol,
                  std::uint64_t seed, const TrainOptions& options = {});

/// Loss value and gradient of every parameter for one batch.
double loss_and_gradients(const SvanParams& params, const Tensor4& lr, const Tensor4& hr, LossKind loss,
                          NamedTensors& grads);

using Upscaler = std::function<Tensor4(const Tensor4& lr)>;
Upscaler bicubic_upscaler(std::size_t scale);
Upscaler model_upscaler(const SvanParams& params);

struct EvalRecord {
    std::string id;
    double psnr_y = 0.0;
    double ssim_y = 0.0;
    double bicubic_psnr_y = 0.0;
    double bicubic_ssim_y = 0.0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double mean_psnr_y = 0.0;
    double mean_ssim_y = 0.0;
    double mean_bicubic_psnr_y = 0.0;
    double mean_bicubic_ssim_y = 0.0;

    /// "image,psnr_y,ssim_y,bicubic_psnr_y,bicubic_ssim_y", one row per image, then "mean".
    std::string to_csv() const;
};

/// Upscales every LR image, quantizes to 8 bits and scores against HR on Y with the
/// given border shave. Images are scored in parallel and reported in dataset order.
EvalReport evaluate(const Upscaler& upscale, const Dataset& data, std::size_t shave);

/// Everything a training run needs, as parsed from a key=value file.
struct RunConfig {
    SvanConfig model;
    std::vector<StagePlan> protocol = default_protocol();
    std::filesystem::path train_dir;
    std::optional<std::filesystem::path> lr_dir;
    std::optional<std::filesystem::path> val_dir;
    std::optional<std::size_t> hr_crop;
    std::size_t steps_per_epoch = 0;
    std::size_t validate_every = 50;
    std::optional<std::size_t> shave;  // defaults to the scale
    std::size_t threads = 1;
    std::optional<std::filesystem::path> run_dir;

    std::size_t effective_shave() const { return shave.value_or(model.scale); }
};

/// Parses "key = value" lines; '#' starts a comment. Relative paths resolve against
/// `base_dir`. Unknown keys and bad values throw ConfigError carrying the line number.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace svan
