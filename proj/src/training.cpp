#include "svan/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "parallel.hpp"
#include "svan/adam.hpp"
#include "svan/autodiff.hpp"
#include "svan/error.hpp"
#include "svan/image.hpp"
#include "svan/metrics.hpp"
#include "svan/random.hpp"

namespace svan {

namespace fs = std::filesystem;

void StagePlan::validate() const {
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("stage " + name + ": lr must be > 0");
    if (patch_sizes.empty()) throw ConfigError("stage " + name + ": at least one patch size required");
    for (std::size_t p : patch_sizes)
        if (p == 0) throw ConfigError("stage " + name + ": patch size must be positive");
    if (batch == 0) throw ConfigError("stage " + name + ": batch must be positive");
    if (schedule.period == 0) throw ConfigError("stage " + name + ": schedule period must be positive");
}

double lr_at(const StagePlan& plan, std::size_t epoch) {
    const std::size_t period = std::max<std::size_t>(1, plan.schedule.period);
    if (plan.schedule.kind == Schedule::Kind::HalveEvery)
        return plan.initial_lr * std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(epoch / period, 1074)));
    const double phase = static_cast<double>(epoch % period) / static_cast<double>(period);
    return plan.initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

std::vector<StagePlan> default_protocol() {
    return {
        StagePlan{"pretrain", 2000, LossKind::L1, 1e-3, Schedule::halve_every(500), {64}, 64},
        StagePlan{"cosine", 3000, LossKind::L1, 1e-4, Schedule::cosine(20), {64, 128}, 64},
        StagePlan{"finetune", 3000, LossKind::L2, 5e-4, Schedule::halve_every(300), {64}, 64},
    };
}

// ---- data ------------------------------------------------------------------

Sample make_sample(std::string id, const Tensor4& hr, std::size_t scale) {
    const Tensor4 cropped = quantize(modcrop(hr, scale));
    Tensor4 lr = quantize(bicubic_resize(cropped, cropped.h() / scale, cropped.w() / scale));
    return {std::move(id), std::move(lr), cropped};
}

namespace {

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

}  // namespace

Dataset load_dataset(const fs::path& dir, std::size_t scale, const DatasetOptions& options) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
    std::optional<fs::path> lr_dir = options.lr_dir;
    if (!lr_dir) {
        fs::path sibling = dir;
        if (!sibling.has_filename()) sibling = sibling.parent_path();
        sibling += "_x" + std::to_string(scale);
        if (fs::is_directory(sibling)) lr_dir = sibling;
    }
    if (lr_dir && !fs::is_directory(*lr_dir)) throw IoError("LR directory not found: " + lr_dir->string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_png(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    Dataset data;
    data.scale = scale;
    for (const fs::path& file : files) {
        Tensor4 hr = to_tensor(load_png(file));
        if (options.hr_crop) {
            const std::size_t c = *options.hr_crop;
            if (hr.h() < c || hr.w() < c)
                throw DimensionError(file.string() + ": smaller than hr_crop " + std::to_string(c));
            hr = crop(hr, 0, 0, c, c);
        }
        const std::string id = file.stem().string();
        if (!lr_dir) {
            data.samples.push_back(make_sample(id, hr, scale));
            continue;
        }
        Tensor4 lr = to_tensor(load_png(*lr_dir / file.filename()));
        hr = modcrop(hr, scale);
        if (lr.h() * scale != hr.h() || lr.w() * scale != hr.w())
            throw DimensionError(file.filename().string() + ": LR " + lr.shape().str() + " inconsistent with HR " +
                                 hr.shape().str() + " at scale " + std::to_string(scale));
        data.samples.push_back(Sample{id, std::move(lr), std::move(hr)});
    }
    return data;
}

// ---- logs --------------------------------------------------------------------

std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

const auto num = format_number;

}  // namespace

std::string TrainLog::steps_csv() const {
    std::ostringstream os;
    os << "step,stage,epoch,lr,loss\n";
    for (const StepRecord& r : steps)
        os << r.step << ',' << r.stage << ',' << r.epoch << ',' << num(r.lr) << ',' << num(r.loss) << '\n';
    return os.str();
}

std::string TrainLog::validation_csv() const {
    std::ostringstream os;
    os << "stage,epoch,psnr_y\n";
    for (const ValidationRecord& r : validation) os << r.stage << ',' << r.epoch << ',' << num(r.psnr_y) << '\n';
    return os.str();
}

// ---- training ----------------------------------------------------------------

double loss_and_gradients(const SvanParams& params, const Tensor4& lr, const Tensor4& hr, LossKind loss,
                          NamedTensors& grads) {
    Tape tape;
    const auto vars = register_params(tape, params);
    const Var input = tape.leaf(lr);
    const Var sr = svan_forward(input, vars, params.config);
    const Var l = loss == LossKind::L1 ? ad::l1_loss(sr, hr) : ad::l2_loss(sr, hr);
    tape.backward(l);
    grads.clear();
    for (const auto& [name, v] : vars) grads.emplace(name, v.grad());
    return l.value().item();
}

namespace {

Tensor4 stack(const std::vector<Tensor4>& items) {
    const Shape one = items.front().shape();
    Tensor4 out(Shape{items.size(), one.c, one.h, one.w});
    const std::size_t per = one.numel();
    for (std::size_t i = 0; i < items.size(); ++i)
        std::copy(items[i].data().begin(), items[i].data().end(), out.raw() + i * per);
    return out;
}

double validation_psnr(const SvanParams& params, const Dataset& data, std::size_t shave) {
    return evaluate(model_upscaler(params), data, shave).mean_psnr_y;
}

}  // namespace

TrainResult train(const SvanConfig& config, const Dataset& data, const std::vector<StagePlan>& protocol,
                  std::uint64_t seed, const TrainOptions& options) {
    return train(init_params(config), data, protocol, seed, options);
}

TrainResult train(SvanParams initial, const Dataset& data, const std::vector<StagePlan>& protocol,
                  std::uint64_t seed, const TrainOptions& options) {
    const std::size_t scale = initial.config.scale;
    if (data.empty()) throw DimensionError("training dataset is empty");
    if (data.scale != scale)
        throw DimensionError("dataset scale " + std::to_string(data.scale) + " differs from model scale " +
                             std::to_string(scale));
    std::size_t min_side = std::numeric_limits<std::size_t>::max();
    for (const Sample& s : data.samples) min_side = std::min({min_side, s.lr.h(), s.lr.w()});
    for (const StagePlan& plan : protocol) {
        plan.validate();
        for (std::size_t p : plan.patch_sizes)
            if (p > min_side)
                throw DimensionError("patch " + std::to_string(p) + " larger than the smallest LR image side " +
                                     std::to_string(min_side));
    }
    if (options.checkpoint_dir) fs::create_directories(*options.checkpoint_dir);

    TrainResult result{std::move(initial), {}};
    SvanParams& params = result.params;
    Rng rng(seed);
    std::size_t step = 0;
    double best_psnr = -std::numeric_limits<double>::infinity();

    auto validate = [&](std::size_t stage, std::size_t epoch) {
        if (!options.validation || options.validation->empty()) return;
        const double psnr = validation_psnr(params, *options.validation, options.shave);
        result.log.validation.push_back({stage, epoch, psnr});
        if (psnr > best_psnr) {
            best_psnr = psnr;
            if (options.checkpoint_dir) save_params(params, *options.checkpoint_dir / "best.ckpt");
        }
    };

    for (std::size_t si = 0; si < protocol.size(); ++si) {
        const StagePlan& plan = protocol[si];
        const std::size_t stage = si + 1;
        const std::size_t per_epoch = options.steps_per_epoch > 0
            ? options.steps_per_epoch
            : (data.samples.size() + plan.batch - 1) / plan.batch;
        AdamState adam;
        std::size_t epoch = 0;
        std::size_t last_validated = static_cast<std::size_t>(-1);
        for (std::size_t patch : plan.patch_sizes) {
            for (std::size_t e = 0; e < plan.epochs; ++e, ++epoch) {
                const double lr = lr_at(plan, epoch);
                for (std::size_t it = 0; it < per_epoch; ++it) {
                    std::vector<Tensor4> lr_batch;
                    std::vector<Tensor4> hr_batch;
                    for (std::size_t b = 0; b < plan.batch; ++b) {
                        const Sample& s = data.samples[uniform_index(rng, data.samples.size())];
                        PatchPair pair = sample_patch(s.lr, s.hr, patch, scale, rng);
                        pair = augment(pair, static_cast<int>(uniform_index(rng, 8)));
                        lr_batch.push_back(std::move(pair.lr));
                        hr_batch.push_back(std::move(pair.hr));
                    }
                    NamedTensors grads;
                    const double loss =
                        loss_and_gradients(params, stack(lr_batch), stack(hr_batch), plan.loss, grads);
                    ++step;
                    if (!std::isfinite(loss))
                        throw NumericError("non-finite loss at step " + std::to_string(step) + " (stage " +
                                           std::to_string(stage) + ", epoch " + std::to_string(epoch) + ")");
                    adam_step(params.tensors, grads, adam, lr);
                    const StepRecord rec{step, stage, epoch, lr, loss};
                    result.log.steps.push_back(rec);
                    if (options.on_step) options.on_step(rec);
                }
                if (options.validate_every > 0 && (epoch + 1) % options.validate_every == 0) {
                    validate(stage, epoch + 1);
                    last_validated = epoch + 1;
                }
            }
        }
        if (epoch > 0 && last_validated != epoch) validate(stage, epoch);
        if (options.checkpoint_dir) save_params(params, *options.checkpoint_dir / ("stage" + std::to_string(stage) + ".ckpt"));
    }
    if (options.checkpoint_dir) save_params(params, *options.checkpoint_dir / "last.ckpt");
    return result;
}

// ---- evaluation --------------------------------------------------------------

Upscaler bicubic_upscaler(std::size_t scale) {
    return [scale](const Tensor4& lr) { return bicubic_resize(lr, lr.h() * scale, lr.w() * scale); };
}

Upscaler model_upscaler(const SvanParams& params) {
    return [&params](const Tensor4& lr) { return svan_forward(lr, params); };
}

EvalReport evaluate(const Upscaler& upscale, const Dataset& data, std::size_t shave) {
    if (data.empty()) throw DimensionError("evaluation dataset is empty");
    EvalReport report;
    report.records.resize(data.samples.size());
    detail::parallel_for(data.samples.size(), num_threads(), [&](std::size_t i) {
        const Sample& s = data.samples[i];
        const Tensor4 sr = quantize(upscale(s.lr));
        if (sr.shape() != s.hr.shape())
            throw DimensionError(s.id + ": upscaled size " + sr.shape().str() + " differs from HR " + s.hr.shape().str());
        const Tensor4 bic = quantize(bicubic_resize(s.lr, s.hr.h(), s.hr.w()));
        report.records[i] = EvalRecord{s.id, psnr_y(sr, s.hr, shave), ssim_y(sr, s.hr, shave),
                                       psnr_y(bic, s.hr, shave), ssim_y(bic, s.hr, shave)};
    });
    const double n = static_cast<double>(report.records.size());
    for (const EvalRecord& r : report.records) {
        report.mean_psnr_y += r.psnr_y / n;
        report.mean_ssim_y += r.ssim_y / n;
        report.mean_bicubic_psnr_y += r.bicubic_psnr_y / n;
        report.mean_bicubic_ssim_y += r.bicubic_ssim_y / n;
    }
    return report;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "image,psnr_y,ssim_y,bicubic_psnr_y,bicubic_ssim_y\n";
    for (const EvalRecord& r : records)
        os << r.id << ',' << num(r.psnr_y) << ',' << num(r.ssim_y) << ',' << num(r.bicubic_psnr_y) << ','
           << num(r.bicubic_ssim_y) << '\n';
    os << "mean," << num(mean_psnr_y) << ',' << num(mean_ssim_y) << ',' << num(mean_bicubic_psnr_y) << ','
       << num(mean_bicubic_ssim_y) << '\n';
    return os.str();
}

// ---- run config ----------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& v, int line) {
    std::size_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("expected a non-negative integer, got '" + v + "'", line);
    return out;
}

double parse_real(const std::string& v, int line) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("expected a number, got '" + v + "'", line);
    return out;
}

std::vector<std::size_t> parse_list(const std::string& v, int line) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_size(trim(item), line));
    if (out.empty()) throw ConfigError("expected a comma-separated list", line);
    return out;
}

LossKind parse_loss(const std::string& v, int line) {
    if (v == "l1" || v == "L1") return LossKind::L1;
    if (v == "l2" || v == "L2") return LossKind::L2;
    throw ConfigError("loss must be l1 or l2, got '" + v + "'", line);
}

Schedule parse_schedule(const std::string& v, int line) {
    const auto colon = v.find(':');
    if (colon == std::string::npos) throw ConfigError("schedule must be halve:N or cosine:T", line);
    const std::string kind = trim(v.substr(0, colon));
    const std::size_t period = parse_size(trim(v.substr(colon + 1)), line);
    if (period == 0) throw ConfigError("schedule period must be positive", line);
    if (kind == "halve") return Schedule::halve_every(period);
    if (kind == "cosine") return Schedule::cosine(period);
    throw ConfigError("schedule must be halve:N or cosine:T, got '" + v + "'", line);
}

void apply_stage_key(StagePlan& plan, const std::string& field, const std::string& value, int line) {
    if (field == "epochs") plan.epochs = parse_size(value, line);
    else if (field == "lr") plan.initial_lr = parse_real(value, line);
    else if (field == "batch") plan.batch = parse_size(value, line);
    else if (field == "patch") plan.patch_sizes = parse_list(value, line);
    else if (field == "loss") plan.loss = parse_loss(value, line);
    else if (field == "schedule") plan.schedule = parse_schedule(value, line);
    else throw ConfigError("unknown stage field '" + field + "'", line);
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
    RunConfig cfg;
    auto resolve = [&](const std::string& v) {
        fs::path p(v);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };

    struct Entry {
        std::string key;
        std::string value;
        int line;
    };
    std::vector<Entry> global_stage;
    std::vector<Entry> per_stage;
    std::optional<Entry> stage_selection;
    bool inner_given = false;

    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", line);
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError("empty key or value", line);

        try {
            if (key == "scale") cfg.model.scale = parse_size(value, line);
            else if (key == "channels" || key == "base_channels") cfg.model.base_channels = parse_size(value, line);
            else if (key == "inner_channels") { cfg.model.inner_channels = parse_size(value, line); inner_given = true; }
            else if (key == "blocks") cfg.model.num_blocks = parse_size(value, line);
            else if (key == "arrangement") cfg.model.arrangement = parse_arrangement(value);
            else if (key == "seed") cfg.model.seed = parse_size(value, line);
            else if (key == "threads") cfg.threads = std::max<std::size_t>(1, parse_size(value, line));
            else if (key == "train_dir") cfg.train_dir = resolve(value);
            else if (key == "lr_dir") cfg.lr_dir = resolve(value);
            else if (key == "val_dir") cfg.val_dir = resolve(value);
            else if (key == "run_dir") cfg.run_dir = resolve(value);
            else if (key == "hr_crop") cfg.hr_crop = parse_size(value, line);
            else if (key == "steps_per_epoch") cfg.steps_per_epoch = parse_size(value, line);
            else if (key == "validate_every") cfg.validate_every = parse_size(value, line);
            else if (key == "shave") cfg.shave = parse_size(value, line);
            else if (key == "stages") stage_selection = Entry{key, value, line};
            else if (key == "epochs" || key == "batch" || key == "patch" || key == "lr" || key == "loss" ||
                     key == "schedule")
                global_stage.push_back({key, value, line});
            else if (key.rfind("stage", 0) == 0 && key.find('.') != std::string::npos) per_stage.push_back({key, value, line});
            else throw ConfigError("unknown key '" + key + "'", line);
        } catch (const UsageError& e) {
            throw ConfigError(e.what(), line);
        }
    }
    if (!inner_given) cfg.model.inner_channels = 2 * cfg.model.base_channels;
    try {
        cfg.model.validate();
    } catch (const UsageError& e) {
        throw ConfigError(e.what());
    }

    for (const Entry& e : global_stage)
        for (StagePlan& plan : cfg.protocol) apply_stage_key(plan, e.key, e.value, e.line);
    for (const Entry& e : per_stage) {
        const auto dot = e.key.find('.');
        const std::string index = e.key.substr(5, dot - 5);
        const std::size_t k = parse_size(index, e.line);
        if (k < 1 || k > cfg.protocol.size()) throw ConfigError("no stage " + index, e.line);
        apply_stage_key(cfg.protocol[k - 1], e.key.substr(dot + 1), e.value, e.line);
    }
    if (stage_selection) {
        std::vector<StagePlan> chosen;
        for (std::size_t k : parse_list(stage_selection->value, stage_selection->line)) {
            if (k < 1 || k > cfg.protocol.size())
                throw ConfigError("no stage " + std::to_string(k), stage_selection->line);
            chosen.push_back(cfg.protocol[k - 1]);
        }
        cfg.protocol = std::move(chosen);
    }
    for (const StagePlan& plan : cfg.protocol) plan.validate();
    if (cfg.train_dir.empty()) throw ConfigError("train_dir is required");
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str(), path.parent_path());
}

}  // namespace svan
