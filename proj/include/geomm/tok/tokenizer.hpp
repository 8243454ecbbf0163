#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "geomm/data/modality.hpp"
#include "geomm/eval/metrics.hpp"
#include "geomm/nn.hpp"
#include "geomm/raster.hpp"
#include "geomm/rng.hpp"
#include "geomm/serialize.hpp"
#include "geomm/tok/fsq.hpp"
#include "geomm/tok/schedule.hpp"
#include "geomm/tok/token_grid.hpp"

namespace geomm::tok {

inline std::vector<int> default_levels_for_vocab(int vocab_size) {
    if (vocab_size >= 16384) return {8, 8, 8, 6, 5};  // 15360 usable codewords
    if (vocab_size >= 4096) return {8, 8, 8, 8};      // 4096
    if (vocab_size >= 64) return {4, 4, 4};           // tiny configs for tests
    return {4, 3};
}

struct TokenizerConfig {
    data::ModalitySpec modality;
    int patch = 16;
    int dec_patch = 4;
    int enc_dim = 96, enc_depth = 2, enc_heads = 4;
    int dec_dim = 96, dec_depth = 2, dec_heads = 4;
    int max_grid = 16;  // largest supported H/patch
    QuantizerKind quantizer = QuantizerKind::fsq;
    FsqConfig fsq;
    DiffusionSchedule schedule;
    bool predict_x0 = true;  // denoiser output parameterization (x0 vs epsilon)

    void finalize() {
        if (fsq.levels.empty() || quantizer == QuantizerKind::fsq) {
            if (fsq.levels.empty() || static_cast<long>(fsq.codebook_size()) > modality.vocab_size)
                fsq.levels = default_levels_for_vocab(modality.vocab_size);
            fsq.latent_dim = static_cast<int>(fsq.levels.size());
        }
        fsq.validate();
        if (!schedule.built()) schedule.build();
    }

    long codebook_size() const {
        return quantizer == QuantizerKind::fsq ? fsq.codebook_size() : modality.vocab_size;
    }
};

// Patchify helpers: raster (C,H,W) -> (n_patches x patch*patch*C), row-major
// over the patch grid, [c][py][px] within a patch.
inline nn::Mat patchify(const Raster& r, int patch) {
    const int gr = r.height / patch, gc = r.width / patch;
    nn::Mat m(static_cast<Eigen::Index>(gr) * gc, static_cast<Eigen::Index>(patch) * patch * r.channels);
    for (int i = 0; i < gr; ++i)
        for (int j = 0; j < gc; ++j) {
            Eigen::Index col = 0;
            const Eigen::Index row = static_cast<Eigen::Index>(i) * gc + j;
            for (int c = 0; c < r.channels; ++c)
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px, ++col)
                        m(row, col) = r.at(c, i * patch + py, j * patch + px);
        }
    return m;
}

inline Raster unpatchify(const nn::Mat& m, int patch, int channels, int height, int width) {
    Raster r(channels, height, width);
    const int gc = width / patch;
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
        const int i = static_cast<int>(row) / gc, j = static_cast<int>(row) % gc;
        Eigen::Index col = 0;
        for (int c = 0; c < channels; ++c)
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px, ++col)
                    r.at(c, i * patch + py, j * patch + px) = m(row, col);
    }
    return r;
}

// Fixed sinusoidal embedding of a timestep.
inline nn::Mat time_embedding(int t, int dim) {
    nn::Mat e(1, dim);
    for (int k = 0; k < dim / 2; ++k) {
        const double w = std::exp(-std::log(10000.0) * (2.0 * k) / dim);
        e(0, 2 * k) = std::sin(t * w);
        e(0, 2 * k + 1) = std::cos(t * w);
    }
    if (dim % 2) e(0, dim - 1) = 0.0;
    return e;
}

struct TrainHistory {
    std::vector<double> train_loss;     // per epoch mean
    std::vector<double> val_mse;        // per epoch reconstruction mse (normalized units)
    std::vector<double> val_objective;  // per epoch denoising mse on held-out images
    std::vector<double> grad_norm;      // per epoch mean
};

struct TokenizerTrainConfig {
    int epochs = 4;
    int batch_size = 8;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;
    bool horizontal_flips = true;
    int val_decode_steps = 4;
    std::uint64_t seed = 0;
    long max_steps = 0;  // 0 = no cap
};

class TokenizerModel {
public:
    TokenizerConfig config;

    TokenizerModel() = default;

    static TokenizerModel create(TokenizerConfig cfg, Rng& rng) {
        cfg.finalize();
        TokenizerModel m;
        m.config = cfg;
        const int pcols = cfg.patch * cfg.patch * cfg.modality.channels;
        const int dcols = cfg.dec_patch * cfg.dec_patch * cfg.modality.channels;
        m.patch_embed_.init(rng, pcols, cfg.enc_dim, 0.02);
        m.enc_pos_row_ = nn::param_normal(rng, cfg.max_grid, cfg.enc_dim, 0.02);
        m.enc_pos_col_ = nn::param_normal(rng, cfg.max_grid, cfg.enc_dim, 0.02);
        m.enc_blocks_.resize(static_cast<std::size_t>(cfg.enc_depth));
        for (auto& b : m.enc_blocks_) b.init(rng, cfg.enc_dim, cfg.enc_heads, 4 * cfg.enc_dim);
        m.enc_ln_.init(cfg.enc_dim);
        m.pre_quant1_.init(rng, cfg.enc_dim, cfg.enc_dim, 0.02);
        m.pre_quant2_.init(rng, cfg.enc_dim, cfg.fsq.latent_dim, 0.02);

        m.quantizer_.kind = cfg.quantizer;
        m.quantizer_.fsq = cfg.fsq;
        m.quantizer_.ema.init(cfg.codebook_size(), cfg.fsq.ema_decay);
        if (cfg.quantizer == QuantizerKind::vq)
            m.quantizer_.vq_codebook =
                nn::param_normal(rng, cfg.modality.vocab_size, cfg.fsq.latent_dim, 1.0);

        const int dgrid = cfg.max_grid * cfg.patch / cfg.dec_patch;
        m.dec_patch_embed_.init(rng, dcols, cfg.dec_dim, 0.02);
        m.dec_pos_row_ = nn::param_normal(rng, dgrid, cfg.dec_dim, 0.02);
        m.dec_pos_col_ = nn::param_normal(rng, dgrid, cfg.dec_dim, 0.02);
        m.cond_proj_.init(rng, cfg.fsq.latent_dim, cfg.dec_dim, 0.2);
        m.time_mlp1_.init(rng, cfg.dec_dim, cfg.dec_dim, 0.02);
        m.time_mlp2_.init(rng, cfg.dec_dim, cfg.dec_dim, 0.02);
        m.dec_blocks_.resize(static_cast<std::size_t>(cfg.dec_depth));
        for (auto& b : m.dec_blocks_) b.init(rng, cfg.dec_dim, cfg.dec_heads, 4 * cfg.dec_dim);
        m.dec_ln_.init(cfg.dec_dim);
        m.dec_head_.init(rng, cfg.dec_dim, dcols, 0.02);
        return m;
    }

    // -- normalization --------------------------------------------------------

    double normalize_value(double v) const {
        const auto& s = config.modality;
        return 2.0 * (v - s.value_min) / (s.value_max - s.value_min) - 1.0;
    }
    double denormalize_value(double v) const {
        const auto& s = config.modality;
        return s.value_min + 0.5 * (v + 1.0) * (s.value_max - s.value_min);
    }
    nn::Mat normalize_patches(nn::Mat m) const {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normalize_value(m.data()[i]);
        return m;
    }

    // -- encoder ---------------------------------------------------------------

    // Latent rows (one per 16x16 patch) before quantization.
    nn::Tensor encode_latent(nn::Tape& tape, const nn::Mat& patches, int grid_rows,
                             int grid_cols) const {
        nn::Tensor x = patch_embed_(tape, nn::Tensor(patches, false));
        x = tape.add(x, grid_pos(tape, enc_pos_row_, enc_pos_col_, grid_rows, grid_cols));
        for (const auto& b : enc_blocks_) x = b(tape, x);
        x = enc_ln_(tape, x);
        nn::Tensor h = tape.tanh_act(pre_quant1_(tape, x));
        return pre_quant2_(tape, h);
    }

    TokenGrid encode_image(const Raster& raster) const {
        if (raster.channels != config.modality.channels)
            throw std::invalid_argument("encode_image: channel count does not match modality");
        if (raster.height % config.patch != 0 || raster.width % config.patch != 0)
            throw std::invalid_argument("encode_image: spatial dims must be divisible by 16");
        const int gr = raster.height / config.patch, gc = raster.width / config.patch;
        if (gr > config.max_grid || gc > config.max_grid)
            throw std::invalid_argument("encode_image: raster exceeds configured max grid");
        nn::Tape tape;
        nn::Mat patches = normalize_patches(patchify(raster, config.patch));
        nn::Tensor z = encode_latent(tape, patches, gr, gc);
        TokenGrid g;
        g.modality = config.modality.name;
        g.rows = gr;
        g.cols = gc;
        g.vocab_size = config.codebook_size();
        g.ids = quantizer_.encode_rows(z.value());
        g.validate();
        return g;
    }

    // -- denoiser ---------------------------------------------------------------

    // One denoiser pass over decoder patches. `cond` holds one latent row per
    // 16x16 token patch; every 4x4 decoder patch inside it shares that row.
    nn::Tensor denoise(nn::Tape& tape, const nn::Tensor& noisy_patches, int t, int grid_rows,
                       int grid_cols, const nn::Tensor& cond_latent) const {
        const int scale = config.patch / config.dec_patch;
        const int dr = grid_rows * scale, dc = grid_cols * scale;
        nn::Tensor x = dec_patch_embed_(tape, noisy_patches);
        x = tape.add(x, grid_pos(tape, dec_pos_row_, dec_pos_col_, dr, dc));

        nn::Tensor cond = cond_latent;
        if (config.fsq.unit_sphere_normalize) cond = tape.normalize_rows(cond);
        nn::Tensor cond_emb = cond_proj_(tape, cond);
        std::vector<int> parent(static_cast<std::size_t>(dr) * dc);
        for (int i = 0; i < dr; ++i)
            for (int j = 0; j < dc; ++j)
                parent[static_cast<std::size_t>(i) * dc + j] = (i / scale) * grid_cols + j / scale;
        x = tape.add(x, tape.gather_rows(cond_emb, parent));

        nn::Tensor te(time_embedding(t, config.dec_dim), false);
        nn::Tensor temb = time_mlp2_(tape, tape.gelu(time_mlp1_(tape, te)));
        x = tape.add_rowvec(x, temb);

        for (const auto& b : dec_blocks_) x = b(tape, x);
        return dec_head_(tape, dec_ln_(tape, x));
    }

    // DDIM (eta = 0) over an evenly spaced subset of the schedule.
    Raster decode_tokens(const TokenGrid& grid, int num_steps, Rng& rng) const {
        grid.validate();
        if (grid.vocab_size != config.codebook_size())
            throw std::invalid_argument("decode_tokens: grid vocab does not match tokenizer");
        const auto& sched = config.schedule;
        const int C = config.modality.channels;
        const int height = grid.rows * config.patch, width = grid.cols * config.patch;
        const int dcols = config.dec_patch * config.dec_patch * C;
        const int scale = config.patch / config.dec_patch;
        const Eigen::Index drows = static_cast<Eigen::Index>(grid.rows) * scale * grid.cols * scale;

        nn::Mat cond(static_cast<Eigen::Index>(grid.size()), config.fsq.latent_dim);
        for (int i = 0; i < grid.size(); ++i) {
            const auto lat = quantizer_.id_to_latent(grid.ids[static_cast<std::size_t>(i)]);
            for (int d = 0; d < config.fsq.latent_dim; ++d) cond(i, d) = lat[static_cast<std::size_t>(d)];
        }

        nn::Mat x(drows, dcols);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();

        const auto steps = sched.subsample(num_steps);
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const int t = steps[k];
            const double abar = sched.alpha_bar[static_cast<std::size_t>(t)];
            nn::Tape tape;
            nn::Tensor pred =
                denoise(tape, nn::Tensor(x, false), t, grid.rows, grid.cols, nn::Tensor(cond, false));
            nn::Mat x0, eps;
            if (config.predict_x0) {
                x0 = pred.value().cwiseMax(-1.0).cwiseMin(1.0);
                eps = (x - std::sqrt(abar) * x0) / std::sqrt(1.0 - abar);
            } else {
                eps = pred.value();
                x0 = ((x - std::sqrt(1.0 - abar) * eps) / std::sqrt(abar)).cwiseMax(-1.0).cwiseMin(1.0);
            }
            if (k + 1 == steps.size()) {
                x = x0;
            } else {
                const double abar_prev = sched.alpha_bar[static_cast<std::size_t>(steps[k + 1])];
                x = std::sqrt(abar_prev) * x0 + std::sqrt(1.0 - abar_prev) * eps;
            }
        }

        Raster out = unpatchify(x, config.dec_patch, C, height, width);
        for (auto& v : out.v) {
            v = std::clamp(denormalize_value(v), config.modality.value_min,
                           config.modality.value_max);
        }
        if (config.modality.is_categorical) {
            for (auto& v : out.v)
                v = std::clamp(std::round(v), config.modality.value_min, config.modality.value_max);
        }
        out.round_to_float();
        return out;
    }

    // Encode then decode with a fixed seed; used for validation and reports.
    Raster reconstruct(const Raster& raster, int num_steps, std::uint64_t seed) const {
        TokenGrid g = encode_image(raster);
        Rng rng(seed);
        return decode_tokens(g, num_steps, rng);
    }

    const Quantizer& quantizer() const { return quantizer_; }
    Quantizer& quantizer() { return quantizer_; }

    nn::ParamMap params() {
        nn::ParamMap p;
        patch_embed_.collect(p, "enc.patch_embed");
        p.add("enc.pos_row", enc_pos_row_);
        p.add("enc.pos_col", enc_pos_col_);
        for (std::size_t i = 0; i < enc_blocks_.size(); ++i)
            enc_blocks_[i].collect(p, "enc.block" + std::to_string(i));
        enc_ln_.collect(p, "enc.ln");
        pre_quant1_.collect(p, "enc.pre_quant1");
        pre_quant2_.collect(p, "enc.pre_quant2");
        if (config.quantizer == QuantizerKind::vq) p.add("quant.codebook", quantizer_.vq_codebook);
        dec_patch_embed_.collect(p, "dec.patch_embed");
        p.add("dec.pos_row", dec_pos_row_);
        p.add("dec.pos_col", dec_pos_col_);
        cond_proj_.collect(p, "dec.cond_proj");
        time_mlp1_.collect(p, "dec.time_mlp1");
        time_mlp2_.collect(p, "dec.time_mlp2");
        for (std::size_t i = 0; i < dec_blocks_.size(); ++i)
            dec_blocks_[i].collect(p, "dec.block" + std::to_string(i));
        dec_ln_.collect(p, "dec.ln");
        dec_head_.collect(p, "dec.head");
        return p;
    }

    void save(const std::filesystem::path& path) {
        nlohmann::json meta;
        meta["kind"] = "tokenizer";
        meta["config"] = config_json();
        meta["usage_ema"] = quantizer_.ema.usage;
        save_checkpoint(path, meta, params());
    }

    static TokenizerModel load(const std::filesystem::path& path) {
        Checkpoint ck = load_checkpoint(path);
        if (ck.meta.at("kind").get<std::string>() != "tokenizer")
            throw version_error("TokenizerModel::load: not a tokenizer checkpoint");
        TokenizerConfig cfg = config_from_json(ck.meta.at("config"));
        Rng rng(0);  // weights are overwritten below
        TokenizerModel m = create(cfg, rng);
        nn::ParamMap p = m.params();
        assign_params(p, ck);
        m.quantizer_.ema.usage = ck.meta.at("usage_ema").get<std::vector<double>>();
        return m;
    }

    nlohmann::json config_json() const {
        const auto& c = config;
        return {{"modality", data::modality_to_json(c.modality)},
                {"patch", c.patch},
                {"dec_patch", c.dec_patch},
                {"enc_dim", c.enc_dim},
                {"enc_depth", c.enc_depth},
                {"enc_heads", c.enc_heads},
                {"dec_dim", c.dec_dim},
                {"dec_depth", c.dec_depth},
                {"dec_heads", c.dec_heads},
                {"max_grid", c.max_grid},
                {"quantizer", quantizer_kind_name(c.quantizer)},
                {"levels", c.fsq.levels},
                {"unit_sphere_normalize", c.fsq.unit_sphere_normalize},
                {"ema_decay", c.fsq.ema_decay},
                {"timesteps", c.schedule.timesteps},
                {"beta_start", c.schedule.beta_start},
                {"beta_end", c.schedule.beta_end},
                {"predict_x0", c.predict_x0}};
    }

    static TokenizerConfig config_from_json(const nlohmann::json& j) {
        TokenizerConfig c;
        c.modality = data::modality_from_json(j.at("modality"));
        c.patch = j.at("patch").get<int>();
        c.dec_patch = j.at("dec_patch").get<int>();
        c.enc_dim = j.at("enc_dim").get<int>();
        c.enc_depth = j.at("enc_depth").get<int>();
        c.enc_heads = j.at("enc_heads").get<int>();
        c.dec_dim = j.at("dec_dim").get<int>();
        c.dec_depth = j.at("dec_depth").get<int>();
        c.dec_heads = j.at("dec_heads").get<int>();
        c.max_grid = j.at("max_grid").get<int>();
        c.quantizer = quantizer_kind_from(j.at("quantizer").get<std::string>());
        c.fsq.levels = j.at("levels").get<std::vector<int>>();
        c.fsq.latent_dim = static_cast<int>(c.fsq.levels.size());
        c.fsq.unit_sphere_normalize = j.at("unit_sphere_normalize").get<bool>();
        c.fsq.ema_decay = j.at("ema_decay").get<double>();
        c.schedule.timesteps = j.at("timesteps").get<int>();
        c.schedule.beta_start = j.at("beta_start").get<double>();
        c.schedule.beta_end = j.at("beta_end").get<double>();
        c.predict_x0 = j.at("predict_x0").get<bool>();
        c.finalize();
        return c;
    }

private:
    nn::Tensor grid_pos(nn::Tape& tape, const nn::Tensor& row_table, const nn::Tensor& col_table,
                        int rows, int cols) const {
        std::vector<int> ri(static_cast<std::size_t>(rows) * cols), ci(ri.size());
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                ri[static_cast<std::size_t>(i) * cols + j] = i;
                ci[static_cast<std::size_t>(i) * cols + j] = j;
            }
        return tape.add(tape.gather_rows(row_table, ri), tape.gather_rows(col_table, ci));
    }

    nn::Linear patch_embed_;
    nn::Tensor enc_pos_row_, enc_pos_col_;
    std::vector<nn::EncoderBlock> enc_blocks_;
    nn::LayerNorm enc_ln_;
    nn::Linear pre_quant1_, pre_quant2_;
    Quantizer quantizer_;

    nn::Linear dec_patch_embed_;
    nn::Tensor dec_pos_row_, dec_pos_col_;
    nn::Linear cond_proj_, time_mlp1_, time_mlp2_;
    std::vector<nn::EncoderBlock> dec_blocks_;
    nn::LayerNorm dec_ln_;
    nn::Linear dec_head_;

    friend TokenizerModel train_tokenizer(const std::vector<Raster>&, const std::vector<Raster>&,
                                          TokenizerConfig, const TokenizerTrainConfig&,
                                          TrainHistory*);
};

inline Raster hflip(const Raster& r) {
    Raster out(r.channels, r.height, r.width);
    for (int c = 0; c < r.channels; ++c)
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x) out.at(c, y, x) = r.at(c, y, r.width - 1 - x);
    return out;
}

// Self-supervised tokenizer training: encode, quantize with a straight-through
// bottleneck, corrupt the normalized image at a random timestep, and regress
// the denoiser target with MSE. Deterministic given the seed.
inline TokenizerModel train_tokenizer(const std::vector<Raster>& train,
                                      const std::vector<Raster>& val, TokenizerConfig cfg,
                                      const TokenizerTrainConfig& tcfg,
                                      TrainHistory* history = nullptr) {
    if (train.empty()) throw std::invalid_argument("train_tokenizer: empty training set");
    cfg.finalize();
    Rng init_rng(derive_seed(tcfg.seed, "tokenizer.init." + cfg.modality.name));
    TokenizerModel model = TokenizerModel::create(cfg, init_rng);
    nn::ParamMap pm = model.params();
    nn::AdamW opt(pm.tensors(), {.lr = tcfg.lr,
                                 .weight_decay = tcfg.weight_decay,
                                 .clip_norm = tcfg.clip_norm});
    Rng rng(derive_seed(tcfg.seed, "tokenizer.train." + cfg.modality.name));

    const int gr = train[0].height / cfg.patch, gc = train[0].width / cfg.patch;
    long step = 0;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        std::vector<int> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        rng.shuffle(order);

        double epoch_loss = 0.0, epoch_norm = 0.0;
        long batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
            if (tcfg.max_steps > 0 && step >= tcfg.max_steps) break;
            opt.zero_grad();
            nn::Tape tape;
            nn::Tensor loss;
            int in_batch = 0;
            std::vector<long> batch_ids;
            for (std::size_t k = start;
                 k < std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size)); ++k) {
                Raster img = train[static_cast<std::size_t>(order[k])];
                if (tcfg.horizontal_flips && rng.uniform() < 0.5) img = hflip(img);
                nn::Mat x0 = model.normalize_patches(patchify(img, cfg.patch));
                nn::Tensor z = model.encode_latent(tape, x0, gr, gc);
                auto quant = model.quantizer_.quantize_tape(tape, z);
                batch_ids.insert(batch_ids.end(), quant.ids.begin(), quant.ids.end());

                // re-slice x0 into decoder patches
                Raster norm_img = img;
                for (auto& v : norm_img.v) v = model.normalize_value(v);
                nn::Mat dpatches = patchify(norm_img, cfg.dec_patch);

                const int t = rng.uniform_int(cfg.schedule.timesteps);
                const double abar = cfg.schedule.alpha_bar[static_cast<std::size_t>(t)];
                nn::Mat eps(dpatches.rows(), dpatches.cols());
                for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.gaussian();
                nn::Mat xt = std::sqrt(abar) * dpatches + std::sqrt(1.0 - abar) * eps;

                nn::Tensor pred = model.denoise(tape, nn::Tensor(xt, false), t, gr, gc, quant.quantized);
                nn::Tensor sample_loss = tape.mse_mean(pred, cfg.predict_x0 ? dpatches : eps);
                if (quant.aux_loss.defined())
                    sample_loss = tape.add(sample_loss, quant.aux_loss);
                loss = loss.defined() ? tape.add(loss, sample_loss) : sample_loss;
                ++in_batch;
            }
            if (in_batch == 0) break;
            loss = tape.mul_scalar(loss, 1.0 / in_batch);
            const double loss_v = loss.value()(0, 0);
            if (!std::isfinite(loss_v))
                throw training_diverged_error("train_tokenizer: non-finite loss at step " +
                                              std::to_string(step));
            tape.backward(loss);
            epoch_norm += opt.step();
            model.quantizer_.ema.update(batch_ids);
            epoch_loss += loss_v;
            ++batches;
            ++step;
        }
        if (history && batches > 0) {
            history->train_loss.push_back(epoch_loss / static_cast<double>(batches));
            history->grad_norm.push_back(epoch_norm / static_cast<double>(batches));
            double vmse = 0.0, vobj = 0.0;
            if (!val.empty()) {
                // fixed noise per val image so epochs are comparable
                Rng vrng(derive_seed(tcfg.seed, "tokenizer.valobj"));
                for (std::size_t i = 0; i < val.size(); ++i) {
                    Raster rec = model.reconstruct(val[i], tcfg.val_decode_steps,
                                                   derive_seed(tcfg.seed, "tokenizer.val"));
                    Raster ref = val[i];
                    for (auto& v : rec.v) v = model.normalize_value(v);
                    for (auto& v : ref.v) v = model.normalize_value(v);
                    vmse += eval::mse(rec, ref);

                    nn::Tape vt;
                    nn::Mat x0p = model.normalize_patches(patchify(val[i], cfg.patch));
                    nn::Tensor z = model.encode_latent(vt, x0p, gr, gc);
                    auto q = model.quantizer_.quantize_tape(vt, z);
                    Raster norm_img = val[i];
                    for (auto& v : norm_img.v) v = model.normalize_value(v);
                    nn::Mat dpatches = patchify(norm_img, cfg.dec_patch);
                    const int t = vrng.uniform_int(cfg.schedule.timesteps);
                    const double abar = cfg.schedule.alpha_bar[static_cast<std::size_t>(t)];
                    nn::Mat eps(dpatches.rows(), dpatches.cols());
                    for (Eigen::Index e = 0; e < eps.size(); ++e) eps.data()[e] = vrng.gaussian();
                    nn::Mat xt = std::sqrt(abar) * dpatches + std::sqrt(1.0 - abar) * eps;
                    nn::Tensor pred =
                        model.denoise(vt, nn::Tensor(xt, false), t, gr, gc, q.quantized);
                    vobj += vt.mse_mean(pred, cfg.predict_x0 ? dpatches : eps).value()(0, 0);
                }
                vmse /= static_cast<double>(val.size());
                vobj /= static_cast<double>(val.size());
            }
            history->val_mse.push_back(vmse);
            history->val_objective.push_back(vobj);
        }
        if (tcfg.max_steps > 0 && step >= tcfg.max_steps) break;
    }
    return model;
}

// Per-modality reconstruction metrics in physical units.
inline eval::MetricRow reconstruction_metrics(const TokenizerModel& model,
                                              const std::vector<Raster>& dataset, int num_steps,
                                              std::uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("reconstruction_metrics: empty dataset");
    eval::MetricRow acc{};
    const double range = model.config.modality.value_max - model.config.modality.value_min;
    double psnr_sum = 0.0;
    bool psnr_finite = true;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Raster rec = model.reconstruct(dataset[i], num_steps, derive_seed(seed, "recon"));
        acc.mae += eval::mae(rec, dataset[i]);
        acc.rmse += eval::rmse(rec, dataset[i]);
        acc.ssim += eval::ssim(rec, dataset[i], range);
        const double p = eval::psnr(rec, dataset[i], range);
        if (std::isinf(p))
            psnr_finite = false;
        else
            psnr_sum += p;
    }
    const double n = static_cast<double>(dataset.size());
    acc.mae /= n;
    acc.rmse /= n;
    acc.ssim /= n;
    acc.psnr = psnr_finite ? psnr_sum / n : std::numeric_limits<double>::infinity();
    return acc;
}

}  // namespace geomm::tok
