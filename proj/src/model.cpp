#include "ttse/model.hpp"

#include <cmath>

#include "ttse/phoneme.hpp"

namespace ttse {

void ModelConfig::validate() const {
  require(enc_layers > 0 && enc_hidden > 0 && enc_heads > 0 && enc_filter > 0,
          Error::Kind::validation, "model config: encoder fields must be positive");
  require(enc_hidden % enc_heads == 0, Error::Kind::validation,
          "model config: encoder hidden not divisible by heads");
  require(dp_layers > 0 && pp_layers > 0, Error::Kind::validation,
          "model config: predictor layers must be positive");
  require(dit_blocks > 0 && dit_hidden > 0 && dit_heads > 0 && dit_mlp > 0,
          Error::Kind::validation, "model config: denoiser fields must be positive");
  require(dit_hidden % dit_heads == 0, Error::Kind::validation,
          "model config: denoiser hidden not divisible by heads");
  require(clf_layers > 0 && clf_hidden > 0 && clf_hidden % clf_heads == 0,
          Error::Kind::validation, "model config: bad classifier shape");
  require(n_mels > 0 && pitch_bins > 1 && n_speakers > 0 && speaker_dim > 0,
          Error::Kind::validation, "model config: bad shared fields");
  require(enc_kernel % 2 == 1 && dp_kernel % 2 == 1 && pp_kernel % 2 == 1 &&
              clf_kernel % 2 == 1,
          Error::Kind::validation, "model config: kernels must be odd");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.enc_layers = 2;
  c.enc_hidden = 48;
  c.enc_heads = 2;
  c.enc_filter = 96;
  c.dp_layers = 2;
  c.dp_filter = 48;
  c.pp_layers = 2;
  c.pp_filter = 48;
  c.mel_enc_hidden = 48;
  c.diffusion_emb = 64;
  c.dit_blocks = 2;
  c.dit_hidden = 64;
  c.dit_heads = 2;
  c.dit_mlp = 128;
  c.clf_layers = 1;
  c.clf_hidden = 48;
  c.clf_heads = 2;
  c.clf_filter = 96;
  c.pitch_bins = 64;
  c.speaker_dim = 48;
  return c;
}

void PhonemeEncoder::init(const ModelConfig& cfg, int vocab, Rng& rng) {
  hidden = cfg.enc_hidden;
  emb = Tensor::leaf(nn::normal_init(cfg.enc_hidden, vocab + 1, 0.02, rng), "encoder.emb");
  blocks.resize(cfg.enc_layers);
  for (int i = 0; i < cfg.enc_layers; ++i)
    blocks[i].init(cfg.enc_hidden, cfg.enc_heads, cfg.enc_kernel, cfg.enc_filter,
                   cfg.enc_dropout, rng, "encoder.block" + std::to_string(i));
}

Tensor PhonemeEncoder::operator()(const std::vector<int>& ids, const RunCtx& ctx) const {
  require(!ids.empty(), Error::Kind::validation, "encode_phonemes: empty sequence");
  Tensor x = ad::embedding(emb, ids);
  x = ad::add(x, Tensor::constant(nn::sinusoidal_positions(hidden, x.cols())));
  for (const auto& b : blocks) x = b(x, ctx);
  return x;
}

void PhonemeEncoder::collect(ParamList& out) {
  out.push_back(&emb);
  for (auto& b : blocks) b.collect(out);
}

void VariancePredictor::init(int hidden, int layers, int kernel, int filter, double dropout,
                             Rng& rng, const std::string& name) {
  dropout_p = dropout;
  value_embed.init(1, hidden, rng, name + ".value_embed");
  convs.resize(layers);
  norms.resize(layers);
  int in = hidden;
  for (int i = 0; i < layers; ++i) {
    convs[i].init(in, filter, kernel, rng, name + ".conv" + std::to_string(i));
    norms[i].init(filter, name + ".ln" + std::to_string(i));
    in = filter;
  }
  out.init(in, 1, rng, name + ".out");
}

Tensor VariancePredictor::operator()(const Tensor& x, const RunCtx& ctx) const {
  Tensor h = x;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = norms[i](ad::relu(convs[i](h)));
    if (dropout_p > 0) h = ad::dropout(h, dropout_p, *ctx.rng, ctx.training);
  }
  return out(h);  // [1 x T]
}

void VariancePredictor::collect(ParamList& o) {
  value_embed.collect(o);
  for (auto& c : convs) c.collect(o);
  for (auto& n : norms) n.collect(o);
  out.collect(o);
}

void MelEncoder::init(int n_mels, int hidden, Rng& rng) {
  conv1.init(n_mels, hidden, 5, rng, "mel_encoder.conv1");
  ln1.init(hidden, "mel_encoder.ln1");
  conv2.init(hidden, hidden, 5, rng, "mel_encoder.conv2");
  ln2.init(hidden, "mel_encoder.ln2");
}

Tensor MelEncoder::operator()(const Tensor& mel_norm, const RunCtx& ctx) const {
  (void)ctx;
  Tensor h = ln1(ad::relu(conv1(mel_norm)));
  return ln2(ad::relu(conv2(h)));
}

void MelEncoder::collect(ParamList& out) {
  conv1.collect(out);
  ln1.collect(out);
  conv2.collect(out);
  ln2.collect(out);
}

void Denoiser::init(const ModelConfig& cfg, Rng& rng) {
  hidden = cfg.dit_hidden;
  diffusion_emb = cfg.diffusion_emb;
  const int in_dim = cfg.n_mels + cfg.enc_hidden + cfg.mel_enc_hidden;
  in_proj.init(in_dim, hidden, rng, "denoiser.in_proj");
  t_mlp1.init(cfg.diffusion_emb, hidden, rng, "denoiser.t_mlp1");
  t_mlp2.init(hidden, hidden, rng, "denoiser.t_mlp2");
  spk_proj.init(cfg.speaker_dim, hidden, rng, "denoiser.spk_proj");
  blocks.resize(cfg.dit_blocks);
  for (int i = 0; i < cfg.dit_blocks; ++i)
    blocks[i].init(hidden, hidden, cfg.dit_heads, cfg.dit_mlp, cfg.dit_dropout, rng,
                   "denoiser.block" + std::to_string(i));
  final_wmod = Tensor::leaf(Mat::Zero(2 * hidden, hidden), "denoiser.final_wmod");
  final_bmod = Tensor::leaf(Mat::Zero(2 * hidden, 1), "denoiser.final_bmod");
  final_out.init(hidden, cfg.n_mels, rng, "denoiser.final_out", /*zero=*/true);
}

void Denoiser::collect(ParamList& out) {
  in_proj.collect(out);
  t_mlp1.collect(out);
  t_mlp2.collect(out);
  spk_proj.collect(out);
  for (auto& b : blocks) b.collect(out);
  out.push_back(&final_wmod);
  out.push_back(&final_bmod);
  final_out.collect(out);
}

void Classifier::init(const ModelConfig& cfg, int vocab, Rng& rng) {
  in_proj.init(cfg.n_mels, cfg.clf_hidden, rng, "classifier.in_proj");
  blocks.resize(cfg.clf_layers);
  for (int i = 0; i < cfg.clf_layers; ++i)
    blocks[i].init(cfg.clf_hidden, cfg.clf_heads, cfg.clf_kernel, cfg.clf_filter,
                   cfg.clf_dropout, rng, "classifier.block" + std::to_string(i));
  out.init(cfg.clf_hidden, vocab, rng, "classifier.out");
}

Tensor Classifier::operator()(const Tensor& mel_norm, const RunCtx& ctx) const {
  Tensor h = in_proj(mel_norm);
  h = ad::add(h, Tensor::constant(nn::sinusoidal_positions(h.rows(), h.cols())));
  for (const auto& b : blocks) h = b(h, ctx);
  return out(h);  // [V x T]
}

void Classifier::collect(ParamList& o) {
  in_proj.collect(o);
  for (auto& b : blocks) b.collect(o);
  out.collect(o);
}

SpeechEditModel::SpeechEditModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  vocab_ = PhonemeInventory::instance().size();
  Rng rng(seed);
  encoder_.init(cfg_, vocab_, rng);
  dur_pred_.init(cfg_.enc_hidden, cfg_.dp_layers, cfg_.dp_kernel, cfg_.dp_filter,
                 cfg_.dp_dropout, rng, "dur_predictor");
  pitch_pred_.init(cfg_.enc_hidden, cfg_.pp_layers, cfg_.pp_kernel, cfg_.pp_filter,
                   cfg_.pp_dropout, rng, "pitch_predictor");
  mel_encoder_.init(cfg_.n_mels, cfg_.mel_enc_hidden, rng);
  mask_emb_ = Tensor::leaf(nn::normal_init(cfg_.enc_hidden, 1, 0.02, rng), "cond.mask_emb");
  pitch_bin_emb_ =
      Tensor::leaf(nn::normal_init(cfg_.enc_hidden, cfg_.pitch_bins, 0.02, rng), "cond.pitch_emb");
  speaker_table_ = Tensor::leaf(nn::normal_init(cfg_.speaker_dim, cfg_.n_speakers, 0.02, rng),
                                "cond.speaker_table");
  speaker_proj_.init(cfg_.mel_enc_hidden, cfg_.speaker_dim, rng, "cond.speaker_proj");
  denoiser_.init(cfg_, rng);
  classifier_.init(cfg_, vocab_, rng);
}

Tensor SpeechEditModel::encode_phonemes(const std::vector<int>& ids, const RunCtx& ctx) const {
  return encoder_(ids, ctx);
}

Tensor SpeechEditModel::duration_context(const std::vector<double>& d_frames,
                                         const std::vector<bool>& mask_p) const {
  require(d_frames.size() == mask_p.size(), Error::Kind::validation,
          "duration_context: length mismatch");
  const auto n = static_cast<Eigen::Index>(d_frames.size());
  Mat vals(1, n);
  for (Eigen::Index i = 0; i < n; ++i)
    vals(0, i) = std::log1p(std::max(0.0, d_frames[static_cast<size_t>(i)]));
  Tensor embedded = dur_pred_.value_embed(Tensor::constant(vals));  // [D x N]
  // Masked positions carry exactly the mask embedding.
  Mat keep(1, n), msk(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    msk(0, i) = mask_p[static_cast<size_t>(i)] ? 1.0 : 0.0;
    keep(0, i) = 1.0 - msk(0, i);
  }
  Tensor kept = ad::mul(embedded, ad::matmul(Tensor::constant(Mat::Ones(embedded.rows(), 1)),
                                             Tensor::constant(keep)));
  Tensor masked = ad::matmul(mask_emb_, Tensor::constant(msk));
  return ad::add(kept, masked);
}

Tensor SpeechEditModel::pitch_context(const std::vector<double>& pitch_norm,
                                      const std::vector<bool>& mask_f) const {
  require(pitch_norm.size() == mask_f.size(), Error::Kind::validation,
          "pitch_context: length mismatch");
  const auto t = static_cast<Eigen::Index>(pitch_norm.size());
  Mat vals(1, t);
  for (Eigen::Index i = 0; i < t; ++i) vals(0, i) = pitch_norm[static_cast<size_t>(i)];
  Tensor embedded = pitch_pred_.value_embed(Tensor::constant(vals));
  Mat keep(1, t), msk(1, t);
  for (Eigen::Index i = 0; i < t; ++i) {
    msk(0, i) = mask_f[static_cast<size_t>(i)] ? 1.0 : 0.0;
    keep(0, i) = 1.0 - msk(0, i);
  }
  Tensor kept = ad::mul(embedded, ad::matmul(Tensor::constant(Mat::Ones(embedded.rows(), 1)),
                                             Tensor::constant(keep)));
  Tensor masked = ad::matmul(mask_emb_, Tensor::constant(msk));
  return ad::add(kept, masked);
}

Tensor SpeechEditModel::predict_duration(const Tensor& e_y, const Tensor& dur_ctx,
                                         const RunCtx& ctx) const {
  require(e_y.rows() == dur_ctx.rows() && e_y.cols() == dur_ctx.cols(),
          Error::Kind::validation, "predict_duration: context shape mismatch");
  return dur_pred_(ad::add(e_y, dur_ctx), ctx);
}

Tensor SpeechEditModel::predict_pitch(const Tensor& e_t, const Tensor& pitch_ctx,
                                      const RunCtx& ctx) const {
  require(e_t.rows() == pitch_ctx.rows() && e_t.cols() == pitch_ctx.cols(),
          Error::Kind::validation, "predict_pitch: context shape mismatch");
  return pitch_pred_(ad::add(e_t, pitch_ctx), ctx);
}

Tensor SpeechEditModel::add_pitch_embedding(const Tensor& e_t,
                                            const std::vector<int>& bins) const {
  require(static_cast<Eigen::Index>(bins.size()) == e_t.cols(), Error::Kind::validation,
          "add_pitch_embedding: length mismatch");
  return ad::add(e_t, ad::embedding(pitch_bin_emb_, bins));
}

Condition SpeechEditModel::build_condition(const Tensor& speaker_emb, const Mat& mel_norm,
                                           const std::vector<bool>& mask_f,
                                           const RunCtx& ctx) const {
  require(static_cast<Eigen::Index>(mask_f.size()) == mel_norm.cols(),
          Error::Kind::validation, "build_condition: mask length != frames");
  require(speaker_emb.rows() == cfg_.speaker_dim && speaker_emb.cols() == 1,
          Error::Kind::validation, "build_condition: bad speaker embedding shape");
  // Masked frames are zeroed before encoding, then overwritten with the
  // mask embedding, so their content never reaches the output.
  Mat zeroed = mel_norm;
  const auto t = mel_norm.cols();
  Mat keep(1, t), msk(1, t);
  for (Eigen::Index j = 0; j < t; ++j) {
    const bool m = mask_f[static_cast<size_t>(j)];
    if (m) zeroed.col(j).setZero();
    msk(0, j) = m ? 1.0 : 0.0;
    keep(0, j) = m ? 0.0 : 1.0;
  }
  Tensor enc = mel_encoder_(Tensor::constant(zeroed), ctx);
  Tensor kept = ad::mul(enc, ad::matmul(Tensor::constant(Mat::Ones(enc.rows(), 1)),
                                        Tensor::constant(keep)));
  Tensor masked = ad::matmul(mask_emb_, Tensor::constant(msk));
  Condition c;
  c.speaker = speaker_emb;
  c.mel_ctx = ad::add(kept, masked);
  return c;
}

Tensor SpeechEditModel::speaker_from_lookup(int speaker_id) const {
  require(speaker_id >= 0 && speaker_id < cfg_.n_speakers, Error::Kind::validation,
          "speaker id out of range");
  return ad::embedding(speaker_table_, {speaker_id});
}

Tensor SpeechEditModel::speaker_from_mel(const Mat& mel_norm, const std::vector<bool>& mask_f,
                                         const RunCtx& ctx) const {
  require(static_cast<Eigen::Index>(mask_f.size()) == mel_norm.cols(),
          Error::Kind::validation, "speaker_from_mel: mask length != frames");
  Tensor enc = mel_encoder_(Tensor::constant(mel_norm), ctx);
  Eigen::Index cnt = 0;
  Mat sel = Mat::Zero(mel_norm.cols(), 1);
  for (Eigen::Index j = 0; j < mel_norm.cols(); ++j)
    if (!mask_f[static_cast<size_t>(j)]) {
      sel(j, 0) = 1.0;
      ++cnt;
    }
  require(cnt > 0, Error::Kind::validation, "speaker_from_mel: no unmasked frames");
  sel /= static_cast<double>(cnt);
  Tensor mean_emb = ad::matmul(enc, Tensor::constant(sel));  // [D x 1]
  return speaker_proj_(mean_emb);
}

Tensor SpeechEditModel::denoise(const Tensor& x_t, const Condition& c, const Tensor& e_t,
                                int t, const RunCtx& ctx, int t_diff_max,
                                bool skip_blocks) const {
  require(t >= 1 && t <= t_diff_max, Error::Kind::validation,
          "denoise: diffusion step out of range: " + std::to_string(t));
  require(x_t.rows() == cfg_.n_mels, Error::Kind::validation, "denoise: bad mel rows");
  require(x_t.cols() == e_t.cols() && x_t.cols() == c.mel_ctx.cols(),
          Error::Kind::validation, "denoise: width mismatch across inputs");

  Tensor tokens = ad::vcat({x_t, e_t, c.mel_ctx});
  Tensor h = denoiser_.in_proj(tokens);
  h = ad::add(h, Tensor::constant(nn::sinusoidal_positions(denoiser_.hidden, h.cols())));

  Tensor t_emb = Tensor::constant(
      nn::sinusoidal_step_embedding(denoiser_.diffusion_emb, static_cast<double>(t)));
  Tensor cond = ad::add(denoiser_.t_mlp2(ad::silu(denoiser_.t_mlp1(t_emb))),
                        denoiser_.spk_proj(c.speaker));

  if (!skip_blocks)
    for (const auto& b : denoiser_.blocks) h = b(h, cond, ctx);

  // Final adaLN + zero-init projection.
  Tensor mod = ad::add_colvec(ad::matmul(denoiser_.final_wmod, ad::silu(cond)),
                              denoiser_.final_bmod);
  Tensor shift = ad::rows(mod, 0, denoiser_.hidden);
  Tensor scale = ad::rows(mod, denoiser_.hidden, denoiser_.hidden);
  Tensor ln_h = ad::layer_norm_cols(h, Tensor(), Tensor());
  Tensor hf = ad::add_colvec(ad::mul_colvec(ln_h, ad::add_scalar(scale, 1.0)), shift);
  return denoiser_.final_out(hf);
}

Tensor SpeechEditModel::classify(const Tensor& mel_norm, const RunCtx& ctx) const {
  require(mel_norm.rows() == cfg_.n_mels, Error::Kind::validation, "classify: bad mel rows");
  return classifier_(mel_norm, ctx);
}

ParamList SpeechEditModel::group(const std::string& name) {
  ParamList out;
  if (name == "encoder")
    encoder_.collect(out);
  else if (name == "dur_predictor")
    dur_pred_.collect(out);
  else if (name == "pitch_predictor")
    pitch_pred_.collect(out);
  else if (name == "mel_encoder")
    mel_encoder_.collect(out);
  else if (name == "cond") {
    out.push_back(&mask_emb_);
    out.push_back(&pitch_bin_emb_);
    out.push_back(&speaker_table_);
    speaker_proj_.collect(out);
  } else if (name == "denoiser")
    denoiser_.collect(out);
  else if (name == "classifier")
    classifier_.collect(out);
  else
    throw Error(Error::Kind::validation, "unknown parameter group: " + name);
  return out;
}

std::vector<std::string> SpeechEditModel::group_names() const {
  return {"encoder", "dur_predictor", "pitch_predictor", "mel_encoder",
          "cond",    "denoiser",      "classifier"};
}

ParamList SpeechEditModel::all_params() {
  ParamList out;
  for (const auto& g : group_names()) {
    ParamList part = group(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

ParamList SpeechEditModel::main_params() {
  ParamList out;
  for (const auto& g : group_names()) {
    if (g == "classifier") continue;
    ParamList part = group(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::int64_t SpeechEditModel::param_count(const std::string& group_name) {
  std::int64_t n = 0;
  for (Tensor* p : group(group_name)) n += static_cast<std::int64_t>(p->rows() * p->cols());
  return n;
}

std::int64_t SpeechEditModel::total_param_count(bool with_classifier) {
  std::int64_t n = 0;
  for (const auto& g : group_names()) {
    if (!with_classifier && g == "classifier") continue;
    n += param_count(g);
  }
  return n;
}

Tensor length_regulate(const Tensor& e_y, const DurationSequence& d) {
  require(static_cast<Eigen::Index>(d.d.size()) == e_y.cols(), Error::Kind::validation,
          "length_regulate: durations length != phoneme count");
  std::vector<int> frame_ids;
  for (size_t k = 0; k < d.d.size(); ++k) {
    require(d.d[k] >= 0, Error::Kind::validation, "length_regulate: negative duration");
    for (int j = 0; j < d.d[k]; ++j) frame_ids.push_back(static_cast<int>(k));
  }
  require(!frame_ids.empty(), Error::Kind::validation, "length_regulate: zero total length");
  return ad::embedding(e_y, frame_ids);
}

}  // namespace ttse
