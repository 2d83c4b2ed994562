#pragma once

// The speech-editing backbone: phoneme encoder, variance adaptor (duration
// and pitch predictors + length regulator), mel context encoder, DiT
// spectrogram denoiser, and the frame-level phoneme classifier.

#include <string>
#include <vector>

#include "ttse/features.hpp"
#include "ttse/nn.hpp"

namespace ttse {

using ad::Tensor;
using nn::ParamList;
using nn::RunCtx;

struct ModelConfig {
  // text encoder
  int enc_layers = 4;
  int enc_hidden = 192;
  int enc_heads = 2;
  int enc_kernel = 5;
  int enc_filter = 768;
  double enc_dropout = 0.0;
  // duration predictor
  int dp_layers = 3;
  int dp_kernel = 5;
  int dp_filter = 192;
  double dp_dropout = 0.2;
  // pitch predictor
  int pp_layers = 5;
  int pp_kernel = 5;
  int pp_filter = 192;
  double pp_dropout = 0.2;
  // mel encoder
  int mel_enc_hidden = 192;
  // spectrogram denoiser
  int diffusion_emb = 384;
  int dit_blocks = 12;
  int dit_hidden = 384;
  int dit_heads = 6;
  int dit_mlp = 1536;
  double dit_dropout = 0.1;
  // phoneme classifier
  int clf_layers = 2;
  int clf_hidden = 256;
  int clf_heads = 2;
  int clf_kernel = 3;
  int clf_filter = 1024;
  double clf_dropout = 0.5;
  // shared
  int n_mels = 80;
  int pitch_bins = 256;
  int n_speakers = 4;
  int speaker_dim = 192;

  void validate() const;
  static ModelConfig tiny();  // scaled-down config for fast tests
};

struct PhonemeEncoder {
  Tensor emb;  // [D x (V+1)], one extra column for the mask token
  std::vector<nn::FFTBlock> blocks;
  int hidden = 0;
  void init(const ModelConfig& cfg, int vocab, Rng& rng);
  Tensor operator()(const std::vector<int>& ids, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

// Conv-stack regressor shared by duration and pitch prediction.
struct VariancePredictor {
  nn::Linear value_embed;  // scalar context value -> D
  std::vector<nn::Conv1d> convs;
  std::vector<nn::LayerNorm> norms;
  nn::Linear out;
  double dropout_p = 0.0;
  void init(int hidden, int layers, int kernel, int filter, double dropout, Rng& rng,
            const std::string& name);
  // x = e_y (or e_t) + masked context, both [D x T]
  Tensor operator()(const Tensor& x, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

struct MelEncoder {
  nn::Conv1d conv1, conv2;
  nn::LayerNorm ln1, ln2;
  void init(int n_mels, int hidden, Rng& rng);
  Tensor operator()(const Tensor& mel_norm, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

struct Denoiser {
  nn::Linear in_proj;       // [n_mels + D + D] -> H
  nn::Linear t_mlp1, t_mlp2;
  nn::Linear spk_proj;
  std::vector<nn::DiTBlock> blocks;
  Tensor final_wmod, final_bmod;  // adaLN for the output layer (zero-init)
  nn::Linear final_out;           // zero-init
  int hidden = 0;
  int diffusion_emb = 0;
  void init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out);
};

struct Classifier {
  nn::Linear in_proj;
  std::vector<nn::FFTBlock> blocks;
  nn::Linear out;
  void init(const ModelConfig& cfg, int vocab, Rng& rng);
  Tensor operator()(const Tensor& mel_norm, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

// Conditioning inputs for the denoiser.
struct Condition {
  Tensor speaker;  // [D_spk x 1]
  Tensor mel_ctx;  // [D x T]; exactly the mask embedding on masked frames
};

class SpeechEditModel {
 public:
  SpeechEditModel() = default;
  SpeechEditModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  int vocab() const { return vocab_; }

  // e_y [D x N]; ids may include the mask-token id (vocab()).
  Tensor encode_phonemes(const std::vector<int>& ids, const RunCtx& ctx) const;

  // Masked duration context from per-phoneme frame counts.
  Tensor duration_context(const std::vector<double>& d_frames,
                          const std::vector<bool>& mask_p) const;
  // Masked pitch context from per-frame normalized pitch.
  Tensor pitch_context(const std::vector<double>& pitch_norm,
                       const std::vector<bool>& mask_f) const;

  // Predictions in log(1 + frames) / normalized-pitch domain, [1 x T].
  Tensor predict_duration(const Tensor& e_y, const Tensor& dur_ctx, const RunCtx& ctx) const;
  Tensor predict_pitch(const Tensor& e_t, const Tensor& pitch_ctx, const RunCtx& ctx) const;

  // Adds the quantized-pitch embedding to aligned hidden states.
  Tensor add_pitch_embedding(const Tensor& e_t, const std::vector<int>& pitch_bins) const;

  Condition build_condition(const Tensor& speaker_emb, const Mat& mel_norm,
                            const std::vector<bool>& mask_f, const RunCtx& ctx) const;

  Tensor speaker_from_lookup(int speaker_id) const;
  // Utterance-derived speaker embedding: mean of mel-encoder outputs over
  // unmasked frames pushed through a projection.
  Tensor speaker_from_mel(const Mat& mel_norm, const std::vector<bool>& mask_f,
                          const RunCtx& ctx) const;

  // x0 estimate from the noisy input; t in [1, T_diff].
  Tensor denoise(const Tensor& x_t, const Condition& c, const Tensor& e_t, int t,
                 const RunCtx& ctx, int t_diff_max, bool skip_blocks = false) const;

  Tensor classify(const Tensor& mel_norm, const RunCtx& ctx) const;

  // Parameter groups for optimizers, checkpointing, and freeze hashing.
  // Group names: encoder, dur_predictor, pitch_predictor, mel_encoder,
  // cond, denoiser, classifier.
  ParamList group(const std::string& name);
  std::vector<std::string> group_names() const;
  ParamList all_params();
  ParamList main_params();  // everything except the classifier
  std::int64_t param_count(const std::string& group_name);
  std::int64_t total_param_count(bool with_classifier);

 private:
  ModelConfig cfg_;
  int vocab_ = 0;

  PhonemeEncoder encoder_;
  VariancePredictor dur_pred_;
  VariancePredictor pitch_pred_;
  MelEncoder mel_encoder_;
  Tensor mask_emb_;       // [D x 1], shared across duration/pitch/mel contexts
  Tensor pitch_bin_emb_;  // [D x pitch_bins]
  Tensor speaker_table_;  // [D_spk x n_speakers]
  nn::Linear speaker_proj_;
  Denoiser denoiser_;
  Classifier classifier_;
};

// Column k of e_y repeated d[k] times; width = sum(d).
Tensor length_regulate(const Tensor& e_y, const DurationSequence& d);

}  // namespace ttse
