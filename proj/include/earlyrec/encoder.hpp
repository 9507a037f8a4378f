#pragma once

#include "earlyrec/optim.hpp"
#include "earlyrec/params.hpp"
#include "earlyrec/rng.hpp"
#include "earlyrec/synth.hpp"
#include "earlyrec/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace earlyrec {

/// Feed-forward frame encoder (D -> E -> E, tanh) with a softmax classifier head (E -> N).
/// The classifier is only used during fine-tuning; extracted features are the embedding.
struct EncoderModel {
    AffineLayer hidden;
    AffineLayer embed;
    AffineLayer classifier;
    double dropout_prob = 0.5;

    /// Weights and biases uniform in (-r, r), r = 1/sqrt(fan_in).
    static EncoderModel random(int input_dim, int embed_dim, int num_classes, double dropout_prob,
                               std::uint64_t seed);
    static EncoderModel zeros(int input_dim, int embed_dim, int num_classes, double dropout_prob = 0.0);
    static EncoderModel zeros_like(const EncoderModel& m);

    int input_dim() const noexcept { return static_cast<int>(hidden.in_dim()); }
    int embed_dim() const noexcept { return static_cast<int>(embed.out_dim()); }
    int num_classes() const noexcept { return static_cast<int>(classifier.out_dim()); }

    /// Embedding of one frame, no dropout. Throws InvalidInput on dimension mismatch.
    Vec encode(const Vec& frame) const;

    ParamList parameters();

    bool operator==(const EncoderModel&) const = default;
};

/// 1-based, strictly increasing frame indices.
struct SampleSet {
    std::vector<int> indices;
};

struct SubvideoSampling {
    int segment_len = 200;
    int per_segment = 2;
};

/// Splits [1, T] into ceil(T / segment_len) consecutive segments and draws
/// min(per_segment, segment size) indices uniformly without replacement from each.
SampleSet segment_sample(int T, int segment_len, int per_segment, Rng& rng);

/// Time-decaying pooling weight: 1, 0.5, 0.25, 0.125 by quarter of the sequence,
/// with real-valued half-open boundaries at T/4, T/2 and 3T/4.
/// Throws InvalidInput unless 1 <= t <= T.
double early_weight(int t, int T);

struct TimedFeature {
    int t = 1;
    Vec feature;
};

struct PoolResult {
    Vec pooled;
    /// Per coordinate, the frame index t that attained the max.
    std::vector<int> argmax;
};

/// F_j = max_t w_t f_tj over the supplied frames (w_t = 1 when weights_on is false).
/// Ties go to the smallest t regardless of supply order.
PoolResult weighted_max_pool(std::span<const TimedFeature> features, int T, bool weights_on);

enum class FinetuneMode { none, single_frame, unweighted_subvideo, weighted_subvideo };

std::string_view to_string(FinetuneMode m) noexcept;
FinetuneMode finetune_mode_from_string(std::string_view s);

struct EncoderLoss {
    double loss = 0.0;
    EncoderModel grad;
    /// d loss / d frame for each sampled frame, aligned with the SampleSet.
    std::vector<Vec> input_grads;
    PoolResult pool;
};

/// Cross-entropy of the pooled prediction for the frames in `samples`, with gradients
/// for every parameter. Dropout is applied per frame before pooling when `dropout_rng`
/// is non-null. A single-frame sample set with weights off is the single-frame loss.
EncoderLoss subvideo_loss(const EncoderModel& model, const FrameSequence& seq,
                          const SampleSet& samples, bool weights_on, Rng* dropout_rng);

/// One SGD step on one sequence. Returns the training loss before the update.
double finetune_step(EncoderModel& model, const FrameSequence& seq, FinetuneMode mode,
                     const SubvideoSampling& sampling, OptimizerState& opt, const SgdConfig& sgd,
                     Rng& rng);

/// encode(f_t) for every step, dropout disabled.
std::vector<Vec> extract_features(const EncoderModel& model, const FrameSequence& seq);

void save_encoder(const EncoderModel& m, const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);

} // namespace earlyrec
