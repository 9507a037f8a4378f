#pragma once

#include "earlyrec/encoder.hpp"
#include "earlyrec/losses.hpp"
#include "earlyrec/optim.hpp"
#include "earlyrec/recurrent.hpp"
#include "earlyrec/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace earlyrec {

/// Lookahead as a fraction of each sequence's length.
struct DeltaFraction {
    double fraction = 0.2;
    bool operator==(const DeltaFraction&) const = default;
};

/// Lookahead as a fixed number of steps (1 step = 1 frame = 1 second at 1 fps).
struct DeltaSteps {
    int steps = 10;
    bool operator==(const DeltaSteps&) const = default;
};

using Delta = std::variant<DeltaFraction, DeltaSteps>;

/// "fraction:0.2" or "steps:10".
std::string to_string(const Delta& d);
Delta delta_from_string(const std::string& s);

/// Steps [1, train_steps] are trained; the target for step t is the teacher state at t + horizon.
struct Truncation {
    int train_steps = 0;
    int horizon = 0;

    bool skipped() const noexcept { return train_steps < 1; }
};

/// fraction(phi): T' = floor((1 - phi) T), horizon T - T'. steps(k): T' = T - k, horizon k.
/// Throws InvalidInput for T < 1, phi outside (0, 1) or k < 1.
Truncation truncation_point(const Delta& delta, int T);

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    int epochs = 150;
    LossSelection loss;
    Delta delta = DeltaFraction{0.2};
    std::uint64_t seed = 42;
    /// Invoke the checkpoint callback every this many epochs (0 disables).
    int checkpoint_every = 0;
    int hidden = 64;
    /// Stop after this many epochs without a validation improvement (0 disables).
    int patience = 25;

    SgdConfig sgd() const { return {learning_rate, momentum, weight_decay}; }
    void validate() const;

    /// Recurrent classifier training: lr 1e-3, momentum 0.9, weight decay 1e-3.
    static TrainConfig teacher_defaults();
    /// Teacher optimizer settings plus delta = fraction 0.2, lambda = 10, smooth L1, 100 epochs.
    static TrainConfig student_defaults();
};

struct EncoderTrainConfig {
    FinetuneMode mode = FinetuneMode::weighted_subvideo;
    SubvideoSampling sampling{20, 2};
    int embed_dim = 64;
    double dropout_prob = 0.5;
    double learning_rate = 1e-5;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs = 100;
    std::uint64_t seed = 42;
    /// Fine-tune on the first `max_steps` frames of each sequence only (0 = whole sequence).
    int max_steps = 0;

    SgdConfig sgd() const { return {learning_rate, momentum, weight_decay}; }
    void validate() const;

    /// Optimizer presets per regime: single frame lr 1e-3 / wd 1e-3; sub-video lr 1e-5 / wd 1e-4.
    static EncoderTrainConfig defaults_for(FinetuneMode mode);
};

struct LogRow {
    int epoch = 0;
    Split split = Split::train;
    double loss = 0.0;
    double accuracy_final_step = 0.0;
};

/// CSV with header "epoch,split,loss,accuracy_final_step".
void write_training_log(const std::vector<LogRow>& log, const std::filesystem::path& path);

/// Loss, gradient and bookkeeping for one sequence.
struct SequenceObjective {
    double loss = 0.0;
    double classification = 0.0;
    double future_mean = 0.0;
    RecurrentModel grad;
    /// Length of the trained range [1, T'] (< 1 means the sequence was skipped).
    int train_steps = 0;
    /// Steps whose upstream gradient (logits or future) is non-zero.
    int contributing_steps = 0;
    bool final_correct = false;
};

/// Classification loss over [1, range_end] (range_end = 0 means the whole sequence).
SequenceObjective classification_objective(const RecurrentModel& model, std::span<const Vec> features,
                                           int label, ClassificationKind kind, int range_end = 0);

/// Composite loss over [1, T'] with targets teacher_states[t - 1 + horizon].
/// Returns train_steps < 1 (and no gradient) for skipped sequences.
SequenceObjective fsp_objective(const RecurrentModel& student, std::span<const Vec> features, int label,
                                std::span<const Vec> teacher_states, const LossSelection& loss,
                                const Truncation& truncation);

struct StepCount {
    std::size_t sequence = 0; // dataset index
    int length = 0;
    int train_steps = 0;
    int contributing_steps = 0;
};

struct TrainResult {
    RecurrentModel model; // best-validation parameters
    std::vector<LogRow> log;
    int best_epoch = 0;
    int epochs_run = 0;
    /// One entry per training sequence, recorded during the first epoch.
    std::vector<StepCount> step_counts;
};

struct TrainCallbacks {
    std::function<void(int epoch, const RecurrentModel& model)> on_checkpoint;
};

using ObjectiveFn = std::function<SequenceObjective(const RecurrentModel& model, std::size_t index,
                                                    const FrameSequence& seq,
                                                    std::span<const Vec> features)>;

/// Shared loop: one SGD step per training sequence in a seeded per-epoch shuffle, validation
/// accuracy at the final step, best checkpoint kept (ties broken by lower validation loss).
TrainResult train_recurrent(const Dataset& dataset, const EncoderModel& encoder, RecurrentModel init,
                            const TrainConfig& cfg, const ObjectiveFn& objective,
                            const TrainCallbacks& callbacks = {});

/// Classification-only training of a teacher over [1, T] of every sequence.
TrainResult train_teacher(const Dataset& dataset, const EncoderModel& encoder, const TrainConfig& cfg,
                          const TrainCallbacks& callbacks = {});

/// Student training against a frozen teacher. Requires cfg.loss.future != none.
TrainResult train_fsp(const Dataset& dataset, const EncoderModel& encoder, const RecurrentModel& teacher,
                      const TrainConfig& cfg, const TrainCallbacks& callbacks = {});

struct EncoderTrainResult {
    EncoderModel model;
    std::vector<double> epoch_loss;
};

/// Mode none returns the seeded random encoder untouched.
EncoderTrainResult finetune_encoder(const Dataset& dataset, const EncoderTrainConfig& cfg);

struct TensorCheck {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double max_rel_error() const noexcept;
};

/// Central differences on every entry of `params`, compared to `analytic` with
/// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8). Restores every entry afterwards.
/// Throws InvalidInput when shapes differ or there are more than 2000 entries.
GradCheckReport gradient_check(const std::function<double()>& objective, const ParamList& params,
                               const ParamList& analytic, double step = 1e-5);

/// Worst error per component over `instances` random small instances.
/// Instances with a nonzero analytic entry below 1e-6 in magnitude are redrawn: central
/// differences at step 1e-5 carry ~1e-11 absolute roundoff and cannot resolve them.
struct GradientSuiteResult {
    std::vector<std::pair<std::string, double>> components;
    int redrawn = 0;
    double max_rel_error() const noexcept;
};

GradientSuiteResult run_gradient_suite(int instances, std::uint64_t seed);

} // namespace earlyrec
