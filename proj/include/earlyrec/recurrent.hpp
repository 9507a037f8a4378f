#pragma once

#include "earlyrec/params.hpp"
#include "earlyrec/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace earlyrec {

/// Single-layer LSTM without peepholes. Gate rows are stacked in the order
/// input, forget, output, candidate: rows [0,H) are i, [H,2H) f, [2H,3H) o, [3H,4H) g.
struct LSTMParams {
    Mat input_weight;  // 4H x E
    Mat hidden_weight; // 4H x H
    Vec bias;          // 4H

    int input_dim() const noexcept { return static_cast<int>(input_weight.cols()); }
    int hidden_dim() const noexcept { return static_cast<int>(hidden_weight.cols()); }

    bool operator==(const LSTMParams&) const = default;
};

struct LSTMState {
    Vec h;
    Vec c;

    static LSTMState zeros(int hidden) {
        return {Vec(static_cast<std::size_t>(hidden)), Vec(static_cast<std::size_t>(hidden))};
    }
};

/// i, f, o = sigmoid(.), g = tanh(.); c' = f*c + i*g; h' = o*tanh(c').
/// Throws InvalidInput on dimension mismatch.
LSTMState lstm_step(const LSTMParams& params, const Vec& x, const LSTMState& prev);

enum class ModelKind { teacher, student };

/// LSTM + classification head, plus a linear future-state head for students.
struct RecurrentModel {
    LSTMParams lstm;
    AffineLayer class_head;                 // H -> N
    std::optional<AffineLayer> future_head; // H -> H

    /// Forget-gate bias 1, everything else uniform in (-r, r), r = 1/sqrt(fan_in).
    /// A student shares its LSTM and class head initialization with a teacher of the same seed.
    static RecurrentModel random(int input_dim, int hidden_dim, int num_classes, ModelKind kind,
                                 std::uint64_t seed);
    static RecurrentModel zeros(int input_dim, int hidden_dim, int num_classes, ModelKind kind);
    static RecurrentModel zeros_like(const RecurrentModel& m);

    ModelKind kind() const noexcept { return future_head ? ModelKind::student : ModelKind::teacher; }
    int input_dim() const noexcept { return lstm.input_dim(); }
    int hidden_dim() const noexcept { return lstm.hidden_dim(); }
    int num_classes() const noexcept { return static_cast<int>(class_head.out_dim()); }

    ParamList parameters();

    bool operator==(const RecurrentModel&) const = default;
};

struct SequenceTrace {
    std::vector<Vec> hidden;
    std::vector<Vec> probs;
    std::vector<Vec> future; // empty for teachers
};

/// Runs from a zero state. Throws InvalidInput on empty input or dimension mismatch.
SequenceTrace forward_sequence(const RecurrentModel& model, std::span<const Vec> features);

/// Upstream gradients: per step d L / d logits and d L / d h*_t. Either list may be shorter
/// than T (missing steps contribute nothing); `future` must be empty for teachers.
struct StepGradients {
    std::vector<Vec> logits;
    std::vector<Vec> future;
};

/// Full backpropagation through time. Returns gradients shaped like `model`.
RecurrentModel backward_sequence(const RecurrentModel& model, std::span<const Vec> features,
                                 const StepGradients& upstream);

/// h_1..h_T of a teacher. Throws InvalidInput when given a student.
std::vector<Vec> record_teacher_states(const RecurrentModel& teacher, std::span<const Vec> features);

void save_model(const RecurrentModel& m, const std::filesystem::path& path);
RecurrentModel load_model(const std::filesystem::path& path);

} // namespace earlyrec
