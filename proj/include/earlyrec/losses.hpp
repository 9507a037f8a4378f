#pragma once

#include "earlyrec/tensor.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace earlyrec {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-12;

enum class ClassificationKind { average, linear_weighted };
enum class FutureLossKind { none, smooth_l1, l2 };

std::string_view to_string(ClassificationKind k) noexcept;
std::string_view to_string(FutureLossKind k) noexcept;
ClassificationKind classification_kind_from_string(std::string_view s);
FutureLossKind future_loss_kind_from_string(std::string_view s);

struct LossSelection {
    ClassificationKind classification = ClassificationKind::average;
    FutureLossKind future = FutureLossKind::none;
    double lambda = 0.0;

    /// Throws InvalidInput for lambda < 0 or non-finite.
    void validate() const;
    bool operator==(const LossSelection&) const = default;
};

/// Loss over steps [1, range_end] with gradients w.r.t. the pre-softmax logits.
/// `logit_grads` has exactly range_end entries.
struct ClassificationLoss {
    double value = 0.0;
    std::vector<Vec> logit_grads;
};

/// -(1/T') sum_{t<=T'} log p_t[label]. Throws InvalidInput if any probability lies
/// outside [0, 1], the label is out of range, or range_end is not in [1, probs.size()].
ClassificationLoss average_ce(std::span<const Vec> probs, int label, int range_end);

/// Coefficient of the false-positive term at step t of a length-T sequence.
constexpr double false_positive_coefficient(int t, int T) noexcept {
    return static_cast<double>(t) / static_cast<double>(T);
}

/// -(1/T') sum_{t<=T'} sum_k [y_k log p_tk + (t (1 - y_k) / T) log(1 - p_tk)].
/// `false_positive_scale` multiplies the second term (1 is the standard loss).
ClassificationLoss linear_weighted_ce(std::span<const Vec> probs, int label, int range_end,
                                      int full_length, double false_positive_scale = 1.0);

/// Dispatches on `kind`; `full_length` is only used by the linear weighted loss.
ClassificationLoss classification_loss(ClassificationKind kind, std::span<const Vec> probs,
                                       int label, int range_end, int full_length);

/// Huber-style rho(x): 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x) noexcept;
double smooth_l1_derivative(double x) noexcept;

struct FutureLoss {
    double value = 0.0;
    Vec grad; // w.r.t. the prediction; the target is a constant
};

/// Mean over coordinates of rho(pred - target) or (pred - target)^2.
/// Throws InvalidInput on dimension mismatch or kind == none.
FutureLoss future_pred_loss(FutureLossKind kind, const Vec& predicted, const Vec& target);

struct FspLoss {
    double total = 0.0;
    double classification = 0.0;
    /// (1/T') sum_t future_pred_loss(h*_t, target_t), before lambda.
    double future_mean = 0.0;
    std::vector<Vec> logit_grads;
    std::vector<Vec> future_grads;
};

/// L = L_classification + lambda * (1/T') sum_{t<=T'} future_pred_loss(pred_t, target_t).
/// `classification` must cover exactly [1, range_end]. Throws InvalidInput when fewer than
/// range_end predictions or targets are supplied.
FspLoss fsp_total(const LossSelection& sel, const ClassificationLoss& classification,
                  std::span<const Vec> predictions, std::span<const Vec> targets, int range_end);

} // namespace earlyrec
