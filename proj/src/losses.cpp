#include "earlyrec/losses.hpp"

#include "earlyrec/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace earlyrec {

std::string_view to_string(ClassificationKind k) noexcept {
    return k == ClassificationKind::average ? "average" : "linear_weighted";
}

std::string_view to_string(FutureLossKind k) noexcept {
    switch (k) {
    case FutureLossKind::none:
        return "none";
    case FutureLossKind::smooth_l1:
        return "smooth_l1";
    case FutureLossKind::l2:
        return "l2";
    }
    return "none";
}

ClassificationKind classification_kind_from_string(std::string_view s) {
    if (s == "average") {
        return ClassificationKind::average;
    }
    if (s == "linear_weighted") {
        return ClassificationKind::linear_weighted;
    }
    throw InvalidInput("unknown classification loss '" + std::string(s) + "'");
}

FutureLossKind future_loss_kind_from_string(std::string_view s) {
    if (s == "none") {
        return FutureLossKind::none;
    }
    if (s == "smooth_l1") {
        return FutureLossKind::smooth_l1;
    }
    if (s == "l2") {
        return FutureLossKind::l2;
    }
    throw InvalidInput("unknown future loss '" + std::string(s) + "'");
}

void LossSelection::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidInput("lambda must be finite and >= 0");
    }
}

namespace {

void check_trace(std::span<const Vec> probs, int label, int range_end) {
    if (range_end < 1 || static_cast<std::size_t>(range_end) > probs.size()) {
        throw InvalidInput("loss range [1, " + std::to_string(range_end) + "] outside trace of length " +
                           std::to_string(probs.size()));
    }
    for (int t = 0; t < range_end; ++t) {
        const Vec& p = probs[static_cast<std::size_t>(t)];
        if (label < 0 || static_cast<std::size_t>(label) >= p.dim()) {
            throw InvalidInput("label " + std::to_string(label) + " outside [0, " +
                               std::to_string(p.dim()) + ")");
        }
        for (double v : p) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw InvalidInput("prediction at step " + std::to_string(t + 1) +
                                   " is not a probability");
            }
        }
    }
}

bool inside_clamp(double p) noexcept { return p > kProbFloor && p < 1.0 - kProbFloor; }

double clamp_prob(double p) noexcept { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

} // namespace

ClassificationLoss average_ce(std::span<const Vec> probs, int label, int range_end) {
    check_trace(probs, label, range_end);
    const double scale = 1.0 / range_end;
    const auto y = static_cast<std::size_t>(label);
    ClassificationLoss out;
    out.logit_grads.reserve(static_cast<std::size_t>(range_end));
    double sum = 0.0;
    for (int t = 0; t < range_end; ++t) {
        const Vec& p = probs[static_cast<std::size_t>(t)];
        sum -= std::log(clamp_prob(p[y]));
        Vec g(p.dim());
        if (inside_clamp(p[y])) {
            for (std::size_t k = 0; k < p.dim(); ++k) {
                g[k] = scale * (p[k] - (k == y ? 1.0 : 0.0));
            }
        }
        out.logit_grads.push_back(std::move(g));
    }
    out.value = scale * sum;
    return out;
}

ClassificationLoss linear_weighted_ce(std::span<const Vec> probs, int label, int range_end,
                                      int full_length, double false_positive_scale) {
    check_trace(probs, label, range_end);
    if (full_length < range_end) {
        throw InvalidInput("full sequence length " + std::to_string(full_length) +
                           " shorter than loss range " + std::to_string(range_end));
    }
    const double scale = 1.0 / range_end;
    const auto y = static_cast<std::size_t>(label);
    ClassificationLoss out;
    out.logit_grads.reserve(static_cast<std::size_t>(range_end));
    double sum = 0.0;
    for (int t = 1; t <= range_end; ++t) {
        const Vec& p = probs[static_cast<std::size_t>(t - 1)];
        const double fp = false_positive_scale * false_positive_coefficient(t, full_length);
        // dl/dp_k, then through the softmax Jacobian.
        Vec dp(p.dim());
        for (std::size_t k = 0; k < p.dim(); ++k) {
            const double pk = clamp_prob(p[k]);
            if (k == y) {
                sum -= std::log(pk);
                if (inside_clamp(p[k])) {
                    dp[k] = -1.0 / pk;
                }
            } else if (fp != 0.0) {
                sum -= fp * std::log(1.0 - pk);
                if (inside_clamp(p[k])) {
                    dp[k] = fp / (1.0 - pk);
                }
            }
        }
        double inner = 0.0;
        for (std::size_t k = 0; k < p.dim(); ++k) {
            inner += p[k] * dp[k];
        }
        Vec g(p.dim());
        for (std::size_t k = 0; k < p.dim(); ++k) {
            g[k] = scale * p[k] * (dp[k] - inner);
        }
        out.logit_grads.push_back(std::move(g));
    }
    out.value = scale * sum;
    return out;
}

ClassificationLoss classification_loss(ClassificationKind kind, std::span<const Vec> probs,
                                       int label, int range_end, int full_length) {
    if (kind == ClassificationKind::average) {
        return average_ce(probs, label, range_end);
    }
    return linear_weighted_ce(probs, label, range_end, full_length);
}

double smooth_l1(double x) noexcept {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) noexcept {
    if (std::abs(x) < 1.0) {
        return x;
    }
    return x > 0.0 ? 1.0 : -1.0;
}

FutureLoss future_pred_loss(FutureLossKind kind, const Vec& predicted, const Vec& target) {
    if (predicted.dim() != target.dim() || predicted.empty()) {
        throw InvalidInput("future_pred_loss: prediction dim " + std::to_string(predicted.dim()) +
                           " vs target dim " + std::to_string(target.dim()));
    }
    if (kind == FutureLossKind::none) {
        throw InvalidInput("future_pred_loss: no future loss selected");
    }
    const double inv = 1.0 / static_cast<double>(predicted.dim());
    FutureLoss out;
    out.grad = Vec(predicted.dim());
    double sum = 0.0;
    for (std::size_t j = 0; j < predicted.dim(); ++j) {
        const double x = predicted[j] - target[j];
        if (kind == FutureLossKind::l2) {
            sum += x * x;
            out.grad[j] = 2.0 * x * inv;
        } else {
            sum += smooth_l1(x);
            out.grad[j] = smooth_l1_derivative(x) * inv;
        }
    }
    out.value = sum * inv;
    return out;
}

FspLoss fsp_total(const LossSelection& sel, const ClassificationLoss& classification,
                  std::span<const Vec> predictions, std::span<const Vec> targets, int range_end) {
    sel.validate();
    if (range_end < 1 || classification.logit_grads.size() != static_cast<std::size_t>(range_end)) {
        throw InvalidInput("fsp_total: classification range does not match [1, " +
                           std::to_string(range_end) + "]");
    }
    FspLoss out;
    out.classification = classification.value;
    out.logit_grads = classification.logit_grads;
    if (sel.future == FutureLossKind::none) {
        out.total = classification.value;
        return out;
    }
    if (predictions.size() < static_cast<std::size_t>(range_end) ||
        targets.size() < static_cast<std::size_t>(range_end)) {
        throw InvalidInput("fsp_total: future targets missing for steps up to " +
                           std::to_string(range_end));
    }
    const double step_scale = 1.0 / range_end;
    double sum = 0.0;
    out.future_grads.reserve(static_cast<std::size_t>(range_end));
    for (int t = 0; t < range_end; ++t) {
        FutureLoss f = future_pred_loss(sel.future, predictions[static_cast<std::size_t>(t)],
                                        targets[static_cast<std::size_t>(t)]);
        sum += f.value;
        for (double& g : f.grad) {
            g *= sel.lambda * step_scale;
        }
        out.future_grads.push_back(std::move(f.grad));
    }
    out.future_mean = sum * step_scale;
    out.total = classification.value + sel.lambda * out.future_mean;
    return out;
}

} // namespace earlyrec
