#include "earlyrec/error.hpp"
#include "earlyrec/losses.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace earlyrec;

namespace {

std::vector<Vec> random_trace(std::size_t T, std::size_t N, Rng& rng) {
    std::vector<Vec> out;
    for (std::size_t t = 0; t < T; ++t) {
        out.push_back(testing::random_probs(N, rng));
    }
    return out;
}

// Direct transcription of the weighted cross-entropy with a free false-positive scale.
double oracle_ce(const std::vector<Vec>& p, int y, int range_end, int T, double fp_scale) {
    double s = 0.0;
    for (int t = 1; t <= range_end; ++t) {
        for (std::size_t k = 0; k < p[0].dim(); ++k) {
            const double yk = static_cast<int>(k) == y ? 1.0 : 0.0;
            const double pk = p[static_cast<std::size_t>(t - 1)][k];
            s += yk * std::log(pk) + fp_scale * (t * (1.0 - yk) / T) * std::log(1.0 - pk);
        }
    }
    return -s / range_end;
}

// Logit gradient by central differences through a fresh softmax.
template <typename LossFn>
void check_logit_grads(const std::vector<Vec>& logits, const LossFn& loss_of_probs,
                       const std::vector<Vec>& analytic) {
    auto probs_of = [](const std::vector<Vec>& z) {
        std::vector<Vec> p;
        for (const auto& v : z) {
            p.push_back(softmax(v));
        }
        return p;
    };
    const double h = 1e-6;
    for (std::size_t t = 0; t < analytic.size(); ++t) {
        for (std::size_t k = 0; k < logits[t].dim(); ++k) {
            auto zp = logits, zm = logits;
            zp[t][k] += h;
            zm[t][k] -= h;
            const double fd = (loss_of_probs(probs_of(zp)) - loss_of_probs(probs_of(zm))) / (2 * h);
            CHECK(analytic[t][k] == doctest::Approx(fd).epsilon(1e-6).scale(1e-3));
        }
    }
}

} // namespace

TEST_CASE("average_ce worked examples") {
    const std::vector<Vec> probs{{0.5, 0.5}, {0.25, 0.75}};
    CHECK(average_ce(probs, 0, 2).value == doctest::Approx(1.03972).epsilon(1e-5));

    const std::vector<Vec> uniform(4, Vec(9, 1.0 / 9.0));
    CHECK(average_ce(uniform, 3, 4).value == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(std::abs(average_ce(uniform, 3, 4).value - 2.19722) < 1e-5);

    const std::vector<Vec> perfect(3, Vec{0.0, 1.0, 0.0});
    CHECK(average_ce(perfect, 1, 3).value == doctest::Approx(0.0));
}

TEST_CASE("linear_weighted_ce single-step contribution at t = 5 of T = 10") {
    // Other steps predict the label exactly and contribute nothing.
    std::vector<Vec> probs(10, Vec{1.0, 0.0});
    probs[4] = Vec{0.8, 0.2};
    const double loss = linear_weighted_ce(probs, 0, 10, 10).value * 10.0;
    CHECK(loss == doctest::Approx(0.33471).epsilon(1e-5));
    CHECK(loss == doctest::Approx(-(std::log(0.8) + 0.5 * std::log(0.8))).epsilon(1e-9));
}

TEST_CASE("linear_weighted_ce is zero for perfect predictions") {
    const std::vector<Vec> perfect(5, Vec{0.0, 0.0, 1.0});
    CHECK(std::abs(linear_weighted_ce(perfect, 2, 5, 5).value) < 1e-9);
}

TEST_CASE("false-positive coefficient is exactly t/T and 1 at t = T") {
    for (int T = 1; T <= 300; ++T) {
        CHECK(false_positive_coefficient(T, T) == 1.0);
        for (int t = 1; t <= T; ++t) {
            CHECK(false_positive_coefficient(t, T) == static_cast<double>(t) / static_cast<double>(T));
        }
    }
}

TEST_CASE("average_ce equals linear_weighted_ce with the false-positive term removed") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t T = 1 + trial % 12, N = 2 + trial % 5;
        const auto p = random_trace(T, N, rng);
        const int y = trial % static_cast<int>(N);
        const int range = 1 + trial % static_cast<int>(T);
        const auto a = average_ce(p, y, range);
        const auto l = linear_weighted_ce(p, y, range, static_cast<int>(T), 0.0);
        CHECK(a.value == doctest::Approx(l.value).epsilon(1e-12));
        for (std::size_t t = 0; t < a.logit_grads.size(); ++t) {
            for (std::size_t k = 0; k < N; ++k) {
                CHECK(a.logit_grads[t][k] == doctest::Approx(l.logit_grads[t][k]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("property: losses match a direct oracle and linear weighting never lowers the loss") {
    Rng rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t T = 1 + trial % 15, N = 2 + trial % 8;
        const auto p = random_trace(T, N, rng);
        const int y = trial % static_cast<int>(N);
        const int range = 1 + (trial * 7) % static_cast<int>(T);
        const double avg = average_ce(p, y, range).value;
        const double lw = linear_weighted_ce(p, y, range, static_cast<int>(T)).value;
        CHECK(avg == doctest::Approx(oracle_ce(p, y, range, static_cast<int>(T), 0.0)).epsilon(1e-12));
        CHECK(lw == doctest::Approx(oracle_ce(p, y, range, static_cast<int>(T), 1.0)).epsilon(1e-12));
        CHECK(lw >= avg);
    }
}

TEST_CASE("logit gradients match finite differences") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t T = 2 + trial % 5, N = 2 + trial % 4;
        std::vector<Vec> logits;
        for (std::size_t t = 0; t < T; ++t) {
            logits.push_back(testing::random_vec(N, rng, 2.0));
        }
        std::vector<Vec> p;
        for (const auto& z : logits) {
            p.push_back(softmax(z));
        }
        const int y = trial % static_cast<int>(N);
        const int range = 1 + trial % static_cast<int>(T);
        check_logit_grads(logits, [&](const std::vector<Vec>& q) { return average_ce(q, y, range).value; },
                          average_ce(p, y, range).logit_grads);
        check_logit_grads(
            logits, [&](const std::vector<Vec>& q) { return linear_weighted_ce(q, y, range, int(T)).value; },
            linear_weighted_ce(p, y, range, static_cast<int>(T)).logit_grads);
    }
}

TEST_CASE("classification losses reject bad input") {
    const std::vector<Vec> bad{{1.2, -0.2}};
    CHECK_THROWS_AS(average_ce(bad, 0, 1), InvalidInput);
    CHECK_THROWS_AS(linear_weighted_ce(bad, 0, 1, 1), InvalidInput);
    const std::vector<Vec> ok{{0.5, 0.5}};
    CHECK_THROWS_AS(average_ce(ok, 0, 2), InvalidInput);
    CHECK_THROWS_AS(average_ce(ok, 2, 1), InvalidInput);
    CHECK_THROWS_AS(linear_weighted_ce(ok, 0, 1, 0), InvalidInput);
}

TEST_CASE("clamping keeps the loss finite at exact zeros") {
    const std::vector<Vec> wrong{{0.0, 1.0}};
    const auto l = average_ce(wrong, 0, 1);
    CHECK(std::isfinite(l.value));
    CHECK(l.value == doctest::Approx(-std::log(kProbFloor)));
    CHECK(std::isfinite(linear_weighted_ce(wrong, 0, 1, 1).value));
}

TEST_CASE("smooth_l1 branch values") {
    CHECK(smooth_l1(0.5) == 0.125);
    CHECK(smooth_l1(-0.5) == 0.125);
    CHECK(smooth_l1(1.0) == 0.5);
    CHECK(smooth_l1(-1.0) == 0.5);
    CHECK(smooth_l1(2.0) == 1.5);
    CHECK(smooth_l1(-2.0) == 1.5);
    // Continuous and once differentiable at |x| = 1.
    const double e = 1e-9;
    CHECK(smooth_l1(1.0 - e) == doctest::Approx(smooth_l1(1.0 + e)));
    CHECK(smooth_l1_derivative(1.0 - e) == doctest::Approx(1.0));
    CHECK(smooth_l1_derivative(1.0 + e) == 1.0);
    CHECK(smooth_l1_derivative(-1.0 + e) == doctest::Approx(-1.0));
}

TEST_CASE("future_pred_loss values and gradients") {
    const Vec h{0.3, -0.1};
    for (FutureLossKind k : {FutureLossKind::smooth_l1, FutureLossKind::l2}) {
        CHECK(future_pred_loss(k, h, h).value == 0.0);
    }
    CHECK(future_pred_loss(FutureLossKind::smooth_l1, Vec{0.5}, Vec{0.0}).value == 0.125);
    CHECK(future_pred_loss(FutureLossKind::l2, Vec{0.5}, Vec{0.0}).value == 0.25);
    CHECK(future_pred_loss(FutureLossKind::smooth_l1, Vec{2.0}, Vec{0.0}).value == 1.5);
    CHECK_THROWS_AS(future_pred_loss(FutureLossKind::l2, Vec{1.0}, Vec{1.0, 2.0}), InvalidInput);

    Rng rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec pred = testing::random_vec(5, rng, 3.0);
        const Vec target = testing::random_vec(5, rng, 3.0);
        for (FutureLossKind k : {FutureLossKind::smooth_l1, FutureLossKind::l2}) {
            const FutureLoss f = future_pred_loss(k, pred, target);
            for (std::size_t j = 0; j < 5; ++j) {
                if (std::abs(std::abs(pred[j] - target[j]) - 1.0) < 1e-3) {
                    continue;
                }
                Vec p = pred, m = pred;
                p[j] += 1e-6;
                m[j] -= 1e-6;
                const double fd =
                    (future_pred_loss(k, p, target).value - future_pred_loss(k, m, target).value) / 2e-6;
                CHECK(f.grad[j] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("fsp_total with lambda = 0 is bit-identical to the classification loss") {
    Rng rng(25);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = random_trace(6, 4, rng);
        const auto cls = linear_weighted_ce(p, 1, 4, 6);
        std::vector<Vec> pred, target;
        for (int t = 0; t < 4; ++t) {
            pred.push_back(testing::random_vec(3, rng));
            target.push_back(testing::random_vec(3, rng));
        }
        for (FutureLossKind k : {FutureLossKind::none, FutureLossKind::smooth_l1, FutureLossKind::l2}) {
            const FspLoss f = fsp_total({ClassificationKind::linear_weighted, k, 0.0}, cls, pred, target, 4);
            CHECK(f.total == cls.value);
        }
    }
}

TEST_CASE("fsp_total arithmetic: 0.2 + 10 * 0.03 = 0.5") {
    // One step, one coordinate, l2 error x with x^2 = 0.03.
    const ClassificationLoss cls{0.2, {Vec{0.0, 0.0}}};
    const double x = std::sqrt(0.03);
    const FspLoss f = fsp_total({ClassificationKind::average, FutureLossKind::l2, 10.0}, cls,
                                std::vector<Vec>{Vec{x}}, std::vector<Vec>{Vec{0.0}}, 1);
    CHECK(f.future_mean == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(f.total == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fsp_total averages the future loss over the trained steps") {
    const ClassificationLoss cls{1.0, {Vec{0.0}, Vec{0.0}}};
    const std::vector<Vec> pred{{1.0}, {0.0}};
    const std::vector<Vec> target{{0.0}, {0.0}};
    const FspLoss f = fsp_total({ClassificationKind::average, FutureLossKind::l2, 100.0}, cls, pred, target, 2);
    CHECK(f.future_mean == 0.5);
    CHECK(f.total == 51.0);
    CHECK(f.future_grads[0][0] == doctest::Approx(100.0 * 2.0 / 2.0));
    CHECK(f.future_grads[1][0] == 0.0);
}

TEST_CASE("fsp_total rejects missing future targets and mismatched ranges") {
    const ClassificationLoss cls{1.0, {Vec{0.0}, Vec{0.0}}};
    const std::vector<Vec> one{{0.0}};
    CHECK_THROWS_AS(fsp_total({ClassificationKind::average, FutureLossKind::l2, 1.0}, cls, one, one, 2),
                    InvalidInput);
    CHECK_THROWS_AS(fsp_total({ClassificationKind::average, FutureLossKind::l2, 1.0}, cls, one, one, 1),
                    InvalidInput);
    CHECK_THROWS_AS(fsp_total({ClassificationKind::average, FutureLossKind::l2, -1.0}, cls, one, one, 2),
                    InvalidInput);
}

TEST_CASE("loss kind names round-trip") {
    for (auto k : {ClassificationKind::average, ClassificationKind::linear_weighted}) {
        CHECK(classification_kind_from_string(to_string(k)) == k);
    }
    for (auto k : {FutureLossKind::none, FutureLossKind::smooth_l1, FutureLossKind::l2}) {
        CHECK(future_loss_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(future_loss_kind_from_string("huber"), InvalidInput);
}
