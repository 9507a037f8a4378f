#include "earlyrec/trainer.hpp"

#include "earlyrec/error.hpp"
#include "earlyrec/rng.hpp"

#include <algorithm>
#include <cmath>

namespace earlyrec {

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Vec normal_vec(std::size_t dim, double scale, Rng& rng) {
    std::normal_distribution<double> normal(0.0, scale);
    Vec v(dim);
    for (double& x : v) {
        x = normal(rng);
    }
    return v;
}

std::vector<Vec> normal_seq(int T, int dim, double scale, Rng& rng) {
    std::vector<Vec> out;
    for (int t = 0; t < T; ++t) {
        out.push_back(normal_vec(static_cast<std::size_t>(dim), scale, rng));
    }
    return out;
}

/// Smallest gap between the best and runner-up pooled candidate over all coordinates.
double pool_margin(const EncoderModel& model, const FrameSequence& seq, const SampleSet& samples,
                   bool weights_on) {
    const int T = static_cast<int>(seq.length());
    if (samples.indices.size() < 2) {
        return 1.0;
    }
    std::vector<Vec> enc;
    for (int t : samples.indices) {
        enc.push_back(model.encode(seq.features[static_cast<std::size_t>(t - 1)]));
    }
    double margin = 1.0;
    for (int j = 0; j < model.embed_dim(); ++j) {
        std::vector<double> vals;
        for (std::size_t s = 0; s < enc.size(); ++s) {
            const double w = weights_on ? early_weight(samples.indices[s], T) : 1.0;
            vals.push_back(w * enc[s][static_cast<std::size_t>(j)]);
        }
        std::sort(vals.rbegin(), vals.rend());
        margin = std::min(margin, vals[0] - vals[1]);
    }
    return margin;
}

bool resolvable(const ParamList& grads) {
    for (const auto& g : grads) {
        for (double x : g.values) {
            if (x != 0.0 && std::abs(x) < 1e-6) {
                return false;
            }
        }
    }
    return true;
}

double check_encoder(Rng& rng, FinetuneMode mode, int& redrawn) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int D = uniform_int(rng, 1, 4);
        const int E = uniform_int(rng, 1, 4);
        const int N = uniform_int(rng, 2, 4);
        const int T = uniform_int(rng, 1, 10);
        FrameSequence seq{uniform_int(rng, 0, N - 1), normal_seq(T, D, 1.0, rng)};
        EncoderModel model = EncoderModel::random(D, E, N, 0.0, rng());
        SampleSet samples;
        bool weights_on = false;
        if (mode == FinetuneMode::single_frame) {
            samples.indices = {uniform_int(rng, 1, T)};
        } else {
            samples = segment_sample(T, uniform_int(rng, 1, 4), uniform_int(rng, 1, 2), rng);
            weights_on = mode == FinetuneMode::weighted_subvideo;
        }
        if (pool_margin(model, seq, samples, weights_on) < 1e-3) {
            continue;
        }
        EncoderModel grad = subvideo_loss(model, seq, samples, weights_on, nullptr).grad;
        if (!resolvable(grad.parameters())) {
            ++redrawn;
            continue;
        }
        return gradient_check([&] { return subvideo_loss(model, seq, samples, weights_on, nullptr).loss; },
                              model.parameters(), grad.parameters())
            .max_rel_error();
    }
    throw NumericalError("gradient suite: could not draw a well-conditioned encoder instance");
}

double check_teacher(Rng& rng, ClassificationKind kind, int& redrawn) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int E = uniform_int(rng, 1, 4);
        const int H = uniform_int(rng, 1, 4);
        const int N = uniform_int(rng, 2, 4);
        const int T = uniform_int(rng, 1, 5);
        const int label = uniform_int(rng, 0, N - 1);
        const auto features = normal_seq(T, E, 1.0, rng);
        RecurrentModel model = RecurrentModel::random(E, H, N, ModelKind::teacher, rng());
        RecurrentModel grad = classification_objective(model, features, label, kind).grad;
        if (!resolvable(grad.parameters())) {
            ++redrawn;
            continue;
        }
        return gradient_check([&] { return classification_objective(model, features, label, kind).loss; },
                              model.parameters(), grad.parameters())
            .max_rel_error();
    }
    throw NumericalError("gradient suite: could not draw a well-conditioned teacher instance");
}

double check_student(Rng& rng, FutureLossKind future, int& redrawn) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int E = uniform_int(rng, 1, 4);
        const int H = uniform_int(rng, 1, 4);
        const int N = uniform_int(rng, 2, 4);
        const int T = uniform_int(rng, 2, 6);
        const int label = uniform_int(rng, 0, N - 1);
        const auto features = normal_seq(T, E, 1.0, rng);
        const RecurrentModel teacher = RecurrentModel::random(E, H, N, ModelKind::teacher, rng());
        const auto states = record_teacher_states(teacher, features);
        RecurrentModel student = RecurrentModel::random(E, H, N, ModelKind::student, rng());

        Delta delta = DeltaSteps{uniform_int(rng, 1, T - 1)};
        if (uniform_int(rng, 0, 1) == 1) {
            const Delta frac = DeltaFraction{uniform_int(rng, 0, 1) == 0 ? 0.2 : 0.5};
            if (!truncation_point(frac, T).skipped()) {
                delta = frac;
            }
        }
        const Truncation tr = truncation_point(delta, T);
        LossSelection sel;
        sel.classification = uniform_int(rng, 0, 1) == 0 ? ClassificationKind::average
                                                         : ClassificationKind::linear_weighted;
        sel.future = future;
        sel.lambda = uniform_int(rng, 0, 1) == 0 ? 1.0 : 10.0;

        RecurrentModel grad = fsp_objective(student, features, label, states, sel, tr).grad;
        if (!resolvable(grad.parameters())) {
            ++redrawn;
            continue;
        }
        return gradient_check([&] { return fsp_objective(student, features, label, states, sel, tr).loss; },
                              student.parameters(), grad.parameters())
            .max_rel_error();
    }
    throw NumericalError("gradient suite: could not draw a well-conditioned student instance");
}

std::vector<Vec> softmax_rows(const Mat& logits) {
    std::vector<Vec> out;
    for (std::size_t t = 0; t < logits.rows(); ++t) {
        const auto row = logits.row(t);
        out.push_back(softmax(Vec(std::vector<double>(row.begin(), row.end()))));
    }
    return out;
}

void copy_rows(const std::vector<Vec>& rows, Mat& into) {
    for (std::size_t t = 0; t < rows.size(); ++t) {
        std::copy(rows[t].begin(), rows[t].end(), into.row(t).begin());
    }
}

double check_classification_loss(Rng& rng, ClassificationKind kind) {
    const int N = uniform_int(rng, 2, 5);
    const int T = uniform_int(rng, 1, 5);
    const int range = uniform_int(rng, 1, T);
    const int label = uniform_int(rng, 0, N - 1);
    Mat logits(static_cast<std::size_t>(T), static_cast<std::size_t>(N));
    for (double& z : logits.values()) {
        z = std::normal_distribution<double>(0.0, 2.0)(rng);
    }
    auto eval = [&] { return classification_loss(kind, softmax_rows(logits), label, range, T); };
    Mat analytic(logits.rows(), logits.cols());
    copy_rows(eval().logit_grads, analytic);
    return gradient_check([&] { return eval().value; }, {{"logits", logits.view(), false}},
                          {{"logits", analytic.view(), false}})
        .max_rel_error();
}

double check_future_loss(Rng& rng, FutureLossKind kind) {
    const auto dim = static_cast<std::size_t>(uniform_int(rng, 1, 6));
    Vec pred = normal_vec(dim, 1.5, rng);
    const Vec target = normal_vec(dim, 1.0, rng);
    for (std::size_t j = 0; j < dim; ++j) {
        // Keep |x| away from the smooth-L1 kink at 1, where rho'' jumps.
        const double x = pred[j] - target[j];
        if (std::abs(std::abs(x) - 1.0) < 1e-3) {
            pred[j] += 0.01;
        }
    }
    Vec grad = future_pred_loss(kind, pred, target).grad;
    return gradient_check([&] { return future_pred_loss(kind, pred, target).value; },
                          {{"prediction", pred.view(), false}}, {{"prediction", grad.view(), false}})
        .max_rel_error();
}

double check_fsp_total(Rng& rng) {
    const int N = uniform_int(rng, 2, 4);
    const int H = uniform_int(rng, 1, 4);
    const int T = uniform_int(rng, 1, 5);
    const int label = uniform_int(rng, 0, N - 1);
    LossSelection sel;
    sel.classification = uniform_int(rng, 0, 1) == 0 ? ClassificationKind::average
                                                     : ClassificationKind::linear_weighted;
    sel.future = uniform_int(rng, 0, 1) == 0 ? FutureLossKind::smooth_l1 : FutureLossKind::l2;
    sel.lambda = uniform_int(rng, 0, 1) == 0 ? 10.0 : 100.0;
    Mat logits(static_cast<std::size_t>(T), static_cast<std::size_t>(N));
    for (double& z : logits.values()) {
        z = std::normal_distribution<double>(0.0, 2.0)(rng);
    }
    Mat preds(static_cast<std::size_t>(T), static_cast<std::size_t>(H));
    for (double& p : preds.values()) {
        p = std::normal_distribution<double>(0.0, 0.5)(rng);
    }
    const auto targets = normal_seq(T, H, 0.5, rng);
    auto eval = [&] {
        const ClassificationLoss cls = classification_loss(sel.classification, softmax_rows(logits), label, T, T);
        std::vector<Vec> p;
        for (std::size_t t = 0; t < preds.rows(); ++t) {
            const auto row = preds.row(t);
            p.emplace_back(std::vector<double>(row.begin(), row.end()));
        }
        return fsp_total(sel, cls, p, targets, T);
    };
    const FspLoss base = eval();
    Mat d_logits(logits.rows(), logits.cols());
    Mat d_preds(preds.rows(), preds.cols());
    copy_rows(base.logit_grads, d_logits);
    copy_rows(base.future_grads, d_preds);
    return gradient_check([&] { return eval().total; },
                          {{"logits", logits.view(), false}, {"predictions", preds.view(), false}},
                          {{"logits", d_logits.view(), false}, {"predictions", d_preds.view(), false}})
        .max_rel_error();
}

} // namespace

double GradientSuiteResult::max_rel_error() const noexcept {
    double worst = 0.0;
    for (const auto& [name, err] : components) {
        worst = std::max(worst, err);
    }
    return worst;
}

GradientSuiteResult run_gradient_suite(int instances, std::uint64_t seed) {
    if (instances < 1) {
        throw InvalidInput("gradient suite needs at least one instance");
    }
    struct Component {
        const char* name;
        std::function<double(Rng&, int&)> check;
    };
    const std::vector<Component> components{
        {"encoder.weighted_subvideo", [](Rng& r, int& n) { return check_encoder(r, FinetuneMode::weighted_subvideo, n); }},
        {"encoder.unweighted_subvideo", [](Rng& r, int& n) { return check_encoder(r, FinetuneMode::unweighted_subvideo, n); }},
        {"encoder.single_frame", [](Rng& r, int& n) { return check_encoder(r, FinetuneMode::single_frame, n); }},
        {"lstm.teacher.average", [](Rng& r, int& n) { return check_teacher(r, ClassificationKind::average, n); }},
        {"lstm.teacher.linear_weighted", [](Rng& r, int& n) { return check_teacher(r, ClassificationKind::linear_weighted, n); }},
        {"lstm.student.smooth_l1", [](Rng& r, int& n) { return check_student(r, FutureLossKind::smooth_l1, n); }},
        {"lstm.student.l2", [](Rng& r, int& n) { return check_student(r, FutureLossKind::l2, n); }},
        {"loss.average_ce", [](Rng& r, int&) { return check_classification_loss(r, ClassificationKind::average); }},
        {"loss.linear_weighted_ce", [](Rng& r, int&) { return check_classification_loss(r, ClassificationKind::linear_weighted); }},
        {"loss.smooth_l1", [](Rng& r, int&) { return check_future_loss(r, FutureLossKind::smooth_l1); }},
        {"loss.l2", [](Rng& r, int&) { return check_future_loss(r, FutureLossKind::l2); }},
        {"loss.fsp_total", [](Rng& r, int&) { return check_fsp_total(r); }},
    };
    GradientSuiteResult out;
    for (std::size_t c = 0; c < components.size(); ++c) {
        double worst = 0.0;
        for (int i = 0; i < instances; ++i) {
            Rng rng = make_rng(seed, Stream::gradcheck, c * 100003 + static_cast<std::uint64_t>(i));
            worst = std::max(worst, components[c].check(rng, out.redrawn));
        }
        out.components.emplace_back(components[c].name, worst);
    }
    return out;
}

} // namespace earlyrec
