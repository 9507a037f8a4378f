#include "earlyrec/trainer.hpp"

#include "earlyrec/error.hpp"
#include "earlyrec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace earlyrec {

std::string to_string(const Delta& d) {
    std::ostringstream out;
    if (const auto* f = std::get_if<DeltaFraction>(&d)) {
        out << "fraction:" << f->fraction;
    } else {
        out << "steps:" << std::get<DeltaSteps>(d).steps;
    }
    return out.str();
}

Delta delta_from_string(const std::string& s) {
    const auto colon = s.find(':');
    const std::string kind = s.substr(0, colon);
    const std::string value = colon == std::string::npos ? "" : s.substr(colon + 1);
    try {
        std::size_t used = 0;
        if (kind == "fraction") {
            const double phi = std::stod(value, &used);
            if (used == value.size()) {
                return DeltaFraction{phi};
            }
        } else if (kind == "steps") {
            const int k = std::stoi(value, &used);
            if (used == value.size()) {
                return DeltaSteps{k};
            }
        }
    } catch (const std::logic_error&) {
    }
    throw InvalidInput("cannot parse delta '" + s + "' (expected fraction:<phi> or steps:<k>)");
}

Truncation truncation_point(const Delta& delta, int T) {
    if (T < 1) {
        throw InvalidInput("truncation_point: T must be >= 1");
    }
    Truncation out;
    if (const auto* f = std::get_if<DeltaFraction>(&delta)) {
        if (!(f->fraction > 0.0 && f->fraction < 1.0)) {
            throw InvalidInput("delta fraction must lie in (0, 1)");
        }
        out.train_steps = static_cast<int>(std::floor((1.0 - f->fraction) * T));
        out.horizon = T - out.train_steps;
    } else {
        const int k = std::get<DeltaSteps>(delta).steps;
        if (k < 1) {
            throw InvalidInput("delta steps must be >= 1");
        }
        out.train_steps = T - k;
        out.horizon = k;
    }
    return out;
}

void TrainConfig::validate() const {
    sgd().validate();
    loss.validate();
    if (epochs < 1) {
        throw InvalidInput("epochs must be >= 1");
    }
    if (hidden < 1) {
        throw InvalidInput("hidden must be >= 1");
    }
    if (checkpoint_every < 0 || patience < 0) {
        throw InvalidInput("checkpoint_every and patience must be >= 0");
    }
    truncation_point(delta, 1);
}

TrainConfig TrainConfig::teacher_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::student_defaults() {
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.loss.future = FutureLossKind::smooth_l1;
    cfg.loss.lambda = 10.0;
    cfg.delta = DeltaFraction{0.2};
    return cfg;
}

void EncoderTrainConfig::validate() const {
    sgd().validate();
    if (epochs < 1 || embed_dim < 1 || sampling.segment_len < 1 || sampling.per_segment < 1 ||
        max_steps < 0) {
        throw InvalidInput("encoder training: epochs, embed_dim, segment_len and per_segment must be >= 1");
    }
    if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
        throw InvalidInput("encoder training: dropout_prob must lie in [0, 1)");
    }
}

EncoderTrainConfig EncoderTrainConfig::defaults_for(FinetuneMode mode) {
    EncoderTrainConfig cfg;
    cfg.mode = mode;
    if (mode == FinetuneMode::single_frame) {
        cfg.learning_rate = 1e-3;
        cfg.weight_decay = 1e-3;
    }
    return cfg;
}

void write_training_log(const std::vector<LogRow>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out.precision(17);
    out << "epoch,split,loss,accuracy_final_step\n";
    for (const auto& row : log) {
        out << row.epoch << ',' << to_string(row.split) << ',' << row.loss << ','
            << row.accuracy_final_step << '\n';
    }
}

namespace {

bool nonzero(const Vec& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
}

int count_contributing(const StepGradients& g) {
    const std::size_t n = std::max(g.logits.size(), g.future.size());
    int count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const bool a = t < g.logits.size() && nonzero(g.logits[t]);
        const bool b = t < g.future.size() && nonzero(g.future[t]);
        count += (a || b) ? 1 : 0;
    }
    return count;
}

void require_finite(const SequenceTrace& trace) {
    for (std::size_t t = 0; t < trace.hidden.size(); ++t) {
        if (!all_finite(trace.probs[t].view()) || !all_finite(trace.hidden[t].view())) {
            throw NumericalError("non-finite model output at step " + std::to_string(t + 1));
        }
    }
}

bool predicts(const Vec& probs, int label) {
    return static_cast<int>(argmax(probs.view())) == label;
}

} // namespace

SequenceObjective classification_objective(const RecurrentModel& model, std::span<const Vec> features,
                                           int label, ClassificationKind kind, int range_end) {
    const SequenceTrace trace = forward_sequence(model, features);
    require_finite(trace);
    const int T = static_cast<int>(features.size());
    const int range = range_end == 0 ? T : range_end;
    ClassificationLoss cls = classification_loss(kind, trace.probs, label, range, T);
    SequenceObjective out;
    out.loss = cls.value;
    out.classification = cls.value;
    out.train_steps = range;
    out.final_correct = predicts(trace.probs.back(), label);
    StepGradients upstream{std::move(cls.logit_grads), {}};
    out.contributing_steps = count_contributing(upstream);
    out.grad = backward_sequence(model, features, upstream);
    return out;
}

SequenceObjective fsp_objective(const RecurrentModel& student, std::span<const Vec> features, int label,
                                std::span<const Vec> teacher_states, const LossSelection& loss,
                                const Truncation& truncation) {
    SequenceObjective out;
    out.train_steps = truncation.train_steps;
    if (truncation.skipped()) {
        return out;
    }
    const int T = static_cast<int>(features.size());
    if (teacher_states.size() != features.size()) {
        throw InvalidInput("fsp_objective: " + std::to_string(teacher_states.size()) +
                           " teacher states for a sequence of length " + std::to_string(T));
    }
    if (truncation.train_steps + truncation.horizon > T) {
        throw InvalidInput("fsp_objective: truncation reaches past the end of the sequence");
    }
    const SequenceTrace trace = forward_sequence(student, features);
    require_finite(trace);
    const int range = truncation.train_steps;
    const ClassificationLoss cls = classification_loss(loss.classification, trace.probs, label, range, T);
    const auto targets = teacher_states.subspan(static_cast<std::size_t>(truncation.horizon),
                                                static_cast<std::size_t>(range));
    FspLoss total = fsp_total(loss, cls, trace.future, targets, range);
    out.loss = total.total;
    out.classification = total.classification;
    out.future_mean = total.future_mean;
    out.final_correct = predicts(trace.probs.back(), label);
    StepGradients upstream{std::move(total.logit_grads), std::move(total.future_grads)};
    out.contributing_steps = count_contributing(upstream);
    out.grad = backward_sequence(student, features, upstream);
    return out;
}

TrainResult train_recurrent(const Dataset& dataset, const EncoderModel& encoder, RecurrentModel init,
                            const TrainConfig& cfg, const ObjectiveFn& objective,
                            const TrainCallbacks& callbacks) {
    cfg.validate();
    const auto train_idx = dataset.indices(Split::train);
    const auto val_idx = dataset.indices(Split::val);
    if (train_idx.empty()) {
        throw InvalidInput("training split is empty");
    }
    if (init.input_dim() != encoder.embed_dim()) {
        throw InvalidInput("model input dim " + std::to_string(init.input_dim()) +
                           " does not match encoder embedding dim " + std::to_string(encoder.embed_dim()));
    }
    if (init.num_classes() != dataset.num_classes()) {
        throw InvalidInput("model has " + std::to_string(init.num_classes()) + " classes, dataset has " +
                           std::to_string(dataset.num_classes()));
    }

    std::vector<std::vector<Vec>> features(dataset.sequences.size());
    for (std::size_t i : train_idx) {
        features[i] = extract_features(encoder, dataset.sequences[i]);
    }
    for (std::size_t i : val_idx) {
        features[i] = extract_features(encoder, dataset.sequences[i]);
    }

    TrainResult result;
    RecurrentModel model = std::move(init);
    result.model = model;
    OptimizerState opt;
    const SgdConfig sgd = cfg.sgd();
    double best_acc = -1.0;
    double best_loss = 0.0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng rng = make_rng(cfg.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        int trained = 0;
        int correct = 0;
        for (std::size_t i : order) {
            const auto& seq = dataset.sequences[i];
            SequenceObjective obj = objective(model, i, seq, features[i]);
            if (epoch == 1) {
                result.step_counts.push_back({i, static_cast<int>(seq.length()), obj.train_steps,
                                              obj.contributing_steps});
            }
            if (obj.train_steps < 1) {
                continue;
            }
            if (!std::isfinite(obj.loss)) {
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
            }
            sgd_update(model.parameters(), obj.grad.parameters(), opt, sgd);
            loss_sum += obj.loss;
            correct += obj.final_correct ? 1 : 0;
            ++trained;
        }
        const double train_loss = trained > 0 ? loss_sum / trained : 0.0;
        const double train_acc = trained > 0 ? static_cast<double>(correct) / trained : 0.0;
        result.log.push_back({epoch, Split::train, train_loss, train_acc});

        // Validation: final-step accuracy, whole-sequence classification loss.
        double val_loss = 0.0;
        int val_correct = 0;
        for (std::size_t i : val_idx) {
            const auto& seq = dataset.sequences[i];
            const SequenceTrace trace = forward_sequence(model, features[i]);
            const int T = static_cast<int>(seq.length());
            val_loss += classification_loss(cfg.loss.classification, trace.probs, seq.label, T, T).value;
            val_correct += predicts(trace.probs.back(), seq.label) ? 1 : 0;
        }
        const double val_acc = val_idx.empty() ? 0.0 : static_cast<double>(val_correct) / val_idx.size();
        val_loss = val_idx.empty() ? train_loss : val_loss / val_idx.size();
        result.log.push_back({epoch, Split::val, val_loss, val_acc});
        result.epochs_run = epoch;

        if (val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss)) {
            best_acc = val_acc;
            best_loss = val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (callbacks.on_checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            callbacks.on_checkpoint(epoch, model);
        }
        if (cfg.patience > 0 && epoch - result.best_epoch >= cfg.patience) {
            break;
        }
    }
    return result;
}

TrainResult train_teacher(const Dataset& dataset, const EncoderModel& encoder, const TrainConfig& cfg,
                          const TrainCallbacks& callbacks) {
    RecurrentModel init = RecurrentModel::random(encoder.embed_dim(), cfg.hidden, dataset.num_classes(),
                                                 ModelKind::teacher, cfg.seed);
    const ClassificationKind kind = cfg.loss.classification;
    return train_recurrent(
        dataset, encoder, std::move(init), cfg,
        [kind](const RecurrentModel& m, std::size_t, const FrameSequence& seq, std::span<const Vec> f) {
            return classification_objective(m, f, seq.label, kind);
        },
        callbacks);
}

TrainResult train_fsp(const Dataset& dataset, const EncoderModel& encoder, const RecurrentModel& teacher,
                      const TrainConfig& cfg, const TrainCallbacks& callbacks) {
    if (teacher.kind() != ModelKind::teacher) {
        throw InvalidInput("train_fsp: the frozen model must be a teacher");
    }
    if (cfg.loss.future == FutureLossKind::none) {
        throw InvalidInput("train_fsp: a future-prediction loss is required");
    }
    if (teacher.input_dim() != encoder.embed_dim() || teacher.hidden_dim() != cfg.hidden ||
        teacher.num_classes() != dataset.num_classes()) {
        throw InvalidInput("train_fsp: teacher/student dimension mismatch (teacher E=" +
                           std::to_string(teacher.input_dim()) + " H=" + std::to_string(teacher.hidden_dim()) +
                           ", student E=" + std::to_string(encoder.embed_dim()) +
                           " H=" + std::to_string(cfg.hidden) + ")");
    }
    std::vector<std::vector<Vec>> targets(dataset.sequences.size());
    for (std::size_t i : dataset.indices(Split::train)) {
        targets[i] = record_teacher_states(teacher, extract_features(encoder, dataset.sequences[i]));
    }
    RecurrentModel init = RecurrentModel::random(encoder.embed_dim(), cfg.hidden, dataset.num_classes(),
                                                 ModelKind::student, cfg.seed);
    const LossSelection loss = cfg.loss;
    const Delta delta = cfg.delta;
    return train_recurrent(
        dataset, encoder, std::move(init), cfg,
        [&targets, loss, delta](const RecurrentModel& m, std::size_t i, const FrameSequence& seq,
                                std::span<const Vec> f) {
            const Truncation tr = truncation_point(delta, static_cast<int>(seq.length()));
            return fsp_objective(m, f, seq.label, targets[i], loss, tr);
        },
        callbacks);
}

EncoderTrainResult finetune_encoder(const Dataset& dataset, const EncoderTrainConfig& cfg) {
    cfg.validate();
    EncoderTrainResult out;
    out.model = EncoderModel::random(dataset.feature_dim(), cfg.embed_dim, dataset.num_classes(),
                                     cfg.dropout_prob, cfg.seed);
    if (cfg.mode == FinetuneMode::none) {
        return out;
    }
    const auto train_idx = dataset.indices(Split::train);
    if (train_idx.empty()) {
        throw InvalidInput("training split is empty");
    }
    std::vector<FrameSequence> train;
    for (std::size_t i : train_idx) {
        FrameSequence seq = dataset.sequences[i];
        if (cfg.max_steps > 0 && seq.length() > static_cast<std::size_t>(cfg.max_steps)) {
            seq.features.resize(static_cast<std::size_t>(cfg.max_steps));
        }
        train.push_back(std::move(seq));
    }
    OptimizerState opt;
    const SgdConfig sgd = cfg.sgd();
    Rng rng = make_rng(cfg.seed, Stream::encoder_train);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t k : order) {
            sum += finetune_step(out.model, train[k], cfg.mode, cfg.sampling, opt, sgd, rng);
        }
        const double mean = sum / static_cast<double>(train.size());
        if (!std::isfinite(mean)) {
            throw NumericalError("non-finite encoder loss at epoch " + std::to_string(epoch));
        }
        out.epoch_loss.push_back(mean);
    }
    return out;
}

double GradCheckReport::max_rel_error() const noexcept {
    double worst = 0.0;
    for (const auto& t : tensors) {
        worst = std::max(worst, t.max_rel_error);
    }
    return worst;
}

GradCheckReport gradient_check(const std::function<double()>& objective, const ParamList& params,
                               const ParamList& analytic, double step) {
    if (params.size() != analytic.size()) {
        throw InvalidInput("gradient_check: parameter and gradient lists differ in length");
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values.size() != analytic[i].values.size()) {
            throw InvalidInput("gradient_check: shape mismatch for '" + params[i].name + "'");
        }
        total += params[i].values.size();
    }
    if (total > 2000) {
        throw InvalidInput("gradient_check: " + std::to_string(total) +
                           " parameters exceeds the small-instance limit of 2000");
    }
    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        TensorCheck check{params[i].name, 0.0};
        auto values = params[i].values;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double saved = values[k];
            values[k] = saved + step;
            const double up = objective();
            values[k] = saved - step;
            const double down = objective();
            values[k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double exact = analytic[i].values[k];
            const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
            check.max_rel_error = std::max(check.max_rel_error, std::abs(exact - numeric) / denom);
        }
        report.tensors.push_back(std::move(check));
    }
    return report;
}

} // namespace earlyrec
