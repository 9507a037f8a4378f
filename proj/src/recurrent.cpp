#include "earlyrec/recurrent.hpp"

#include "earlyrec/error.hpp"
#include "earlyrec/rng.hpp"
#include "json_io.hpp"

#include <cmath>
#include <string>

namespace earlyrec {

namespace {

double sigmoid(double x) noexcept { return activate(Activation::sigmoid, x); }

void check_input(const LSTMParams& p, const Vec& x) {
    if (static_cast<int>(x.dim()) != p.input_dim()) {
        throw InvalidInput("LSTM input has dim " + std::to_string(x.dim()) + ", expected " +
                           std::to_string(p.input_dim()));
    }
}

/// Gate pre-activations W_x x + W_h h + b.
void preactivation(const LSTMParams& p, const Vec& x, const Vec& h, std::vector<double>& out) {
    const std::size_t rows = p.bias.dim();
    out.assign(p.bias.begin(), p.bias.end());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto wx = p.input_weight.row(r);
        const auto wh = p.hidden_weight.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < wx.size(); ++c) {
            acc += wx[c] * x[c];
        }
        for (std::size_t c = 0; c < wh.size(); ++c) {
            acc += wh[c] * h[c];
        }
        out[r] += acc;
    }
}

struct StepCache {
    Vec h_prev, c_prev;
    Vec i, f, o, g;
    Vec c, tanh_c, h;
};

StepCache step_with_cache(const LSTMParams& p, const Vec& x, const LSTMState& prev,
                          std::vector<double>& scratch) {
    const auto H = static_cast<std::size_t>(p.hidden_dim());
    preactivation(p, x, prev.h, scratch);
    StepCache s;
    s.h_prev = prev.h;
    s.c_prev = prev.c;
    s.i = Vec(H);
    s.f = Vec(H);
    s.o = Vec(H);
    s.g = Vec(H);
    s.c = Vec(H);
    s.tanh_c = Vec(H);
    s.h = Vec(H);
    for (std::size_t k = 0; k < H; ++k) {
        s.i[k] = sigmoid(scratch[k]);
        s.f[k] = sigmoid(scratch[H + k]);
        s.o[k] = sigmoid(scratch[2 * H + k]);
        s.g[k] = std::tanh(scratch[3 * H + k]);
        s.c[k] = s.f[k] * prev.c[k] + s.i[k] * s.g[k];
        s.tanh_c[k] = std::tanh(s.c[k]);
        s.h[k] = s.o[k] * s.tanh_c[k];
    }
    return s;
}

void init_uniform(std::span<double> values, double r, Rng& rng) {
    std::uniform_real_distribution<double> dist(-r, r);
    for (double& v : values) {
        v = dist(rng);
    }
}

void check_model(const RecurrentModel& m) {
    const int H = m.hidden_dim();
    if (m.lstm.input_weight.rows() != 4 * static_cast<std::size_t>(H) ||
        m.lstm.hidden_weight.rows() != 4 * static_cast<std::size_t>(H) ||
        m.lstm.bias.dim() != 4 * static_cast<std::size_t>(H) ||
        static_cast<int>(m.class_head.in_dim()) != H ||
        (m.future_head && (static_cast<int>(m.future_head->in_dim()) != H ||
                           static_cast<int>(m.future_head->out_dim()) != H))) {
        throw InvalidInput("RecurrentModel: inconsistent parameter shapes");
    }
}

} // namespace

LSTMState lstm_step(const LSTMParams& params, const Vec& x, const LSTMState& prev) {
    check_input(params, x);
    if (static_cast<int>(prev.h.dim()) != params.hidden_dim() ||
        static_cast<int>(prev.c.dim()) != params.hidden_dim()) {
        throw InvalidInput("lstm_step: state dim does not match hidden size " +
                           std::to_string(params.hidden_dim()));
    }
    std::vector<double> scratch;
    StepCache s = step_with_cache(params, x, prev, scratch);
    return {std::move(s.h), std::move(s.c)};
}

RecurrentModel RecurrentModel::zeros(int input_dim, int hidden_dim, int num_classes, ModelKind kind) {
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 1) {
        throw InvalidInput("RecurrentModel: dimensions must be positive");
    }
    const auto E = static_cast<std::size_t>(input_dim);
    const auto H = static_cast<std::size_t>(hidden_dim);
    RecurrentModel m;
    m.lstm.input_weight = Mat(4 * H, E);
    m.lstm.hidden_weight = Mat(4 * H, H);
    m.lstm.bias = Vec(4 * H);
    m.class_head = AffineLayer(static_cast<std::size_t>(num_classes), H);
    if (kind == ModelKind::student) {
        m.future_head = AffineLayer(H, H);
    }
    return m;
}

RecurrentModel RecurrentModel::random(int input_dim, int hidden_dim, int num_classes, ModelKind kind,
                                      std::uint64_t seed) {
    RecurrentModel m = zeros(input_dim, hidden_dim, num_classes, kind);
    Rng rng = make_rng(seed, Stream::lstm_init);
    const double r_gate = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden_dim));
    init_uniform(m.lstm.input_weight.view(), r_gate, rng);
    init_uniform(m.lstm.hidden_weight.view(), r_gate, rng);
    init_uniform(m.lstm.bias.view(), r_gate, rng);
    const auto H = static_cast<std::size_t>(hidden_dim);
    for (std::size_t k = H; k < 2 * H; ++k) {
        m.lstm.bias[k] = 1.0;
    }
    const double r_head = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    init_uniform(m.class_head.weight.view(), r_head, rng);
    init_uniform(m.class_head.bias.view(), r_head, rng);
    if (m.future_head) {
        init_uniform(m.future_head->weight.view(), r_head, rng);
        init_uniform(m.future_head->bias.view(), r_head, rng);
    }
    return m;
}

RecurrentModel RecurrentModel::zeros_like(const RecurrentModel& m) {
    return zeros(m.input_dim(), m.hidden_dim(), m.num_classes(), m.kind());
}

ParamList RecurrentModel::parameters() {
    ParamList out{
        {"lstm.input_weight", lstm.input_weight.view(), true},
        {"lstm.hidden_weight", lstm.hidden_weight.view(), true},
        {"lstm.bias", lstm.bias.view(), false},
        {"class_head.weight", class_head.weight.view(), true},
        {"class_head.bias", class_head.bias.view(), false},
    };
    if (future_head) {
        out.push_back({"future_head.weight", future_head->weight.view(), true});
        out.push_back({"future_head.bias", future_head->bias.view(), false});
    }
    return out;
}

SequenceTrace forward_sequence(const RecurrentModel& model, std::span<const Vec> features) {
    if (features.empty()) {
        throw InvalidInput("forward_sequence: empty feature list");
    }
    check_model(model);
    SequenceTrace trace;
    trace.hidden.reserve(features.size());
    trace.probs.reserve(features.size());
    LSTMState state = LSTMState::zeros(model.hidden_dim());
    std::vector<double> scratch;
    for (const Vec& x : features) {
        check_input(model.lstm, x);
        StepCache s = step_with_cache(model.lstm, x, state, scratch);
        state = {std::move(s.h), std::move(s.c)};
        trace.probs.push_back(softmax(affine(model.class_head, state.h)));
        if (model.future_head) {
            trace.future.push_back(affine(*model.future_head, state.h));
        }
        trace.hidden.push_back(state.h);
    }
    return trace;
}

RecurrentModel backward_sequence(const RecurrentModel& model, std::span<const Vec> features,
                                 const StepGradients& upstream) {
    if (features.empty()) {
        throw InvalidInput("backward_sequence: empty feature list");
    }
    check_model(model);
    const std::size_t T = features.size();
    if (upstream.logits.size() > T || upstream.future.size() > T) {
        throw InvalidInput("backward_sequence: " + std::to_string(upstream.logits.size()) +
                           " logit and " + std::to_string(upstream.future.size()) +
                           " future gradients for a sequence of length " + std::to_string(T));
    }
    if (!model.future_head && !upstream.future.empty()) {
        throw InvalidInput("backward_sequence: future gradients given to a model without a future head");
    }
    const auto H = static_cast<std::size_t>(model.hidden_dim());
    const auto N = static_cast<std::size_t>(model.num_classes());
    for (const auto& g : upstream.logits) {
        if (g.dim() != N) {
            throw InvalidInput("backward_sequence: logit gradient dim mismatch");
        }
    }
    for (const auto& g : upstream.future) {
        if (g.dim() != H) {
            throw InvalidInput("backward_sequence: future gradient dim mismatch");
        }
    }

    std::vector<StepCache> cache;
    cache.reserve(T);
    LSTMState state = LSTMState::zeros(model.hidden_dim());
    std::vector<double> scratch;
    for (const Vec& x : features) {
        check_input(model.lstm, x);
        cache.push_back(step_with_cache(model.lstm, x, state, scratch));
        state = {cache.back().h, cache.back().c};
    }

    RecurrentModel grad = RecurrentModel::zeros_like(model);
    Vec dh_next(H);
    Vec dc_next(H);
    Vec da(4 * H);
    for (std::size_t step = T; step-- > 0;) {
        const StepCache& s = cache[step];
        Vec dh = dh_next;
        if (step < upstream.logits.size()) {
            const Vec& dz = upstream.logits[step];
            add_outer(grad.class_head.weight, dz.view(), s.h.view());
            for (std::size_t k = 0; k < N; ++k) {
                grad.class_head.bias[k] += dz[k];
            }
            const Vec back = transpose_times(model.class_head.weight, dz);
            for (std::size_t k = 0; k < H; ++k) {
                dh[k] += back[k];
            }
        }
        if (step < upstream.future.size()) {
            const Vec& dp = upstream.future[step];
            add_outer(grad.future_head->weight, dp.view(), s.h.view());
            for (std::size_t k = 0; k < H; ++k) {
                grad.future_head->bias[k] += dp[k];
            }
            const Vec back = transpose_times(model.future_head->weight, dp);
            for (std::size_t k = 0; k < H; ++k) {
                dh[k] += back[k];
            }
        }
        for (std::size_t k = 0; k < H; ++k) {
            const double d_o = dh[k] * s.tanh_c[k];
            const double dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            const double d_i = dc * s.g[k];
            const double d_g = dc * s.i[k];
            const double d_f = dc * s.c_prev[k];
            dc_next[k] = dc * s.f[k];
            da[k] = d_i * s.i[k] * (1.0 - s.i[k]);
            da[H + k] = d_f * s.f[k] * (1.0 - s.f[k]);
            da[2 * H + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            da[3 * H + k] = d_g * (1.0 - s.g[k] * s.g[k]);
        }
        add_outer(grad.lstm.input_weight, da.view(), features[step].view());
        add_outer(grad.lstm.hidden_weight, da.view(), s.h_prev.view());
        for (std::size_t k = 0; k < 4 * H; ++k) {
            grad.lstm.bias[k] += da[k];
        }
        dh_next = transpose_times(model.lstm.hidden_weight, da);
    }
    return grad;
}

std::vector<Vec> record_teacher_states(const RecurrentModel& teacher, std::span<const Vec> features) {
    if (teacher.future_head) {
        throw InvalidInput("record_teacher_states: model has a future head; a teacher is required");
    }
    return forward_sequence(teacher, features).hidden;
}

namespace {
constexpr int kModelVersion = 1;
}

void save_model(const RecurrentModel& m, const std::filesystem::path& path) {
    nlohmann::json params{
        {"lstm",
         {{"input_weight", detail::to_json(m.lstm.input_weight)},
          {"hidden_weight", detail::to_json(m.lstm.hidden_weight)},
          {"bias", m.lstm.bias.values()}}},
        {"class_head", detail::to_json(m.class_head)},
    };
    if (m.future_head) {
        params["future_head"] = detail::to_json(*m.future_head);
    }
    const nlohmann::json j{
        {"version", kModelVersion},
        {"kind", m.kind() == ModelKind::teacher ? "teacher" : "student"},
        {"E", m.input_dim()},
        {"H", m.hidden_dim()},
        {"N", m.num_classes()},
        {"parameters", std::move(params)},
    };
    detail::write_json(j, path);
}

RecurrentModel load_model(const std::filesystem::path& path) {
    const auto j = detail::read_json(path);
    try {
        if (j.at("version").get<int>() != kModelVersion) {
            throw FormatError(path.string() + ": unsupported model checkpoint version");
        }
        const std::string kind = j.at("kind").get<std::string>();
        if (kind != "teacher" && kind != "student") {
            throw FormatError(path.string() + ": unknown model kind '" + kind + "'");
        }
        const auto& p = j.at("parameters");
        RecurrentModel m;
        m.lstm.input_weight = detail::mat_from_json(p.at("lstm").at("input_weight"));
        m.lstm.hidden_weight = detail::mat_from_json(p.at("lstm").at("hidden_weight"));
        m.lstm.bias = Vec(p.at("lstm").at("bias").get<std::vector<double>>());
        m.class_head = detail::affine_from_json(p.at("class_head"));
        if (kind == "student") {
            m.future_head = detail::affine_from_json(p.at("future_head"));
        }
        check_model(m);
        if (m.input_dim() != j.at("E").get<int>() || m.hidden_dim() != j.at("H").get<int>() ||
            m.num_classes() != j.at("N").get<int>()) {
            throw FormatError(path.string() + ": parameter shapes disagree with E/H/N");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const InvalidInput& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace earlyrec
