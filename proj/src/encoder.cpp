#include "earlyrec/encoder.hpp"

#include "earlyrec/error.hpp"
#include "earlyrec/losses.hpp"
#include "json_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace earlyrec {

namespace {

void init_uniform(AffineLayer& layer, Rng& rng) {
    const double r = 1.0 / std::sqrt(static_cast<double>(layer.in_dim()));
    std::uniform_real_distribution<double> dist(-r, r);
    for (double& w : layer.weight.values()) {
        w = dist(rng);
    }
    for (double& b : layer.bias) {
        b = dist(rng);
    }
}

void tanh_inplace(Vec& v) {
    for (double& x : v) {
        x = std::tanh(x);
    }
}

} // namespace

EncoderModel EncoderModel::zeros(int input_dim, int embed_dim, int num_classes, double dropout_prob) {
    if (input_dim < 1 || embed_dim < 1 || num_classes < 1) {
        throw InvalidInput("EncoderModel: dimensions must be positive");
    }
    if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
        throw InvalidInput("EncoderModel: dropout_prob must lie in [0, 1)");
    }
    EncoderModel m;
    m.hidden = AffineLayer(static_cast<std::size_t>(embed_dim), static_cast<std::size_t>(input_dim));
    m.embed = AffineLayer(static_cast<std::size_t>(embed_dim), static_cast<std::size_t>(embed_dim));
    m.classifier = AffineLayer(static_cast<std::size_t>(num_classes), static_cast<std::size_t>(embed_dim));
    m.dropout_prob = dropout_prob;
    return m;
}

EncoderModel EncoderModel::random(int input_dim, int embed_dim, int num_classes, double dropout_prob,
                                  std::uint64_t seed) {
    EncoderModel m = zeros(input_dim, embed_dim, num_classes, dropout_prob);
    Rng rng = make_rng(seed, Stream::encoder_init);
    init_uniform(m.hidden, rng);
    init_uniform(m.embed, rng);
    init_uniform(m.classifier, rng);
    return m;
}

EncoderModel EncoderModel::zeros_like(const EncoderModel& m) {
    return zeros(m.input_dim(), m.embed_dim(), m.num_classes(), m.dropout_prob);
}

Vec EncoderModel::encode(const Vec& frame) const {
    Vec a1 = affine(hidden, frame);
    tanh_inplace(a1);
    Vec a2 = affine(embed, a1);
    tanh_inplace(a2);
    return a2;
}

ParamList EncoderModel::parameters() {
    return {
        {"hidden.weight", hidden.weight.view(), true},
        {"hidden.bias", hidden.bias.view(), false},
        {"embed.weight", embed.weight.view(), true},
        {"embed.bias", embed.bias.view(), false},
        {"classifier.weight", classifier.weight.view(), true},
        {"classifier.bias", classifier.bias.view(), false},
    };
}

SampleSet segment_sample(int T, int segment_len, int per_segment, Rng& rng) {
    if (T < 1 || segment_len < 1 || per_segment < 1) {
        throw InvalidInput("segment_sample: T, segment_len and per_segment must be >= 1");
    }
    SampleSet out;
    std::vector<int> segment;
    for (int start = 1; start <= T; start += segment_len) {
        const int stop = std::min(T, start + segment_len - 1);
        segment.resize(static_cast<std::size_t>(stop - start + 1));
        std::iota(segment.begin(), segment.end(), start);
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(per_segment), segment.size());
        std::sample(segment.begin(), segment.end(), std::back_inserter(out.indices), take, rng);
    }
    // std::sample preserves order and segments are visited in order, so indices are sorted.
    return out;
}

double early_weight(int t, int T) {
    if (T < 1 || t < 1 || t > T) {
        throw InvalidInput("early_weight: t = " + std::to_string(t) + " outside [1, " +
                           std::to_string(T) + "]");
    }
    // Integer forms of t < T/4, t < T/2, t < 3T/4 (exact for all T).
    const long long tt = t;
    const long long TT = T;
    if (4 * tt < TT) {
        return 1.0;
    }
    if (2 * tt < TT) {
        return 0.5;
    }
    if (4 * tt < 3 * TT) {
        return 0.25;
    }
    return 0.125;
}

PoolResult weighted_max_pool(std::span<const TimedFeature> features, int T, bool weights_on) {
    if (features.empty()) {
        throw InvalidInput("weighted_max_pool: no features");
    }
    const std::size_t dim = features.front().feature.dim();
    PoolResult out;
    out.pooled = Vec(dim);
    out.argmax.assign(dim, 0);
    std::vector<double> weights;
    weights.reserve(features.size());
    for (const auto& f : features) {
        if (f.feature.dim() != dim) {
            throw InvalidInput("weighted_max_pool: mixed feature dimensions");
        }
        weights.push_back(weights_on ? early_weight(f.t, T) : 1.0);
    }
    for (std::size_t j = 0; j < dim; ++j) {
        double best = 0.0;
        int best_t = 0;
        for (std::size_t s = 0; s < features.size(); ++s) {
            const double v = weights[s] * features[s].feature[j];
            const int t = features[s].t;
            if (best_t == 0 || v > best || (v == best && t < best_t)) {
                best = v;
                best_t = t;
            }
        }
        out.pooled[j] = best;
        out.argmax[j] = best_t;
    }
    return out;
}

std::string_view to_string(FinetuneMode m) noexcept {
    switch (m) {
    case FinetuneMode::none:
        return "none";
    case FinetuneMode::single_frame:
        return "single_frame";
    case FinetuneMode::unweighted_subvideo:
        return "unweighted_subvideo";
    case FinetuneMode::weighted_subvideo:
        return "weighted_subvideo";
    }
    return "none";
}

FinetuneMode finetune_mode_from_string(std::string_view s) {
    for (auto m : {FinetuneMode::none, FinetuneMode::single_frame, FinetuneMode::unweighted_subvideo,
                   FinetuneMode::weighted_subvideo}) {
        if (s == to_string(m)) {
            return m;
        }
    }
    throw InvalidInput("unknown encoder mode '" + std::string(s) + "'");
}

EncoderLoss subvideo_loss(const EncoderModel& model, const FrameSequence& seq,
                          const SampleSet& samples, bool weights_on, Rng* dropout_rng) {
    if (samples.indices.empty()) {
        throw InvalidInput("subvideo_loss: empty sample set");
    }
    if (seq.label < 0 || seq.label >= model.num_classes()) {
        throw InvalidInput("subvideo_loss: label " + std::to_string(seq.label) +
                           " outside the classifier's " + std::to_string(model.num_classes()) +
                           " classes");
    }
    const int T = static_cast<int>(seq.length());
    const std::size_t n = samples.indices.size();
    const double keep = 1.0 - model.dropout_prob;
    const bool use_dropout = dropout_rng != nullptr && model.dropout_prob > 0.0;

    struct FrameCache {
        Vec a1;
        Vec a2;
        Vec mask;
    };
    std::vector<FrameCache> cache(n);
    std::vector<TimedFeature> pooled_inputs(n);
    std::bernoulli_distribution keep_dist(keep);
    for (std::size_t s = 0; s < n; ++s) {
        const int t = samples.indices[s];
        if (t < 1 || t > T) {
            throw InvalidInput("subvideo_loss: sampled index " + std::to_string(t) +
                               " outside [1, " + std::to_string(T) + "]");
        }
        const Vec& x = seq.features[static_cast<std::size_t>(t - 1)];
        auto& c = cache[s];
        c.a1 = affine(model.hidden, x);
        tanh_inplace(c.a1);
        c.a2 = affine(model.embed, c.a1);
        tanh_inplace(c.a2);
        c.mask = Vec(c.a2.dim(), 1.0);
        if (use_dropout) {
            for (double& m : c.mask) {
                m = keep_dist(*dropout_rng) ? 1.0 / keep : 0.0;
            }
        }
        Vec e = c.a2;
        for (std::size_t j = 0; j < e.dim(); ++j) {
            e[j] *= c.mask[j];
        }
        pooled_inputs[s] = {t, std::move(e)};
    }

    EncoderLoss out;
    out.pool = weighted_max_pool(pooled_inputs, T, weights_on);
    const Vec probs = softmax(affine(model.classifier, out.pool.pooled));
    const std::vector<Vec> trace{probs};
    const ClassificationLoss ce = average_ce(trace, seq.label, 1);
    out.loss = ce.value;

    out.grad = EncoderModel::zeros_like(model);
    const Vec& dz = ce.logit_grads.front();
    add_outer(out.grad.classifier.weight, dz.view(), out.pool.pooled.view());
    out.grad.classifier.bias = dz;
    const Vec dF = transpose_times(model.classifier.weight, dz);

    // Route each coordinate's gradient to the frame that won the max, scaled by its weight.
    std::vector<Vec> de(n, Vec(model.embed_dim()));
    for (std::size_t j = 0; j < dF.dim(); ++j) {
        const int t = out.pool.argmax[j];
        const auto it = std::find(samples.indices.begin(), samples.indices.end(), t);
        const auto s = static_cast<std::size_t>(it - samples.indices.begin());
        const double w = weights_on ? early_weight(t, T) : 1.0;
        de[s][j] += w * dF[j];
    }

    out.input_grads.assign(n, Vec(static_cast<std::size_t>(model.input_dim())));
    for (std::size_t s = 0; s < n; ++s) {
        if (std::all_of(de[s].begin(), de[s].end(), [](double v) { return v == 0.0; })) {
            continue;
        }
        const auto& c = cache[s];
        Vec dz2(c.a2.dim());
        for (std::size_t j = 0; j < dz2.dim(); ++j) {
            dz2[j] = de[s][j] * c.mask[j] * (1.0 - c.a2[j] * c.a2[j]);
        }
        add_outer(out.grad.embed.weight, dz2.view(), c.a1.view());
        for (std::size_t j = 0; j < dz2.dim(); ++j) {
            out.grad.embed.bias[j] += dz2[j];
        }
        Vec dz1 = transpose_times(model.embed.weight, dz2);
        for (std::size_t j = 0; j < dz1.dim(); ++j) {
            dz1[j] *= 1.0 - c.a1[j] * c.a1[j];
        }
        const Vec& x = seq.features[static_cast<std::size_t>(samples.indices[s] - 1)];
        add_outer(out.grad.hidden.weight, dz1.view(), x.view());
        for (std::size_t j = 0; j < dz1.dim(); ++j) {
            out.grad.hidden.bias[j] += dz1[j];
        }
        out.input_grads[s] = transpose_times(model.hidden.weight, dz1);
    }
    return out;
}

double finetune_step(EncoderModel& model, const FrameSequence& seq, FinetuneMode mode,
                     const SubvideoSampling& sampling, OptimizerState& opt, const SgdConfig& sgd,
                     Rng& rng) {
    if (seq.features.empty()) {
        throw InvalidInput("finetune_step: empty sequence");
    }
    if (static_cast<int>(seq.features.front().dim()) != model.input_dim()) {
        throw InvalidInput("finetune_step: frame dim " + std::to_string(seq.features.front().dim()) +
                           " but encoder expects " + std::to_string(model.input_dim()));
    }
    const int T = static_cast<int>(seq.length());
    SampleSet samples;
    bool weights_on = false;
    switch (mode) {
    case FinetuneMode::single_frame: {
        std::uniform_int_distribution<int> pick(1, T);
        samples.indices = {pick(rng)};
        break;
    }
    case FinetuneMode::unweighted_subvideo:
        samples = segment_sample(T, sampling.segment_len, sampling.per_segment, rng);
        break;
    case FinetuneMode::weighted_subvideo:
        samples = segment_sample(T, sampling.segment_len, sampling.per_segment, rng);
        weights_on = true;
        break;
    case FinetuneMode::none:
        throw InvalidInput("finetune_step: mode 'none' does not train");
    }
    EncoderLoss result = subvideo_loss(model, seq, samples, weights_on, &rng);
    sgd_update(model.parameters(), result.grad.parameters(), opt, sgd);
    return result.loss;
}

std::vector<Vec> extract_features(const EncoderModel& model, const FrameSequence& seq) {
    std::vector<Vec> out;
    out.reserve(seq.length());
    for (const auto& f : seq.features) {
        out.push_back(model.encode(f));
    }
    return out;
}

namespace {
constexpr int kEncoderVersion = 1;
}

void save_encoder(const EncoderModel& m, const std::filesystem::path& path) {
    const nlohmann::json j{
        {"version", kEncoderVersion},
        {"dims", {{"input", m.input_dim()}, {"embed", m.embed_dim()}, {"classes", m.num_classes()}}},
        {"dropout_prob", m.dropout_prob},
        {"parameters",
         {{"hidden", detail::to_json(m.hidden)},
          {"embed", detail::to_json(m.embed)},
          {"classifier", detail::to_json(m.classifier)}}},
    };
    detail::write_json(j, path);
}

EncoderModel load_encoder(const std::filesystem::path& path) {
    const auto j = detail::read_json(path);
    try {
        if (j.at("version").get<int>() != kEncoderVersion) {
            throw FormatError(path.string() + ": unsupported encoder checkpoint version");
        }
        EncoderModel m;
        m.dropout_prob = j.at("dropout_prob").get<double>();
        const auto& p = j.at("parameters");
        m.hidden = detail::affine_from_json(p.at("hidden"));
        m.embed = detail::affine_from_json(p.at("embed"));
        m.classifier = detail::affine_from_json(p.at("classifier"));
        const auto& dims = j.at("dims");
        if (m.input_dim() != dims.at("input").get<int>() || m.embed_dim() != dims.at("embed").get<int>() ||
            m.num_classes() != dims.at("classes").get<int>() ||
            m.embed.in_dim() != m.hidden.out_dim() || m.classifier.in_dim() != m.embed.out_dim()) {
            throw FormatError(path.string() + ": encoder parameter shapes disagree with dims");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const InvalidInput& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace earlyrec
