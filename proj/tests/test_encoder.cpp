#include "earlyrec/encoder.hpp"
#include "earlyrec/error.hpp"
#include "earlyrec/trainer.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace earlyrec;

namespace {

// Quarter weights written with real-valued boundaries.
double oracle_weight(int t, int T) {
    const double x = t, q = T / 4.0;
    if (x < q) {
        return 1.0;
    }
    if (x < 2 * q) {
        return 0.5;
    }
    if (x < 3 * q) {
        return 0.25;
    }
    return 0.125;
}

FrameSequence random_sequence(int T, int D, int label, Rng& rng) {
    FrameSequence s;
    s.label = label;
    for (int t = 0; t < T; ++t) {
        s.features.push_back(testing::random_vec(static_cast<std::size_t>(D), rng));
    }
    return s;
}

} // namespace

TEST_CASE("segment_sample examples") {
    Rng rng(1);
    SampleSet s = segment_sample(400, 200, 2, rng);
    REQUIRE(s.indices.size() == 4);
    CHECK(std::count_if(s.indices.begin(), s.indices.end(), [](int i) { return i <= 200; }) == 2);
    CHECK(std::count_if(s.indices.begin(), s.indices.end(), [](int i) { return i > 200; }) == 2);

    CHECK(segment_sample(1, 200, 2, rng).indices == std::vector<int>{1});

    s = segment_sample(300, 200, 2, rng);
    REQUIRE(s.indices.size() == 4);
    CHECK(s.indices[1] <= 200);
    CHECK(s.indices[2] >= 201);
    CHECK(s.indices[3] <= 300);
}

TEST_CASE("segment_sample property: sorted, distinct, in range, per-segment counts") {
    Rng rng(2);
    for (int trial = 0; trial < 500; ++trial) {
        const int T = 1 + static_cast<int>(rng() % 300);
        const int seg = 1 + static_cast<int>(rng() % 50);
        const int per = 1 + static_cast<int>(rng() % 4);
        const SampleSet s = segment_sample(T, seg, per, rng);
        CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
        CHECK(std::set<int>(s.indices.begin(), s.indices.end()).size() == s.indices.size());
        CHECK(s.indices.front() >= 1);
        CHECK(s.indices.back() <= T);
        const int segments = (T + seg - 1) / seg;
        for (int k = 0; k < segments; ++k) {
            const int lo = k * seg + 1, hi = std::min(T, (k + 1) * seg);
            const auto n = std::count_if(s.indices.begin(), s.indices.end(),
                                         [&](int i) { return i >= lo && i <= hi; });
            CHECK(n == std::min(per, hi - lo + 1));
        }
    }
}

TEST_CASE("early_weight table for T = 8") {
    const std::vector<double> want{1, 0.5, 0.5, 0.25, 0.25, 0.125, 0.125, 0.125};
    for (int t = 1; t <= 8; ++t) {
        CHECK(early_weight(t, 8) == want[static_cast<std::size_t>(t - 1)]);
    }
    CHECK(early_weight(1, 100) == 1.0);
    CHECK(early_weight(100, 100) == 0.125);
}

TEST_CASE("early_weight matches the real-valued piecewise rule and is non-increasing") {
    for (int T = 1; T <= 400; ++T) {
        double prev = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double w = early_weight(t, T);
            CHECK(w == oracle_weight(t, T));
            CHECK(w <= prev);
            prev = w;
        }
    }
    CHECK_THROWS_AS(early_weight(0, 8), InvalidInput);
    CHECK_THROWS_AS(early_weight(9, 8), InvalidInput);
}

TEST_CASE("weighted_max_pool worked example") {
    const std::vector<double> f{0.5, 2.0, 0.1, 1.0, 0.2, 4.0, 0.0, 1.0};
    std::vector<TimedFeature> frames;
    for (int t = 1; t <= 8; ++t) {
        frames.push_back({t, Vec{f[static_cast<std::size_t>(t - 1)]}});
    }
    PoolResult r = weighted_max_pool(frames, 8, true);
    CHECK(r.pooled[0] == 1.0);
    CHECK(r.argmax[0] == 2);
    r = weighted_max_pool(frames, 8, false);
    CHECK(r.pooled[0] == 4.0);
    CHECK(r.argmax[0] == 6);

    const std::vector<TimedFeature> one{{5, Vec{2.0, -1.0}}};
    r = weighted_max_pool(one, 8, true);
    CHECK(r.pooled == Vec{0.5, -0.25});
    CHECK_THROWS_AS(weighted_max_pool(std::vector<TimedFeature>{}, 8, true), InvalidInput);
}

TEST_CASE("weighted_max_pool agrees with brute force and ignores supply order") {
    Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        const int T = 1 + static_cast<int>(rng() % 40);
        const int D = 1 + static_cast<int>(rng() % 5);
        std::vector<TimedFeature> frames;
        for (int t = 1; t <= T; ++t) {
            if (rng() % 2 == 0 || t == T) {
                Vec v = testing::random_vec(static_cast<std::size_t>(D), rng);
                // Quantize so that ties actually happen.
                for (auto& x : v) {
                    x = std::round(x * 4.0) / 4.0;
                }
                frames.push_back({t, v});
            }
        }
        for (bool on : {true, false}) {
            const PoolResult r = weighted_max_pool(frames, T, on);
            auto shuffled = frames;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            const PoolResult s = weighted_max_pool(shuffled, T, on);
            CHECK(s.pooled == r.pooled);
            CHECK(s.argmax == r.argmax);
            for (int j = 0; j < D; ++j) {
                double best = -INFINITY;
                int best_t = 0;
                for (const auto& fr : frames) {
                    const double v = (on ? oracle_weight(fr.t, T) : 1.0) * fr.feature[static_cast<std::size_t>(j)];
                    if (v > best) {
                        best = v;
                        best_t = fr.t;
                    }
                }
                CHECK(r.pooled[static_cast<std::size_t>(j)] == best);
                CHECK(r.argmax[static_cast<std::size_t>(j)] == best_t);
            }
        }
    }
}

TEST_CASE("input gradient of a non-argmax frame is exactly zero") {
    Rng rng(4);
    const EncoderModel m = EncoderModel::random(4, 3, 2, 0.0, 5);
    const FrameSequence seq = random_sequence(12, 4, 1, rng);
    const SampleSet samples{{1, 4, 7, 10, 12}};
    const EncoderLoss l = subvideo_loss(m, seq, samples, true, nullptr);
    std::set<int> winners(l.pool.argmax.begin(), l.pool.argmax.end());
    int zero_frames = 0;
    for (std::size_t i = 0; i < samples.indices.size(); ++i) {
        if (!winners.count(samples.indices[i])) {
            ++zero_frames;
            for (double g : l.input_grads[i]) {
                CHECK(g == 0.0);
            }
        }
    }
    CHECK(zero_frames >= 1);
}

TEST_CASE("subvideo loss parameter gradients match finite differences without ties") {
    Rng rng(6);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
        EncoderModel m = EncoderModel::random(3, 4, 3, 0.0, 100 + trial);
        const FrameSequence seq = random_sequence(9, 3, trial % 3, rng);
        const SampleSet samples = segment_sample(9, 3, 2, rng);
        for (bool on : {true, false}) {
            const EncoderLoss l = subvideo_loss(m, seq, samples, on, nullptr);
            EncoderModel grad = l.grad;
            const GradCheckReport rep = gradient_check(
                [&] { return subvideo_loss(m, seq, samples, on, nullptr).loss; }, m.parameters(),
                grad.parameters());
            // Skip instances where a perturbation can flip an argmax.
            bool near_tie = false;
            for (std::size_t j = 0; j < l.pool.pooled.dim(); ++j) {
                for (std::size_t i = 0; i < samples.indices.size(); ++i) {
                    const int t = samples.indices[i];
                    if (t == l.pool.argmax[j]) {
                        continue;
                    }
                    const double w = on ? early_weight(t, 9) : 1.0;
                    const double v = w * m.encode(seq.features[static_cast<std::size_t>(t - 1)])[j];
                    near_tie |= std::abs(v - l.pool.pooled[j]) < 1e-4;
                }
            }
            if (!near_tie) {
                CHECK(rep.max_rel_error() < 1e-4);
                ++checked;
            }
        }
    }
    CHECK(checked >= 10);
}

TEST_CASE("extract_features: one vector per step, deterministic, bias image for zero weights") {
    Rng rng(7);
    const FrameSequence seq = random_sequence(6, 5, 0, rng);
    const EncoderModel m = EncoderModel::random(5, 4, 3, 0.5, 9);
    const auto a = extract_features(m, seq);
    CHECK(a.size() == 6);
    CHECK(a == extract_features(m, seq));

    EncoderModel z = EncoderModel::zeros(5, 4, 3);
    z.embed.bias = Vec{0.1, -0.2, 0.3, 0.0};
    const Vec image{std::tanh(0.1), std::tanh(-0.2), std::tanh(0.3), 0.0};
    for (const auto& f : extract_features(z, seq)) {
        CHECK(f == image);
    }
}

TEST_CASE("encode rejects wrong frame dimension") {
    const EncoderModel m = EncoderModel::random(5, 4, 3, 0.5, 9);
    CHECK_THROWS_AS(m.encode(Vec(4)), InvalidInput);
}

TEST_CASE("fine-tuning on a one-class dataset drives the loss below 0.01 within 200 steps") {
    Rng rng(8);
    std::vector<FrameSequence> data;
    for (int i = 0; i < 5; ++i) {
        data.push_back(random_sequence(30, 6, 0, rng));
    }
    for (FinetuneMode mode :
         {FinetuneMode::weighted_subvideo, FinetuneMode::unweighted_subvideo, FinetuneMode::single_frame}) {
        EncoderModel m = EncoderModel::random(6, 8, 1, 0.0, 3);
        OptimizerState opt;
        double loss = 1.0;
        for (int step = 0; step < 200; ++step) {
            loss = finetune_step(m, data[static_cast<std::size_t>(step) % data.size()], mode, {10, 2}, opt,
                                 {1e-3, 0.9, 0.0}, rng);
        }
        CHECK(loss < 0.01);
    }
}

TEST_CASE("a two-class head trained on a single label moves steadily toward it") {
    Rng rng(8);
    std::vector<FrameSequence> data;
    for (int i = 0; i < 5; ++i) {
        data.push_back(random_sequence(30, 6, 0, rng));
    }
    for (FinetuneMode mode :
         {FinetuneMode::weighted_subvideo, FinetuneMode::unweighted_subvideo, FinetuneMode::single_frame}) {
        EncoderModel m = EncoderModel::random(6, 8, 2, 0.0, 3);
        OptimizerState opt;
        double first = 0.0, last = 0.0;
        for (int step = 0; step < 200; ++step) {
            const double loss = finetune_step(m, data[static_cast<std::size_t>(step) % data.size()], mode,
                                              {10, 2}, opt, {1e-3, 0.9, 0.0}, rng);
            if (step < 5) first += loss;
            if (step >= 195) last += loss;
        }
        CHECK(last < 0.5 * first);
        CHECK(last / 5.0 < 0.2);
    }
}

TEST_CASE("dropout perturbs the training loss only when enabled") {
    Rng rng(9);
    const FrameSequence seq = random_sequence(10, 4, 1, rng);
    const SampleSet samples{{1, 3, 5, 8}};
    const EncoderModel m = EncoderModel::random(4, 6, 2, 0.5, 4);
    const double clean = subvideo_loss(m, seq, samples, true, nullptr).loss;
    Rng d1(1), d2(1);
    const double a = subvideo_loss(m, seq, samples, true, &d1).loss;
    const double b = subvideo_loss(m, seq, samples, true, &d2).loss;
    CHECK(a == b);
    CHECK(a != clean);
}

TEST_CASE("encoder checkpoint round-trips bit-exactly") {
    testing::TempDir dir("enc");
    const EncoderModel m = EncoderModel::random(7, 5, 4, 0.5, 77);
    save_encoder(m, dir / "e.json");
    const EncoderModel back = load_encoder(dir / "e.json");
    CHECK(back == m);
    save_encoder(back, dir / "f.json");
    CHECK(testing::slurp(dir / "e.json") == testing::slurp(dir / "f.json"));
}

TEST_CASE("mode names round-trip") {
    for (auto m : {FinetuneMode::none, FinetuneMode::single_frame, FinetuneMode::unweighted_subvideo,
                   FinetuneMode::weighted_subvideo}) {
        CHECK(finetune_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(finetune_mode_from_string("frozen"), InvalidInput);
}
