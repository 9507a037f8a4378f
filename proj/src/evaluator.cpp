#include "earlyrec/evaluator.hpp"

#include "earlyrec/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace earlyrec {

std::vector<int> default_checkpoints(int shortest, int count) {
    if (shortest < 1 || count < 1) {
        throw InvalidInput("default_checkpoints: shortest length and count must be >= 1");
    }
    std::vector<int> out;
    for (int i = 1; i <= count; ++i) {
        const int c = std::max(1, static_cast<int>(static_cast<long long>(i) * shortest / count));
        if (out.empty() || out.back() != c) {
            out.push_back(c);
        }
    }
    return out;
}

unsigned evaluation_threads() {
    if (const char* env = std::getenv("EARLYREC_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) {
            return static_cast<unsigned>(n);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::vector<double> ratio(const ConfusionMatrix& m, bool by_row) {
    const std::size_t n = m.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        int total = 0;
        for (std::size_t j = 0; j < n; ++j) {
            total += by_row ? m[k][j] : m[j][k];
        }
        out[k] = total > 0 ? static_cast<double>(m[k][k]) / total : 0.0;
    }
    return out;
}

} // namespace

EvalReport evaluate_traces(std::span<const std::vector<Vec>> probs, std::span<const int> labels,
                           int num_classes, const std::vector<int>& checkpoints) {
    if (probs.size() != labels.size()) {
        throw InvalidInput("evaluate: traces and labels differ in count");
    }
    if (probs.empty()) {
        throw InvalidInput("evaluate: empty test set");
    }
    std::size_t shortest = probs.front().size();
    for (const auto& p : probs) {
        shortest = std::min(shortest, p.size());
    }
    for (int c : checkpoints) {
        if (c < 1 || static_cast<std::size_t>(c) > shortest) {
            throw InvalidInput("evaluate: checkpoint " + std::to_string(c) +
                               " lies outside [1, " + std::to_string(shortest) +
                               "] (shortest test sequence)");
        }
    }
    const auto N = static_cast<std::size_t>(num_classes);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) {
            throw InvalidInput("evaluate: label " + std::to_string(y) + " out of range");
        }
    }

    EvalReport report;
    report.num_classes = num_classes;
    report.checkpoints = checkpoints;
    for (int c : checkpoints) {
        ConfusionMatrix m(N, std::vector<int>(N, 0));
        int correct = 0;
        for (std::size_t s = 0; s < probs.size(); ++s) {
            const auto pred = argmax(probs[s][static_cast<std::size_t>(c - 1)].view());
            const auto truth = static_cast<std::size_t>(labels[s]);
            ++m[truth][pred];
            correct += pred == truth ? 1 : 0;
        }
        report.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(probs.size()));
        report.recall.push_back(ratio(m, true));
        report.precision.push_back(ratio(m, false));
        report.confusion.push_back(std::move(m));
    }

    FullVideoAccuracy& fv = report.full_video;
    fv.per_class.assign(N, 0.0);
    fv.per_class_count.assign(N, 0);
    std::vector<int> hits(N, 0);
    int total_hits = 0;
    for (std::size_t s = 0; s < probs.size(); ++s) {
        const auto truth = static_cast<std::size_t>(labels[s]);
        const bool hit = argmax(probs[s].back().view()) == truth;
        ++fv.per_class_count[truth];
        hits[truth] += hit ? 1 : 0;
        total_hits += hit ? 1 : 0;
    }
    for (std::size_t k = 0; k < N; ++k) {
        fv.per_class[k] = fv.per_class_count[k] > 0
                              ? static_cast<double>(hits[k]) / fv.per_class_count[k]
                              : 0.0;
    }
    fv.overall = static_cast<double>(total_hits) / static_cast<double>(probs.size());
    return report;
}

std::vector<std::vector<Vec>> predict_traces(const RecurrentModel& model, const EncoderModel& encoder,
                                             std::span<const FrameSequence> sequences) {
    std::vector<std::vector<Vec>> out(sequences.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < sequences.size(); i = next++) {
            try {
                out[i] = forward_sequence(model, extract_features(encoder, sequences[i])).probs;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    const unsigned threads = std::min<unsigned>(evaluation_threads(),
                                                static_cast<unsigned>(std::max<std::size_t>(1, sequences.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

EvalReport evaluate(const RecurrentModel& model, const EncoderModel& encoder,
                    std::span<const FrameSequence> test, const std::vector<int>& checkpoints) {
    if (test.empty()) {
        throw InvalidInput("evaluate: empty test set");
    }
    std::size_t shortest = test.front().length();
    for (const auto& s : test) {
        shortest = std::min(shortest, s.length());
    }
    for (int c : checkpoints) {
        if (c < 1 || static_cast<std::size_t>(c) > shortest) {
            throw InvalidInput("evaluate: checkpoint " + std::to_string(c) +
                               " lies outside [1, " + std::to_string(shortest) +
                               "] (shortest test sequence)");
        }
    }
    const auto probs = predict_traces(model, encoder, test);
    std::vector<int> labels;
    for (const auto& s : test) {
        labels.push_back(s.label);
    }
    return evaluate_traces(probs, labels, model.num_classes(), checkpoints);
}

FullVideoAccuracy full_video_accuracy(const RecurrentModel& model, const EncoderModel& encoder,
                                      std::span<const FrameSequence> test) {
    return evaluate(model, encoder, test, {}).full_video;
}

namespace {
using ojson = nlohmann::ordered_json;
}

std::string report_to_json(const EvalReport& r) {
    ojson full{
        {"per_class_accuracy", r.full_video.per_class},
        {"per_class_count", r.full_video.per_class_count},
        {"overall", r.full_video.overall},
        {"aligned_to_elapsed_time", false},
    };
    ojson j{
        {"num_classes", r.num_classes},
        {"checkpoints", r.checkpoints},
        {"accuracy", r.accuracy},
        {"confusion", r.confusion},
        {"per_class", {{"recall", r.recall}, {"precision", r.precision}}},
        {"full_video", std::move(full)},
    };
    return j.dump(1);
}

EvalReport report_from_json(const std::string& text) {
    try {
        const ojson j = ojson::parse(text);
        EvalReport r;
        r.num_classes = j.at("num_classes").get<int>();
        r.checkpoints = j.at("checkpoints").get<std::vector<int>>();
        r.accuracy = j.at("accuracy").get<std::vector<double>>();
        r.confusion = j.at("confusion").get<std::vector<ConfusionMatrix>>();
        r.recall = j.at("per_class").at("recall").get<std::vector<std::vector<double>>>();
        r.precision = j.at("per_class").at("precision").get<std::vector<std::vector<double>>>();
        r.full_video.per_class = j.at("full_video").at("per_class_accuracy").get<std::vector<double>>();
        r.full_video.per_class_count = j.at("full_video").at("per_class_count").get<std::vector<int>>();
        r.full_video.overall = j.at("full_video").at("overall").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
}

void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
    {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) {
            throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
        }
        csv.precision(17);
        csv << "checkpoint,accuracy\n";
        for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
            csv << report.checkpoints[i] << ',' << report.accuracy[i] << '\n';
        }
        if (!csv) {
            throw std::runtime_error("write failed for " + csv_path.string());
        }
    }
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) {
        throw std::runtime_error("cannot open " + json_path.string() + " for writing");
    }
    js << report_to_json(report) << '\n';
    if (!js) {
        throw std::runtime_error("write failed for " + json_path.string());
    }
}

} // namespace earlyrec
