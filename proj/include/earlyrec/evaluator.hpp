#pragma once

#include "earlyrec/encoder.hpp"
#include "earlyrec/recurrent.hpp"
#include "earlyrec/synth.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace earlyrec {

/// Rows are ground truth, columns predictions.
using ConfusionMatrix = std::vector<std::vector<int>>;

/// Accuracy at each sequence's own last step. Not aligned to a common elapsed time.
struct FullVideoAccuracy {
    std::vector<double> per_class; // recall per class
    std::vector<int> per_class_count;
    double overall = 0.0;

    bool operator==(const FullVideoAccuracy&) const = default;
};

struct EvalReport {
    int num_classes = 0;
    std::vector<int> checkpoints;
    std::vector<double> accuracy;
    std::vector<ConfusionMatrix> confusion;
    /// [checkpoint][class]: diagonal / row sum.
    std::vector<std::vector<double>> recall;
    /// [checkpoint][class]: diagonal / column sum (0 when the class is never predicted).
    std::vector<std::vector<double>> precision;
    FullVideoAccuracy full_video;

    bool operator==(const EvalReport&) const = default;
};

/// `count` evenly spaced checkpoints floor(i * shortest / count), i = 1..count, deduplicated.
std::vector<int> default_checkpoints(int shortest, int count = 7);

/// Report from precomputed class-probability traces. Prediction at checkpoint c is
/// argmax of probs[c - 1] (ties to the lowest class). Throws InvalidInput, naming the
/// checkpoint, if any checkpoint exceeds the shortest trace.
EvalReport evaluate_traces(std::span<const std::vector<Vec>> probs, std::span<const int> labels,
                           int num_classes, const std::vector<int>& checkpoints);

/// Forward passes run in parallel, capped by EARLYREC_THREADS. The future head is ignored.
EvalReport evaluate(const RecurrentModel& model, const EncoderModel& encoder,
                    std::span<const FrameSequence> test, const std::vector<int>& checkpoints);

FullVideoAccuracy full_video_accuracy(const RecurrentModel& model, const EncoderModel& encoder,
                                      std::span<const FrameSequence> test);

/// Class-probability traces for every sequence (same parallelism as evaluate).
std::vector<std::vector<Vec>> predict_traces(const RecurrentModel& model, const EncoderModel& encoder,
                                             std::span<const FrameSequence> sequences);

/// Worker count from EARLYREC_THREADS (>= 1), else hardware concurrency.
unsigned evaluation_threads();

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// accuracy_curve.csv ("checkpoint,accuracy") and report.json.
void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

} // namespace earlyrec
