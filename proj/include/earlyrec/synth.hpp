#pragma once

#include "earlyrec/rng.hpp"
#include "earlyrec/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace earlyrec {

/// Log-normal duration in steps, parameterized by its own mean and standard deviation.
struct DurationDistribution {
    double mean = 60.0;
    double std = 9.0;

    bool operator==(const DurationDistribution&) const = default;
};

/// Parameters of the synthetic procedure generator.
///
/// Every sequence opens with a shared phase whose emission centroid is identical
/// across classes, followed by `phases_per_class` class-specific phases. Each frame
/// is its centroid plus isotropic Gaussian noise; with `irrelevant_frame_prob` a
/// frame is emitted from one class-independent "irrelevant" centroid instead.
struct GeneratorSpec {
    int num_classes = 9;
    int feature_dim = 32;
    int phases_per_class = 3;
    std::pair<int, int> shared_prefix_len_range{10, 14};
    std::pair<int, int> phase_len_range{8, 16};
    double class_centroid_scale = 1.0;
    double noise_std = 0.05;
    double irrelevant_frame_prob = 0.02;
    /// One entry per class. Empty selects the built-in ramp (see duration_for).
    std::vector<DurationDistribution> durations;
    std::uint64_t seed = 42;

    /// Throws InvalidInput when any invariant is violated.
    void validate() const;

    /// Duration distribution of class `cls`. Built-in ramp: mean 48 + 4*cls, std 0.15*mean.
    DurationDistribution duration_for(int cls) const;

    bool operator==(const GeneratorSpec&) const = default;
};

/// Emission centroids implied by a GeneratorSpec.
struct CentroidSet {
    Vec shared;
    std::vector<std::vector<Vec>> phases; // [class][phase]
    Vec irrelevant;
};

/// Deterministic in (spec.seed, dims); independent of sequence draws.
CentroidSet make_centroids(const GeneratorSpec& spec);

struct FrameSequence {
    int label = 0;
    std::vector<Vec> features;

    std::size_t length() const noexcept { return features.size(); }
    bool operator==(const FrameSequence&) const = default;
};

/// A generated sequence plus its ground-truth phase layout.
struct AnnotatedSequence {
    FrameSequence sequence;
    int prefix_len = 0;
    /// Per step: -1 inside the shared prefix, else the class phase index.
    std::vector<int> phase;
    std::vector<bool> irrelevant;
};

AnnotatedSequence generate_annotated(const GeneratorSpec& spec, const CentroidSet& centroids,
                                     int cls, Rng& rng);

/// Throws InvalidInput when `cls` is outside [0, num_classes).
FrameSequence generate_sequence(const GeneratorSpec& spec, int cls, Rng& rng);

enum class Split { train, val, test };

std::string_view to_string(Split s) noexcept;
Split split_from_string(std::string_view s);

struct Dataset {
    GeneratorSpec spec;
    std::vector<FrameSequence> sequences;
    std::vector<Split> splits;

    int num_classes() const noexcept { return spec.num_classes; }
    int feature_dim() const noexcept { return spec.feature_dim; }

    /// Copies of the sequences assigned to `s`, in dataset order.
    std::vector<FrameSequence> subset(Split s) const;
    std::vector<std::size_t> indices(Split s) const;

    bool operator==(const Dataset&) const = default;
};

/// Per-class split sizes (train, val, test) for `count` sequences at 60/10/30.
struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};
SplitCounts stratified_split_counts(int count);

/// Sequence i (class-major order) draws from sub-stream (seed, i).
/// Throws InvalidInput if counts.size() != num_classes or any count < 3.
Dataset generate_dataset(const GeneratorSpec& spec, const std::vector<int>& per_class_counts);

/// Same as generate_dataset but also returns the phase annotations.
std::vector<AnnotatedSequence> generate_annotated_set(const GeneratorSpec& spec,
                                                      const std::vector<int>& per_class_counts);

/// Newline-delimited JSON: a header record then one record per sequence.
void save_dataset(const Dataset& d, const std::filesystem::path& path);

/// Throws ParseError (naming the line) or FormatError (naming the record index).
/// Never returns a partially read dataset.
Dataset load_dataset(const std::filesystem::path& path);

} // namespace earlyrec
