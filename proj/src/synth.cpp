#include "earlyrec/synth.hpp"

#include "earlyrec/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

namespace earlyrec {

using nlohmann::json;

namespace {

Vec gaussian_vec(std::size_t dim, double scale, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(dim);
    for (double& x : v) {
        x = scale * normal(rng);
    }
    return v;
}

void check_range(const std::pair<int, int>& r, const char* name) {
    if (r.first < 1 || r.first > r.second) {
        throw InvalidInput(std::string("GeneratorSpec: ") + name + " must satisfy 1 <= min <= max");
    }
}

} // namespace

void GeneratorSpec::validate() const {
    if (num_classes < 2) {
        throw InvalidInput("GeneratorSpec: num_classes must be >= 2");
    }
    if (feature_dim < 1) {
        throw InvalidInput("GeneratorSpec: feature_dim must be >= 1");
    }
    if (phases_per_class < 1) {
        throw InvalidInput("GeneratorSpec: phases_per_class must be >= 1");
    }
    check_range(shared_prefix_len_range, "shared_prefix_len_range");
    check_range(phase_len_range, "phase_len_range");
    if (!(class_centroid_scale > 0.0) || !std::isfinite(class_centroid_scale)) {
        throw InvalidInput("GeneratorSpec: class_centroid_scale must be > 0");
    }
    // noise_std = 0 is accepted for construction checks.
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
        throw InvalidInput("GeneratorSpec: noise_std must be >= 0");
    }
    if (!(irrelevant_frame_prob >= 0.0 && irrelevant_frame_prob < 1.0)) {
        throw InvalidInput("GeneratorSpec: irrelevant_frame_prob must lie in [0, 1)");
    }
    if (!durations.empty() && durations.size() != static_cast<std::size_t>(num_classes)) {
        throw InvalidInput("GeneratorSpec: durations needs one entry per class");
    }
    for (const auto& d : durations) {
        if (!(d.mean > 0.0) || !(d.std >= 0.0)) {
            throw InvalidInput("GeneratorSpec: durations need mean > 0 and std >= 0");
        }
    }
}

DurationDistribution GeneratorSpec::duration_for(int cls) const {
    if (!durations.empty()) {
        return durations.at(static_cast<std::size_t>(cls));
    }
    const double mean = 48.0 + 4.0 * cls;
    return {mean, 0.15 * mean};
}

CentroidSet make_centroids(const GeneratorSpec& spec) {
    spec.validate();
    const auto dim = static_cast<std::size_t>(spec.feature_dim);
    const double unit = spec.class_centroid_scale / std::sqrt(static_cast<double>(dim));
    Rng rng = make_rng(spec.seed, Stream::centroids);

    CentroidSet set;
    set.shared = gaussian_vec(dim, unit, rng);
    set.phases.resize(static_cast<std::size_t>(spec.num_classes));
    for (auto& per_class : set.phases) {
        for (int p = 0; p < spec.phases_per_class; ++p) {
            // Class offsets grow with the phase index: later phases are more discriminative.
            const double ramp = static_cast<double>(p + 1) / spec.phases_per_class;
            Vec offset = gaussian_vec(dim, unit * ramp, rng);
            Vec c = set.shared;
            for (std::size_t j = 0; j < dim; ++j) {
                c[j] += offset[j];
            }
            per_class.push_back(std::move(c));
        }
    }
    Vec dir = gaussian_vec(dim, 1.0, rng);
    const double norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
    set.irrelevant = set.shared;
    for (std::size_t j = 0; j < dim; ++j) {
        set.irrelevant[j] += 3.0 * spec.class_centroid_scale * dir[j] / norm;
    }
    return set;
}

AnnotatedSequence generate_annotated(const GeneratorSpec& spec, const CentroidSet& centroids,
                                     int cls, Rng& rng) {
    if (cls < 0 || cls >= spec.num_classes) {
        throw InvalidInput("generate_sequence: class " + std::to_string(cls) + " outside [0, " +
                           std::to_string(spec.num_classes) + ")");
    }
    const int phases = spec.phases_per_class;

    std::uniform_int_distribution<int> prefix_dist(spec.shared_prefix_len_range.first,
                                                   spec.shared_prefix_len_range.second);
    const int prefix_len = prefix_dist(rng);

    const DurationDistribution dur = spec.duration_for(cls);
    const double var_ratio = (dur.std * dur.std) / (dur.mean * dur.mean);
    const double sigma = std::sqrt(std::log1p(var_ratio));
    const double mu = std::log(dur.mean) - 0.5 * sigma * sigma;
    std::lognormal_distribution<double> length_dist(mu, sigma);
    const int T = std::max(static_cast<int>(std::lround(length_dist(rng))), prefix_len + phases);

    // Nominal phase lengths set the proportions; every phase gets at least one step.
    std::uniform_int_distribution<int> phase_dist(spec.phase_len_range.first,
                                                  spec.phase_len_range.second);
    std::vector<double> nominal(static_cast<std::size_t>(phases));
    for (double& n : nominal) {
        n = phase_dist(rng);
    }
    const double nominal_total = std::accumulate(nominal.begin(), nominal.end(), 0.0);
    const int spare = T - prefix_len - phases;
    std::vector<int> lengths(static_cast<std::size_t>(phases), 1);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int p = 0; p < phases; ++p) {
        const double share = spare * nominal[static_cast<std::size_t>(p)] / nominal_total;
        const int whole = static_cast<int>(std::floor(share));
        lengths[static_cast<std::size_t>(p)] += whole;
        assigned += whole;
        remainders.emplace_back(share - whole, p);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < spare - assigned; ++i) {
        ++lengths[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i)].second)];
    }

    AnnotatedSequence out;
    out.prefix_len = prefix_len;
    out.sequence.label = cls;
    out.sequence.features.reserve(static_cast<std::size_t>(T));
    out.phase.reserve(static_cast<std::size_t>(T));
    out.irrelevant.reserve(static_cast<std::size_t>(T));

    std::bernoulli_distribution irrelevant(spec.irrelevant_frame_prob);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto emit = [&](const Vec& centroid, int phase) {
        const bool junk = irrelevant(rng);
        const Vec& base = junk ? centroids.irrelevant : centroid;
        Vec frame(base.dim());
        for (std::size_t j = 0; j < base.dim(); ++j) {
            frame[j] = base[j] + spec.noise_std * normal(rng);
        }
        out.sequence.features.push_back(std::move(frame));
        out.phase.push_back(phase);
        out.irrelevant.push_back(junk);
    };
    for (int t = 0; t < prefix_len; ++t) {
        emit(centroids.shared, -1);
    }
    const auto& class_phases = centroids.phases[static_cast<std::size_t>(cls)];
    for (int p = 0; p < phases; ++p) {
        for (int t = 0; t < lengths[static_cast<std::size_t>(p)]; ++t) {
            emit(class_phases[static_cast<std::size_t>(p)], p);
        }
    }
    return out;
}

FrameSequence generate_sequence(const GeneratorSpec& spec, int cls, Rng& rng) {
    return generate_annotated(spec, make_centroids(spec), cls, rng).sequence;
}

std::string_view to_string(Split s) noexcept {
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "train";
}

Split split_from_string(std::string_view s) {
    if (s == "train") {
        return Split::train;
    }
    if (s == "val") {
        return Split::val;
    }
    if (s == "test") {
        return Split::test;
    }
    throw InvalidInput("unknown split '" + std::string(s) + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == s) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<FrameSequence> Dataset::subset(Split s) const {
    std::vector<FrameSequence> out;
    for (std::size_t i : indices(s)) {
        out.push_back(sequences[i]);
    }
    return out;
}

SplitCounts stratified_split_counts(int count) {
    if (count < 3) {
        throw InvalidInput("at least 3 sequences per class are needed for a 60/10/30 split, got " +
                           std::to_string(count));
    }
    SplitCounts s;
    s.val = std::max(1, static_cast<int>(std::lround(0.1 * count)));
    s.test = std::max(1, static_cast<int>(std::lround(0.3 * count)));
    s.train = count - s.val - s.test;
    return s;
}

std::vector<AnnotatedSequence> generate_annotated_set(const GeneratorSpec& spec,
                                                      const std::vector<int>& per_class_counts) {
    spec.validate();
    if (per_class_counts.size() != static_cast<std::size_t>(spec.num_classes)) {
        throw InvalidInput("per_class_counts needs " + std::to_string(spec.num_classes) +
                           " entries, got " + std::to_string(per_class_counts.size()));
    }
    for (int c : per_class_counts) {
        stratified_split_counts(c);
    }
    const CentroidSet centroids = make_centroids(spec);
    std::vector<AnnotatedSequence> out;
    std::uint64_t index = 0;
    for (int cls = 0; cls < spec.num_classes; ++cls) {
        for (int k = 0; k < per_class_counts[static_cast<std::size_t>(cls)]; ++k) {
            Rng rng = make_rng(spec.seed, Stream::sequence, index++);
            out.push_back(generate_annotated(spec, centroids, cls, rng));
        }
    }
    return out;
}

Dataset generate_dataset(const GeneratorSpec& spec, const std::vector<int>& per_class_counts) {
    auto annotated = generate_annotated_set(spec, per_class_counts);
    Dataset d;
    d.spec = spec;
    d.sequences.reserve(annotated.size());
    for (auto& a : annotated) {
        d.sequences.push_back(std::move(a.sequence));
    }
    d.splits.resize(d.sequences.size());

    Rng rng = make_rng(spec.seed, Stream::split);
    std::size_t begin = 0;
    for (int count : per_class_counts) {
        const SplitCounts sc = stratified_split_counts(count);
        std::vector<std::size_t> order(static_cast<std::size_t>(count));
        std::iota(order.begin(), order.end(), begin);
        std::shuffle(order.begin(), order.end(), rng);
        for (int k = 0; k < count; ++k) {
            const Split s = k < sc.train ? Split::train
                            : k < sc.train + sc.val ? Split::val
                                                    : Split::test;
            d.splits[order[static_cast<std::size_t>(k)]] = s;
        }
        begin += static_cast<std::size_t>(count);
    }
    return d;
}

namespace {

json spec_to_json(const GeneratorSpec& s) {
    json durations = json::array();
    for (const auto& d : s.durations) {
        durations.push_back({{"mean", d.mean}, {"std", d.std}});
    }
    return json{
        {"num_classes", s.num_classes},
        {"feature_dim", s.feature_dim},
        {"phases_per_class", s.phases_per_class},
        {"shared_prefix_len_range", {s.shared_prefix_len_range.first, s.shared_prefix_len_range.second}},
        {"phase_len_range", {s.phase_len_range.first, s.phase_len_range.second}},
        {"class_centroid_scale", s.class_centroid_scale},
        {"noise_std", s.noise_std},
        {"irrelevant_frame_prob", s.irrelevant_frame_prob},
        {"durations", durations},
        {"seed", s.seed},
    };
}

GeneratorSpec spec_from_json(const json& j) {
    GeneratorSpec s;
    s.num_classes = j.at("num_classes").get<int>();
    s.feature_dim = j.at("feature_dim").get<int>();
    s.phases_per_class = j.at("phases_per_class").get<int>();
    s.shared_prefix_len_range = {j.at("shared_prefix_len_range").at(0).get<int>(),
                                 j.at("shared_prefix_len_range").at(1).get<int>()};
    s.phase_len_range = {j.at("phase_len_range").at(0).get<int>(),
                         j.at("phase_len_range").at(1).get<int>()};
    s.class_centroid_scale = j.at("class_centroid_scale").get<double>();
    s.noise_std = j.at("noise_std").get<double>();
    s.irrelevant_frame_prob = j.at("irrelevant_frame_prob").get<double>();
    for (const auto& d : j.at("durations")) {
        s.durations.push_back({d.at("mean").get<double>(), d.at("std").get<double>()});
    }
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

constexpr int kDatasetVersion = 1;

} // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    const json header{
        {"version", kDatasetVersion},
        {"num_classes", d.num_classes()},
        {"feature_dim", d.feature_dim()},
        {"num_sequences", d.sequences.size()},
        {"spec", spec_to_json(d.spec)},
    };
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < d.sequences.size(); ++i) {
        const auto& seq = d.sequences[i];
        json features = json::array();
        for (const auto& f : seq.features) {
            features.push_back(f.values());
        }
        const json record{
            {"label", seq.label},
            {"split", to_string(d.splits[i])},
            {"features", std::move(features)},
        };
        out << record.dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open dataset file " + path.string());
    }
    const std::string where = path.string();
    std::string line;
    std::size_t line_no = 0;

    auto parse_line = [&](const std::string& text) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(where + ":" + std::to_string(line_no) + ": " + e.what());
        }
    };

    if (!std::getline(in, line)) {
        throw ParseError(where + ": empty file, missing header");
    }
    ++line_no;
    const json header = parse_line(line);

    Dataset d;
    std::size_t expected = 0;
    try {
        if (header.at("version").get<int>() != kDatasetVersion) {
            throw FormatError(where + ": unsupported dataset version");
        }
        d.spec = spec_from_json(header.at("spec"));
        expected = header.at("num_sequences").get<std::size_t>();
        if (header.at("num_classes").get<int>() != d.spec.num_classes ||
            header.at("feature_dim").get<int>() != d.spec.feature_dim) {
            throw FormatError(where + ": header dimensions disagree with spec echo");
        }
    } catch (const json::exception& e) {
        throw ParseError(where + ":1: malformed header: " + e.what());
    }
    const auto dim = static_cast<std::size_t>(d.spec.feature_dim);

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const std::size_t record = d.sequences.size();
        const json j = parse_line(line);
        FrameSequence seq;
        Split split{};
        try {
            seq.label = j.at("label").get<int>();
            split = split_from_string(j.at("split").get<std::string>());
            for (const auto& frame : j.at("features")) {
                auto values = frame.get<std::vector<double>>();
                if (values.size() != dim) {
                    throw FormatError(where + ": record " + std::to_string(record) +
                                      " has a feature of dim " + std::to_string(values.size()) +
                                      ", header says " + std::to_string(dim));
                }
                if (!all_finite(values)) {
                    throw FormatError(where + ": record " + std::to_string(record) +
                                      " has non-finite features");
                }
                seq.features.emplace_back(std::move(values));
            }
        } catch (const json::exception& e) {
            throw ParseError(where + ":" + std::to_string(line_no) + ": record " +
                             std::to_string(record) + ": " + e.what());
        } catch (const InvalidInput& e) {
            throw ParseError(where + ":" + std::to_string(line_no) + ": record " +
                             std::to_string(record) + ": " + e.what());
        }
        if (seq.features.empty()) {
            throw FormatError(where + ": record " + std::to_string(record) + " is empty");
        }
        if (seq.label < 0 || seq.label >= d.spec.num_classes) {
            throw FormatError(where + ": record " + std::to_string(record) + " label " +
                              std::to_string(seq.label) + " out of range");
        }
        d.sequences.push_back(std::move(seq));
        d.splits.push_back(split);
    }
    if (d.sequences.size() != expected) {
        throw ParseError(where + ": truncated, header announces " + std::to_string(expected) +
                         " records, found " + std::to_string(d.sequences.size()));
    }
    return d;
}

} // namespace earlyrec
