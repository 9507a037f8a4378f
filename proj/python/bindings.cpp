#include "earlyrec/encoder.hpp"
#include "earlyrec/error.hpp"
#include "earlyrec/evaluator.hpp"
#include "earlyrec/losses.hpp"
#include "earlyrec/pipeline.hpp"
#include "earlyrec/synth.hpp"
#include "earlyrec/tensor.hpp"
#include "earlyrec/trainer.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace earlyrec;

namespace {

std::vector<Vec> to_vecs(const std::vector<std::vector<double>>& rows) {
    std::vector<Vec> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.emplace_back(r);
    }
    return out;
}

std::vector<std::vector<double>> from_vecs(const std::vector<Vec>& vs) {
    std::vector<std::vector<double>> out;
    out.reserve(vs.size());
    for (const auto& v : vs) {
        out.push_back(v.values());
    }
    return out;
}

py::dict loss_dict(const ClassificationLoss& l) {
    py::dict d;
    d["value"] = l.value;
    d["logit_grads"] = from_vecs(l.logit_grads);
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Early recognition training toolkit";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);

    m.def("softmax", [](const std::vector<double>& z) { return softmax(Vec(z)).values(); });
    m.def("early_weight", &early_weight, py::arg("t"), py::arg("T"));
    m.def(
        "weighted_max_pool",
        [](const std::vector<std::pair<int, std::vector<double>>>& frames, int T, bool weights_on) {
            std::vector<TimedFeature> tf;
            for (const auto& [t, f] : frames) {
                tf.push_back({t, Vec(f)});
            }
            const PoolResult r = weighted_max_pool(tf, T, weights_on);
            return py::make_tuple(r.pooled.values(), r.argmax);
        },
        py::arg("frames"), py::arg("T"), py::arg("weights_on") = true,
        "frames: list of (t, feature). Returns (pooled, argmax_t).");

    m.def(
        "average_ce",
        [](const std::vector<std::vector<double>>& probs, int label, int range_end) {
            const auto p = to_vecs(probs);
            return loss_dict(average_ce(p, label, range_end));
        },
        py::arg("probs"), py::arg("label"), py::arg("range_end"));
    m.def(
        "linear_weighted_ce",
        [](const std::vector<std::vector<double>>& probs, int label, int range_end, int full_length) {
            const auto p = to_vecs(probs);
            return loss_dict(linear_weighted_ce(p, label, range_end, full_length));
        },
        py::arg("probs"), py::arg("label"), py::arg("range_end"), py::arg("full_length"));
    m.def("false_positive_coefficient", &false_positive_coefficient, py::arg("t"), py::arg("T"));
    m.def("smooth_l1", &smooth_l1);
    m.def(
        "fsp_total",
        [](const std::vector<std::vector<double>>& probs, int label, const std::string& classification,
           const std::string& future, double lambda, const std::vector<std::vector<double>>& predictions,
           const std::vector<std::vector<double>>& targets, int range_end) {
            LossSelection sel{classification_kind_from_string(classification),
                              future_loss_kind_from_string(future), lambda};
            const auto p = to_vecs(probs);
            const auto cls = classification_loss(sel.classification, p, label, range_end,
                                                 static_cast<int>(p.size()));
            const auto pred = to_vecs(predictions);
            const auto tgt = to_vecs(targets);
            const FspLoss l = fsp_total(sel, cls, pred, tgt, range_end);
            py::dict d;
            d["total"] = l.total;
            d["classification"] = l.classification;
            d["future_mean"] = l.future_mean;
            return d;
        },
        py::arg("probs"), py::arg("label"), py::arg("classification"), py::arg("future"), py::arg("lam"),
        py::arg("predictions"), py::arg("targets"), py::arg("range_end"));

    m.def("truncation_point",
          [](int T, const std::string& delta) {
              const Truncation tr = truncation_point(delta_from_string(delta), T);
              return py::make_tuple(tr.train_steps, tr.horizon, tr.skipped());
          },
          py::arg("T"), py::arg("delta"), "Returns (train_steps, horizon, skipped).");

    m.def("default_checkpoints", &default_checkpoints, py::arg("shortest"), py::arg("count") = 7);
    m.def(
        "evaluate_traces",
        [](const std::vector<std::vector<std::vector<double>>>& traces, const std::vector<int>& labels,
           int num_classes, const std::vector<int>& checkpoints) {
            std::vector<std::vector<Vec>> probs;
            for (const auto& t : traces) {
                probs.push_back(to_vecs(t));
            }
            return report_to_json(evaluate_traces(probs, labels, num_classes, checkpoints));
        },
        py::arg("traces"), py::arg("labels"), py::arg("num_classes"), py::arg("checkpoints"),
        "Returns the report as a JSON string.");

    m.def(
        "generate_dataset",
        [](const std::filesystem::path& path, std::uint64_t seed, int per_class) {
            GeneratorSpec spec;
            spec.seed = seed;
            const Dataset d = generate_dataset(spec, std::vector<int>(spec.num_classes, per_class));
            save_dataset(d, path);
            return d.sequences.size();
        },
        py::arg("path"), py::arg("seed") = 42, py::arg("per_class") = 10,
        "Generates a dataset with the default generator and writes it to `path`.");
    m.def(
        "load_dataset",
        [](const std::filesystem::path& path) {
            const Dataset d = load_dataset(path);
            py::list out;
            for (std::size_t i = 0; i < d.sequences.size(); ++i) {
                py::dict rec;
                rec["label"] = d.sequences[i].label;
                rec["split"] = std::string(to_string(d.splits[i]));
                rec["features"] = from_vecs(d.sequences[i].features);
                out.append(rec);
            }
            return out;
        },
        py::arg("path"));

    m.def(
        "gradient_suite",
        [](int instances, std::uint64_t seed) {
            const GradientSuiteResult r = run_gradient_suite(instances, seed);
            py::dict d;
            for (const auto& [name, err] : r.components) {
                d[py::str(name)] = err;
            }
            return d;
        },
        py::arg("instances") = 20, py::arg("seed") = 42, "Max relative error per component.");

    m.def("subcommands", &subcommands);
    m.def(
        "run",
        [](const std::string& subcommand, const std::string& config_json, const std::vector<std::string>& overrides) {
            const RunConfig cfg = parse_run_config(nlohmann::json::parse(config_json), overrides);
            py::gil_scoped_release release;
            return run_subcommand(subcommand, cfg);
        },
        py::arg("subcommand"), py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{},
        "Runs one pipeline stage from a JSON config string; returns the exit code.");
}
