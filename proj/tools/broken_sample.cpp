// broken-sample: command-line front end for the detection toolkit.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "broken_sample/broken_sample.hpp"

namespace bs = broken_sample;
using bs::json;

namespace {

struct Options {
    std::string model = "gaussian";
    std::size_t d = 1;
    double rho = 0.9;
    double q = 0.5;
    std::string joint;
    std::size_t n = 1000;
    std::size_t m = 0;
    double alpha = 0.0;
    std::vector<std::string> detectors;
    std::size_t r = 10;
    std::size_t w = 100;
    int p = 1;
    std::size_t replicates = 1000;
    std::size_t draws = 100000;
    double type1 = 0.05;
    std::uint64_t seed = 1;
    std::string out;
    std::string source;
    std::string config;
    std::size_t workers = 0;
    std::string hypothesis = "H1";
    std::string data;
    std::string record;
};

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
    } else {
        bs::write_file(path, text);
    }
}

bs::Hypothesis parse_hypothesis(const std::string& h) {
    if (h == "H0" || h == "h0") return bs::Hypothesis::H0;
    if (h == "H1" || h == "h1") return bs::Hypothesis::H1;
    throw bs::InvalidInput("--hypothesis must be H0 or H1");
}

json model_json(const Options& o) {
    json j;
    j["kind"] = o.model;
    if (o.model == "discrete") {
        if (o.joint.empty()) throw bs::InvalidInput("--joint is required for the discrete model");
        try {
            j["joint"] = json::parse(o.joint);
        } catch (const json::parse_error&) {
            throw bs::InvalidInput("--joint: not a JSON array of rows");
        }
    } else {
        j["d"] = o.d;
        j["rho"] = o.rho;
        if (o.model == "bernoulli") j["q"] = o.q;
    }
    return j;
}

std::size_t sample_m(const Options& o) {
    if (o.alpha > 0.0) return static_cast<std::size_t>(std::llround(o.alpha * static_cast<double>(o.n)));
    return o.m == 0 ? o.n : o.m;
}

std::vector<bs::DetectorSpec> detector_specs(const Options& o, std::vector<std::string> fallback) {
    const auto& names = o.detectors.empty() ? fallback : o.detectors;
    std::vector<bs::DetectorSpec> out;
    for (const auto& name : names) out.push_back(bs::DetectorSpec::parse(name, o.r, o.w, o.p));
    return out;
}

/// Config file contents with explicitly given flags layered on top.
bs::ExperimentConfig experiment_config(const Options& o, const CLI::App& app) {
    json j = o.config.empty() ? json::object() : json::parse(bs::read_file(o.config));
    auto given = [&](const char* flag) { return app.count(flag) > 0; };
    if (given("--model") || given("--rho") || given("--d") || given("--q") || given("--joint") || !j.contains("model")) {
        json mj = j.contains("model") ? j["model"] : json::object();
        const json flags = model_json(o);
        if (given("--model") || !mj.contains("kind")) mj = flags;
        else
            for (const char* key : {"d", "rho", "q"})
                if (given((std::string("--") + key).c_str()) && flags.contains(key)) mj[key] = flags[key];
        j["model"] = mj;
    }
    if (given("--n")) j["n"] = o.n;
    if (given("--m")) {
        j["m"] = o.m;
        j.erase("alpha");
    }
    if (given("--alpha")) {
        j["alpha"] = o.alpha;
        j.erase("m");
    }
    if (given("--detector") || !j.contains("detectors")) {
        json dets = json::array();
        for (const auto& s : detector_specs(o, {})) dets.push_back({{"kind", s.kind}, {"r", s.r}, {"w", s.w}, {"p", s.p}});
        if (!dets.empty()) j["detectors"] = dets;
    }
    if (given("--replicates")) j["replicates"] = o.replicates;
    if (given("--draws")) j["limit_draws"] = o.draws;
    if (given("--type1")) j["type1"] = o.type1;
    if (given("--seed")) j["seed"] = o.seed;
    if (given("--source")) j["source"] = o.source;
    if (given("--workers")) j["workers"] = o.workers;
    if (given("--out")) j["out"] = o.out;
    return bs::config_from_json(j);
}

int run_sample(const Options& o) {
    const bs::JointModel model = bs::model_from_json(model_json(o));
    const bs::Dataset ds = bs::sample_dataset(model, o.n, sample_m(o), parse_hypothesis(o.hypothesis), o.seed);
    if (o.out.empty()) throw bs::InvalidInput("--out is required for sample");
    bs::write_dataset(o.out, ds, model);
    return 0;
}

int run_detect(const Options& o) {
    std::optional<bs::LoadedDataset> loaded;
    std::string path = o.data;
    if (!o.data.empty()) {
        loaded = bs::read_dataset(o.data);
    } else {
        const bs::JointModel model = bs::model_from_json(model_json(o));
        loaded = bs::LoadedDataset{bs::sample_dataset(model, o.n, sample_m(o), parse_hypothesis(o.hypothesis), o.seed), model, {}};
    }
    const bs::Dataset& ds = loaded->dataset;
    const double alpha = static_cast<double>(ds.m()) / static_cast<double>(ds.n());
    std::string lines;
    for (const auto& spec : detector_specs(o, {"top", "inner", "eigen", "hist"})) {
        std::optional<bs::ThresholdOverride> threshold;
        if (o.source == "limit_law" && spec.kind != "trivial" && spec.kind != "wasserstein") {
            const auto law = bs::detector_limit_law(spec, loaded->model, alpha, bs::Hypothesis::H0, o.draws, o.seed, 1e-14, o.workers);
            threshold = bs::ThresholdOverride{bs::calibrate_threshold(law, o.type1), "calibrated"};
        } else if (!o.source.empty() && o.source != "limit_law") {
            throw bs::InvalidInput("detect: --source must be limit_law or omitted");
        }
        const bs::DetectorReport rep = bs::DetectorRunner(spec, loaded->model).report(ds, threshold, o.type1);
        lines += bs::detect_record(spec, path, rep, threshold, o.type1).dump() + "\n";
    }
    emit(o.out, lines);
    return 0;
}

int run_curves(const Options& o, const CLI::App& app, bool roc) {
    const bs::ExperimentConfig c = experiment_config(o, app);
    const auto points = roc ? bs::run_roc(c) : bs::run_power_sweep(c);
    emit(c.out, bs::curves_csv(points));
    return 0;
}

int run_second_moment(const Options& o) {
    const bs::JointModel model = bs::model_from_json(model_json(o));
    emit(o.out, bs::second_moment_report(model, o.n, sample_m(o)).dump() + "\n");
    return 0;
}

int run_limit_law(const Options& o) {
    const bs::JointModel model = bs::model_from_json(model_json(o));
    const auto specs = detector_specs(o, {"lr"});
    if (specs.size() != 1) throw bs::InvalidInput("limit-law takes exactly one --detector");
    if (o.out.empty()) throw bs::InvalidInput("--out is required for limit-law");
    const double alpha = o.alpha > 0.0 ? o.alpha : static_cast<double>(sample_m(o)) / static_cast<double>(o.n);
    const auto law = bs::detector_limit_law(specs[0], model, alpha, parse_hypothesis(o.hypothesis), o.draws, o.seed, 1e-14, o.workers);
    bs::write_limit_law(o.out, law);
    return 0;
}

int run_replay(const Options& o) {
    if (o.record.empty()) throw bs::InvalidInput("--record is required for replay");
    std::istringstream in(bs::read_file(o.record));
    std::string line, lines;
    bool all_identical = true;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            throw bs::ParseError(o.record, row, "not a JSON record");
        }
        const bs::ReplayResult r = bs::replay(rec, o.data);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        json outj = bs::report_to_json(r.report);
        outj["identical"] = r.identical;
        lines += outj.dump() + "\n";
        all_identical = all_identical && r.identical;
    }
    emit(o.out, lines);
    return all_identical ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Detection of correlation between unlinked samples"};
    app.require_subcommand(1);
    Options o;

    auto model_flags = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "gaussian, bernoulli or discrete")->check(CLI::IsMember({"gaussian", "bernoulli", "discrete"}));
        sub->add_option("--d", o.d, "dimension");
        sub->add_option("--rho", o.rho, "correlation");
        sub->add_option("--q", o.q, "Bernoulli success probability");
        sub->add_option("--joint", o.joint, "discrete joint pmf as a JSON array of rows");
        sub->add_option("--n", o.n, "size of the X sample");
        sub->add_option("--m", o.m, "size of the Y sample (default n)");
        sub->add_option("--alpha", o.alpha, "m / n, instead of --m");
        sub->add_option("--seed", o.seed, "base seed");
        sub->add_option("--out", o.out, "output path (default stdout)");
        sub->add_option("--workers", o.workers, "worker threads (0 = all cores)");
    };
    auto detector_flags = [&](CLI::App* sub) {
        sub->add_option("--detector", o.detectors, "detector, e.g. eigen or eigen:r=5 (repeatable)");
        sub->add_option("--r", o.r, "default rank for inner and eigen");
        sub->add_option("--w", o.w, "default cells per axis for hist");
        sub->add_option("--p", o.p, "default order for wasserstein");
        sub->add_option("--type1", o.type1, "type-I error level");
        sub->add_option("--draws", o.draws, "limit-law draws");
    };

    CLI::App* sample = app.add_subcommand("sample", "draw a dataset and write CSV plus sidecar");
    model_flags(sample);
    sample->add_option("--hypothesis", o.hypothesis, "H0 or H1");

    CLI::App* detect = app.add_subcommand("detect", "run detectors on one dataset, one JSON line each");
    model_flags(detect);
    detector_flags(detect);
    detect->add_option("--hypothesis", o.hypothesis, "H0 or H1 when generating");
    detect->add_option("--data", o.data, "dataset CSV written by sample");
    detect->add_option("--source", o.source, "limit_law: calibrate thresholds on the null limit law");

    CLI::App* roc = app.add_subcommand("roc", "ROC curves as CSV");
    CLI::App* power = app.add_subcommand("power", "power curves over a rho grid as CSV");
    for (CLI::App* sub : {roc, power}) {
        model_flags(sub);
        detector_flags(sub);
        sub->add_option("--replicates", o.replicates, "finite-n datasets per hypothesis");
        sub->add_option("--source", o.source, "finite_n or limit_law")->check(CLI::IsMember({"finite_n", "limit_law"}));
        sub->add_option("--config", o.config, "JSON experiment config");
    }

    CLI::App* moment = app.add_subcommand("second-moment", "exact E_0 L^2 with its bound and limit as JSON");
    model_flags(moment);

    CLI::App* limit = app.add_subcommand("limit-law", "write limit-law draws as float64 binary");
    model_flags(limit);
    detector_flags(limit);
    limit->add_option("--hypothesis", o.hypothesis, "H0 or H1");

    CLI::App* rep = app.add_subcommand("replay", "recompute detect records");
    rep->add_option("--record", o.record, "JSON lines written by detect")->required();
    rep->add_option("--data", o.data, "dataset CSV (default: the recorded path)");
    rep->add_option("--out", o.out, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sample) return run_sample(o);
        if (*detect) return run_detect(o);
        if (*roc) return run_curves(o, *roc, true);
        if (*power) return run_curves(o, *power, false);
        if (*moment) return run_second_moment(o);
        if (*limit) return run_limit_law(o);
        if (*rep) return run_replay(o);
    } catch (const bs::NumericalDegeneracy& e) {
        std::cerr << "numerical degeneracy: " << e.what() << "\n";
        return 3;
    } catch (const bs::InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
