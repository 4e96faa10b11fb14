#pragma once

// Experiment orchestration: ROC and power sweeps over detectors, the
// second-moment report, curve CSV output, and report replay.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "broken_sample/asymptotics.hpp"
#include "broken_sample/detectors.hpp"
#include "broken_sample/histogram.hpp"
#include "broken_sample/io.hpp"
#include "broken_sample/models.hpp"
#include "broken_sample/parallel.hpp"
#include "broken_sample/second_moment.hpp"

namespace broken_sample {

inline constexpr const char* kCurveSchema = "bsp-curves/1";

/// Model family plus parameters; rho can be swept for gaussian and bernoulli.
struct ModelSpec {
    std::string kind = "gaussian";
    std::size_t d = 1;
    double q = 0.5;
    double rho = 0.9;
    JointTable joint;

    JointModel make() const { return with_rho(rho); }

    JointModel with_rho(double r) const {
        if (kind == "gaussian") return JointModel::gaussian(d, r);
        if (kind == "bernoulli") return JointModel::bernoulli(d, q, r);
        if (kind == "discrete") return JointModel::discrete(joint);
        throw InvalidInput("unknown model '" + kind + "'");
    }
};

struct ExperimentConfig {
    ModelSpec model;
    std::size_t n = 1000;
    std::size_t m = 1000;
    std::vector<DetectorSpec> detectors;
    std::vector<double> rho_grid;
    std::vector<double> fpr_grid;
    std::size_t replicates = 1000;      // finite-n datasets per hypothesis
    std::size_t limit_draws = 100000;   // draws per limit law
    double type1 = 0.05;
    std::uint64_t seed = 1;
    std::string source = "limit_law";   // limit_law or finite_n
    double tail_tol = 1e-14;
    std::size_t workers = 0;
    std::string out;

    double alpha() const { return static_cast<double>(m) / static_cast<double>(n); }
};

inline std::vector<double> default_rho_grid() {
    std::vector<double> g(25);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.2 + (0.99 - 0.2) * static_cast<double>(i) / 24.0;
    return g;
}

inline std::vector<double> default_fpr_grid() {
    std::vector<double> g{0.005, 0.01, 0.02};
    for (int k = 1; k <= 19; ++k) g.push_back(0.05 * k);
    return g;
}

/// Detectors of the paper's power figure for a d-dimensional model.
inline std::vector<DetectorSpec> default_detectors() {
    std::vector<DetectorSpec> out{{"lr"}, {"means"}};
    for (std::size_t r : {1U, 2U, 5U, 10U}) out.push_back({"eigen", r});
    for (std::size_t w : {4U, 16U, 100U}) out.push_back({"hist", 0, w});
    out.push_back({"wasserstein", 0, 0, 1});
    return out;
}

/// Where a detector's curve comes from: wasserstein has no limit law and lr
/// has no finite-sample statistic.
inline std::string detector_source(const DetectorSpec& spec, const std::string& requested) {
    if (spec.kind == "wasserstein") return "finite_n";
    if (spec.kind == "lr") return "limit_law";
    return requested;
}

/// Throws InvalidInput naming the offending field.
inline void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& field, const std::string& what) { throw InvalidInput("config." + field + ": " + what); };
    if (c.model.kind != "gaussian" && c.model.kind != "bernoulli" && c.model.kind != "discrete")
        fail("model.kind", "unknown model '" + c.model.kind + "'");
    try {
        (void)c.model.make();
    } catch (const InvalidInput& e) {
        fail("model", e.what());
    }
    if (c.n < 1) fail("n", "must be >= 1");
    if (c.m < 1 || c.m > c.n) fail("m", "must satisfy 1 <= m <= n");
    if (c.replicates < 1) fail("replicates", "must be >= 1");
    if (c.limit_draws < kMinCalibrationDraws) fail("limit_draws", "must be >= 10000");
    if (!(c.type1 > 0.0 && c.type1 < 1.0)) fail("type1", "must lie in (0, 1)");
    if (c.source != "limit_law" && c.source != "finite_n") fail("source", "must be limit_law or finite_n");
    if (!(c.tail_tol > 0.0)) fail("tail_tol", "must be positive");
    if (c.detectors.empty()) fail("detectors", "must not be empty");
    auto check_grid = [&](const std::vector<double>& g, const std::string& name, double lo, double hi) {
        if (g.empty()) fail(name, "must not be empty");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(g[i] >= lo && g[i] <= hi))
                fail(name + "[" + std::to_string(i) + "]", "must lie in [" + format_double(lo) + ", " + format_double(hi) + "]");
            if (i > 0 && !(g[i] > g[i - 1])) fail(name, "must be strictly increasing");
        }
    };
    check_grid(c.rho_grid, "rho_grid", c.model.kind == "bernoulli" ? -1.0 : 0.0, 1.0);
    check_grid(c.fpr_grid, "fpr_grid", 1e-6, 1 - 1e-6);
    const JointModel model = c.model.make();
    for (std::size_t i = 0; i < c.detectors.size(); ++i) {
        const DetectorSpec& d = c.detectors[i];
        const std::string field = "detectors[" + std::to_string(i) + "]";
        if ((d.kind == "inner" || d.kind == "eigen") && d.r < 1) fail(field + ".r", "must be >= 1");
        if ((d.kind == "inner" || d.kind == "eigen") && model.is_discrete() && d.r > model.spectrum().truncation_rank())
            fail(field + ".r", "exceeds the rank of the model spectrum");
        if (d.kind == "hist") {
            if (d.w < 2) fail(field + ".w", "must be >= 2");
            if (std::pow(static_cast<double>(d.w), static_cast<double>(model.dim())) > kMaxHistogramCells)
                fail(field + ".w", "w^d must not exceed 2048");
        }
        if (d.kind == "means" && !model.is_gaussian()) fail(field, "means needs a gaussian model");
        if (d.kind == "wasserstein") {
            if (d.p != 1 && d.p != 2) fail(field + ".p", "must be 1 or 2");
            if (model.dim() > 1 && c.m != c.n) fail(field, "wasserstein with d >= 2 needs m = n");
        }
    }
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.rho_grid = default_rho_grid();
    c.fpr_grid = default_fpr_grid();
    if (!j.is_object()) throw InvalidInput("config: must be a JSON object");
    auto get = [&](const char* key, auto& target) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(target);
        } catch (const json::exception&) {
            throw InvalidInput(std::string("config.") + key + ": wrong type");
        }
    };
    static const std::vector<std::string> known{"model", "n", "m", "alpha", "detectors", "rho_grid", "fpr_grid", "replicates",
                                                "limit_draws", "type1", "seed", "source", "tail_tol", "workers", "out"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw InvalidInput("config." + key + ": unknown field");
    if (j.contains("model")) {
        const json& mj = j.at("model");
        if (!mj.is_object()) throw InvalidInput("config.model: must be an object");
        c.model.kind = detail::json_field<std::string>(mj, "kind", "config.model");
        if (mj.contains("d")) c.model.d = detail::json_field<std::size_t>(mj, "d", "config.model");
        if (mj.contains("q")) c.model.q = detail::json_field<double>(mj, "q", "config.model");
        if (mj.contains("rho")) c.model.rho = detail::json_field<double>(mj, "rho", "config.model");
        if (c.model.kind == "discrete") {
            const JointModel dm = model_from_json(mj, "config.model");
            c.model.joint = std::get<DiscreteParams>(dm.params()).joint;
        }
    }
    get("n", c.n);
    c.m = c.n;
    get("m", c.m);
    if (j.contains("alpha")) {
        double a = 0;
        get("alpha", a);
        if (!(a > 0.0 && a <= 1.0)) throw InvalidInput("config.alpha: must lie in (0, 1]");
        if (j.contains("m")) throw InvalidInput("config.alpha: give either m or alpha");
        c.m = static_cast<std::size_t>(std::llround(a * static_cast<double>(c.n)));
    }
    if (j.contains("detectors")) {
        const json& dj = j.at("detectors");
        if (!dj.is_array()) throw InvalidInput("config.detectors: must be an array");
        for (std::size_t i = 0; i < dj.size(); ++i) {
            const std::string field = "config.detectors[" + std::to_string(i) + "]";
            try {
                if (dj[i].is_string()) {
                    c.detectors.push_back(DetectorSpec::parse(dj[i].get<std::string>()));
                } else if (dj[i].is_object()) {
                    DetectorSpec s = DetectorSpec::parse(detail::json_field<std::string>(dj[i], "kind", field));
                    if (dj[i].contains("r")) s.r = detail::json_field<std::size_t>(dj[i], "r", field);
                    if (dj[i].contains("w")) s.w = detail::json_field<std::size_t>(dj[i], "w", field);
                    if (dj[i].contains("p")) s.p = detail::json_field<int>(dj[i], "p", field);
                    c.detectors.push_back(s);
                } else {
                    throw InvalidInput("must be a string or an object");
                }
            } catch (const InvalidInput& e) {
                const std::string msg = e.what();
                throw InvalidInput(msg.rfind(field, 0) == 0 ? msg : field + ": " + msg);
            }
        }
    } else {
        c.detectors = default_detectors();
    }
    get("rho_grid", c.rho_grid);
    get("fpr_grid", c.fpr_grid);
    get("replicates", c.replicates);
    get("limit_draws", c.limit_draws);
    get("type1", c.type1);
    get("seed", c.seed);
    get("source", c.source);
    get("tail_tol", c.tail_tol);
    get("workers", c.workers);
    get("out", c.out);
    validate(c);
    return c;
}

/// One point of a ROC or power curve.
struct CurvePoint {
    std::string curve;      // roc or power
    std::string detector;   // kind
    std::string params;     // e.g. r=10
    std::string source;     // finite_n or limit_law
    std::string model;
    std::size_t d = 1;
    double q = 0.0;
    double alpha = 1.0;
    double rho = 0.0;
    std::size_t n = 0, m = 0;
    std::string sweep;      // fpr or rho
    double sweep_value = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
    double type1_rate = 0.0, type1_stderr = 0.0;
    double power = 0.0, power_stderr = 0.0;
    std::size_t replicates = 0;
    std::uint64_t seed = 0;
};

inline double binomial_stderr(double p, std::size_t count) {
    return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(count));
}

/// A detector with its data-independent state (spectrum, histogram cells)
/// prepared once per model.
class DetectorRunner {
public:
    DetectorRunner(DetectorSpec spec, const JointModel& model) : spec_(std::move(spec)), model_(model) {
        if (spec_.kind == "top") spectrum_ = model.spectrum(1);
        else if (spec_.kind == "inner" || spec_.kind == "eigen") spectrum_ = model.spectrum(spec_.r);
        else if (spec_.kind == "hist") hist_ = std::make_shared<const HistogramModel>(build_histogram_model(model, spec_.w));
        else if (spec_.kind == "means") require(model.is_gaussian(), "the means detector needs a gaussian model");
        else if (spec_.kind == "lr") throw InvalidInput("the lr detector exists only as a limit law");
    }

    const DetectorSpec& spec() const noexcept { return spec_; }

    DetectorReport report(const Dataset& ds, const std::optional<ThresholdOverride>& threshold = std::nullopt,
                          double type1 = 0.05) const {
        if (spec_.kind == "top") return t_top(ds, *spectrum_, threshold);
        if (spec_.kind == "inner") return t_inner(ds, *spectrum_, spec_.r, threshold);
        if (spec_.kind == "eigen") return t_eigen(ds, *spectrum_, spec_.r, threshold);
        if (spec_.kind == "hist") return t_hist(embed_histogram(ds, hist_), detail::sample_ratio(ds), threshold);
        return run_detector(spec_, ds, model_, threshold, type1);
    }

private:
    DetectorSpec spec_;
    JointModel model_;
    std::optional<Spectrum> spectrum_;
    std::shared_ptr<const HistogramModel> hist_;
};

namespace detail {

/// Sorted H0 and H1 statistics of one detector plus the sample count.
struct StatisticLaws {
    std::vector<double> h0, h1;
    bool reject_below = false;
    std::size_t count = 0;
};

inline StatisticLaws limit_laws(const DetectorSpec& spec, const JointModel& model, const ExperimentConfig& c) {
    const LimitLawSample l0 = detector_limit_law(spec, model, c.alpha(), Hypothesis::H0, c.limit_draws, c.seed, c.tail_tol, c.workers);
    const LimitLawSample l1 = detector_limit_law(spec, model, c.alpha(), Hypothesis::H1, c.limit_draws, c.seed, c.tail_tol, c.workers);
    return {sorted_draws(l0), sorted_draws(l1), l0.reject_below, c.limit_draws};
}

/// Finite-sample statistics of several detectors on shared datasets:
/// replicate t uses seed replicate_seed(seed, 2t) under H0 and 2t + 1 under H1.
inline std::vector<StatisticLaws> finite_laws(const std::vector<DetectorSpec>& specs, const JointModel& model,
                                              const ExperimentConfig& c) {
    std::vector<DetectorRunner> runners;
    for (const auto& s : specs) runners.emplace_back(s, model);
    const std::size_t reps = c.replicates;
    std::vector<std::vector<double>> stats(specs.size(), std::vector<double>(2 * reps));
    parallel_for(
        2 * reps,
        [&](std::size_t task) {
            const Hypothesis h = task % 2 == 0 ? Hypothesis::H0 : Hypothesis::H1;
            const Dataset ds = sample_dataset(model, c.n, c.m, h, replicate_seed(c.seed, task));
            for (std::size_t k = 0; k < runners.size(); ++k) stats[k][task] = runners[k].report(ds, std::nullopt, c.type1).statistic;
        },
        c.workers);
    std::vector<StatisticLaws> out(specs.size());
    for (std::size_t k = 0; k < specs.size(); ++k) {
        out[k].reject_below = specs[k].rejects_below();
        out[k].count = reps;
        for (std::size_t t = 0; t < reps; ++t) {
            out[k].h0.push_back(stats[k][2 * t]);
            out[k].h1.push_back(stats[k][2 * t + 1]);
        }
        std::sort(out[k].h0.begin(), out[k].h0.end());
        std::sort(out[k].h1.begin(), out[k].h1.end());
    }
    return out;
}

inline double model_q(const JointModel& model) {
    if (auto* b = std::get_if<BernoulliParams>(&model.params())) return b->q;
    return 0.0;
}

inline double model_rho(const JointModel& model) {
    if (auto* g = std::get_if<GaussianParams>(&model.params())) return g->rho;
    if (auto* b = std::get_if<BernoulliParams>(&model.params())) return b->rho;
    return model.maximal_correlation();
}

/// Laws for every detector in config order, plus the trivial baseline when absent.
inline std::vector<std::pair<DetectorSpec, std::pair<std::string, StatisticLaws>>> all_laws(const ExperimentConfig& c,
                                                                                           const JointModel& model) {
    std::vector<DetectorSpec> specs = c.detectors;
    if (std::none_of(specs.begin(), specs.end(), [](const DetectorSpec& s) { return s.kind == "trivial"; }))
        specs.push_back({"trivial"});
    std::vector<DetectorSpec> finite;
    for (const auto& s : specs)
        if (detector_source(s, c.source) == "finite_n") finite.push_back(s);
    const std::vector<StatisticLaws> finite_out = finite.empty() ? std::vector<StatisticLaws>{} : finite_laws(finite, model, c);
    std::vector<std::pair<DetectorSpec, std::pair<std::string, StatisticLaws>>> out;
    std::size_t fi = 0;
    for (const auto& s : specs) {
        const std::string src = detector_source(s, c.source);
        out.push_back({s, {src, src == "finite_n" ? finite_out[fi++] : limit_laws(s, model, c)}});
    }
    return out;
}

inline CurvePoint make_point(const std::string& curve, const DetectorSpec& spec, const std::string& source,
                             const JointModel& model, const ExperimentConfig& c, const StatisticLaws& laws, double fpr) {
    CurvePoint p;
    p.curve = curve;
    p.detector = spec.kind;
    p.params = spec.params();
    p.source = source;
    p.model = model.kind();
    p.d = model.dim();
    p.q = model_q(model);
    p.alpha = c.alpha();
    p.rho = model_rho(model);
    p.n = c.n;
    p.m = c.m;
    p.fpr = fpr;
    if (spec.kind == "trivial" && source == "limit_law") {
        // Uniform statistic under both hypotheses: rejection probability is exactly fpr.
        p.type1_rate = fpr;
        p.power = fpr;
    } else {
        const double thr = threshold_from_sorted(laws.h0, fpr, laws.reject_below);
        p.type1_rate = rejection_rate_sorted(laws.h0, thr, laws.reject_below);
        p.power = rejection_rate_sorted(laws.h1, thr, laws.reject_below);
    }
    p.tpr = p.power;
    p.replicates = laws.count;
    p.type1_stderr = binomial_stderr(p.type1_rate, laws.count);
    p.power_stderr = binomial_stderr(p.power, laws.count);
    p.seed = c.seed;
    return p;
}

}  // namespace detail

/// ROC curve of every detector at the config's model: thresholds from H0
/// draws at each FPR grid point, TPR from H1 draws.
inline std::vector<CurvePoint> run_roc(const ExperimentConfig& c) {
    validate(c);
    const JointModel model = c.model.make();
    std::vector<CurvePoint> out;
    for (const auto& [spec, sl] : detail::all_laws(c, model))
        for (double fpr : c.fpr_grid) {
            CurvePoint p = detail::make_point("roc", spec, sl.first, model, c, sl.second, fpr);
            p.sweep = "fpr";
            p.sweep_value = fpr;
            out.push_back(p);
        }
    return out;
}

/// Power at level type1 for every detector at every rho of the grid.
inline std::vector<CurvePoint> run_power_sweep(const ExperimentConfig& c) {
    validate(c);
    if (c.model.kind == "discrete") throw InvalidInput("config.model.kind: a rho sweep needs a gaussian or bernoulli model");
    std::vector<CurvePoint> out;
    for (double rho : c.rho_grid) {
        const JointModel model = c.model.with_rho(rho);
        for (const auto& [spec, sl] : detail::all_laws(c, model)) {
            CurvePoint p = detail::make_point("power", spec, sl.first, model, c, sl.second, c.type1);
            p.sweep = "rho";
            p.sweep_value = rho;
            out.push_back(p);
        }
    }
    return out;
}

inline std::string curves_csv(const std::vector<CurvePoint>& points) {
    std::string out =
        "schema_version,curve,detector,params,source,model,d,q,alpha,rho,n,m,sweep,sweep_value,fpr,tpr,"
        "type1_rate,type1_stderr,power,power_stderr,replicates,seed\n";
    for (const auto& p : points) {
        out += std::string(kCurveSchema) + ',' + p.curve + ',' + p.detector + ',' + p.params + ',' + p.source + ',' + p.model +
               ',' + std::to_string(p.d) + ',' + format_double(p.q) + ',' + format_double(p.alpha) + ',' +
               format_double(p.rho) + ',' + std::to_string(p.n) + ',' + std::to_string(p.m) + ',' + p.sweep + ',' +
               format_double(p.sweep_value) + ',' + format_double(p.fpr) + ',' + format_double(p.tpr) + ',' +
               format_double(p.type1_rate) + ',' + format_double(p.type1_stderr) + ',' + format_double(p.power) + ',' +
               format_double(p.power_stderr) + ',' + std::to_string(p.replicates) + ',' + std::to_string(p.seed) + '\n';
    }
    return out;
}

/// E_0 L^2 against the ratio bound prod_{k>=1} (1 - (m/n) lambda_k^2)^{-1}
/// and the limit prod_{k>=1} (1 - lambda_k^2)^{-1}.
inline json second_moment_report(const JointModel& model, std::size_t n, std::size_t m, double tail_tol = 1e-16) {
    require(n >= 1 && m <= n, "second-moment report: need 0 <= m <= n, n >= 1");
    const SpectralValues values = model.spectral_values(tail_tol);
    const SecondMomentResult r = second_moment(n, m, values);
    const double ratio = static_cast<double>(m) / static_cast<double>(n);
    const double bound = m == n ? r.limit_product : r.bound_product * (1.0 - ratio);
    double chi2 = 0.0;
    for (std::size_t k = 0; k < values.values.size(); ++k)
        chi2 += (values.multiplicity.empty() ? 1.0 : values.multiplicity[k]) * values.values[k] * values.values[k];
    json j;
    j["version"] = kToolVersion;
    j["model"] = model_to_json(model);
    j["n"] = n;
    j["m"] = m;
    j["alpha"] = ratio;
    j["second_moment"] = r.value;
    j["ratio_bound"] = bound;
    j["ratio_bound_with_lambda0"] = r.bound_product;
    j["limit_product"] = r.limit_product;
    j["regime"] = m < n ? "ratio_bound" : "limit_product";
    j["diverges"] = r.diverges;
    j["maximal_correlation"] = values.values.empty() ? 0.0 : values.values.front();
    j["chi2_information"] = chi2;
    j["alpha_chi2_information"] = ratio * chi2;
    j["spectrum_truncation"] = r.truncation;
    return j;
}

// ---------------------------------------------------------------------------
// Detect records and replay

/// One JSON line of `detect` output: enough to recompute the report.
inline json detect_record(const DetectorSpec& spec, const std::string& dataset_path, const DetectorReport& rep,
                          const std::optional<ThresholdOverride>& threshold, double type1) {
    json j;
    j["version"] = kToolVersion;
    j["dataset"] = dataset_path;
    j["detector"] = spec.kind + (spec.params().empty() ? "" : ":" + spec.params());
    j["type1"] = type1;
    if (threshold) {
        j["threshold_override"] = threshold->value;
        j["threshold_override_source"] = threshold->source;
    } else {
        j["threshold_override"] = nullptr;
    }
    j["report"] = report_to_json(rep);
    return j;
}

struct ReplayResult {
    DetectorReport report;
    bool identical = false;
    std::vector<std::string> warnings;
};

/// Recomputes a detect record on its dataset. `dataset_path` replaces the
/// recorded path when non-empty.
inline ReplayResult replay(const json& record, const std::string& dataset_path = "") {
    if (!record.is_object() || !record.contains("report") || !record.contains("detector"))
        throw InvalidInput("replay: not a detect record");
    ReplayResult out;
    if (record.value("version", "") != kToolVersion)
        out.warnings.push_back("record written by version " + record.value("version", "?") + ", replaying with " + kToolVersion);
    const std::string path = dataset_path.empty() ? record.at("dataset").get<std::string>() : dataset_path;
    const LoadedDataset loaded = read_dataset(path);
    const DetectorSpec spec = DetectorSpec::parse(record.at("detector").get<std::string>());
    std::optional<ThresholdOverride> threshold;
    if (!record.at("threshold_override").is_null())
        threshold = ThresholdOverride{record.at("threshold_override").get<double>(),
                                      record.value("threshold_override_source", "calibrated")};
    out.report = DetectorRunner(spec, loaded.model).report(loaded.dataset, threshold, record.value("type1", 0.05));
    out.identical = report_to_json(out.report).dump() == record.at("report").dump();
    return out;
}

}  // namespace broken_sample
