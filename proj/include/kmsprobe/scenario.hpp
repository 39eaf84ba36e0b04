#pragma once

// Scenario files: a JSON document with sections kernel, detector, switching,
// smearing, sweep, checks, output and units. run_scenario validates the whole
// document first, then evaluates every (mu preset, omega, route, T) point and
// writes result tables, a verdict report and a manifest.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kmsprobe/core.hpp"
#include "kmsprobe/correlators.hpp"
#include "kmsprobe/detector.hpp"
#include "kmsprobe/smearing.hpp"
#include "kmsprobe/switching.hpp"
#include "kmsprobe/tables.hpp"
#include "kmsprobe/thermometry.hpp"

namespace kmsprobe::scenario {

using json = nlohmann::ordered_json;

struct KernelSection {
    std::string family = "vacuum_accelerated";  // vacuum_inertial | vacuum_accelerated | thermal_inertial
    double a = 1.0;
    std::optional<double> beta;
    std::string op = "hermitian_scalar";  // hermitian_scalar | complex_scalar | derivative
    std::array<double, 4> direction{1.0, 0.0, 0.0, 0.0};
    bool operator==(const KernelSection&) const = default;
};

struct DetectorSection {
    std::vector<double> omega{1.0};
    std::vector<std::string> mu_presets{"raising"};
    double lambda = 0.01;
    unsigned seed = 7;
    bool operator==(const DetectorSection&) const = default;
};

struct SwitchingSection {
    std::string shape = "gaussian";  // gaussian | bump
    double bandwidth = 0.0;          // 0: the shape's own bandwidth
    bool operator==(const SwitchingSection&) const = default;
};

struct SmearingSection {
    std::string profile = "pointlike";  // pointlike | gaussian
    double sigma = 0.0;
    std::array<double, 3> offset{0.0, 0.0, 0.0};
    int nodes_per_axis = 5;
    bool operator==(const SmearingSection&) const = default;
};

struct SweepSection {
    std::vector<double> T{5.0, 10.0, 20.0, 40.0};
    std::string route = "direct";  // direct | fourier | both
    bool operator==(const SweepSection&) const = default;
};

struct SiBoundary {
    double acceleration_si = 1e20;  // m/s^2
    double offset_m = 1e-3;         // X offset of the detector centre
    std::string expect = "fail";    // pass | fail
    bool operator==(const SiBoundary&) const = default;
};

struct ChecksSection {
    bool edr = true;
    double edr_tolerance = 0.02;
    bool detailed_balance = false;
    double detailed_balance_tolerance = 1e-3;
    bool anti_periodicity = false;
    double anti_periodicity_tolerance = 1e-8;
    std::string spectral_method = "auto";  // auto | closed_form | quadrature | fft
    bool route_equivalence = false;
    double route_tolerance = 1e-6;
    bool mu_independence = false;
    double mu_spread_tolerance = 0.005;
    bool smearing_shift = false;
    double smearing_shift_tolerance = 0.01;
    bool validity = false;
    double validity_threshold = 1e-2;
    std::vector<SiBoundary> si_boundaries;
    bool operator==(const ChecksSection&) const = default;
};

struct OutputSection {
    std::string directory = "results";
    std::vector<std::string> formats{"tsv"};
    int precision = 12;
    bool operator==(const OutputSection&) const = default;
};

struct UnitsSection {
    std::string system = "natural";  // natural | SI (a in m/s^2, lengths in m)
    bool operator==(const UnitsSection&) const = default;
};

struct ScenarioConfig {
    std::string name = "scenario";
    KernelSection kernel;
    DetectorSection detector;
    SwitchingSection switching;
    SmearingSection smearing;
    SweepSection sweep;
    ChecksSection checks;
    OutputSection output;
    UnitsSection units;
    bool operator==(const ScenarioConfig&) const = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

/// Reads fields of one JSON object, recording problems with their paths.
class Reader {
public:
    Reader(const json& j, std::string path, std::vector<std::string>& issues)
        : j_(j), path_(std::move(path)), issues_(issues) {
        if (!j_.is_object()) issues_.push_back(path_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        try {
            out = j_.at(key).template get<T>();
        } catch (const json::exception&) {
            issues_.push_back(path_ + "." + key + ": wrong type");
        }
    }

    void get_optional(const char* key, std::optional<double>& out) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<double>();
        } catch (const json::exception&) {
            issues_.push_back(path_ + "." + key + ": wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void finish() {
        if (!j_.is_object()) return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) issues_.push_back(path_ + "." + k + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string>& issues_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline json to_json(const ScenarioConfig& c) {
    json j;
    j["name"] = c.name;
    j["kernel"] = {{"family", c.kernel.family},
                   {"a", c.kernel.a},
                   {"beta", c.kernel.beta ? json(*c.kernel.beta) : json(nullptr)},
                   {"operator", c.kernel.op},
                   {"direction", c.kernel.direction}};
    j["detector"] = {{"omega", c.detector.omega},
                     {"mu_presets", c.detector.mu_presets},
                     {"lambda", c.detector.lambda},
                     {"seed", c.detector.seed}};
    j["switching"] = {{"shape", c.switching.shape}, {"bandwidth", c.switching.bandwidth}};
    j["smearing"] = {{"profile", c.smearing.profile},
                     {"sigma", c.smearing.sigma},
                     {"offset", c.smearing.offset},
                     {"nodes_per_axis", c.smearing.nodes_per_axis}};
    j["sweep"] = {{"T", c.sweep.T}, {"route", c.sweep.route}};
    json si = json::array();
    for (const auto& b : c.checks.si_boundaries)
        si.push_back({{"acceleration_si", b.acceleration_si}, {"offset_m", b.offset_m}, {"expect", b.expect}});
    const auto& k = c.checks;
    j["checks"] = {{"edr", k.edr},
                   {"edr_tolerance", k.edr_tolerance},
                   {"detailed_balance", k.detailed_balance},
                   {"detailed_balance_tolerance", k.detailed_balance_tolerance},
                   {"anti_periodicity", k.anti_periodicity},
                   {"anti_periodicity_tolerance", k.anti_periodicity_tolerance},
                   {"spectral_method", k.spectral_method},
                   {"route_equivalence", k.route_equivalence},
                   {"route_tolerance", k.route_tolerance},
                   {"mu_independence", k.mu_independence},
                   {"mu_spread_tolerance", k.mu_spread_tolerance},
                   {"smearing_shift", k.smearing_shift},
                   {"smearing_shift_tolerance", k.smearing_shift_tolerance},
                   {"validity", k.validity},
                   {"validity_threshold", k.validity_threshold},
                   {"si_boundaries", si}};
    j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}, {"precision", c.output.precision}};
    j["units"] = {{"system", c.units.system}};
    return j;
}

inline std::string serialize(const ScenarioConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Structural parse; type and unknown-field problems are appended to `issues`.
inline ScenarioConfig from_json(const json& j, std::vector<std::string>& issues) {
    ScenarioConfig c;
    detail::Reader top(j, "$", issues);
    top.get("name", c.name);
    if (const json* s = top.child("kernel")) {
        detail::Reader r(*s, "kernel", issues);
        r.get("family", c.kernel.family);
        r.get("a", c.kernel.a);
        r.get_optional("beta", c.kernel.beta);
        r.get("operator", c.kernel.op);
        r.get("direction", c.kernel.direction);
        r.finish();
    }
    if (const json* s = top.child("detector")) {
        detail::Reader r(*s, "detector", issues);
        if (s->is_object() && s->contains("omega") && s->at("omega").is_number())
            c.detector.omega = {s->at("omega").get<double>()};
        else r.get("omega", c.detector.omega);
        r.get("mu_presets", c.detector.mu_presets);
        r.get("lambda", c.detector.lambda);
        r.get("seed", c.detector.seed);
        r.finish();
    }
    if (const json* s = top.child("switching")) {
        detail::Reader r(*s, "switching", issues);
        r.get("shape", c.switching.shape);
        r.get("bandwidth", c.switching.bandwidth);
        r.finish();
    }
    if (const json* s = top.child("smearing")) {
        detail::Reader r(*s, "smearing", issues);
        r.get("profile", c.smearing.profile);
        r.get("sigma", c.smearing.sigma);
        r.get("offset", c.smearing.offset);
        r.get("nodes_per_axis", c.smearing.nodes_per_axis);
        r.finish();
    }
    if (const json* s = top.child("sweep")) {
        detail::Reader r(*s, "sweep", issues);
        r.get("T", c.sweep.T);
        r.get("route", c.sweep.route);
        r.finish();
    }
    if (const json* s = top.child("checks")) {
        detail::Reader r(*s, "checks", issues);
        auto& k = c.checks;
        r.get("edr", k.edr);
        r.get("edr_tolerance", k.edr_tolerance);
        r.get("detailed_balance", k.detailed_balance);
        r.get("detailed_balance_tolerance", k.detailed_balance_tolerance);
        r.get("anti_periodicity", k.anti_periodicity);
        r.get("anti_periodicity_tolerance", k.anti_periodicity_tolerance);
        r.get("spectral_method", k.spectral_method);
        r.get("route_equivalence", k.route_equivalence);
        r.get("route_tolerance", k.route_tolerance);
        r.get("mu_independence", k.mu_independence);
        r.get("mu_spread_tolerance", k.mu_spread_tolerance);
        r.get("smearing_shift", k.smearing_shift);
        r.get("smearing_shift_tolerance", k.smearing_shift_tolerance);
        r.get("validity", k.validity);
        r.get("validity_threshold", k.validity_threshold);
        if (const json* b = r.child("si_boundaries")) {
            if (!b->is_array()) issues.push_back("checks.si_boundaries: expected an array");
            else
                for (std::size_t i = 0; i < b->size(); ++i) {
                    SiBoundary sb;
                    detail::Reader e(b->at(i), "checks.si_boundaries[" + std::to_string(i) + "]", issues);
                    e.get("acceleration_si", sb.acceleration_si);
                    e.get("offset_m", sb.offset_m);
                    e.get("expect", sb.expect);
                    e.finish();
                    k.si_boundaries.push_back(sb);
                }
        }
        r.finish();
    }
    if (const json* s = top.child("output")) {
        detail::Reader r(*s, "output", issues);
        r.get("directory", c.output.directory);
        r.get("formats", c.output.formats);
        r.get("precision", c.output.precision);
        r.finish();
    }
    if (const json* s = top.child("units")) {
        detail::Reader r(*s, "units", issues);
        r.get("system", c.units.system);
        r.finish();
    }
    top.finish();
    return c;
}

/// Semantic checks against the modules' preconditions, with field paths.
inline std::vector<std::string> validate(const ScenarioConfig& c) {
    std::vector<std::string> v;
    auto one_of = [&](const std::string& path, const std::string& value, std::initializer_list<const char*> opts) {
        for (const char* o : opts)
            if (value == o) return true;
        std::string msg = path + ": '" + value + "' is not one of";
        for (const char* o : opts) msg += std::string(" ") + o;
        v.push_back(msg);
        return false;
    };
    auto positive = [&](const std::string& path, double x) {
        if (!(x > 0) || !std::isfinite(x)) v.push_back(path + ": must be a finite number > 0");
    };
    one_of("kernel.family", c.kernel.family, {"vacuum_inertial", "vacuum_accelerated", "thermal_inertial"});
    one_of("kernel.operator", c.kernel.op, {"hermitian_scalar", "complex_scalar", "derivative"});
    if (c.kernel.family == "vacuum_accelerated") positive("kernel.a", c.kernel.a);
    if (c.kernel.family == "thermal_inertial") {
        if (!c.kernel.beta) v.push_back("kernel.beta: required for thermal_inertial");
        else positive("kernel.beta", *c.kernel.beta);
    }
    if (c.kernel.op == "derivative") {
        const auto& d = c.kernel.direction;
        if (d[0] == 0 && d[1] == 0 && d[2] == 0 && d[3] == 0) v.push_back("kernel.direction: must be nonzero");
        if (c.kernel.family == "thermal_inertial" && (d[1] != 0 || d[2] != 0 || d[3] != 0))
            v.push_back("kernel.direction: thermal derivative coupling supports only the e_0 direction");
    }
    if (c.detector.omega.empty()) v.push_back("detector.omega: needs at least one gap");
    for (std::size_t i = 0; i < c.detector.omega.size(); ++i)
        if (!std::isfinite(c.detector.omega[i]) || c.detector.omega[i] == 0.0)
            v.push_back("detector.omega[" + std::to_string(i) + "]: must be finite and nonzero");
    if (c.detector.mu_presets.empty()) v.push_back("detector.mu_presets: needs at least one preset");
    for (std::size_t i = 0; i < c.detector.mu_presets.size(); ++i)
        one_of("detector.mu_presets[" + std::to_string(i) + "]", c.detector.mu_presets[i],
               {"raising", "symmetric", "random_phase"});
    if (!(c.detector.lambda >= 0) || !std::isfinite(c.detector.lambda))
        v.push_back("detector.lambda: must be a finite number >= 0");
    one_of("switching.shape", c.switching.shape, {"gaussian", "bump"});
    if (!(c.switching.bandwidth >= 0)) v.push_back("switching.bandwidth: must be >= 0");
    if (one_of("smearing.profile", c.smearing.profile, {"pointlike", "gaussian"}) && c.smearing.profile == "gaussian")
        positive("smearing.sigma", c.smearing.sigma);
    if (c.smearing.nodes_per_axis < 1 || c.smearing.nodes_per_axis > 16)
        v.push_back("smearing.nodes_per_axis: must be in 1..16");
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(c.smearing.offset[i])) v.push_back("smearing.offset: must be finite");
    if (c.sweep.T.empty()) v.push_back("sweep.T: needs at least one duration");
    for (std::size_t i = 0; i < c.sweep.T.size(); ++i) {
        if (!(c.sweep.T[i] > 0)) v.push_back("sweep.T[" + std::to_string(i) + "]: must be > 0");
        if (i > 0 && !(c.sweep.T[i] > c.sweep.T[i - 1]))
            v.push_back("sweep.T[" + std::to_string(i) + "]: durations must increase");
    }
    one_of("sweep.route", c.sweep.route, {"direct", "fourier", "both"});
    const auto& k = c.checks;
    positive("checks.edr_tolerance", k.edr_tolerance);
    positive("checks.detailed_balance_tolerance", k.detailed_balance_tolerance);
    positive("checks.anti_periodicity_tolerance", k.anti_periodicity_tolerance);
    positive("checks.route_tolerance", k.route_tolerance);
    positive("checks.mu_spread_tolerance", k.mu_spread_tolerance);
    positive("checks.smearing_shift_tolerance", k.smearing_shift_tolerance);
    positive("checks.validity_threshold", k.validity_threshold);
    one_of("checks.spectral_method", k.spectral_method, {"auto", "closed_form", "quadrature", "fft"});
    if (k.route_equivalence && c.sweep.route != "both")
        v.push_back("checks.route_equivalence: requires sweep.route = both");
    for (std::size_t i = 0; i < k.si_boundaries.size(); ++i) {
        const std::string p = "checks.si_boundaries[" + std::to_string(i) + "]";
        positive(p + ".acceleration_si", k.si_boundaries[i].acceleration_si);
        if (!std::isfinite(k.si_boundaries[i].offset_m)) v.push_back(p + ".offset_m: must be finite");
        one_of(p + ".expect", k.si_boundaries[i].expect, {"pass", "fail"});
    }
    if (c.output.directory.empty()) v.push_back("output.directory: must not be empty");
    for (std::size_t i = 0; i < c.output.formats.size(); ++i)
        one_of("output.formats[" + std::to_string(i) + "]", c.output.formats[i], {"tsv"});
    if (c.output.precision < 6 || c.output.precision > 17) v.push_back("output.precision: must be in 6..17");
    one_of("units.system", c.units.system, {"natural", "SI"});
    return v;
}

inline std::string join_issues(const std::vector<std::string>& issues) {
    std::string s;
    for (const auto& i : issues) s += (s.empty() ? "" : "\n") + i;
    return s;
}

/// Parses and validates; throws ValidationError listing every problem.
inline ScenarioConfig parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("$: not valid JSON: ") + e.what());
    }
    std::vector<std::string> issues;
    ScenarioConfig c = from_json(j, issues);
    if (issues.empty()) issues = validate(c);
    if (!issues.empty()) throw ValidationError(join_issues(issues));
    return c;
}

inline ScenarioConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

/// Applies "key=value,key=value" tolerance overrides.
inline void apply_tolerance_overrides(ScenarioConfig& c, const std::string& text) {
    std::map<std::string, double*> keys{{"edr", &c.checks.edr_tolerance},
                                        {"detailed_balance", &c.checks.detailed_balance_tolerance},
                                        {"anti_periodicity", &c.checks.anti_periodicity_tolerance},
                                        {"route", &c.checks.route_tolerance},
                                        {"mu_spread", &c.checks.mu_spread_tolerance},
                                        {"smearing_shift", &c.checks.smearing_shift_tolerance},
                                        {"validity", &c.checks.validity_threshold}};
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (tables::trim(item).empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("tolerance override '" + item + "': expected key=value");
        const std::string key = tables::trim(item.substr(0, eq));
        auto it = keys.find(key);
        if (it == keys.end()) throw UsageError("tolerance override: unknown key '" + key + "'");
        try {
            *it->second = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw UsageError("tolerance override '" + item + "': value is not a number");
        }
    }
    auto issues = validate(c);
    if (!issues.empty()) throw ValidationError(join_issues(issues));
}

/// 64-bit FNV-1a.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Building blocks from a config

inline double natural_acceleration(const ScenarioConfig& c) {
    return c.units.system == "SI" ? thermometry::acceleration_si_to_inverse_length(c.kernel.a) : c.kernel.a;
}

inline correlators::KernelFamily kernel_family(const ScenarioConfig& c) {
    correlators::KernelFamily f;
    f.state = c.kernel.family == "thermal_inertial" ? correlators::FieldState::Thermal : correlators::FieldState::Vacuum;
    f.motion = c.kernel.family == "vacuum_accelerated" ? correlators::Motion::Rindler : correlators::Motion::Inertial;
    f.a = natural_acceleration(c);
    f.beta = c.kernel.beta.value_or(kInf);
    f.op = c.kernel.op == "complex_scalar" ? correlators::OperatorKind::ComplexScalar
           : c.kernel.op == "derivative"   ? correlators::OperatorKind::Derivative
                                           : correlators::OperatorKind::HermitianScalar;
    f.direction = c.kernel.direction;
    return f;
}

inline detector::SmearingProfile smearing_profile(const ScenarioConfig& c) {
    const auto& s = c.smearing;
    if (s.profile == "gaussian") return detector::gaussian_profile(s.sigma, s.offset, s.nodes_per_axis);
    return detector::pointlike_profile(s.offset);
}

inline bool is_plain_pointlike(const ScenarioConfig& c) {
    return c.smearing.profile == "pointlike" && c.smearing.offset == std::array<double, 3>{0, 0, 0};
}

inline correlators::CorrelatorSet correlator_set(const ScenarioConfig& c) {
    const auto fam = kernel_family(c);
    if (is_plain_pointlike(c)) return correlators::pointlike_set(fam);
    const auto p = smearing_profile(c);
    return correlators::smeared_correlator(fam, p, p, correlators::GeometryContext::for_family(fam));
}

inline detector::SwitchingFunction switching(const ScenarioConfig& c) {
    return c.switching.shape == "bump" ? detector::SwitchingFunction::bump() : detector::SwitchingFunction::gaussian();
}

inline detector::MuPreset mu_preset(const std::string& s) {
    if (s == "symmetric") return detector::MuPreset::Symmetric;
    if (s == "random_phase") return detector::MuPreset::RandomPhase;
    return detector::MuPreset::Raising;
}

inline correlators::FourierMethod spectral_method(const std::string& s) {
    if (s == "closed_form") return correlators::FourierMethod::ClosedForm;
    if (s == "quadrature") return correlators::FourierMethod::DampedQuadrature;
    if (s == "fft") return correlators::FourierMethod::FftGrid;
    return correlators::FourierMethod::Auto;
}

inline std::vector<detector::Route> routes(const ScenarioConfig& c) {
    if (c.sweep.route == "both") return {detector::Route::Direct, detector::Route::Fourier};
    return {c.sweep.route == "fourier" ? detector::Route::Fourier : detector::Route::Direct};
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
    std::string out_dir;  // overrides output.directory when set
    unsigned workers = 1;
};

struct CheckLine {
    std::string name;
    std::string subject;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

struct RunOutcome {
    int exit_code = 0;
    std::filesystem::path directory;
    std::vector<std::string> files;
    std::vector<CheckLine> checks;
    std::vector<std::string> failures;  // numerical failures, one per affected point or check
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitVerdict = 3;

namespace detail {

inline std::string num(double x, int precision = 12) {
    std::ostringstream os;
    os.precision(precision);
    os << x;
    return os.str();
}

struct SeriesKey {
    std::string preset;
    double omega;
    detector::Route route;
    bool operator<(const SeriesKey& o) const {
        return std::tie(preset, omega, route) < std::tie(o.preset, o.omega, o.route);
    }
};

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace detail

/// Validates, evaluates and writes responses.tsv, edr_sweep.tsv,
/// residuals.tsv, spectrum.tsv, kernel.tsv, verdict.txt and manifest.json.
/// Validation problems throw ValidationError before any file is written.
inline RunOutcome run_scenario(const ScenarioConfig& cfg, const RunOptions& ropt = {}) {
    {
        auto issues = validate(cfg);
        if (!issues.empty()) throw ValidationError(join_issues(issues));
    }
    using detector::Route;
    const int prec = cfg.output.precision;
    auto num = [prec](double x) { return detail::num(x, prec); };

    const auto fam = kernel_family(cfg);
    const double beta_nominal = fam.beta_nominal();
    const auto chi = switching(cfg);
    if (cfg.switching.bandwidth > 0 && !chi.bandwidth_holds(cfg.switching.bandwidth))
        throw ValidationError("switching.bandwidth: |chi~| / chi~(0) exceeds 1e-6 beyond the declared bandwidth");

    RunOutcome out;
    correlators::CorrelatorSet set;
    try {
        set = correlator_set(cfg);
    } catch (const OutOfDomainError& e) {
        throw ValidationError(std::string("smearing: ") + e.what());
    } catch (const AssumptionViolation& e) {
        throw ValidationError(std::string("smearing: ") + e.what());
    }

    // Jobs in a fixed order: preset, omega, route, T.
    std::vector<detector::ResponseJob> jobs;
    std::map<std::string, detector::EffectiveWightman> effective;
    for (const auto& preset : cfg.detector.mu_presets) {
        detector::DetectorSpec base;
        base.lambda = cfg.detector.lambda;
        const auto mu = mu_preset(preset);
        auto spec0 = detector::with_mu_preset(base, mu, cfg.detector.seed);
        effective[preset] = detector::effective_wightman(spec0, set);
        for (double om : cfg.detector.omega) {
            auto d = spec0;
            d.omega = om;
            for (Route r : routes(cfg))
                for (double T : cfg.sweep.T) jobs.push_back({preset, effective[preset], chi, d, T, r});
        }
    }
    const auto rows = detector::response_batch(jobs, ropt.workers);

    const std::filesystem::path dir = ropt.out_dir.empty() ? cfg.output.directory : ropt.out_dir;
    std::filesystem::create_directories(dir);
    out.directory = dir;
    auto open = [&](const std::string& name) {
        out.files.push_back(name);
        std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
        if (!os) throw NumericalError("cannot write " + (dir / name).string(), 0.0);
        return os;
    };

    // responses.tsv
    {
        auto os = open("responses.tsv");
        os << "# scenario: " << cfg.name << "\n# units: natural (hbar = c = k_B = 1)"
           << (cfg.units.system == "SI" ? ", lengths in m" : "") << "\n";
        os << "mu_preset\tomega\tT\troute\tp_up\tp_down\tlog_p_up\tlog_p_down\terr_up\terr_down\tstatus\n";
        for (const auto& r : rows) {
            const auto& x = r.result;
            os << r.label << '\t' << num(x.omega) << '\t' << num(x.T) << '\t' << detector::to_string(x.route) << '\t';
            if (r.error.empty())
                os << num(x.p_up) << '\t' << num(x.p_down) << '\t' << num(x.log_p_up) << '\t' << num(x.log_p_down)
                   << '\t' << detail::num(x.diagnostics.error_up, 3) << '\t'
                   << detail::num(x.diagnostics.error_down, 3) << '\t'
                   << (x.perturbative_warning ? "ok(perturbativity-warning)" : "ok") << '\n';
            else {
                os << "nan\tnan\tnan\tnan\tnan\tnan\terror: " << r.error << '\n';
                out.failures.push_back(r.label + " omega=" + num(x.omega) + " T=" + num(x.T) + ": " + r.error);
            }
        }
    }

    // Sweeps per (preset, omega, route).
    std::map<detail::SeriesKey, thermometry::SweepReport> sweeps;
    std::map<detail::SeriesKey, std::string> sweep_status;
    std::map<std::pair<detail::SeriesKey, double>, const detector::BatchRow*> by_point;
    for (const auto& r : rows) {
        detail::SeriesKey key{r.label, r.result.omega, r.result.route};
        by_point[{key, r.result.T}] = &r;
        auto& rep = sweeps[key];
        rep.label = r.label;
        rep.beta_nominal = beta_nominal;
        rep.tolerance = cfg.checks.edr_tolerance;
        if (!r.error.empty()) {
            sweep_status[key] = "numerical-failure";
            continue;
        }
        try {
            rep.points.push_back(thermometry::make_sweep_point(r.result, beta_nominal));
        } catch (const Error& e) {
            sweep_status[key] = "numerical-failure";
            out.failures.push_back(r.label + " omega=" + num(r.result.omega) + ": " + e.what());
        }
    }
    for (auto& [key, rep] : sweeps) {
        if (sweep_status.count(key)) continue;
        try {
            thermometry::judge_sweep(rep);
            sweep_status[key] = thermometry::to_string(rep.verdict);
        } catch (const thermometry::ConvergenceError& e) {
            sweep_status[key] = "not-converged";
        }
    }
    {
        auto os = open("edr_sweep.tsv");
        os << "# scenario: " << cfg.name << "\n# units: natural (hbar = c = k_B = 1)\n";
        os << "mu_preset\tomega\troute\tT\tbeta_hat\tbeta_nominal\tabs_error\trel_error\tverdict\n";
        for (const auto& [key, rep] : sweeps)
            for (const auto& p : rep.points)
                os << key.preset << '\t' << num(key.omega) << '\t' << detector::to_string(key.route) << '\t'
                   << num(p.response.T) << '\t' << num(p.estimate.beta_hat) << '\t' << num(beta_nominal) << '\t'
                   << num(std::abs(p.estimate.beta_hat - beta_nominal)) << '\t' << num(p.error) << '\t'
                   << sweep_status[key] << '\n';
    }

    // Checks.
    const auto& ck = cfg.checks;
    auto add = [&](CheckLine c) { out.checks.push_back(std::move(c)); };
    if (ck.edr)
        for (const auto& [key, rep] : sweeps) {
            CheckLine c;
            c.name = "edr";
            c.subject = key.preset + " omega=" + num(key.omega) + " " + detector::to_string(key.route);
            const std::string st = sweep_status[key];
            if (std::isfinite(beta_nominal)) {
                c.value = rep.points.empty() ? kInf : rep.terminal_error();
                c.threshold = ck.edr_tolerance;
                c.pass = st == "converged";
                c.detail = "beta_hat=" + (rep.points.empty() ? std::string("nan") : num(rep.terminal_beta())) +
                           " beta_nominal=" + num(beta_nominal) + " status=" + st;
            } else {
                c.value = rep.points.empty() ? kInf : rep.terminal_beta();
                c.threshold = kInf;
                c.pass = st == "divergent";
                c.detail = "beta_hat=" + (rep.points.empty() ? std::string("nan") : num(rep.terminal_beta())) +
                           " beta_nominal=inf status=" + st + " (no finite temperature)";
            }
            add(c);
        }
    const auto method = spectral_method(ck.spectral_method);
    for (const auto& preset : cfg.detector.mu_presets) {
        const auto& w = effective[preset];
        if (ck.detailed_balance && std::isfinite(beta_nominal)) {
            CheckLine c{"detailed_balance", preset, 0.0, ck.detailed_balance_tolerance, false, ""};
            try {
                c.value = thermometry::detailed_balance_residual(w.w_in, w.w_ni, beta_nominal,
                                                                 thermometry::default_omega_grid(beta_nominal), method);
                c.pass = c.value < c.threshold;
                c.detail = "beta omega / 2 pi in [-5, 5], 101 points";
            } catch (const Error& e) {
                c.value = kInf;
                c.detail = std::string("error: ") + e.what();
                out.failures.push_back("detailed_balance " + preset + ": " + e.what());
            }
            add(c);
        }
        if (ck.anti_periodicity && std::isfinite(beta_nominal)) {
            CheckLine c{"anti_periodicity", preset, 0.0, ck.anti_periodicity_tolerance, false, ""};
            try {
                c.value = thermometry::anti_periodicity_residual(w.w_in, w.w_ni, beta_nominal,
                                                                 thermometry::default_tau_grid());
                c.pass = c.value < c.threshold;
                c.detail = "tau in [-5, 5], 200 points";
            } catch (const Error& e) {
                c.value = kInf;
                c.detail = std::string("error: ") + e.what();
                out.failures.push_back("anti_periodicity " + preset + ": " + e.what());
            }
            add(c);
        }
    }
    if (ck.route_equivalence) {
        double worst = 0.0;
        bool complete = true;
        for (const auto& [pk, row] : by_point) {
            if (pk.first.route != Route::Direct) continue;
            auto other = by_point.find({{pk.first.preset, pk.first.omega, Route::Fourier}, pk.second});
            if (other == by_point.end() || !row->error.empty() || !other->second->error.empty()) {
                complete = false;
                continue;
            }
            const auto& a = row->result;
            const auto& b = other->second->result;
            worst = std::max({worst, std::abs(std::expm1(a.log_p_up - b.log_p_up)),
                              std::abs(std::expm1(a.log_p_down - b.log_p_down))});
        }
        add({"route_equivalence", "all points", complete ? worst : kInf, ck.route_tolerance,
             complete && worst < ck.route_tolerance, "max relative |p_direct - p_fourier| / p_fourier"});
    }
    if (ck.mu_independence && cfg.detector.mu_presets.size() > 1) {
        for (double om : cfg.detector.omega)
            for (Route r : routes(cfg)) {
                double lo = kInf, hi = -kInf;
                bool ok = true;
                for (const auto& preset : cfg.detector.mu_presets) {
                    const auto& rep = sweeps[{preset, om, r}];
                    if (rep.points.empty()) {
                        ok = false;
                        continue;
                    }
                    lo = std::min(lo, rep.terminal_beta());
                    hi = std::max(hi, rep.terminal_beta());
                }
                const double spread = ok ? (hi - lo) / (0.5 * (hi + lo)) : kInf;
                add({"mu_independence", "omega=" + num(om) + " " + detector::to_string(r), spread,
                     ck.mu_spread_tolerance, ok && spread < ck.mu_spread_tolerance,
                     "terminal beta_hat spread across presets"});
            }
    }
    if (ck.smearing_shift && !is_plain_pointlike(cfg)) {
        const auto point_set = correlators::pointlike_set(fam);
        for (const auto& preset : cfg.detector.mu_presets)
            for (double om : cfg.detector.omega) {
                CheckLine c{"smearing_shift", preset + " omega=" + num(om), 0.0, ck.smearing_shift_tolerance, false, ""};
                try {
                    auto d = detector::with_mu_preset(detector::DetectorSpec{}, mu_preset(preset), cfg.detector.seed);
                    d.lambda = cfg.detector.lambda;
                    d.omega = om;
                    const double T = cfg.sweep.T.back();
                    const auto rp = detector::transition_probability(detector::effective_wightman(d, point_set), chi,
                                                                     d, T, routes(cfg).front());
                    const double bp = thermometry::edr_beta_estimate(rp).beta_hat;
                    const auto& rep = sweeps[{preset, om, routes(cfg).front()}];
                    if (rep.points.empty()) throw NumericalError("smeared sweep has no points", kInf);
                    c.value = std::abs(rep.terminal_beta() - bp) / std::abs(bp);
                    c.pass = c.value < c.threshold;
                    c.detail = "beta_hat smeared=" + num(rep.terminal_beta()) + " pointlike=" + num(bp) +
                               " at T=" + num(T);
                } catch (const Error& e) {
                    c.value = kInf;
                    c.detail = std::string("error: ") + e.what();
                    out.failures.push_back("smearing_shift: " + std::string(e.what()));
                }
                add(c);
            }
    }
    if (ck.validity) {
        const geometry::Vec3 acc{fam.motion == correlators::Motion::Rindler ? fam.a : 0.0, 0.0, 0.0};
        const auto m = thermometry::smearing_moments(smearing_profile(cfg), acc);
        const auto v = thermometry::validity_bounds(m, acc, {}, ck.validity_threshold);
        add({"validity", "profile " + cfg.smearing.profile, v.dipole_value, ck.validity_threshold, v.pass(),
             "adx=" + num(v.adx) + " quadrupole=" + num(v.quadrupole_value) + "; " + v.note});
    }
    for (const auto& b : ck.si_boundaries) {
        const double a_nat = thermometry::acceleration_si_to_inverse_length(b.acceleration_si);
        const geometry::Vec3 acc{a_nat, 0.0, 0.0};
        const auto m = thermometry::smearing_moments(detector::pointlike_profile({b.offset_m, 0.0, 0.0}), acc);
        const auto v = thermometry::validity_bounds(m, acc, {}, ck.validity_threshold);
        const bool verdict_pass = v.pass();
        add({"si_boundary", "a=" + num(b.acceleration_si) + " m/s^2 X0=" + num(b.offset_m) + " m", v.adx,
             ck.validity_threshold, verdict_pass == (b.expect == "pass"),
             std::string("bound ") + (verdict_pass ? "pass" : "fail") + " (expected " + b.expect +
                 ") aX0=" + num(a_nat * b.offset_m) +
                 " T_Unruh=" + num(thermometry::unruh_temperature(b.acceleration_si, thermometry::Units::SI)) + " K"});
    }

    {
        auto os = open("residuals.tsv");
        os << "# scenario: " << cfg.name << "\ncheck\tsubject\tvalue\tthreshold\tpass\n";
        for (const auto& c : out.checks)
            os << c.name << '\t' << c.subject << '\t' << num(c.value) << '\t' << num(c.threshold) << '\t'
               << (c.pass ? "yes" : "no") << '\n';
    }

    // Spectrum and kernel samples of the first preset's w_in.
    const auto& w0 = effective[cfg.detector.mu_presets.front()].w_in;
    {
        const double scale = std::isfinite(beta_nominal) ? beta_nominal : kTwoPi;
        std::vector<double> grid = thermometry::default_omega_grid(scale);
        auto t = tables::spectrum_table(w0, grid, correlators::FourierMethod::Auto);
        t.units = "natural (hbar = c = k_B = 1)";
        auto os = open("spectrum.tsv");
        tables::write_table(os, t, prec);
    }
    {
        auto t = tables::kernel_table(w0, thermometry::default_tau_grid(-5.0, 5.0, 200), 1e-4 * cfg.sweep.T.front());
        t.units = "natural (hbar = c = k_B = 1)";
        auto os = open("kernel.tsv");
        tables::write_table(os, t, prec);
    }

    bool all_pass = true;
    for (const auto& c : out.checks) all_pass = all_pass && c.pass;
    out.exit_code = !out.failures.empty() ? kExitNumerical : (all_pass ? kExitOk : kExitVerdict);

    {
        auto os = open("verdict.txt");
        os << "scenario: " << cfg.name << "\n";
        os << "kernel: " << cfg.kernel.family << " operator=" << cfg.kernel.op
           << " beta_nominal=" << num(beta_nominal) << "\n";
        if (fam.motion == correlators::Motion::Rindler) {
            os << "unruh_temperature: " << num(thermometry::unruh_temperature(fam.a)) << " (natural)";
            if (cfg.units.system == "SI")
                os << ", " << num(thermometry::unruh_temperature(cfg.kernel.a, thermometry::Units::SI)) << " K";
            os << "\n";
        }
        for (const auto& c : out.checks)
            os << (c.pass ? "PASS " : "FAIL ") << c.name << " [" << c.subject << "] value=" << num(c.value)
               << " threshold=" << num(c.threshold) << " " << c.detail << "\n";
        for (const auto& f : out.failures) os << "NUMERICAL " << f << "\n";
        os << "overall: " << (out.exit_code == kExitOk ? "PASS" : out.exit_code == kExitVerdict ? "FAIL" : "ERROR")
           << "\n";
    }
    {
        json m;
        m["scenario"] = cfg.name;
        m["config_hash"] = fnv1a_hex(to_json(cfg).dump());
        m["library_version"] = kLibraryVersion;
        m["timestamp"] = detail::utc_timestamp();
        m["exit_code"] = out.exit_code;
        auto files = out.files;
        files.push_back("manifest.json");
        m["files"] = files;
        std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
        os << m.dump(2) << "\n";
        out.files.push_back("manifest.json");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plot data

namespace detail {

struct TextTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& n) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == n) return static_cast<int>(j);
        throw ValidationError("results table lacks column '" + n + "'");
    }
};

inline TextTable read_text_table(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw ValidationError("cannot open results file '" + p.string() + "'");
    TextTable t;
    for (std::string line; std::getline(is, line);) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
        if (t.header.empty()) t.header = f;
        else t.rows.push_back(f);
    }
    return t;
}

}  // namespace detail

/// Writes a plot-ready (x, y[, y2]) series for kind = sweep | spectrum | kernel.
inline void emit_plotdata(const std::filesystem::path& results_dir, const std::string& kind, std::ostream& os) {
    if (kind == "sweep") {
        const auto t = detail::read_text_table(results_dir / "edr_sweep.tsv");
        const int cp = t.col("mu_preset"), co = t.col("omega"), cr = t.col("route"), cT = t.col("T"),
                  cb = t.col("beta_hat"), ce = t.col("abs_error");
        os << "# x: T (interaction duration, natural units)\n# y: beta_hat\n# y2: |beta_hat - beta_nominal|\n";
        std::string series;
        for (const auto& r : t.rows) {
            const std::string s = r[cp] + " omega=" + r[co] + " route=" + r[cr];
            if (s != series) {
                os << "# series: " << s << "\n";
                series = s;
            }
            os << r[cT] << '\t' << r[cb] << '\t' << r[ce] << '\n';
        }
    } else if (kind == "spectrum" || kind == "kernel") {
        const bool sp = kind == "spectrum";
        std::ifstream is(results_dir / (sp ? "spectrum.tsv" : "kernel.tsv"));
        if (!is) throw ValidationError("cannot open results file in '" + results_dir.string() + "'");
        const auto t = tables::read_table(is);
        const int cx = t.column(sp ? "omega" : "dtau"), cy = t.column(sp ? "re_wtilde" : "re_w"),
                  cz = t.column(sp ? "im_wtilde" : "im_w");
        if (cx < 0 || cy < 0 || cz < 0) throw ValidationError("results table has unexpected columns");
        os << (sp ? "# x: omega (natural units)\n# y: Re w~(omega)\n# y2: Im w~(omega)\n"
                  : "# x: dtau (natural units)\n# y: Re w(dtau)\n# y2: Im w(dtau)\n");
        os.precision(12);
        for (const auto& r : t.rows) os << r[cx] << '\t' << r[cy] << '\t' << r[cz] << '\n';
    } else {
        throw UsageError("plotdata: unknown kind '" + kind + "' (expected sweep, spectrum or kernel)");
    }
}

/// Kernel catalog entries for listing.
inline std::vector<std::pair<std::string, std::string>> kernel_catalog() {
    return {{"vacuum_inertial", "Minkowski vacuum on an inertial worldline, no finite temperature"},
            {"vacuum_accelerated", "Minkowski vacuum on a uniformly accelerated worldline (a), KMS at beta = 2 pi / a"},
            {"thermal_inertial", "thermal state seen by an inertial worldline (beta), resummed image sum"},
            {"operator: hermitian_scalar", "O = phi"},
            {"operator: complex_scalar", "O = phi_1 + i phi_2, non-Hermitian"},
            {"operator: derivative", "O = n.grad(phi), n = kernel.direction in the FW frame"}};
}

}  // namespace kmsprobe::scenario
