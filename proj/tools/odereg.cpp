#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odereg/errors.hpp"
#include "odereg/estimator.hpp"
#include "odereg/inference.hpp"
#include "odereg/io.hpp"
#include "odereg/mc_study.hpp"
#include "odereg/mean_ode.hpp"
#include "odereg/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace odereg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

// ---- config file -----------------------------------------------------------

// `key = value` lines become `--key value` arguments placed ahead of the
// command line, so explicit flags win.
std::vector<std::string> config_arguments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r\"");
            const auto e = s.find_last_not_of(" \t\r\"");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw UsageError(path + ":" + std::to_string(lineno) + ": empty key or value");
        if (key == "config") throw UsageError(path + ": config files cannot include other config files");
        out.push_back("--" + key);
        out.push_back(value);
    }
    return out;
}

std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t k = 0; k < args.size(); ++k) {
        std::string path;
        std::size_t width = 1;
        if (args[k] == "--config") {
            if (k + 1 >= args.size()) throw UsageError("--config needs a file name");
            path = args[k + 1];
            width = 2;
        } else if (args[k].rfind("--config=", 0) == 0) {
            path = args[k].substr(9);
        } else {
            continue;
        }
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(k), args.begin() + static_cast<std::ptrdiff_t>(k + width));
        // Insert right after the subcommand name.
        std::size_t at = 0;
        while (at < args.size() && !args[at].empty() && args[at][0] == '-') ++at;
        at = std::min(at + 1, args.size());
        const std::vector<std::string> extra = config_arguments(path);
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
        break;
    }
    return args;
}

// ---- model flags -----------------------------------------------------------

struct ModelFlags {
    std::string variant;
    std::size_t order_gamma = 4;
    std::size_t order_g = 4;
    std::string knot_rule;
    double knot_exponent = 0.2;
    std::string t0;
    std::string known_q;

    CLI::Option* variant_opt = nullptr;
    CLI::Option* order_gamma_opt = nullptr;
    CLI::Option* order_g_opt = nullptr;
    CLI::Option* knot_rule_opt = nullptr;
    CLI::Option* knot_exponent_opt = nullptr;
    CLI::Option* t0_opt = nullptr;
    CLI::Option* known_q_opt = nullptr;

    void add(CLI::App* app) {
        variant_opt = app->add_option("--variant", variant, "cox | am | lt | flex")
                          ->check(CLI::IsMember({"cox", "am", "lt", "flex"}));
        order_gamma_opt = app->add_option("--order-gamma", order_gamma, "B-spline order for log alpha")
                              ->check(CLI::Range(1, 10));
        order_g_opt = app->add_option("--order-g", order_g, "B-spline order for log q")->check(CLI::Range(1, 10));
        knot_rule_opt = app->add_option("--knot-rule", knot_rule, "equal | quantile")
                            ->check(CLI::IsMember({"equal", "quantile"}));
        knot_exponent_opt = app->add_option("--knot-exponent", knot_exponent, "interior knots = ceil(N^e)")
                                ->check(CLI::Range(0.0, 0.5));
        t0_opt = app->add_option("--t0", t0, "anchor alpha(t0) = 1: median | <time>");
        known_q_opt = app->add_option("--known-q", known_q, "q for the lt variant: const | rational:s,c");
    }

    bool given(const CLI::Option* o) const { return o && o->count() > 0; }

    ModelSpec apply(ModelSpec base) const {
        if (given(variant_opt)) {
            const Variant v = parse_variant(variant);
            if (v != base.variant) base = ModelSpec::for_variant(v);
        }
        const Variant v = base.variant;
        const std::string name = to_string(v);
        if (given(order_g_opt) && (v == Variant::Cox || v == Variant::LT))
            throw UsageError("--order-g conflicts with --variant " + name + " (q is not estimated)");
        if (given(order_gamma_opt) && v == Variant::AM)
            throw UsageError("--order-gamma conflicts with --variant am (alpha is not estimated)");
        if (given(known_q_opt) && v != Variant::LT)
            throw UsageError("--known-q only applies to --variant lt");
        if (given(t0_opt) && v != Variant::Flex)
            throw UsageError("--t0 only applies to --variant flex");

        if (given(order_gamma_opt)) base.gamma_config.order = order_gamma;
        if (given(order_g_opt)) base.g_config.order = order_g;
        if (given(knot_rule_opt)) {
            const KnotRule r = knot_rule == "equal" ? KnotRule::Equal : KnotRule::Quantile;
            base.gamma_config.rule = r;
            base.g_config.rule = r;
        }
        if (given(knot_exponent_opt)) {
            if (!(knot_exponent > 0.0 && knot_exponent < 0.5)) throw UsageError("--knot-exponent must be in (0, 0.5)");
            base.gamma_config.exponent = knot_exponent;
            base.g_config.exponent = knot_exponent;
        }
        if (given(known_q_opt)) base.known_g = parse_known_q(known_q);
        if (given(t0_opt)) {
            if (t0 == "median") {
                base.t0.reset();
                base.anchor_at_median = true;
            } else {
                double value = 0.0;
                std::istringstream is(t0);
                if (!(is >> value) || !is.eof() || !(value > 0.0))
                    throw UsageError("--t0 expects 'median' or a positive time, got '" + t0 + "'");
                base.t0 = value;
                base.anchor_at_median = false;
            }
        }
        if (v == Variant::LT && !base.known_g) throw UsageError("--variant lt needs --known-q");
        return base;
    }
};

// ---- shared helpers ----------------------------------------------------------

json read_report(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("report '" + path + "' is not valid JSON: " + e.what());
    }
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::MatrixXd m(rows, rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = j.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != rows) throw ValidationError("report: covariance is not square");
        for (Eigen::Index c = 0; c < rows; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

void check_covariates(const Dataset& data, const Model& model) {
    if (data.num_covariates != model.num_covariates)
        throw ValidationError("data have " + std::to_string(data.num_covariates) + " covariates but the model has " +
                              std::to_string(model.num_covariates));
}

void print_fit(const FitResult& res) {
    const Parameterization param(res.model);
    const Eigen::VectorXd free = param.to_free(res.theta_hat);
    const auto names = param.free_names();
    std::cout << "variant " << to_string(res.model.variant) << ", loglik " << format_double(res.loglik) << ", "
              << res.message << " (|grad| " << res.gradient_norm << ", " << res.outer_iterations << " sweeps)\n";
    for (std::size_t k = 0; k < param.beta_free(); ++k)
        std::cout << "  " << std::left << std::setw(8) << names[k] << std::setprecision(6)
                  << free[static_cast<Eigen::Index>(k)] << "\n";
}

// ---- commands ----------------------------------------------------------------

struct FitCmd {
    ModelFlags model;
    std::string data;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::size_t max_outer = 200;

    int run() const {
        const ModelSpec spec = model.apply(ModelSpec::for_variant(parse_variant(model.variant.empty() ? "cox" : model.variant)));
        const Dataset ds = read_events_csv(data);
        FitOptions opt;
        opt.seed = seed;
        opt.max_outer = max_outer;
        const FitResult res = fit(ds, spec, opt);
        json report = fit_to_json(res);
        report["data"] = {{"path", data}, {"subjects", ds.size()}, {"events", ds.total_events()}};
        report["seed"] = seed;
        const std::string path = join(out, "fit.json");
        write_file_atomic(path, report.dump(2) + "\n");
        print_fit(res);
        std::cout << "wrote " << path << "\n";
        return res.converged ? kExitOk : kExitSolver;
    }
};

struct InferCmd {
    std::string report;
    std::string data;
    std::string out;
    std::string cov = "info";
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    double level = 0.95;
    CLI::Option* resamples_opt = nullptr;

    int run() const {
        const CovMethod method = parse_cov_method(cov);
        if (method == CovMethod::Information && resamples_opt->count() > 0)
            throw UsageError("--resamples needs --cov resample");
        json j = read_report(report);
        Model m;
        ParamVector theta;
        fit_from_json(j, m, theta);
        const Dataset ds = read_events_csv(data);
        check_covariates(ds, m);
        const std::size_t b = resamples > 0 ? resamples : default_resamples(m.variant);
        const CovarianceEstimate est = estimate_covariance(ds, m, theta, method, b, seed);
        j["inference"] = covariance_to_json(m, theta, est, level);
        const std::string path = out.empty() ? report : join(out, "fit.json");
        write_file_atomic(path, j.dump(2) + "\n");

        std::cout << std::left << std::setprecision(6) << std::setw(8) << "coef" << std::setw(14) << "estimate"
                  << std::setw(14) << "se" << std::setw(14) << "z" << "p\n";
        const auto rows = coefficient_table(m, theta, est, level);
        const std::size_t nb = Parameterization(m).beta_free();
        for (std::size_t k = 0; k < nb; ++k) {
            const auto& r = rows[k];
            std::cout << std::setw(8) << r.name << std::setw(14) << r.estimate << std::setw(14) << r.se
                      << std::setw(14) << r.z << r.p_value << "\n";
        }
        std::cout << "wrote " << path << "\n";
        return kExitOk;
    }
};

struct CurvesCmd {
    std::string report;
    std::string data;
    std::string out = ".";
    std::size_t points = 200;
    double level = 0.95;
    double alpha_ref = 0.0;
    CLI::Option* alpha_ref_opt = nullptr;

    int run() const {
        const json j = read_report(report);
        Model m;
        ParamVector theta;
        fit_from_json(j, m, theta);
        const Dataset ds = read_events_csv(data);
        check_covariates(ds, m);

        CovarianceEstimate cov;
        if (j.contains("inference")) {
            try {
                cov.sigma = matrix_from_json(j.at("inference").at("sigma"));
            } catch (const json::exception& e) {
                throw ValidationError(std::string("report: malformed inference section: ") + e.what());
            }
            if (static_cast<std::size_t>(cov.sigma.rows()) != Parameterization(m).free_dim())
                throw ValidationError("report: covariance does not match the model");
        } else {
            cov = empirical_information(ds, m, theta);
        }

        double shift = 0.0;
        if (alpha_ref_opt->count() > 0) {
            if (!m.t0) throw UsageError("--alpha-ref needs a model anchored at t0 (flex variant)");
            if (!(alpha_ref > 0.0)) throw UsageError("--alpha-ref must be positive");
            shift = std::log(alpha_ref) - m.gamma.value(theta.a, *m.t0);
        }

        std::vector<std::string> written;
        {
            const double hi = m.gamma.is_spline() ? m.gamma.basis().upper() : ds.max_time();
            const double lo = m.gamma.is_spline() ? m.gamma.basis().lower() : 0.0;
            const CurveBand band = curve_band(m, theta, cov, CurveKind::Alpha, lo, hi, points, level, shift);
            written.push_back(join(out, "alpha.csv"));
            write_file_atomic(written.back(), curve_csv(band, "t", "alpha_hat"));
        }
        {
            double lo = 0.0;
            double hi = 0.0;
            if (m.g.is_spline()) {
                lo = m.g.basis().lower();
                hi = m.g.basis().upper();
            } else {
                for (const MeanPath& p : mean_paths(ds, m, theta, false)) hi = std::max(hi, p.mu.back());
            }
            if (!(hi > lo)) throw ValidationError("fitted mean range is empty; no q curve to draw");
            const CurveBand band = curve_band(m, theta, cov, CurveKind::Q, lo, hi, points, level, -shift);
            written.push_back(join(out, "q.csv"));
            write_file_atomic(written.back(), curve_csv(band, "u", "q_hat"));
        }
        for (const auto& w : written) std::cout << "wrote " << w << "\n";
        return kExitOk;
    }
};

struct SimulateCmd {
    int setting = 1;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    std::string out = ".";

    int run() const {
        const TrueModel truth = setting_catalog(setting);
        const Dataset ds = simulate_dataset(truth, n, seed);
        const std::string path = join(out, "events.csv");
        write_file_atomic(path, events_csv(ds));
        json meta = {{"setting", setting},
                     {"n", n},
                     {"seed", seed},
                     {"events", ds.total_events()},
                     {"beta", std::vector<double>(truth.beta.data(), truth.beta.data() + truth.beta.size())},
                     {"frailty", truth.frailty},
                     {"description", truth.description},
                     {"recommended_variant", to_string(truth.fit_spec.variant)}};
        if (truth.t0) meta["t0"] = *truth.t0;
        write_file_atomic(join(out, "truth.json"), meta.dump(2) + "\n");
        std::cout << "setting " << setting << ": " << n << " subjects, " << ds.total_events() << " events\nwrote "
                  << path << "\n";
        return kExitOk;
    }
};

struct McCmd {
    ModelFlags model;
    int setting = 1;
    std::size_t n = 1000;
    std::size_t reps = 200;
    std::string cov = "info";
    std::size_t resamples = 0;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::size_t curve_points = 0;
    std::string out = ".";
    CLI::Option* resamples_opt = nullptr;

    int run() const {
        McOptions o;
        o.setting = setting;
        o.n = n;
        o.reps = reps;
        o.spec = model.apply(setting_catalog(setting).fit_spec);
        o.cov = parse_cov_method(cov);
        if (o.cov == CovMethod::Information && resamples_opt->count() > 0)
            throw UsageError("--resamples needs --cov resample");
        o.resamples = resamples;
        o.seed = seed;
        o.ci_level = level;
        o.curve_points = curve_points;
        const McSummary s = mc_study(o);

        const std::string table = join(out, "mc_table.csv");
        write_file_atomic(table, mc_table_csv(s));
        std::string reps_csv = "replicate,ok,converged,seconds";
        const auto d = static_cast<Eigen::Index>(setting_catalog(setting).beta.size());
        for (Eigen::Index k = 1; k <= d; ++k)
            reps_csv += ",beta" + std::to_string(k) + ",se_beta" + std::to_string(k);
        reps_csv += ",error\n";
        for (const auto& r : s.replicates) {
            reps_csv += std::to_string(r.index) + "," + (r.ok ? "1" : "0") + "," + (r.converged ? "1" : "0") + "," +
                        format_double(r.seconds);
            for (Eigen::Index k = 0; k < d; ++k) {
                const bool have = r.ok && k < r.beta.size() && k < r.se.size();
                reps_csv += "," + (have ? format_double(r.beta[k]) : std::string()) + "," +
                            (have ? format_double(r.se[k]) : std::string());
            }
            std::string err = r.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            reps_csv += "," + err + "\n";
        }
        write_file_atomic(join(out, "mc_replicates.csv"), reps_csv);
        for (const auto& c : s.curves) write_file_atomic(join(out, "mc_" + c.kind + ".csv"), mc_curves_csv(c));

        std::cout << "setting " << setting << ", n " << n << ", " << s.reps << " replicates (" << s.failed
                  << " failed, " << s.unconverged << " unconverged), " << std::setprecision(3) << s.mean_seconds
                  << " s per fit\n";
        std::cout << std::left << std::setw(8) << "coef" << std::setw(12) << "bias" << std::setw(12) << "se"
                  << std::setw(12) << "ese" << "cp\n"
                  << std::setprecision(4);
        for (const auto& r : s.rows)
            std::cout << std::setw(8) << r.name << std::setw(12) << r.bias << std::setw(12) << r.se << std::setw(12)
                      << r.ese << r.cp << "\n";
        std::cout << "wrote " << table << "\n";
        const bool usable = std::any_of(s.rows.begin(), s.rows.end(), [](const McRow& r) { return r.used > 0; });
        return usable ? kExitOk : kExitSolver;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrent-event regression with ODE-modeled conditional means"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_help_all_flag("--help-all", "Expand all help");
    app.footer("Options may also be read from --config FILE (key = value lines); command-line flags take precedence.");

    FitCmd fit_cmd;
    auto* fit = app.add_subcommand("fit", "Fit a model to an event CSV and write fit.json");
    fit_cmd.model.add(fit);
    fit->add_option("--data", fit_cmd.data, "event CSV: subject_id,time,status,x1..xd")->required();
    fit->add_option("--out", fit_cmd.out, "output directory");
    fit->add_option("--seed", fit_cmd.seed, "seed for the random start");
    fit->add_option("--max-outer", fit_cmd.max_outer, "maximum block-ascent sweeps")->check(CLI::PositiveNumber);

    InferCmd infer_cmd;
    auto* infer = app.add_subcommand("infer", "Add covariance, standard errors and tests to a fit report");
    infer->add_option("--report", infer_cmd.report, "fit.json from the fit command")->required();
    infer->add_option("--data", infer_cmd.data, "the event CSV used for the fit")->required();
    infer->add_option("--out", infer_cmd.out, "output directory (default: update the report in place)");
    infer->add_option("--cov", infer_cmd.cov, "info | resample")->check(CLI::IsMember({"info", "resample"}));
    infer_cmd.resamples_opt =
        infer->add_option("--resamples", infer_cmd.resamples, "resampling draws B")->check(CLI::PositiveNumber);
    infer->add_option("--seed", infer_cmd.seed, "seed for the resampling draws");
    infer->add_option("--level", infer_cmd.level, "confidence level")->check(CLI::Range(0.5, 0.9999));

    CurvesCmd curves_cmd;
    auto* curves = app.add_subcommand("curves", "Write alpha and q curves with pointwise bands");
    curves->add_option("--report", curves_cmd.report, "fit.json, optionally with inference")->required();
    curves->add_option("--data", curves_cmd.data, "the event CSV used for the fit")->required();
    curves->add_option("--out", curves_cmd.out, "output directory");
    curves->add_option("--points", curves_cmd.points, "grid size")->check(CLI::Range(2, 100000));
    curves->add_option("--level", curves_cmd.level, "confidence level")->check(CLI::Range(0.5, 0.9999));
    curves_cmd.alpha_ref_opt =
        curves->add_option("--alpha-ref", curves_cmd.alpha_ref, "rescale so that alpha(t0) equals this value");

    SimulateCmd sim_cmd;
    auto* sim = app.add_subcommand("simulate", "Simulate a dataset from one of the built-in settings");
    sim->add_option("--setting", sim_cmd.setting, "setting 1-6")->check(CLI::Range(1, 6));
    sim->add_option("--n", sim_cmd.n, "number of subjects")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_cmd.seed, "root seed");
    sim->add_option("--out", sim_cmd.out, "output directory");

    McCmd mc_cmd;
    auto* mc = app.add_subcommand("mc-study", "Monte Carlo bias / SE / ESE / CP table for a setting");
    mc_cmd.model.add(mc);
    mc->add_option("--setting", mc_cmd.setting, "setting 1-6")->check(CLI::Range(1, 6));
    mc->add_option("--n", mc_cmd.n, "subjects per replicate")->check(CLI::PositiveNumber);
    mc->add_option("--reps", mc_cmd.reps, "replicates")->check(CLI::PositiveNumber);
    mc->add_option("--cov", mc_cmd.cov, "info | resample")->check(CLI::IsMember({"info", "resample"}));
    mc_cmd.resamples_opt =
        mc->add_option("--resamples", mc_cmd.resamples, "resampling draws B")->check(CLI::PositiveNumber);
    mc->add_option("--seed", mc_cmd.seed, "root seed");
    mc->add_option("--level", mc_cmd.level, "confidence level")->check(CLI::Range(0.5, 0.9999));
    mc->add_option("--curve-points", mc_cmd.curve_points, "also summarize fitted curves on this many points");
    mc->add_option("--out", mc_cmd.out, "output directory");

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (fit->parsed()) return fit_cmd.run();
        if (infer->parsed()) return infer_cmd.run();
        if (curves->parsed()) return curves_cmd.run();
        if (sim->parsed()) return sim_cmd.run();
        if (mc->parsed()) return mc_cmd.run();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DegenerateKnotsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const SolverError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const InitializationError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const RankDeficiencyError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
