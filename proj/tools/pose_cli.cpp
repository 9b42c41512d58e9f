// pose: fit, cross-validate, simulate, verify and solve L0 oracles from the
// command line. Structured results go to stdout (or --out) as JSON or CSV;
// diagnostics go to stderr.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <boost/version.hpp>

#include <pose/data.hpp>
#include <pose/path.hpp>
#include <pose/selection.hpp>
#include <pose/sim.hpp>
#include <pose/suites.hpp>
#include <pose/verify.hpp>

using nlohmann::ordered_json;
using namespace pose;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit
{
    ok = 0,
    violation = 1,
    input_error = 2,
    truncated = 3,
};

struct InputFlags
{
    std::string data, response = "y";
    std::string triplets, ypath;
    index_t n = 0, p = 0;
    std::string family = "gaussian";
    std::string free;
};

struct PathFlags
{
    std::string gamma = "0";
    index_t nlambda = 100;
    double lambda_min_ratio = 0.01;
    bool standardize = true;
    bool accelerate = false;
    double thresh = 0.0;
};

struct Common
{
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out;
};

void add_input_flags(CLI::App* cmd, InputFlags& f)
{
    cmd->add_option("--data", f.data, "CSV file with a header row");
    cmd->add_option("--response", f.response, "response column name in --data")->capture_default_str();
    cmd->add_option("--triplets", f.triplets, "sparse design as 'row col value' lines");
    cmd->add_option("--y", f.ypath, "response file for --triplets, one value per line");
    cmd->add_option("--n", f.n, "observations (with --triplets)");
    cmd->add_option("--p", f.p, "covariates (with --triplets)");
    cmd->add_option("--family", f.family, "gaussian or binomial")
        ->check(CLI::IsMember({"gaussian", "binomial"}))
        ->capture_default_str();
    cmd->add_option("--free", f.free, "comma-separated unpenalized columns (names or 0-based indices)");
}

void add_path_flags(CLI::App* cmd, PathFlags& f)
{
    cmd->add_option("--gamma", f.gamma, "penalty scale: 0 is the lasso, 'inf' is subset selection")
        ->capture_default_str();
    cmd->add_option("--nlambda", f.nlambda, "path segments")->capture_default_str();
    cmd->add_option("--lambda-min-ratio", f.lambda_min_ratio, "last lambda over first")->capture_default_str();
    cmd->add_option("--standardize", f.standardize, "scale penalties by column sd (true/false)")
        ->capture_default_str();
    cmd->add_flag("--accelerate", f.accelerate, "quasi-Newton acceleration of coordinate descent");
    cmd->add_option("--thresh", f.thresh, "convergence threshold relative to null deviance (default 1e-7)");
}

void add_common_flags(CLI::App* cmd, Common& c, bool seed = true)
{
    if (seed) cmd->add_option("--seed", c.seed, "master seed")->capture_default_str();
    cmd->add_option("--threads", c.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--out", c.out, "output file (default stdout)");
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

double parse_number(const std::string& s, const std::string& what)
{
    if (s == "inf" || s == "Inf" || s == "infinity") return inf;
    auto v = pose::detail::parse_double(s);
    if (!v) throw Error(what + ": '" + s + "' is not a number");
    return *v;
}

// Covariate index of `token` given covariate names (may be empty).
index_t resolve_column(const std::string& token, const std::vector<std::string>& names, index_t p)
{
    auto it = std::find(names.begin(), names.end(), token);
    if (it != names.end()) return index_t(it - names.begin());
    auto v = pose::detail::parse_double(token);
    if (v && *v >= 0 && *v == std::floor(*v) && *v < double(p)) return index_t(*v);
    throw Error("unknown column '" + token + "' in --free");
}

Dataset load(const InputFlags& f)
{
    const auto family = parse_family(f.family);
    if (!f.data.empty() && !f.triplets.empty()) throw Error("give either --data or --triplets, not both");
    if (!f.data.empty()) {
        std::vector<index_t> free;
        if (!f.free.empty()) {
            std::ifstream in(f.data);
            std::string line;
            if (!in || !std::getline(in, line)) throw Error("cannot read header of '" + f.data + "'");
            auto header = pose::detail::split_csv_line(line);
            header.erase(std::remove(header.begin(), header.end(), f.response), header.end());
            for (const auto& tok : split_list(f.free)) free.push_back(resolve_column(tok, header, header.size()));
        }
        return load_csv(f.data, f.response, family, free);
    }
    if (!f.triplets.empty()) {
        if (f.ypath.empty() || f.n == 0 || f.p == 0) throw Error("--triplets needs --y, --n and --p");
        std::vector<index_t> free;
        for (const auto& tok : split_list(f.free)) free.push_back(resolve_column(tok, {}, f.p));
        return load_triplets(f.triplets, f.n, f.p, f.ypath, family, free);
    }
    throw Error("no input: give --data or --triplets");
}

PathConfig path_config(const PathFlags& f)
{
    PathConfig c;
    c.gamma = Gamma{parse_number(f.gamma, "--gamma")};
    c.nlambda = f.nlambda;
    c.lambda_min_ratio = f.lambda_min_ratio;
    c.standardize = f.standardize;
    c.accelerate = f.accelerate;
    if (f.thresh != 0.0) c.thresh = f.thresh;
    return c;
}

ordered_json number_or_string(double v)
{
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

ordered_json input_echo(const InputFlags& f, const Dataset& d)
{
    ordered_json j;
    if (!f.data.empty()) {
        j["data"] = f.data;
        j["response"] = f.response;
    } else {
        j["triplets"] = f.triplets;
        j["y"] = f.ypath;
    }
    j["family"] = f.family;
    j["n"] = d.n();
    j["p"] = d.p();
    j["free"] = std::vector<index_t>(d.free().begin(), d.free().end());
    return j;
}

ordered_json path_echo(const PathConfig& c)
{
    ordered_json j;
    j["gamma"] = number_or_string(c.gamma.value);
    j["nlambda"] = c.nlambda;
    j["lambdaMinRatio"] = c.lambda_min_ratio;
    j["standardize"] = c.standardize;
    j["accelerate"] = c.accelerate;
    j["thresh"] = c.relative_thresh();
    return j;
}

ordered_json segment_json(const PathSegment& s)
{
    ordered_json j;
    j["t"] = s.t;
    j["lambda"] = s.lambda;
    j["alpha"] = s.alpha;
    ordered_json beta = ordered_json::array();
    for (auto [k, v] : s.beta) beta.push_back({k, v});
    j["beta"] = beta;
    j["df"] = s.df;
    j["deviance"] = s.deviance;
    j["support"] = s.support;
    j["converged"] = s.converged;
    return j;
}

ordered_json index_json(index_t t)
{
    return t == no_segment ? ordered_json(nullptr) : ordered_json(t);
}

// Non-finite values serialize as null.
ordered_json array_json(const std::vector<double>& v)
{
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr));
    return a;
}

void emit(const std::string& out, const std::string& text)
{
    if (out.empty()) {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream f(out);
    if (!f) throw Error("cannot write '" + out + "'");
    f << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

void warn_nonconverged(const Path& path)
{
    index_t bad = 0;
    for (const auto& s : path.segments) bad += s.converged ? 0 : 1;
    if (bad) std::cerr << "warning: " << bad << " segment(s) did not converge\n";
    if (path.truncated) std::cerr << "warning: " << path.warning << '\n';
}

int cmd_fit(const InputFlags& in, const PathFlags& pf, const Common& c)
{
    const auto d = load(in);
    const auto cfg = path_config(pf);
    const auto path = fit_path(d, parse_family(in.family), cfg);
    const auto ic = information_criteria(path);
    warn_nonconverged(path);

    ordered_json j;
    j["config"] = input_echo(in, d);
    j["config"].update(path_echo(cfg));
    j["config"]["seed"] = c.seed;
    j["lambda"] = path.lambda;
    j["lambda1"] = path.lambda1;
    j["nullDeviance"] = path.null_deviance;
    j["segments"] = ordered_json::array();
    for (const auto& s : path.segments) j["segments"].push_back(segment_json(s));
    j["truncated"] = path.truncated;
    if (path.truncated) j["warning"] = path.warning;
    j["ic"]["aic"] = array_json(ic.aic);
    j["ic"]["aicc"] = array_json(ic.aicc);
    j["ic"]["bic"] = array_json(ic.bic);
    j["ic"]["selected"] = {{"aic", index_json(ic.aic_index)},
                           {"aicc", index_json(ic.aicc_index)},
                           {"bic", index_json(ic.bic_index)}};
    emit(c.out, dump(j));
    return path.truncated ? truncated : ok;
}

int cmd_cv(const InputFlags& in, const PathFlags& pf, const Common& c, index_t K)
{
    const auto d = load(in);
    const auto cfg = path_config(pf);
    const auto rep = cross_validate(d, parse_family(in.family), cfg, K, c.seed, c.threads);
    warn_nonconverged(rep.full);

    ordered_json j;
    j["config"] = input_echo(in, d);
    j["config"].update(path_echo(cfg));
    j["config"]["folds"] = K;
    j["config"]["seed"] = c.seed;
    std::vector<index_t> sizes(K, 0);
    for (auto f : rep.folds) ++sizes[f];
    j["foldSizes"] = sizes;
    j["lambda"] = rep.lambda;
    j["mean"] = array_json(rep.mean);
    j["se"] = array_json(rep.se);
    j["idxMin"] = index_json(rep.idx_min);
    j["idx1se"] = index_json(rep.idx_1se);
    ordered_json refit = ordered_json::object();
    if (rep.idx_min != no_segment) refit["atMin"] = segment_json(rep.full.segments[rep.idx_min]);
    if (rep.idx_1se != no_segment) refit["at1se"] = segment_json(rep.full.segments[rep.idx_1se]);
    j["refit"] = refit;
    j["truncated"] = rep.full.truncated;
    emit(c.out, dump(j));
    return rep.full.truncated ? truncated : ok;
}

std::string format_double(double v)
{
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

int cmd_simulate(sim::SimConfig cfg,
                 const Common& c,
                 const std::string& gammas,
                 const std::string& selectors,
                 const std::string& fixture,
                 const std::string& summary)
{
    if (!fixture.empty()) {
        if (fixture != "fig3") throw Error("unknown fixture '" + fixture + "'");
        const auto d = sim::fig3_fixture(c.seed, cfg.n);
        if (c.out.empty())
            write_csv(d, std::cout);
        else
            write_csv(d, c.out);
        return ok;
    }
    cfg.seed = c.seed;
    cfg.threads = c.threads;
    cfg.gammas.clear();
    for (const auto& g : split_list(gammas)) cfg.gammas.push_back(parse_number(g, "--gammas"));
    if (!selectors.empty()) cfg.selectors = split_list(selectors);
    const auto res = sim::run_experiment(cfg);

    std::ostringstream csv;
    csv << "rep,method,gamma,selector,r2,fdr,sensitivity,support,seconds\n";
    for (const auto& r : res.rows)
        csv << r.rep << ',' << r.method << ',' << format_double(r.gamma) << ',' << r.selector << ','
            << format_double(r.m.r2) << ',' << format_double(r.m.fdr) << ',' << format_double(r.m.sensitivity)
            << ',' << r.m.support << ',' << format_double(r.seconds) << '\n';
    emit(c.out, csv.str());

    if (!summary.empty()) {
        ordered_json j;
        j["config"] = {{"n", cfg.n},
                       {"p", cfg.p},
                       {"rho", cfg.rho},
                       {"snr", cfg.snr},
                       {"reps", cfg.reps},
                       {"seed", cfg.seed},
                       {"gammas", cfg.gammas},
                       {"selectors", cfg.selectors},
                       {"folds", cfg.K},
                       {"adaptiveLasso", cfg.adaptive_lasso},
                       {"columnMask", cfg.column_mask},
                       {"exponentialCoefficients", cfg.exponential_coefficients},
                       {"nlambda", cfg.nlambda},
                       {"lambdaMinRatio", cfg.lambda_min_ratio}};
        j["failedReps"] = res.failed_reps;
        j["aggregates"] = ordered_json::array();
        for (const auto& a : res.aggregates)
            j["aggregates"].push_back({{"method", a.method},
                                       {"gamma", a.gamma},
                                       {"selector", a.selector},
                                       {"count", a.count},
                                       {"r2", {{"mean", a.r2_mean}, {"se", a.r2_se}}},
                                       {"fdr", {{"mean", a.fdr_mean}, {"se", a.fdr_se}}},
                                       {"sensitivity", {{"mean", a.sens_mean}, {"se", a.sens_se}}},
                                       {"support", a.support_mean}});
        emit(summary, dump(j));
    }
    return res.failed_reps ? violation : ok;
}

int cmd_verify(const std::string& suite, index_t instances, const Common& c)
{
    std::vector<std::string> names;
    if (suite == "all")
        names = verify::suite_names();
    else
        names = split_list(suite);
    for (const auto& s : names)
        if (std::find(verify::suite_names().begin(), verify::suite_names().end(), s) == verify::suite_names().end())
            throw Error("unknown suite '" + s + "'");

    ordered_json j;
    j["config"] = {{"suite", suite}, {"instances", instances}, {"seed", c.seed}};
    j["suites"] = ordered_json::array();
    bool any_violation = false;
    for (const auto& s : names) {
        const index_t count = instances ? instances : (s == "lemma1" ? 1000 : 100);
        const auto r = verify::run_suite(s, count, c.seed, c.threads);
        any_violation = any_violation || r.violations > 0;
        j["suites"].push_back({{"suite", r.suite},
                               {"instances", r.instances},
                               {"confirmed", r.confirmed},
                               {"inconclusive", r.inconclusive},
                               {"violations", r.violations},
                               {"notApplicable", r.not_applicable},
                               {"maxSlack", r.max_slack},
                               {"status", r.violations ? "fail" : (r.inconclusive ? "pass-with-inconclusive" : "pass")}});
    }
    emit(c.out, dump(j));
    return any_violation ? violation : ok;
}

int cmd_oracle(const InputFlags& in, bool nested, bool exhaustive, double sigma2, double nu, const Common& c)
{
    if (nested == exhaustive) throw Error("give exactly one of --nested or --exhaustive");
    const auto d = load(in);
    verify::Mat X(static_cast<Eigen::Index>(d.n()), static_cast<Eigen::Index>(d.p()));
    for (index_t j = 0; j < d.p(); ++j) {
        const auto col = d.column(j).to_dense();
        for (index_t i = 0; i < d.n(); ++i) X(Eigen::Index(i), Eigen::Index(j)) = col[i];
    }
    const verify::Vec y = Eigen::Map<const verify::Vec>(d.y().data(), Eigen::Index(d.n()));
    ordered_json j;
    j["config"] = input_echo(in, d);
    verify::L0Solution sol;
    if (nested) {
        if (!(sigma2 >= 0.0)) throw Error("--nested needs --sigma2 >= 0");
        j["config"]["method"] = "nested";
        j["config"]["sigma2"] = sigma2;
        sol = verify::l0_nested(X, y, sigma2);
        j["prefix"] = sol.support.size();
        j["cp"] = sol.objective;
    } else {
        if (!(nu >= 0.0)) throw Error("--exhaustive needs --nu >= 0");
        j["config"]["method"] = "exhaustive";
        j["config"]["nu"] = nu;
        sol = verify::l0_exhaustive(X, y, nu);
        j["objective"] = sol.objective;
    }
    j["support"] = sol.support;
    ordered_json coef = ordered_json::array();
    for (auto k : sol.support) coef.push_back({k, sol.beta(Eigen::Index(k))});
    j["coefficients"] = coef;
    j["skipped"] = sol.skipped.size();
    for (auto k : sol.skipped)
        if (nested) std::cerr << "warning: prefix of length " << k << " is rank deficient; skipped\n";
    emit(c.out, dump(j));
    return ok;
}

std::string version_string()
{
    std::ostringstream s;
    s << "pose " << kVersion << " (Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
      << EIGEN_MINOR_VERSION << ", Boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << ", "
#if defined(__clang__)
      << "clang " << __clang_major__ << '.' << __clang_minor__
#elif defined(__GNUC__)
      << "gcc " << __GNUC__ << '.' << __GNUC_MINOR__
#else
      << "unknown compiler"
#endif
      << ")";
    return s.str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gamma-lasso paths, model selection and L0-comparison checks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    InputFlags in;
    PathFlags pf;
    Common common;

    auto* fit = app.add_subcommand("fit", "fit one regularization path and report AIC/AICc/BIC");
    add_input_flags(fit, in);
    add_path_flags(fit, pf);
    add_common_flags(fit, common);

    index_t folds = 5;
    auto* cv = app.add_subcommand("cv", "K-fold cross-validation over the path");
    add_input_flags(cv, in);
    add_path_flags(cv, pf);
    add_common_flags(cv, common);
    cv->add_option("--folds", folds, "number of folds")->capture_default_str();

    sim::SimConfig scfg;
    std::string gammas = "0,2,10", selectors, fixture, summary;
    bool no_al = false;
    auto* simc = app.add_subcommand("simulate", "simulation study, or write a fixture dataset");
    add_common_flags(simc, common);
    simc->add_option("--n", scfg.n, "observations")->capture_default_str();
    simc->add_option("--p", scfg.p, "covariates")->capture_default_str();
    simc->add_option("--rho", scfg.rho, "AR(1) covariate correlation")->capture_default_str();
    simc->add_option("--snr", scfg.snr, "signal-to-noise ratio sd(eta)/sigma")->capture_default_str();
    simc->add_option("--reps", scfg.reps, "replicates")->capture_default_str();
    simc->add_option("--gammas", gammas, "comma-separated gamma values")->capture_default_str();
    simc->add_option("--selectors", selectors, "subset of CV.min,CV.1se,AICc,AIC,BIC (default all)");
    simc->add_option("--folds", scfg.K, "CV folds")->capture_default_str();
    simc->add_option("--nlambda", scfg.nlambda, "path segments")->capture_default_str();
    simc->add_option("--lambda-min-ratio", scfg.lambda_min_ratio, "last lambda over first")->capture_default_str();
    simc->add_flag("--no-adaptive-lasso", no_al, "skip the marginal adaptive-lasso comparator");
    simc->add_flag("--column-mask", scfg.column_mask, "one Bernoulli mask draw per column instead of per element");
    simc->add_flag("--exponential-coefficients", scfg.exponential_coefficients, "true coefficients exp(-j/50) without the 1/j factor");
    simc->add_flag("--timing", scfg.timing, "record wall seconds (makes output run dependent)");
    simc->add_option("--summary", summary, "write aggregate means and standard errors as JSON here");
    simc->add_option("--fixture", fixture, "write a fixture dataset as CSV instead (fig3)");

    std::string suite = "all";
    index_t instances = 0;
    auto* ver = app.add_subcommand("verify", "run the numerical theory suites");
    add_common_flags(ver, common);
    ver->add_option("--suite", suite, "lemma1, theorem1, sign_recovery, false_discovery, prop1 or all")
        ->capture_default_str();
    ver->add_option("--instances", instances, "instances per suite (default 1000 for lemma1, else 100)");

    bool nested = false, exhaustive = false;
    double sigma2 = -1.0, nu = -1.0;
    auto* orc = app.add_subcommand("oracle", "L0-penalized least squares without intercept");
    add_input_flags(orc, in);
    add_common_flags(orc, common);
    orc->add_flag("--nested", nested, "search prefix supports with penalty 2*sigma2 per column");
    orc->add_flag("--exhaustive", exhaustive, "search all supports (p <= 18) with penalty n*nu per column");
    orc->add_option("--sigma2", sigma2, "noise variance for --nested");
    orc->add_option("--nu", nu, "per-column penalty for --exhaustive");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    }

    try {
        if (fit->parsed()) return cmd_fit(in, pf, common);
        if (cv->parsed()) return cmd_cv(in, pf, common, folds);
        if (simc->parsed()) {
            scfg.adaptive_lasso = !no_al;
            return cmd_simulate(scfg, common, gammas, selectors, fixture, summary);
        }
        if (ver->parsed()) return cmd_verify(suite, instances, common);
        if (orc->parsed()) return cmd_oracle(in, nested, exhaustive, sigma2, nu, common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    }
    return input_error;
}
