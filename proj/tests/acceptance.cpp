// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <pose/sim.hpp>
#include <pose/suites.hpp>

#include "oracles.hpp"

using namespace pose;

namespace {

int failures = 0;

void report(int k, bool ok, const std::string& detail)
{
    std::cout << "criterion " << k << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(double v, int prec = 4)
{
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

bool fig3()
{
    const auto d = sim::fig3_fixture(1);
    bool ok = true;
    std::string detail;
    for (double g : {0.0, 2.0, 10.0}) {
        PathConfig c;
        c.gamma = Gamma{g};
        const auto path = fit_path(d, Family::gaussian, c);
        const auto t = information_criteria(path).aicc_index;
        if (t == no_segment) return report(1, false, "no AICc selection"), false;
        const auto b = path.dense_beta(t);
        ok = ok && std::abs(b[0] - 3.0) < 0.3 && std::abs(b[1] + 1.0) < 0.3 && std::abs(b[2]) < 0.3;
        detail += "gamma=" + fmt(g) + " beta=(" + fmt(b[0]) + "," + fmt(b[1]) + "," + fmt(b[2]) + ") ";
    }
    report(1, ok, detail);
    return ok;
}

void kkt()
{
    // every converged segment of a battery of fits; columns with zero
    // penalty are held to the same bound scaled by the largest penalty
    double worst = 0.0;
    index_t segments = 0, fits = 0;
    std::mt19937_64 rng(2024);
    for (bool binomial : {false, true})
        for (double sparsity : {0.0, 0.6})
            for (double g : {0.0, 2.0, 10.0})
                for (bool with_free : {false, true}) {
                    auto d = oracle::random_dataset(rng, 300, 40, binomial, sparsity);
                    if (with_free) {
                        std::vector<Column> cols;
                        for (index_t j = 0; j < d.p(); ++j) cols.push_back(d.column(j));
                        d = Dataset(std::move(cols), std::vector<double>(d.y().begin(), d.y().end()), d.family(), {0, 3});
                    }
                    const auto fam = binomial ? Family::binomial : Family::gaussian;
                    PathConfig c;
                    c.gamma = Gamma{g};
                    const auto path = fit_path(d, fam, c);
                    ++fits;
                    for (const auto& s : path.segments) {
                        if (!s.converged) continue;
                        ++segments;
                        const auto b = path.dense_beta(s.t);
                        const auto rep = kkt_check(d, fam, s.alpha, b, s.lambda, s.omega);
                        double maxpen = 0.0;
                        for (double w : s.omega) maxpen = std::max(maxpen, double(d.n()) * s.lambda * w);
                        for (index_t j = 0; j < d.p(); ++j) {
                            const double pen = double(d.n()) * s.lambda * s.omega[j];
                            worst = std::max(worst, rep.slack[j] / (pen > 0.0 ? pen : maxpen));
                        }
                    }
                }
    report(2, worst < 1e-4 && segments > 0,
           std::to_string(fits) + " fits, " + std::to_string(segments) + " converged segments, worst slack/(n lambda omega) " +
               fmt(worst, 3));
}

void lasso_reference()
{
    double worst = 0.0;
    std::mt19937_64 rng(77);
    for (int k = 0; k < 20; ++k) {
        const auto d = oracle::random_dataset(rng, 200, 50, false, k % 2 ? 0.5 : 0.0);
        PathConfig c;
        c.thresh = 1e-14;
        const auto path = fit_path(d, Family::gaussian, c);
        const auto X = oracle::dense_x(d);
        const auto y = oracle::dense_y(d);
        for (const auto& s : path.segments) {
            const auto ref = oracle::full_cycle_gaussian(X, y, s.lambda,
                                                         Eigen::Map<const Eigen::VectorXd>(s.omega.data(), 50), 1e-10);
            const auto b = path.dense_beta(s.t);
            worst = std::max(worst, std::abs(s.alpha - ref.alpha));
            for (index_t j = 0; j < 50; ++j) worst = std::max(worst, std::abs(b[j] - ref.beta(Eigen::Index(j))));
        }
    }
    report(3, worst <= 1e-6, "20 instances n=200 p=50, max abs difference " + fmt(worst, 3));
}

void df_limits()
{
    std::mt19937_64 rng(5);
    bool lasso_ok = true;
    index_t checked = 0;
    for (int k = 0; k < 5; ++k) {
        const auto d = oracle::random_dataset(rng, 200, 30, false, 0.3);
        const auto path = fit_path(d, Family::gaussian, PathConfig{});
        for (const auto& s : path.segments)
            if (s.converged) {
                ++checked;
                lasso_ok = lasso_ok && s.df == double(s.support + 1);
            }
    }
    const auto d = oracle::random_dataset(rng, 500, 10, false);
    PathConfig c;
    c.gamma = Gamma{1e6};
    const auto path = fit_path(d, Family::gaussian, c);
    double dev = 0.0;
    for (const auto& s : path.segments)
        if (s.converged) dev = std::max(dev, std::abs(s.df - double(d.p() + 1)));
    report(4, lasso_ok && dev < 0.01,
           "gamma=0 df==support+1 on " + std::to_string(checked) + " segments: " + (lasso_ok ? "yes" : "no") +
               "; gamma=1e6 n=500 p=10 max |df-(p+1)| " + fmt(dev, 3));
}

void table_cells()
{
    sim::SimConfig c;
    c.reps = 20;
    c.seed = 1;
    c.adaptive_lasso = false;
    c.selectors = {"CV.min", "CV.1se", "AICc"};
    c.timing = true;
    c.threads = std::max(1u, std::thread::hardware_concurrency());
    const auto res = sim::run_experiment(c);
    auto cell = [&](double g, const std::string& sel) {
        for (const auto& a : res.aggregates)
            if (a.method == "gl" && a.gamma == g && a.selector == sel) return a;
        return sim::Aggregate{};
    };
    double slowest = 0.0;
    for (double s : res.path_seconds) slowest = std::max(slowest, s);
    const auto g2min = cell(2, "CV.min"), g2aicc = cell(2, "AICc"), g0min = cell(0, "CV.min");
    const bool r2ok = std::abs(g2min.r2_mean - 0.73) <= 0.03 && std::abs(g2aicc.r2_mean - 0.73) <= 0.03 &&
                      std::abs(g0min.r2_mean - 0.72) <= 0.03;
    report(5, r2ok && slowest <= 10.0 && res.failed_reps == 0,
           "R2 gamma=2 CV.min " + fmt(g2min.r2_mean) + ", gamma=2 AICc " + fmt(g2aicc.r2_mean) + " (target 0.73); lasso CV.min " +
               fmt(g0min.r2_mean) + " (target 0.72); slowest path " + fmt(slowest, 3) + "s over " +
               std::to_string(res.path_seconds.size()) + " paths");

    const std::array<double, 3> gs{0, 2, 10}, fdr_target{0.58, 0.37, 0.12}, sens_target{0.75, 0.67, 0.55};
    bool ok = true;
    std::string detail;
    double prev = 2.0;
    for (int k = 0; k < 3; ++k) {
        const auto a = cell(gs[k], "CV.1se");
        ok = ok && std::abs(a.fdr_mean - fdr_target[k]) <= 0.10 && std::abs(a.sens_mean - sens_target[k]) <= 0.10 &&
             a.fdr_mean < prev;
        prev = a.fdr_mean;
        detail += "gamma=" + fmt(gs[k]) + " FDR " + fmt(a.fdr_mean, 3) + " (" + fmt(fdr_target[k]) + ") sens " +
                  fmt(a.sens_mean, 3) + " (" + fmt(sens_target[k]) + "); ";
    }
    report(6, ok, detail);
}

// Opt-in (POSE_ACCEPTANCE_EXPONENTIAL=1): same cells with beta_j = exp(-j/50).
void exponential_variant()
{
    sim::SimConfig c;
    c.reps = 20;
    c.seed = 1;
    c.adaptive_lasso = false;
    c.selectors = {"CV.min", "CV.1se", "AICc"};
    c.exponential_coefficients = true;
    c.threads = std::max(1u, std::thread::hardware_concurrency());
    for (const auto& a : sim::run_experiment(c).aggregates)
        std::cout << "info: exponential coefficients, gamma=" << fmt(a.gamma) << " " << a.selector << " R2 " << fmt(a.r2_mean)
                  << " FDR " << fmt(a.fdr_mean, 3) << " sens " << fmt(a.sens_mean, 3) << std::endl;
}

void theory()
{
    const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    bool ok = true;
    std::string detail;
    for (const auto& [name, count] : std::vector<std::pair<std::string, index_t>>{
             {"lemma1", 1000}, {"theorem1", 100}, {"sign_recovery", 100}, {"false_discovery", 100}, {"prop1", 100}}) {
        const auto r = verify::run_suite(name, count, 7, threads);
        ok = ok && r.violations == 0;
        if (name == "theorem1") ok = ok && double(r.inconclusive) < 0.2 * double(r.instances);
        detail += name + " " + std::to_string(r.confirmed) + "/" + std::to_string(r.instances) + " confirmed, " +
                  std::to_string(r.inconclusive) + " inconclusive, " + std::to_string(r.violations) + " violations; ";
    }
    report(7, ok, detail);
}

void aicc()
{
    const double a = aicc_value(100.0, 24.0, 100);
    const double gap = aicc_value(50.0, 10.0, 1000000) - aic_value(50.0, 10.0);
    report(8, a == 164.0 && gap < 0.01, "AICc(100, 24, 100) = " + fmt(a, 17) + ", AICc-AIC at n=1e6 df=10: " + fmt(gap, 3));
}

std::string capture(const std::string& args, int& code)
{
    const std::string cmd = std::string(POSE_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        code = -1;
        return {};
    }
    std::string out;
    std::array<char, 4096> buf;
    std::size_t got;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), got);
    const int status = pclose(pipe);
    code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

void determinism()
{
    const std::string csv = "/tmp/pose_acceptance_fig3_" + std::to_string(::getpid()) + ".csv";
    int code = 0;
    capture("simulate --fixture fig3 --seed 11 --n 300 --out " + csv, code);
    const std::vector<std::string> commands{
        "fit --data " + csv + " --response y --gamma 2",
        "cv --data " + csv + " --response y --gamma 10 --folds 5 --seed 3",
        "simulate --reps 3 --n 80 --p 40 --seed 4",
        "verify --suite all --instances 20 --seed 5",
        "oracle --nested --sigma2 1 --data " + csv + " --response y",
        "simulate --fixture fig3 --seed 6 --n 50",
    };
    bool ok = true;
    std::string detail;
    for (const auto& cmd : commands) {
        int c1 = 0, c2 = 0, c3 = 0;
        const auto a = capture(cmd + " --threads 1", c1);
        const auto b = capture(cmd + " --threads 1", c2);
        const auto t = capture(cmd + " --threads 3", c3);
        const bool same = !a.empty() && a == b && a == t && c1 == 0 && c2 == 0 && c3 == 0;
        ok = ok && same;
        detail += cmd.substr(0, cmd.find(' ')) + (same ? " ok; " : " DIFFERS; ");
    }
    std::remove(csv.c_str());
    report(9, ok, detail);
}

} // namespace

int main()
{
    fig3();
    kkt();
    lasso_reference();
    df_limits();
    table_cells();
    theory();
    aicc();
    determinism();
    if (const char* e = std::getenv("POSE_ACCEPTANCE_EXPONENTIAL"); e && std::string(e) == "1") exponential_variant();
    std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failures ? 1 : 0;
}
