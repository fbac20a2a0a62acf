// Acceptance checks for the certified reduction pipeline. Each criterion
// prints one PASS/FAIL line with its wall time; the binary exits nonzero if
// any fail. Reference values come from the independent oracles in
// support/oracles.hpp, never from the code paths under test.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "romcert/experiment.hpp"
#include "support/oracles.hpp"

using namespace romcert;

namespace {

struct Family {
    DenseLti sys;
    Matrix a;
    Matrix b;
    PodBasis basis;
    Index n;
    Index p;
    std::uint64_t seed;
};

// 100 dense stable systems spanning state sizes 6..16, reduced sizes 1..4
// and one to three inputs.
std::vector<Family> dense_family() {
    std::vector<Family> out;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Index full = 6 + static_cast<Index>(s % 11);
        const Index n = 1 + static_cast<Index>(s % 4);
        const Index p = 1 + static_cast<Index>(s % 3);
        const oracles::DenseSystem mats = oracles::random_stable_system(s, full, p);
        DenseLti sys(mats.a, mats.b);
        RngStream rng(s, 7);
        const Vector w0 = gaussian_vector(rng, full);
        std::vector<Vector> inputs;
        for (int k = 0; k < 40; ++k) inputs.push_back(gaussian_vector(rng, p));
        const Trajectory snap = simulate(sys, w0, inputs);
        PodBasis basis = pod_basis(states_matrix(snap), n);
        out.push_back({std::move(sys), mats.a, mats.b, std::move(basis), n, p, s});
    }
    return out;
}

double relative_gap(const Matrix& got, const Matrix& want) {
    const double scale = want.norm();
    return scale > 0.0 ? (got - want).norm() / scale : (got - want).norm();
}

std::vector<Vector> seeded_inputs(std::uint64_t seed, std::uint64_t stream, Index p,
                                  Index steps) {
    RngStream rng(seed, stream);
    std::vector<Vector> inputs;
    for (Index k = 0; k < steps; ++k) inputs.push_back(gaussian_vector(rng, p));
    return inputs;
}

const char* heat_config_text =
    "[model]\nkind = heat1d\nintervals = 133\nmu = 0.1\n"
    "[scheme]\nbeta = 1.0\ndt = 0.01\n"
    "[horizons]\nbasis_steps = 500\ntrain_steps = 500\ntest_steps = 500\n"
    "[basis]\nsizes = 1 2 3 4 5 6 7 8\n"
    "[signals]\nbasis = exp_sin rate=1 waves=20\ntrain = gauss_iid first_zero\n"
    "test = exp_sin rate=1 waves=12\n"
    "[estimator]\ngamma = 1.0\nsamples = 25\nseed = 9121164\n"
    "[metrics]\nat_steps = 250 500\noutputs = mean flux:1\n"
    "[run]\ndirectory = unused\n";

// Same rod and signals, shortened online horizon for the repeated-draw study.
const char* heat_coverage_config_text =
    "[model]\nkind = heat1d\nintervals = 133\nmu = 0.1\n"
    "[scheme]\nbeta = 1.0\ndt = 0.01\n"
    "[horizons]\nbasis_steps = 500\ntrain_steps = 500\ntest_steps = 100\n"
    "[basis]\nsizes = 2 5 8\n"
    "[signals]\nbasis = exp_sin rate=1 waves=20\ntrain = gauss_iid first_zero\n"
    "test = exp_sin rate=1 waves=12\n"
    "[estimator]\ngamma = 1.0\nsamples = 25\nseed = 9121164\n"
    "[metrics]\nat_steps = 50 100\noutputs = mean flux:1\n"
    "[run]\ndirectory = unused\n";

const char* channel_config_text =
    "[model]\nkind = convdiff2d\ncells_x = 25\ncells_y = 6\nmu = 0.5\n"
    "velocity_x = 1.0\nvelocity_y = 1.0\n"
    "segments = bottom:2-6 bottom:10-14 top:4-8 top:16-20 right:1-4\n"
    "[scheme]\nbeta = 0.0\ndt = 0.0001\n"
    "[horizons]\nbasis_steps = 5000\ntrain_steps = 5000\ntest_steps = 5000\n"
    "[basis]\nsizes = 2 4 6 8 10\n"
    "[signals]\nbasis = exp_sin rate=0 freq=2\ntrain = gauss_sinvar\n"
    "test = exp_sin rate=1 freq=1.75\n"
    "[estimator]\ngamma = 7.0\nsamples = 10\nseed = 2611225\n"
    "reference_subsample = 10\n"
    "[metrics]\nat_steps = 2500 5000\noutputs = mean flux:5\n"
    "[run]\ndirectory = unused\n";

struct HeatRun {
    ExperimentConfig cfg;
    BuiltModel model;
    ArtifactSet art;
    MetricsTable table;
};

std::optional<HeatRun>& heat_run() {
    static std::optional<HeatRun> run;
    if (!run) {
        ExperimentConfig cfg = ExperimentConfig::load(ConfigFile::parse_string(heat_config_text));
        BuiltModel model = build_model(cfg);
        ArtifactSet art = run_offline(cfg, model);
        MetricsTable table = run_online(cfg, art, &model, {true});
        run.emplace(HeatRun{std::move(cfg), std::move(model), std::move(art), std::move(table)});
    }
    return run;
}

char detail_buffer[512];

bool reduced_operator_recovery(std::string& detail) {
    double worst = 0.0;
    for (const Family& f : dense_family()) {
        const ReducedModel learned = infer_operators(design_excitation(f.sys, f.basis));
        const ReducedModel truth = intrusive_project(f.a, f.b, f.basis);
        worst = std::max({worst, relative_gap(learned.a, truth.a),
                          relative_gap(learned.b, truth.b)});
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer), "worst relative gap %.3e", worst);
    detail = detail_buffer;
    return worst <= 1e-9;
}

bool norm_operator_recovery(std::string& detail) {
    double worst = 0.0;
    double worst_objective = 0.0;
    for (const Family& f : dense_family()) {
        RngStream rng(f.seed, 11);
        const Vector w0 = gaussian_vector(rng, f.sys.n_dof());
        const std::vector<ReprojectedData> data{
            reproject(f.sys, f.basis, w0, seeded_inputs(f.seed, 13, f.p, 60))};
        const ReducedModel rom = intrusive_project(f.a, f.b, f.basis);
        const ResidualNormOperators truth = intrusive_norm_operators(f.sys.oracle(), f.basis);
        const ResidualInference fit = infer_norm_operators(data, rom, truth.m_basis);
        worst = std::max({worst, relative_gap(fit.ops.m_state, truth.m_state),
                          relative_gap(fit.ops.m_input, truth.m_input),
                          relative_gap(fit.ops.m_cross, truth.m_cross)});
        const ResidualRegression reg = build_residual_regression(data, rom, truth.m_basis);
        worst_objective = std::max(
            worst_objective, fit.objective / std::max(1.0, reg.target.squaredNorm()));
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer),
                  "worst relative gap %.3e, worst scaled objective %.3e", worst,
                  worst_objective);
    detail = detail_buffer;
    return worst <= 1e-9 && worst_objective <= 1e-10;
}

bool reprojection_exactness(std::string& detail) {
    double worst = 0.0;
    for (const Family& f : dense_family()) {
        RngStream rng(f.seed, 17);
        const Vector w0 = gaussian_vector(rng, f.sys.n_dof());
        const std::vector<Vector> inputs = seeded_inputs(f.seed, 19, f.p, 50);
        const ReprojectedData data = reproject(f.sys, f.basis, w0, inputs);
        const ReducedModel rom = intrusive_project(f.a, f.b, f.basis);
        const Trajectory galerkin =
            simulate_reduced(rom, Vector(f.basis.v.transpose() * w0), inputs);
        for (Index k = 0; k <= data.steps(); ++k) {
            const Vector& g = galerkin.states[static_cast<std::size_t>(k)];
            worst = std::max(worst,
                             (data.reduced_states.col(k) - g).norm() / (1.0 + g.norm()));
        }
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer), "worst step gap %.3e", worst);
    detail = detail_buffer;
    return worst <= 1e-10;
}

bool heat_error_parity(std::string& detail) {
    const HeatRun& run = *heat_run();
    double worst = 0.0;
    for (const SizeMetrics& m : run.table.rows) {
        if (!m.overall_galerkin.defined || !m.residual_avg_galerkin.defined) return false;
        worst = std::max(
            {worst,
             std::abs(m.overall_learned.value - m.overall_galerkin.value) /
                 m.overall_galerkin.value,
             std::abs(m.residual_avg_learned.value - m.residual_avg_galerkin.value) /
                 m.residual_avg_galerkin.value});
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer),
                  "worst relative disagreement %.3e over %zu sizes", worst,
                  run.table.rows.size());
    detail = detail_buffer;
    return run.table.rows.size() == 8 && worst <= 1e-6;
}

bool heat_bound_validity(std::string& detail) {
    const HeatRun& run = *heat_run();
    const double a_norm = oracles::svd_norm(run.model.oracle->dense_a());
    if (a_norm > 1.0) {
        std::snprintf(detail_buffer, sizeof(detail_buffer),
                      "transition norm %.6f exceeds one, all-ones coefficients invalid",
                      a_norm);
        detail = detail_buffer;
        return false;
    }
    double worst = 1e300;
    for (const SizeSeries& s : run.table.series) {
        if (s.true_error.empty()) return false;
        for (std::size_t k = 0; k < s.true_error.size(); ++k)
            worst = std::min(worst, s.bound_ones[k] - s.true_error[k]);
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer),
                  "transition norm %.6f, smallest bound margin %.3e", a_norm, worst);
    detail = detail_buffer;
    return worst >= -1e-12;
}

bool printed_probabilities(std::string& detail) {
    struct Entry {
        double gamma;
        Index samples;
        Index levels;
        double printed;
    };
    const std::vector<Entry> table{{1.0, 25, 500, 0.9641},
                                   {7.0, 10, 50000, 0.7543},
                                   {20.0, 10, 50000, 0.9985},
                                   {1.0, 35, 50000, 0.9212},
                                   {1.0, 40, 50000, 0.9883}};
    double worst = 0.0;
    for (const Entry& e : table)
        worst = std::max(worst,
                         std::abs(success_probability(e.gamma, e.levels, e.samples) - e.printed));
    std::snprintf(detail_buffer, sizeof(detail_buffer), "worst deviation %.2e", worst);
    detail = detail_buffer;
    return worst <= 1e-3;
}

bool heat_coverage(std::string& detail) {
    const ExperimentConfig cfg =
        ExperimentConfig::load(ConfigFile::parse_string(heat_coverage_config_text));
    const BuiltModel model = build_model(cfg);
    const ArtifactSet art = run_offline(cfg, model);
    const CoverageReport report = run_coverage(cfg, model, art, 200);

    // guarantee and threshold recomputed through the quadrature oracle
    const double p = 1.0 - 100.0 * std::pow(oracles::chi2_cdf_1dof(1.0), 25);
    const double threshold = p - 3.0 * std::sqrt(p * (1.0 - p) / 200.0);
    if (std::abs(art.p_lb - p) > 1e-6) {
        std::snprintf(detail_buffer, sizeof(detail_buffer),
                      "stored guarantee %.6f disagrees with oracle %.6f", art.p_lb, p);
        detail = detail_buffer;
        return false;
    }
    double worst = 1.0;
    for (const CoverageRow& row : report.rows) worst = std::min(worst, row.fraction);
    std::snprintf(detail_buffer, sizeof(detail_buffer),
                  "smallest fraction %.4f against threshold %.4f", worst, threshold);
    detail = detail_buffer;
    return !report.rows.empty() && worst >= threshold;
}

bool norm_event_frequency(std::string& detail) {
    const Index dim = 20;
    const DenseLti sys(Matrix::Identity(dim, dim) * 0.9, Matrix::Zero(dim, 1));
    const RngStream base(811, 0);
    const int trials = 2000;
    const std::vector<Index> checked_levels{1, 5, 10};

    double worst_slack = 1e300;
    for (const auto& [gamma, samples] : std::vector<std::pair<double, Index>>{{1.0, 10},
                                                                              {4.0, 5}}) {
        std::vector<int> hits(checked_levels.size(), 0);
        for (int t = 0; t < trials; ++t) {
            const NormBoundRealization draw = sample_norm_bounds(
                sys, std::vector<double>(10, gamma), samples,
                base.substream(static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(samples)));
            for (std::size_t i = 0; i < checked_levels.size(); ++i) {
                const double power = std::pow(0.9, static_cast<double>(checked_levels[i]));
                if (draw.xi[static_cast<std::size_t>(checked_levels[i])] >=
                    power * (1.0 - 1e-12))
                    ++hits[i];
            }
        }
        const double p = 1.0 - std::pow(oracles::chi2_cdf_1dof(1.0 / gamma),
                                        static_cast<double>(samples));
        const double threshold = p - 3.0 * std::sqrt(p * (1.0 - p) / trials);
        for (std::size_t i = 0; i < checked_levels.size(); ++i)
            worst_slack = std::min(worst_slack,
                                   hits[i] / static_cast<double>(trials) - threshold);
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer),
                  "smallest frequency margin over six level checks %.4f", worst_slack);
    detail = detail_buffer;
    return worst_slack >= 0.0;
}

bool channel_output_containment(std::string& detail) {
    const ExperimentConfig cfg =
        ExperimentConfig::load(ConfigFile::parse_string(channel_config_text));
    const BuiltModel model = build_model(cfg);
    const ArtifactSet art = run_offline(cfg, model);
    if (art.output_names.size() != 2) {
        detail = "expected the averaging and flux outputs";
        return false;
    }
    const Index reps = 50;
    const CoverageReport report = run_coverage(cfg, model, art, reps);

    const double p = 1.0 - 5000.0 * std::pow(oracles::chi2_cdf_1dof(1.0 / 7.0), 10);
    const double threshold = p - 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
    Index missed = 0;
    double worst_fraction = 1.0;
    Index least_successes = reps;
    for (const CoverageRow& row : report.rows) {
        missed += row.output_trials - row.output_successes;
        if (row.output_trials != 2 * row.state_successes) {
            detail = "output trial bookkeeping disagrees with the state successes";
            return false;
        }
        worst_fraction = std::min(worst_fraction, row.fraction);
        least_successes = std::min(least_successes, row.state_successes);
    }
    std::snprintf(detail_buffer, sizeof(detail_buffer),
                  "%ld interval misses on certified repetitions, smallest fraction %.4f "
                  "(threshold %.4f)",
                  static_cast<long>(missed), worst_fraction, threshold);
    detail = detail_buffer;
    return !report.rows.empty() && missed == 0 && least_successes >= 1 &&
           worst_fraction >= threshold;
}

struct Criterion {
    const char* name;
    double limit_seconds;
    std::function<bool(std::string&)> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"reduced operators recovered exactly from probing runs", 10.0,
         reduced_operator_recovery},
        {"residual-norm operators recovered with vanishing misfit", 10.0,
         norm_operator_recovery},
        {"re-projection reproduces the projected trajectory", 0.0, reprojection_exactness},
        {"heat rod: learned and intrusive errors agree", 60.0, heat_error_parity},
        {"heat rod: unit-coefficient bound dominates the true error", 0.0,
         heat_bound_validity},
        {"chi-squared success probabilities match printed values", 1.0,
         printed_probabilities},
        {"heat rod: sampled bounds cover at the guaranteed rate", 300.0, heat_coverage},
        {"contraction: per-level norm events at the chi-squared rate", 60.0,
         norm_event_frequency},
        {"channel flow: certified intervals contain the true outputs", 0.0,
         channel_output_containment},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && c.limit_seconds > 0.0 && elapsed > c.limit_seconds) {
            ok = false;
            detail += detail.empty() ? "" : "; ";
            detail += "over the " + std::to_string(c.limit_seconds) + "s budget";
        }
        std::printf("[%s] %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", c.name, elapsed,
                    detail.empty() ? "" : " - ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures > 0) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
