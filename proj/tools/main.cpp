#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "romcert/experiment.hpp"

namespace {

int exit_code_for(const romcert::Error& error) {
    const std::string category = error.category();
    if (category == "config") return 64;
    if (category == "domain") return 65;
    if (category == "rank_deficient") return 66;
    if (category == "convergence") return 67;
    if (category == "factorization") return 68;
    if (category == "insufficient_data") return 69;
    if (category == "model_mismatch") return 70;
    if (category == "io") return 74;
    if (category == "stale_artifacts") return 75;
    return 1;
}

romcert::ExperimentConfig load_config(const std::string& path) {
    romcert::ExperimentConfig cfg =
        romcert::ExperimentConfig::load(romcert::ConfigFile::parse_file(path));
    romcert::apply_seed_override(cfg);
    return cfg;
}

void print_offline(const romcert::ArtifactSet& art, const std::string& where) {
    std::printf("model dim %ld, %ld input(s), %zu basis size(s)\n",
                static_cast<long>(art.model_dim), static_cast<long>(art.n_inputs),
                art.sizes.size());
    for (const romcert::SizeArtifacts& sa : art.sizes)
        std::printf("  n=%ld  regression objective %.3e  data %s\n", static_cast<long>(sa.n),
                    sa.objective, sa.consistent ? "consistent" : "NOT consistent");
    std::printf("bound success probability >= %.6f (gamma %g, %ld samples)\n", art.p_lb,
                art.gamma, static_cast<long>(art.samples));
    std::printf("artifacts -> %s\n", where.c_str());
}

void print_online(const romcert::MetricsTable& table, const std::string& where) {
    if (!table.reference)
        std::printf("certified evaluation only; metrics needing true states are undefined\n");
    std::printf("unit-coefficient bounds assume the transition operator is a contraction\n");
    for (const romcert::SizeMetrics& m : table.rows) {
        std::printf("  n=%ld  avg residual %.3e", static_cast<long>(m.n),
                    m.residual_avg_learned.value);
        if (m.overall_learned.defined)
            std::printf("  overall error %.3e", m.overall_learned.value);
        if (m.bound_avg_sampled.defined)
            std::printf("  avg sampled bound %.3e", m.bound_avg_sampled.value);
        std::printf("\n");
    }
    std::printf("results -> %s\n", where.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"operator learning with certified error bounds for queryable linear systems"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string artifacts_dir;
    bool reference = false;
    long reps = 200;

    CLI::App* offline =
        app.add_subcommand("offline", "learn reduced operators and sample amplification bounds");
    offline->add_option("--config", config_path, "experiment configuration file")->required();
    offline->add_option("--out", out_dir, "directory for the artifact store")->required();

    CLI::App* online =
        app.add_subcommand("online", "evaluate certified predictions from stored artifacts");
    online->add_option("--config", config_path, "experiment configuration file")->required();
    online->add_option("--artifacts", artifacts_dir, "artifact store from the offline phase")
        ->required();
    online->add_flag("--reference", reference,
                     "also run the full model for reference metrics (slow)");

    CLI::App* sweep =
        app.add_subcommand("sweep", "offline phase plus reference evaluation in one go");
    sweep->add_option("--config", config_path, "experiment configuration file")->required();

    CLI::App* coverage =
        app.add_subcommand("coverage", "repeat the bound sampling and count how often it holds");
    coverage->add_option("--config", config_path, "experiment configuration file")->required();
    coverage->add_option("--reps", reps, "number of repetitions")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (offline->parsed()) {
            const romcert::ExperimentConfig cfg = load_config(config_path);
            const romcert::BuiltModel model = romcert::build_model(cfg);
            const romcert::ArtifactSet art = romcert::run_offline(cfg, model);
            art.save(out_dir);
            print_offline(art, out_dir + "/artifacts.json");
        } else if (online->parsed()) {
            const romcert::ExperimentConfig cfg = load_config(config_path);
            const romcert::ArtifactSet art = romcert::ArtifactSet::load(artifacts_dir);
            romcert::BuiltModel model;
            const romcert::BuiltModel* model_ptr = nullptr;
            if (reference) {
                model = romcert::build_model(cfg);
                model_ptr = &model;
            }
            const romcert::MetricsTable table =
                romcert::run_online(cfg, art, model_ptr, {reference});
            const std::filesystem::path results = std::filesystem::path(artifacts_dir) / "results";
            romcert::emit_results(table, results, cfg);
            print_online(table, results.string());
        } else if (sweep->parsed()) {
            const romcert::ExperimentConfig cfg = load_config(config_path);
            const romcert::BuiltModel model = romcert::build_model(cfg);
            const romcert::ArtifactSet art = romcert::run_offline(cfg, model);
            art.save(cfg.out_dir);
            print_offline(art, (cfg.out_dir / "artifacts.json").string());
            const romcert::MetricsTable table = romcert::run_online(cfg, art, &model, {true});
            const std::filesystem::path results = cfg.out_dir / "results";
            romcert::emit_results(table, results, cfg);
            print_online(table, results.string());
        } else if (coverage->parsed()) {
            const romcert::ExperimentConfig cfg = load_config(config_path);
            const romcert::BuiltModel model = romcert::build_model(cfg);
            const romcert::ArtifactSet art = romcert::run_offline(cfg, model);
            const romcert::CoverageReport report =
                romcert::run_coverage(cfg, model, art, reps);
            const std::filesystem::path dir = cfg.out_dir / "coverage";
            romcert::write_coverage(report, dir, cfg);
            std::printf("guarantee %.6f, acceptance threshold %.6f over %ld repetitions\n",
                        report.p_lb, report.threshold, static_cast<long>(report.reps));
            for (const romcert::CoverageRow& row : report.rows)
                std::printf("  n=%ld  held %ld/%ld (%.4f)  outputs %ld/%ld  %s\n",
                            static_cast<long>(row.n), static_cast<long>(row.state_successes),
                            static_cast<long>(report.reps), row.fraction,
                            static_cast<long>(row.output_successes),
                            static_cast<long>(row.output_trials), row.pass ? "ok" : "LOW");
            std::printf("coverage -> %s\n", dir.string().c_str());
        }
    } catch (const romcert::Error& e) {
        std::cerr << "error [" << e.category() << "] " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error [unknown] " << e.what() << "\n";
        return 1;
    }
    return 0;
}
