// koopman-uq: propagate generator-parameter uncertainty through power-system
// swing dynamics with a Koopman-operator surrogate, benchmarked against
// Monte Carlo. Subcommands: simulate | train | mc | evaluate | compare.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kuq/common.hpp"
#include "kuq/dynamics.hpp"
#include "kuq/edmd.hpp"
#include "kuq/sampling.hpp"
#include "kuq/study.hpp"
#include "kuq/uq.hpp"

namespace fs = std::filesystem;
using namespace kuq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct CliOverrides {
    std::string config_path;
    std::string case_path;
    std::vector<std::string> outage;
    std::string dist;
    std::string sampler;
    std::string dictionary;
    std::string out_dir;
    double spread = -1.0;
    int n_t = -1;
    int n_mc = -1;
    long long seed = -1;
    int threads = -1;
    double horizon = -1.0;
    bool horizon_set = false;
};

StudyConfig resolve_config(const CliOverrides& o) {
    StudyConfig cfg;
    if (!o.config_path.empty()) cfg = load_config(o.config_path);
    if (!o.case_path.empty()) cfg.case_path = o.case_path;
    if (!o.outage.empty()) cfg.outage = o.outage;
    if (!o.dist.empty())
        cfg.dist = o.dist == "uniform" ? DistKind::uniform : DistKind::gaussian;
    if (!o.sampler.empty())
        cfg.sampler = o.sampler == "lhs" ? SampleMethod::lhs : SampleMethod::iid;
    if (!o.dictionary.empty()) cfg.dictionary = dictionary_kind_from_name(o.dictionary);
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.spread > 0.0) cfg.spread = o.spread;
    if (o.n_t > 0) cfg.n_t = o.n_t;
    if (o.n_mc > 0) cfg.n_mc = o.n_mc;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (o.threads >= 0) cfg.threads = o.threads;
    if (o.horizon_set) cfg.horizon = o.horizon;
    return cfg;
}

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
    cmd->add_option("--config", o.config_path, "Study config JSON");
    cmd->add_option("--case", o.case_path, "Grid case JSON file");
    cmd->add_option("--outage", o.outage, "Branch ids opened at t = 0")->delimiter(',');
    cmd->add_option("--dist", o.dist, "Parameter distribution")
        ->check(CLI::IsMember({"gaussian", "uniform"}));
    cmd->add_option("--spread", o.spread, "Relative spread (e.g. 0.10)");
    cmd->add_option("--sampler", o.sampler, "Evaluation sampler")
        ->check(CLI::IsMember({"lhs", "iid"}));
    cmd->add_option("--dictionary", o.dictionary, "Observable dictionary")
        ->check(CLI::IsMember({"linear", "hermite2", "hermite2_trig"}));
    cmd->add_option("--n-t", o.n_t, "Training trajectory count");
    cmd->add_option("--n-mc", o.n_mc, "Evaluation sample count");
    cmd->add_option("--seed", o.seed, "Base RNG seed");
    cmd->add_option("--threads", o.threads, "Worker thread cap (0 = all cores)");
    cmd->add_option("--out-dir", o.out_dir, "Output directory");
    cmd->add_option("--horizon", o.horizon, "Simulation horizon in seconds")
        ->each([&o](const std::string&) { o.horizon_set = true; });
}

fs::path ensure_out_dir(const StudyConfig& cfg) {
    fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "'");
    return dir;
}

std::vector<std::string> param_names(const StudySetup& setup) {
    std::vector<std::string> names;
    names.reserve(setup.uncertain_idx.size());
    for (int idx : setup.uncertain_idx)
        names.push_back("H_" + std::to_string(idx + 1));
    return names;
}

int run_simulate(const StudyConfig& cfg) {
    Timer total;
    const StudySetup setup = prepare_study(cfg);
    const fs::path dir = ensure_out_dir(cfg);

    const AugmentedState x0 = AugmentedState::from_parts(
        setup.delta0, setup.omega0, setup.nominal_m);
    const Trajectory traj =
        simulate(x0, setup.post_net, cfg.horizon, cfg.dt_int, cfg.dt_snap);

    const std::string traj_path = (dir / "trajectory.csv").string();
    save_trajectory_csv(traj, traj_path);
    write_manifest(cfg, "simulate", {traj_path}, (dir / "manifest.json").string());
    write_timings({{"total_s", total.seconds()}}, (dir / "timings.json").string());
    std::printf("simulate: %d snapshots -> %s (%.2f s)\n", traj.n_snapshots(),
                traj_path.c_str(), total.seconds());
    return kExitOk;
}

int run_train(const StudyConfig& cfg, const std::string& model_out) {
    Timer total;
    const StudySetup setup = prepare_study(cfg);
    const fs::path dir = ensure_out_dir(cfg);
    const ParamDistribution dist = make_distribution(cfg, setup);

    Timer sim_timer;
    const SampleSet train_samples =
        draw_params(dist, cfg.n_t, SampleMethod::lhs, training_seed(cfg));
    const std::vector<Trajectory> trajectories = generate_training_set(
        setup.post_net, setup.delta0, setup.omega0, train_samples.samples,
        cfg.horizon, cfg.dt_int, cfg.dt_snap, cfg.threads);
    const double sim_s = sim_timer.seconds();

    Timer fit_timer;
    Eigen::MatrixXd pooled(trajectories.front().states.rows(),
                           trajectories.size() * trajectories.front().n_snapshots());
    Eigen::Index col = 0;
    for (const auto& t : trajectories) {
        pooled.middleCols(col, t.n_snapshots()) = t.states;
        col += t.n_snapshots();
    }
    const Dictionary dict = build_dictionary(cfg.dictionary, setup.cs.n_gens(),
                                             static_cast<int>(setup.nominal_m.size()),
                                             pooled);
    const KoopmanModel model =
        fit_edmd(trajectories, dict, cfg.svd_truncation, cfg.threads);
    const double fit_s = fit_timer.seconds();
    const double total_s = total.seconds();

    const std::string model_path =
        model_out.empty() ? (dir / "model.kpm").string() : model_out;
    save_model(model, model_path);
    const std::string samp_path = (dir / "samples.csv").string();
    save_samples_csv(train_samples, param_names(setup), samp_path);

    const std::string report_path = (dir / "train_report.json").string();
    {
        std::ofstream out(report_path);
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "{\n  \"dictionary\": \"%s\",\n  \"n_d\": %d,\n"
                      "  \"rank\": %d,\n  \"fit_residual\": %.6e,\n"
                      "  \"simulate_wall_s\": %.3f,\n  \"fit_wall_s\": %.3f,\n"
                      "  \"training_wall_s\": %.3f\n}\n",
                      dictionary_kind_name(model.dict.kind).c_str(), model.size(),
                      model.rank, model.fit_residual, sim_s, fit_s, total_s);
        out << buf;
        if (!out) throw IoError("cannot write " + report_path);
    }

    write_manifest(cfg, "train", {model_path, samp_path},
                   (dir / "manifest.json").string());
    write_timings({{"simulate_s", sim_s}, {"fit_s", fit_s}, {"training_total_s", total_s}},
                  (dir / "timings.json").string());
    std::printf("train: n_d = %d, rank = %d, residual = %.3e, training %.2f s -> %s\n",
                model.size(), model.rank, model.fit_residual, total_s,
                model_path.c_str());
    return kExitOk;
}

int run_mc_cmd(const StudyConfig& cfg) {
    Timer total;
    const StudySetup setup = prepare_study(cfg);
    const fs::path dir = ensure_out_dir(cfg);
    const ParamDistribution dist = make_distribution(cfg, setup);

    const SampleSet samples =
        draw_params(dist, cfg.n_mc, cfg.sampler, evaluation_seed(cfg));
    const Ensemble ens =
        run_mc(setup.post_net, setup.delta0, setup.omega0, samples, cfg.horizon,
               cfg.dt_int, cfg.dt_snap, setup.qoi_i, setup.qoi_j, cfg.threads);
    const MomentSeries mom = moments(ens);

    const std::string ens_path = (dir / "ensemble.csv").string();
    const std::string mom_path = (dir / "moments.csv").string();
    const std::string samp_path = (dir / "samples.csv").string();
    save_ensemble_csv(ens, ens_path);
    save_moments_csv(mom, mom_path);
    save_samples_csv(samples, param_names(setup), samp_path);
    write_manifest(cfg, "mc", {ens_path, mom_path, samp_path},
                   (dir / "manifest.json").string());
    write_timings({{"mc_wall_s", ens.wall_time}, {"total_s", total.seconds()}},
                  (dir / "timings.json").string());
    std::printf("mc: %d samples (%d excluded), wall %.2f s -> %s\n", ens.n_samples(),
                ens.excluded, ens.wall_time, dir.string().c_str());
    return kExitOk;
}

int run_evaluate(const StudyConfig& cfg, const std::string& model_path) {
    Timer total;
    const StudySetup setup = prepare_study(cfg);
    const fs::path dir = ensure_out_dir(cfg);
    const KoopmanModel model = load_model(model_path);
    if (model.dict.n_g != setup.cs.n_gens() ||
        model.dict.n_m != static_cast<int>(setup.nominal_m.size()))
        throw ConfigError("evaluate: model dimensions do not match the study");

    const ParamDistribution dist = make_distribution(cfg, setup);
    const SampleSet samples =
        draw_params(dist, cfg.n_mc, cfg.sampler, evaluation_seed(cfg));

    const int k_max = static_cast<int>(std::lround(cfg.horizon / model.dt));
    const Ensemble ens = run_surrogate(model, setup.delta0, setup.omega0, samples,
                                       k_max, setup.qoi_i, setup.qoi_j, cfg.threads);
    const MomentSeries mom = moments(ens);

    const std::string ens_path = (dir / "ensemble.csv").string();
    const std::string mom_path = (dir / "moments.csv").string();
    const std::string samp_path = (dir / "samples.csv").string();
    save_ensemble_csv(ens, ens_path);
    save_moments_csv(mom, mom_path);
    save_samples_csv(samples, param_names(setup), samp_path);

    std::vector<std::string> outputs{ens_path, mom_path, samp_path};
    int kde_col = -1;
    for (int k = 0; k < ens.n_times(); ++k)
        if (std::abs(ens.times[k] - cfg.kde_time) < 0.5 * model.dt) kde_col = k;
    if (kde_col >= 0 && ens.n_samples() >= 2) {
        const DensityEstimate d = kde(ens.values.col(kde_col));
        const std::string kde_path = (dir / "kde.csv").string();
        save_density_csv(d, kde_path);
        outputs.push_back(kde_path);
    }

    write_manifest(cfg, "evaluate", outputs, (dir / "manifest.json").string());
    write_timings({{"realize_wall_s", ens.wall_time}, {"total_s", total.seconds()}},
                  (dir / "timings.json").string());
    std::printf("evaluate: %d samples (%d excluded), realization %.2f s -> %s\n",
                ens.n_samples(), ens.excluded, ens.wall_time, dir.string().c_str());
    return kExitOk;
}

double read_timing(const fs::path& dir, const std::string& key) {
    std::ifstream in(dir / "timings.json");
    if (!in) return 0.0;
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    const auto pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0.0;
    const auto colon = text.find(':', pos);
    return colon == std::string::npos ? 0.0 : std::stod(text.substr(colon + 1));
}

int run_compare(const std::string& bench_dir, const std::string& test_dir,
                const std::string& train_dir, double t0, double t1,
                double ks_time, const std::string& out_path) {
    Ensemble bench = load_ensemble_csv((fs::path(bench_dir) / "ensemble.csv").string());
    Ensemble test = load_ensemble_csv((fs::path(test_dir) / "ensemble.csv").string());
    const MomentSeries bench_m =
        load_moments_csv((fs::path(bench_dir) / "moments.csv").string());
    const MomentSeries test_m =
        load_moments_csv((fs::path(test_dir) / "moments.csv").string());

    bench.wall_time = read_timing(bench_dir, "mc_wall_s");
    double test_wall = read_timing(test_dir, "realize_wall_s");
    if (!train_dir.empty()) test_wall += read_timing(train_dir, "training_total_s");
    test.wall_time = test_wall;

    const ComparisonReport rep = compare(bench, bench_m, test, test_m, t0, t1, {ks_time});
    {
        std::ofstream out(out_path);
        if (!out) throw IoError("compare: cannot open " + out_path);
        out << rep.to_json();
        if (!out) throw IoError("compare: write failed for " + out_path);
    }

    // Comparison manifest: input directories plus the report checksum.
    {
        std::ifstream rin(out_path, std::ios::binary);
        std::ostringstream ss;
        ss << rin.rdbuf();
        const std::string bytes = ss.str();
        char hash[24];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a_hash(bytes.data(), bytes.size())));
        const fs::path mpath = fs::path(out_path).parent_path() / "compare_manifest.json";
        std::ofstream mout(mpath);
        mout << "{\n  \"command\": \"compare\",\n  \"version\": \"" << kVersion
             << "\",\n  \"bench\": \"" << bench_dir << "\",\n  \"test\": \""
             << test_dir << "\",\n  \"report_fnv1a\": \"" << hash << "\"\n}\n";
    }
    std::printf("compare: mean_abs_err_max %.4g rad, std_rel_err_max %.3g, wall %s\n",
                rep.mean_abs_err_max, rep.std_rel_err_max, out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman-surrogate uncertainty propagation for power-system swing dynamics"};
    app.require_subcommand(1);

    CliOverrides o;
    std::string model_path = "model.kpm";
    std::string bench_dir, test_dir, train_dir, report_out = "report.json";
    double t0 = 0.0, t1 = 5.0, ks_time = 2.0;

    auto* sim = app.add_subcommand("simulate", "Single deterministic run at nominal parameters");
    add_common_flags(sim, o);
    auto* train = app.add_subcommand("train", "Fit the Koopman surrogate from LHS training runs");
    add_common_flags(train, o);
    std::string model_out;
    train->add_option("--out", model_out, "Model artifact path (default <out-dir>/model.kpm)");
    auto* mc = app.add_subcommand("mc", "Monte Carlo benchmark ensemble");
    add_common_flags(mc, o);
    auto* eval = app.add_subcommand("evaluate", "Surrogate realization sweep over the sample set");
    add_common_flags(eval, o);
    eval->add_option("--model", model_path, "Trained model artifact (.kpm)");
    auto* cmp = app.add_subcommand("compare", "Benchmark-vs-test agreement report");
    cmp->add_option("--bench", bench_dir, "Benchmark run directory")->required();
    cmp->add_option("--test", test_dir, "Test run directory")->required();
    cmp->add_option("--train-dir", train_dir, "Training run directory (adds training time)");
    cmp->add_option("--t0", t0, "Window start, s");
    cmp->add_option("--t1", t1, "Window end, s");
    cmp->add_option("--ks-time", ks_time, "Instant for the KS statistic, s");
    cmp->add_option("--out", report_out, "Report JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (app.got_subcommand(sim)) return run_simulate(resolve_config(o));
        if (app.got_subcommand(train)) return run_train(resolve_config(o), model_out);
        if (app.got_subcommand(mc)) return run_mc_cmd(resolve_config(o));
        if (app.got_subcommand(eval)) return run_evaluate(resolve_config(o), model_path);
        if (app.got_subcommand(cmp))
            return run_compare(bench_dir, test_dir, train_dir, t0, t1, ks_time, report_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}
