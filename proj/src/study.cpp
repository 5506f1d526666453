#include "kuq/study.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kuq/common.hpp"
#include "kuq/power_flow.hpp"

namespace kuq {

using nlohmann::json;

void StudyConfig::validate() const {
    if (case_path.empty()) throw ConfigError("config: case path is required");
    if (n_t < 2) throw ConfigError("config: n_t must be >= 2");
    if (n_mc < 1) throw ConfigError("config: n_mc must be >= 1");
    if (!(spread > 0.0)) throw ConfigError("config: spread must be > 0");
    if (!(horizon >= 0.0)) throw ConfigError("config: horizon must be >= 0");
    if (!(dt_int > 0.0) || !(dt_snap > 0.0))
        throw ConfigError("config: dt_int and dt_snap must be > 0");
    const double ratio = dt_snap / dt_int;
    if (std::abs(ratio - std::lround(ratio)) > 1e-9)
        throw ConfigError("config: dt_snap must be an integer multiple of dt_int");
    if (!(pf_tol > 0.0)) throw ConfigError("config: pf_tol must be > 0");
    if (pf_max_iter < 1) throw ConfigError("config: pf_max_iter must be >= 1");
    if (!(svd_truncation >= 0.0 && svd_truncation < 1.0))
        throw ConfigError("config: svd_truncation must lie in [0, 1)");
    if (threads < 0) throw ConfigError("config: threads must be >= 0");
    if (!std::filesystem::exists(case_path))
        throw ConfigError("config: case file '" + case_path + "' does not exist");
}

namespace {

DistKind dist_from_name(const std::string& s) {
    if (s == "gaussian") return DistKind::gaussian;
    if (s == "uniform") return DistKind::uniform;
    throw ConfigError("config: unknown distribution '" + s + "'");
}

std::string dist_name(DistKind d) {
    return d == DistKind::gaussian ? "gaussian" : "uniform";
}

}  // namespace

StudyConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open '" + path + "'");
    json root;
    try {
        root = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("load_config: '" + path + "' is not valid JSON: " + e.what());
    }

    StudyConfig cfg;
    const std::set<std::string> known = {
        "case",       "outage",     "uncertain",  "dist",        "spread",
        "sampler",    "n_t",        "n_mc",       "dictionary",  "horizon",
        "dt_int",     "dt_snap",    "svd_truncation", "pf_tol",  "pf_max_iter",
        "seed",       "threads",    "out_dir",    "qoi_gen_i",   "qoi_gen_j",
        "kde_time"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("load_config: unknown key '" + it.key() + "'");

    if (root.contains("case")) cfg.case_path = root["case"].get<std::string>();
    if (root.contains("outage"))
        cfg.outage = root["outage"].get<std::vector<std::string>>();
    if (root.contains("uncertain"))
        cfg.uncertain = root["uncertain"].get<std::vector<std::string>>();
    if (root.contains("dist")) cfg.dist = dist_from_name(root["dist"].get<std::string>());
    if (root.contains("spread")) cfg.spread = root["spread"].get<double>();
    if (root.contains("sampler")) {
        const std::string s = root["sampler"].get<std::string>();
        if (s == "lhs") cfg.sampler = SampleMethod::lhs;
        else if (s == "iid") cfg.sampler = SampleMethod::iid;
        else throw ConfigError("load_config: unknown sampler '" + s + "'");
    }
    if (root.contains("n_t")) cfg.n_t = root["n_t"].get<int>();
    if (root.contains("n_mc")) cfg.n_mc = root["n_mc"].get<int>();
    if (root.contains("dictionary"))
        cfg.dictionary = dictionary_kind_from_name(root["dictionary"].get<std::string>());
    if (root.contains("horizon")) cfg.horizon = root["horizon"].get<double>();
    if (root.contains("dt_int")) cfg.dt_int = root["dt_int"].get<double>();
    if (root.contains("dt_snap")) cfg.dt_snap = root["dt_snap"].get<double>();
    if (root.contains("svd_truncation"))
        cfg.svd_truncation = root["svd_truncation"].get<double>();
    if (root.contains("pf_tol")) cfg.pf_tol = root["pf_tol"].get<double>();
    if (root.contains("pf_max_iter")) cfg.pf_max_iter = root["pf_max_iter"].get<int>();
    if (root.contains("seed")) cfg.seed = root["seed"].get<std::uint64_t>();
    if (root.contains("threads")) cfg.threads = root["threads"].get<int>();
    if (root.contains("out_dir")) cfg.out_dir = root["out_dir"].get<std::string>();
    if (root.contains("qoi_gen_i")) cfg.qoi_gen_i = root["qoi_gen_i"].get<std::string>();
    if (root.contains("qoi_gen_j")) cfg.qoi_gen_j = root["qoi_gen_j"].get<std::string>();
    if (root.contains("kde_time")) cfg.kde_time = root["kde_time"].get<double>();
    return cfg;
}

std::string StudyConfig::to_json() const {
    json j;
    j["case"] = case_path;
    j["outage"] = outage;
    j["uncertain"] = uncertain;
    j["dist"] = dist_name(dist);
    j["spread"] = spread;
    j["sampler"] = method_name(sampler);
    j["n_t"] = n_t;
    j["n_mc"] = n_mc;
    j["dictionary"] = dictionary_kind_name(dictionary);
    j["horizon"] = horizon;
    j["dt_int"] = dt_int;
    j["dt_snap"] = dt_snap;
    j["svd_truncation"] = svd_truncation;
    j["pf_tol"] = pf_tol;
    j["pf_max_iter"] = pf_max_iter;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["qoi_gen_i"] = qoi_gen_i;
    j["qoi_gen_j"] = qoi_gen_j;
    j["kde_time"] = kde_time;
    return j.dump(2);
}

StudySetup prepare_study(const StudyConfig& cfg) {
    cfg.validate();

    StudySetup setup;
    setup.cs = load_case(cfg.case_path);

    const PowerFlowSolution pf = solve_power_flow(setup.cs, cfg.pf_tol, cfg.pf_max_iter);
    if (!pf.converged)
        throw NumericalError("prepare_study: power flow did not converge (mismatch " +
                             std::to_string(pf.max_mismatch) + " pu after " +
                             std::to_string(pf.iterations) + " iterations)");

    std::set<std::string> excluded(cfg.outage.begin(), cfg.outage.end());
    setup.pre_net = kron_reduce(setup.cs, pf);
    setup.post_net = excluded.empty() ? setup.pre_net
                                      : kron_reduce(setup.cs, pf, excluded);

    setup.delta0 = setup.pre_net.delta0;
    setup.omega0 = Eigen::VectorXd::Zero(setup.cs.n_gens());

    auto gen_index = [&](const std::string& id) {
        for (int g = 0; g < setup.cs.n_gens(); ++g)
            if (setup.cs.generators[g].id == id) return g;
        throw ConfigError("config: unknown generator id '" + id + "'");
    };

    if (cfg.uncertain.empty()) {
        setup.uncertain_idx.resize(setup.cs.n_gens());
        for (int g = 0; g < setup.cs.n_gens(); ++g) setup.uncertain_idx[g] = g;
    } else {
        for (const auto& id : cfg.uncertain) setup.uncertain_idx.push_back(gen_index(id));
    }
    setup.nominal_m.resize(setup.uncertain_idx.size());
    for (std::size_t k = 0; k < setup.uncertain_idx.size(); ++k)
        setup.nominal_m[k] = setup.cs.generators[setup.uncertain_idx[k]].h;

    setup.qoi_i = gen_index(cfg.qoi_gen_i);
    setup.qoi_j = gen_index(cfg.qoi_gen_j);
    return setup;
}

ParamDistribution make_distribution(const StudyConfig& cfg, const StudySetup& setup) {
    return cfg.dist == DistKind::gaussian
               ? ParamDistribution::gaussian_relative(setup.nominal_m, cfg.spread)
               : ParamDistribution::uniform_relative(setup.nominal_m, cfg.spread);
}

std::uint64_t training_seed(const StudyConfig& cfg) { return derive_seed(cfg.seed, 1); }
std::uint64_t evaluation_seed(const StudyConfig& cfg) { return derive_seed(cfg.seed, 2); }

void write_manifest(const StudyConfig& cfg, const std::string& command,
                    const std::vector<std::string>& output_files,
                    const std::string& path) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = cfg.seed;
    j["config"] = json::parse(cfg.to_json());
    json files = json::object();
    for (const auto& f : output_files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw IoError("write_manifest: cannot read output file " + f);
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string bytes = ss.str();
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a_hash(bytes.data(), bytes.size())));
        files[std::filesystem::path(f).filename().string()] = buf;
    }
    j["outputs_fnv1a"] = files;

    std::ofstream out(path);
    if (!out) throw IoError("write_manifest: cannot open " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write_manifest: write failed for " + path);
}

void write_timings(const std::map<std::string, double>& timings_s,
                   const std::string& path) {
    json j = json::object();
    for (const auto& [key, val] : timings_s) j[key] = val;
    std::ofstream out(path);
    if (!out) throw IoError("write_timings: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace kuq
