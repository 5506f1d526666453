#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kuq/case.hpp"
#include "kuq/dictionary.hpp"
#include "kuq/kron.hpp"
#include "kuq/sampling.hpp"

namespace kuq {

enum class DistKind { gaussian, uniform };

// Declarative description of one study; JSON file with flat keys, CLI flags
// override individual fields.
struct StudyConfig {
    std::string case_path;
    std::vector<std::string> outage;       // branch ids opened at t = 0
    std::vector<std::string> uncertain;    // generator ids with uncertain H; empty = all
    DistKind dist = DistKind::gaussian;
    double spread = 0.10;                  // relative: std (gaussian) or half-width (uniform)
    SampleMethod sampler = SampleMethod::iid;  // evaluation sampler; training always LHS
    int n_t = 75;
    int n_mc = 10000;
    DictionaryKind dictionary = DictionaryKind::hermite2;
    double horizon = 10.0;
    double dt_int = 0.005;
    double dt_snap = 0.01;
    double svd_truncation = 1e-10;
    double pf_tol = 1e-10;
    int pf_max_iter = 20;
    std::uint64_t seed = 1;
    int threads = 0;                        // 0 = hardware concurrency
    std::string out_dir = "out";
    std::string qoi_gen_i = "G2";
    std::string qoi_gen_j = "G10";
    double kde_time = 2.0;                  // s, density snapshot instant

    void validate() const;
    std::string to_json() const;            // canonical snapshot for manifests
};

StudyConfig load_config(const std::string& path);

// Everything derived from the case that downstream phases share: the
// pre-disturbance equilibrium and the post-disturbance reduced model.
struct StudySetup {
    Case cs;
    ReducedNetwork pre_net;    // no exclusions, at equilibrium
    ReducedNetwork post_net;   // outage applied, same EMF/P_m/initial angles
    Eigen::VectorXd delta0;
    Eigen::VectorXd omega0;    // zeros
    Eigen::VectorXd nominal_m; // nominal H of the uncertain generators
    std::vector<int> uncertain_idx;  // generator indices, state order
    int qoi_i = 0;
    int qoi_j = 0;
};

StudySetup prepare_study(const StudyConfig& cfg);

ParamDistribution make_distribution(const StudyConfig& cfg, const StudySetup& setup);

// Named sub-seed streams so training and evaluation draws never overlap.
std::uint64_t training_seed(const StudyConfig& cfg);
std::uint64_t evaluation_seed(const StudyConfig& cfg);

// Deterministic run manifest: config snapshot, seed, version, and FNV-1a
// checksums of the listed output files. Wall times go to a separate timings
// file so that reruns produce byte-identical manifests.
void write_manifest(const StudyConfig& cfg, const std::string& command,
                    const std::vector<std::string>& output_files,
                    const std::string& path);
void write_timings(const std::map<std::string, double>& timings_s,
                   const std::string& path);

}  // namespace kuq
