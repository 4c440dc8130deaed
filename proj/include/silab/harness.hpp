#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "silab/losses.hpp"
#include "silab/optim.hpp"
#include "silab/sinet.hpp"

namespace silab {

// Flat key=value experiment description. Parsing is strict (unknown keys and
// malformed values are errors with line info); serialization is canonical,
// so serialize(parse(text)) is a fixed normal form.
struct ExperimentConfig {
    // loss: rayleigh | angle | example1 | example2 | stoch-rayleigh |
    //       multigroup | sinet
    std::string loss = "rayleigh";
    std::size_t dim = 8;        // vector-loss dimension (per group for multigroup)
    double sigma = 1.0;         // angle loss scale
    double noise_scale = 0.0;   // stoch-rayleigh
    double spike_prob = 0.0;    // stoch-rayleigh heavy-tail mix
    double spike_factor = 1.0;
    std::size_t k = 2;          // example1: 2k factors
    double init_norm = 1.0;     // initial |x| for vector losses

    double eta = 0.01;
    double lambda = 0.1;
    double clip_factor = 0.0;  // 0 disables clipping
    double head_eta = 0.0;     // 0: reuse eta

    std::size_t steps = 1000;
    std::uint64_t seed = 1;
    std::vector<double> init_scales = {1.0};
    std::string output_dir = "runs";
    std::string run_name = "run";

    // sinet
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_k = 16;
    std::size_t d_v = 16;
    std::size_t vocab_size = 64;
    std::size_t seq_len = 32;
    double mask_rate = 0.3;

    SinetConfig sinet_config() const;
    OptimizerConfig optimizer_config() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

struct RunSummary {
    std::string name;
    double final_loss = 0.0;
    double min_sphere_grad_sq = 0.0;  // min over steps of |grad L(x/|x|)|^2
    double band_violation_rate = 0.0;
    double clip_frequency = 0.0;  // meaningful only when clipping is enabled
    bool clipping_enabled = false;
    double equilibrium_norm_sq = 0.0;  // mean |x|^2 over the last quarter
    std::size_t t0 = 0;
    std::size_t t1 = 0;
    std::size_t t_prime = 0;
    bool diverged = false;
    std::string failure;

    std::string to_json() const;
};

// Output directory resolution: SILAB_OUTPUT_DIR overrides cfg.output_dir.
std::string resolve_output_dir(const ExperimentConfig& cfg);

// Writes the per-step, per-group trajectory CSV
// (step,loss,group,norm,grad_norm,eff_lr,r_t,clip,n_t) atomically.
void write_trajectory_csv(const Trajectory& traj, const std::vector<std::string>& group_names,
                          const std::string& path);

// Horizon estimates from profiled constants.
std::size_t horizon_t0(double eta, double lambda, double x0_norm_sq, double rho);
std::size_t horizon_t1(double eta, double lambda, double x0_norm_sq, double m_max,
                       double sigma_hi2);
std::size_t horizon_t_prime(double eta, double lambda, double x0_norm_sq, double alpha_c,
                            double mu);

// Runs one configured training, writes <run_name>.csv / <run_name>.json
// (plus a timestamped sidecar log) under the resolved output dir.
RunSummary cmd_train(const ExperimentConfig& cfg);

// One run per init scale x optimizer variant (SGD+WD, SGD+WD+clip,
// SGD-no-WD); emits a comparative JSON. Individual divergences are recorded
// and the sweep continues.
std::string cmd_sweep(const ExperimentConfig& cfg, const std::vector<double>& scales);

// Runs the verification suites for the listed scopes ("all" or module
// names); prints one line per check; returns the exit code (0 iff all pass).
int cmd_verify(const std::vector<std::string>& scopes);

// Clipped-mean statistics of a value,weight CSV at factor c, as JSON.
std::string cmd_clipstats(const std::string& dist_csv_path, double c);

}  // namespace silab
