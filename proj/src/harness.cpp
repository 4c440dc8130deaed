#include "silab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "silab/clipstats.hpp"
#include "silab/homogeneity.hpp"
#include "silab/kernels.hpp"

namespace silab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_scales(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += fmt(v[i]);
    }
    return s;
}

std::vector<double> parse_scales(const std::string& s, int line) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &pos);
        } catch (...) {
            pos = 0;
        }
        if (pos == 0 || !(v > 0.0))
            throw std::invalid_argument("config line " + std::to_string(line) +
                                        ": bad init_scales entry '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty())
        throw std::invalid_argument("config line " + std::to_string(line) +
                                    ": init_scales is empty");
    return out;
}

const std::vector<std::string> kLossIds = {"rayleigh",       "angle",      "example1",
                                           "example2",       "stoch-rayleigh",
                                           "multigroup",     "sinet"};

// writes content to path via a temp file + rename so readers never observe
// a partial file
void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
        os << content;
        if (!os) throw std::runtime_error("write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

std::vector<double> symmetric_matrix(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<double> s(d * d);
    for (auto& v : s) v = unif(rng);
    std::vector<double> a(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            a[i * d + j] = 0.5 * (s[i * d + j] + s[j * d + i]);
    return a;
}

std::unique_ptr<StochasticLoss> make_vector_loss(const ExperimentConfig& cfg) {
    if (cfg.loss == "rayleigh")
        return std::make_unique<RayleighLoss>(cfg.dim, symmetric_matrix(cfg.dim, cfg.seed ^ 0x517cc1b7));
    if (cfg.loss == "angle") return std::make_unique<AngleLoss>(cfg.sigma);
    if (cfg.loss == "example1")
        return std::make_unique<ProductLogisticLoss>(
            std::vector<std::pair<double, int>>{{1.0, 1}, {1.0, 1}, {1.0, 1}, {1.0, -1}},
            cfg.k);
    if (cfg.loss == "example2")
        return std::make_unique<MatFacLoss>(1, 1, std::vector<double>{0.0});
    if (cfg.loss == "stoch-rayleigh")
        return std::make_unique<StochasticRayleigh>(
            cfg.dim, symmetric_matrix(cfg.dim, cfg.seed ^ 0x517cc1b7), cfg.noise_scale,
            cfg.spike_prob, cfg.spike_factor);
    if (cfg.loss == "multigroup")
        return std::make_unique<MultigroupLoss>(
            cfg.dim, symmetric_matrix(cfg.dim, cfg.seed ^ 0x517cc1b7), cfg.dim,
            symmetric_matrix(cfg.dim, cfg.seed ^ 0x2545f491));
    throw std::invalid_argument("unknown vector loss id: " + cfg.loss);
}

std::vector<double> initial_x(const ExperimentConfig& cfg, const StochasticLoss& loss,
                              double scale) {
    if (cfg.loss == "example1") {
        // all factors equal, product 2 (fixture start; scale does not apply)
        return std::vector<double>(loss.dim(), std::pow(2.0, 1.0 / double(loss.dim())));
    }
    if (cfg.loss == "example2") return {1.0, 0.1};
    std::mt19937_64 rng(cfg.seed + 1);
    auto x = random_unit_vector(loss.dim(), rng);
    for (auto& v : x) v *= cfg.init_norm * scale;
    return x;
}

// Wraps a loss so every training-time eval also records the mean-loss
// gradient norm on the sphere at the visited point.
class ObservedLoss : public StochasticLoss {
  public:
    ObservedLoss(const StochasticLoss& inner, std::vector<double>& sphere_grad_sq)
        : inner_(inner), out_(sphere_grad_sq) {}
    std::size_t dim() const override { return inner_.dim(); }
    bool scale_invariant() const override { return inner_.scale_invariant(); }
    Grad eval(std::uint64_t gamma, std::span<const double> x) const override {
        const double n = std::sqrt(kernels::active().sq_norm(x.data(), x.size()));
        if (n > 0.0 && inner_.scale_invariant()) {
            std::vector<double> xu(x.begin(), x.end());
            for (auto& v : xu) v /= n;
            const auto gm = inner_.mean_eval(xu);
            out_.push_back(kernels::active().sq_norm(gm.grad.data(), gm.grad.size()));
        }
        return inner_.eval(gamma, x);
    }
    Grad mean_eval(std::span<const double> x) const override { return inner_.mean_eval(x); }

  private:
    const StochasticLoss& inner_;
    std::vector<double>& out_;
};

}  // namespace

SinetConfig ExperimentConfig::sinet_config() const {
    SinetConfig c;
    c.n_layers = n_layers;
    c.d_model = d_model;
    c.n_heads = n_heads;
    c.d_k = d_k;
    c.d_v = d_v;
    c.vocab_size = vocab_size;
    c.max_seq_len = std::max(seq_len, std::size_t(1));
    c.head_enabled = true;
    return c;
}

OptimizerConfig ExperimentConfig::optimizer_config() const {
    OptimizerConfig c;
    c.eta = eta;
    c.lambda = lambda;
    c.clip_factor =
        clip_factor > 0.0 ? clip_factor : std::numeric_limits<double>::infinity();
    c.head_eta = head_eta;
    return c;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    auto bad = [&](const std::string& what) {
        return std::invalid_argument("config line " + std::to_string(line) + ": " + what);
    };
    auto as_double = [&](const std::string& v, const char* field) {
        std::size_t pos = 0;
        double d = 0.0;
        try {
            d = std::stod(v, &pos);
        } catch (...) {
            pos = 0;
        }
        if (pos != v.size()) throw bad(std::string("bad number for ") + field);
        return d;
    };
    auto as_size = [&](const std::string& v, const char* field) {
        std::size_t pos = 0;
        unsigned long long u = 0;
        try {
            u = std::stoull(v, &pos);
        } catch (...) {
            pos = 0;
        }
        if (pos != v.size()) throw bad(std::string("bad integer for ") + field);
        return std::size_t(u);
    };
    while (std::getline(ss, raw)) {
        ++line;
        std::string s = raw;
        if (auto h = s.find('#'); h != std::string::npos) s.erase(h);
        auto l = s.find_first_not_of(" \t\r");
        if (l == std::string::npos) continue;
        auto r = s.find_last_not_of(" \t\r");
        s = s.substr(l, r - l + 1);
        auto eq = s.find('=');
        if (eq == std::string::npos) throw bad("expected key = value");
        auto trim = [](std::string v) {
            auto a = v.find_first_not_of(" \t");
            auto b = v.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
        };
        const std::string key = trim(s.substr(0, eq));
        const std::string val = trim(s.substr(eq + 1));
        if (val.empty()) throw bad("empty value for " + key);

        if (key == "loss") {
            if (std::find(kLossIds.begin(), kLossIds.end(), val) == kLossIds.end())
                throw bad("unknown loss id '" + val + "'");
            cfg.loss = val;
        } else if (key == "dim") cfg.dim = as_size(val, "dim");
        else if (key == "sigma") cfg.sigma = as_double(val, "sigma");
        else if (key == "noise_scale") cfg.noise_scale = as_double(val, "noise_scale");
        else if (key == "spike_prob") cfg.spike_prob = as_double(val, "spike_prob");
        else if (key == "spike_factor") cfg.spike_factor = as_double(val, "spike_factor");
        else if (key == "k") cfg.k = as_size(val, "k");
        else if (key == "init_norm") cfg.init_norm = as_double(val, "init_norm");
        else if (key == "eta") cfg.eta = as_double(val, "eta");
        else if (key == "lambda") cfg.lambda = as_double(val, "lambda");
        else if (key == "clip_factor") cfg.clip_factor = as_double(val, "clip_factor");
        else if (key == "head_eta") cfg.head_eta = as_double(val, "head_eta");
        else if (key == "steps") cfg.steps = as_size(val, "steps");
        else if (key == "seed") cfg.seed = as_size(val, "seed");
        else if (key == "init_scales") cfg.init_scales = parse_scales(val, line);
        else if (key == "output_dir") cfg.output_dir = val;
        else if (key == "run_name") cfg.run_name = val;
        else if (key == "n_layers") cfg.n_layers = as_size(val, "n_layers");
        else if (key == "d_model") cfg.d_model = as_size(val, "d_model");
        else if (key == "n_heads") cfg.n_heads = as_size(val, "n_heads");
        else if (key == "d_k") cfg.d_k = as_size(val, "d_k");
        else if (key == "d_v") cfg.d_v = as_size(val, "d_v");
        else if (key == "vocab_size") cfg.vocab_size = as_size(val, "vocab_size");
        else if (key == "seq_len") cfg.seq_len = as_size(val, "seq_len");
        else if (key == "mask_rate") cfg.mask_rate = as_double(val, "mask_rate");
        else throw bad("unknown key '" + key + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    std::string s;
    auto kv = [&](const char* k, const std::string& v) { s += std::string(k) + " = " + v + "\n"; };
    kv("loss", c.loss);
    kv("dim", std::to_string(c.dim));
    kv("sigma", fmt(c.sigma));
    kv("noise_scale", fmt(c.noise_scale));
    kv("spike_prob", fmt(c.spike_prob));
    kv("spike_factor", fmt(c.spike_factor));
    kv("k", std::to_string(c.k));
    kv("init_norm", fmt(c.init_norm));
    kv("eta", fmt(c.eta));
    kv("lambda", fmt(c.lambda));
    kv("clip_factor", fmt(c.clip_factor));
    kv("head_eta", fmt(c.head_eta));
    kv("steps", std::to_string(c.steps));
    kv("seed", std::to_string(c.seed));
    kv("init_scales", join_scales(c.init_scales));
    kv("output_dir", c.output_dir);
    kv("run_name", c.run_name);
    kv("n_layers", std::to_string(c.n_layers));
    kv("d_model", std::to_string(c.d_model));
    kv("n_heads", std::to_string(c.n_heads));
    kv("d_k", std::to_string(c.d_k));
    kv("d_v", std::to_string(c.d_v));
    kv("vocab_size", std::to_string(c.vocab_size));
    kv("seq_len", std::to_string(c.seq_len));
    kv("mask_rate", fmt(c.mask_rate));
    return s;
}

std::string RunSummary::to_json() const {
    json j;
    j["name"] = name;
    j["final_loss"] = final_loss;
    j["min_sphere_grad_sq"] = min_sphere_grad_sq;
    j["band_violation_rate"] = band_violation_rate;
    j["clipping_enabled"] = clipping_enabled;
    j["clip_frequency"] = clip_frequency;
    j["equilibrium_norm_sq"] = equilibrium_norm_sq;
    j["t0"] = t0;
    j["t1"] = t1;
    j["t_prime"] = t_prime;
    j["diverged"] = diverged;
    j["failure"] = failure;
    return j.dump(2) + "\n";
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("SILAB_OUTPUT_DIR"); env && *env) return env;
    return cfg.output_dir;
}

void write_trajectory_csv(const Trajectory& traj, const std::vector<std::string>& group_names,
                          const std::string& path) {
    std::string out = "step,loss,group,norm,grad_norm,eff_lr,r_t,clip,n_t\n";
    for (const auto& step : traj.steps) {
        for (std::size_t g = 0; g < step.groups.size(); ++g) {
            const auto& rec = step.groups[g];
            const std::string& name =
                g < group_names.size() ? group_names[g] : std::to_string(g);
            out += std::to_string(step.step) + "," + fmt(step.loss) + "," + name + "," +
                   fmt(rec.norm) + "," + fmt(rec.grad_norm) + "," + fmt(rec.eff_lr) + "," +
                   fmt(rec.r_t) + "," + (rec.clip_triggered ? "1" : "0") + "," +
                   fmt(rec.n_t) + "\n";
        }
    }
    atomic_write(path, out);
}

std::size_t horizon_t0(double eta, double lambda, double x0_norm_sq, double rho) {
    if (rho <= 0.0 || eta <= 0.0 || lambda <= 0.0 || x0_norm_sq <= 0.0) return 0;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double v =
        std::ceil((std::abs(std::log(x0_norm_sq / (rho * pi2 * eta))) + 3.0) /
                  (2.0 * eta * lambda));
    return std::size_t(std::max(v, 1.0));
}

std::size_t horizon_t1(double eta, double lambda, double x0_norm_sq, double m_max,
                       double sigma_hi2) {
    if (m_max <= 0.0 || sigma_hi2 <= 0.0 || eta <= 0.0 || lambda <= 0.0 ||
        x0_norm_sq <= 0.0)
        return 0;
    const double m2 = m_max * m_max;
    const double a = std::log(m2 * eta * lambda / sigma_hi2) +
                     std::abs(std::log(2.0 * std::exp(4.0) * m2 /
                                       (x0_norm_sq * x0_norm_sq / (eta * eta))));
    const double v = std::ceil(std::max(a, 8.0) / (4.0 * eta * lambda));
    return std::size_t(std::max(v, 1.0));
}

std::size_t horizon_t_prime(double eta, double lambda, double x0_norm_sq, double alpha_c,
                            double mu) {
    if (alpha_c <= 0.0 || mu <= 0.0 || eta <= 0.0 || lambda <= 0.0 || x0_norm_sq <= 0.0)
        return 0;
    const double r0 = (2.0 * lambda / eta) * x0_norm_sq;
    const double v =
        std::ceil(std::abs(std::log(r0 * r0 / mu)) / (alpha_c * eta * lambda));
    return std::size_t(std::max(v, 1.0));
}

namespace {

struct RunResult {
    Trajectory traj;
    std::vector<std::string> group_names;
    std::vector<double> sphere_grad_sq;  // per SI-loss step, empty for sinet
    double initial_loss = 0.0;
};

RunResult run_experiment(const ExperimentConfig& cfg, const OptimizerConfig& ocfg,
                         double scale) {
    RunResult res;
    if (cfg.loss == "sinet") {
        MaskedTokenLoss task(cfg.sinet_config(), cfg.seq_len, cfg.mask_rate,
                             cfg.seed ^ 0x5bd1e995);
        SinetModel model = init_model(cfg.sinet_config(), scale, cfg.seed);
        auto groups = model.param_groups();
        res.initial_loss = task.eval(0, groups).loss;
        res.traj = run_training(task, std::move(groups), ocfg, cfg.steps, cfg.seed + 1);
        res.group_names = {"encoder", "head"};
    } else {
        auto loss = make_vector_loss(cfg);
        auto x0 = initial_x(cfg, *loss, scale);
        res.initial_loss = loss->mean_eval(x0).loss;
        ObservedLoss observed(*loss, res.sphere_grad_sq);
        res.traj = run_training(observed, std::move(x0), ocfg, cfg.steps, cfg.seed + 1);
        res.group_names = {"params"};
    }
    return res;
}

RunSummary summarize(const ExperimentConfig& cfg, const OptimizerConfig& ocfg,
                     const RunResult& run) {
    RunSummary s;
    s.name = cfg.run_name;
    s.diverged = run.traj.diverged;
    s.failure = run.traj.failure;
    s.clipping_enabled = ocfg.clipping_enabled();
    if (!run.traj.steps.empty()) s.final_loss = run.traj.steps.back().loss;

    std::size_t clip_events = 0, clip_total = 0;
    for (const auto& step : run.traj.steps) {
        for (const auto& g : step.groups) {
            ++clip_total;
            clip_events += g.clip_triggered;
        }
    }
    if (s.clipping_enabled && clip_total > 0)
        s.clip_frequency = double(clip_events) / double(clip_total);

    const std::size_t n = run.traj.steps.size();
    if (n > 0) {
        double acc = 0.0;
        const std::size_t from = n - n / 4 - 1;
        std::size_t count = 0;
        for (std::size_t t = from; t < n; ++t) {
            const double nm = run.traj.steps[t].groups[0].norm;
            acc += nm * nm;
            ++count;
        }
        s.equilibrium_norm_sq = acc / double(count);
    }
    if (!run.sphere_grad_sq.empty())
        s.min_sphere_grad_sq =
            *std::min_element(run.sphere_grad_sq.begin(), run.sphere_grad_sq.end());

    // horizon estimates and the norm band need profiled constants; they are
    // only computed for the cheap scale-invariant vector losses
    if (cfg.loss != "sinet" && cfg.loss != "example1" && cfg.loss != "example2" &&
        !run.traj.steps.empty()) {
        auto loss = make_vector_loss(cfg);
        const auto profile = profile_loss(*loss, 6, 12, cfg.seed + 7);
        const double x0n = run.traj.steps.front().groups[0].norm;
        const double x0sq = x0n * x0n;
        s.t0 = horizon_t0(ocfg.eta, ocfg.lambda, x0sq, profile.rho);
        s.t1 = horizon_t1(ocfg.eta, ocfg.lambda, x0sq, profile.m_max, profile.sigma_hi2);
        if (s.clipping_enabled) {
            std::mt19937_64 rng(cfg.seed + 11);
            auto xbar = random_unit_vector(loss->dim(), rng);
            const auto p = empirical_grad_dist(*loss, xbar, 256, cfg.seed + 13);
            const auto cm = clipped_mean(p, ocfg.clip_factor);
            if (cm.mu_c > 0.0)
                s.t_prime = horizon_t_prime(ocfg.eta, ocfg.lambda, x0sq, cm.alpha_c_bound,
                                            cm.mu_c);
        }
        // violation rate of the post-T1 squared-norm band
        if (s.t1 > 0 && s.t1 < run.traj.steps.size()) {
            std::size_t viol = 0, total = 0;
            for (std::size_t t = s.t1; t < run.traj.steps.size(); ++t) {
                const double nm = run.traj.steps[t].groups[0].norm;
                const double r2 = (2.0 * ocfg.lambda / ocfg.eta) * nm * nm * nm * nm;
                ++total;
                if (r2 < profile.sigma_lo2 / 2.0 || r2 > 4.0 * profile.sigma_hi2) ++viol;
            }
            if (total > 0) s.band_violation_rate = double(viol) / double(total);
        }
    }
    return s;
}

}  // namespace

RunSummary cmd_train(const ExperimentConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    const OptimizerConfig ocfg = cfg.optimizer_config();
    ocfg.validate();
    const double scale = cfg.init_scales.empty() ? 1.0 : cfg.init_scales.front();
    RunResult run = run_experiment(cfg, ocfg, scale);
    RunSummary summary = summarize(cfg, ocfg, run);

    const fs::path dir = resolve_output_dir(cfg);
    fs::create_directories(dir);
    write_trajectory_csv(run.traj, run.group_names, (dir / (cfg.run_name + ".csv")).string());
    atomic_write((dir / (cfg.run_name + ".json")).string(), summary.to_json());
    // wall time and timestamps only go to the sidecar, keeping the
    // deterministic artifacts byte-stable
    {
        const auto wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        std::ofstream log(dir / (cfg.run_name + ".log"), std::ios::app);
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        log << "epoch_s="
            << std::chrono::duration_cast<std::chrono::seconds>(now).count()
            << " wall_s=" << wall << " run=" << cfg.run_name << "\n";
    }
    return summary;
}

std::string cmd_sweep(const ExperimentConfig& cfg, const std::vector<double>& scales) {
    if (scales.empty()) throw std::invalid_argument("sweep: at least one scale required");

    struct Variant {
        std::string name;
        OptimizerConfig ocfg;
    };
    std::vector<Variant> variants;
    {
        OptimizerConfig base = cfg.optimizer_config();
        OptimizerConfig plain = base;
        plain.clip_factor = std::numeric_limits<double>::infinity();
        variants.push_back({"sgd_wd", plain});
        OptimizerConfig clip = base;
        if (!std::isfinite(clip.clip_factor) || clip.clip_factor <= 1.0)
            clip.clip_factor = 4.0;
        variants.push_back({"sgd_wd_clip", clip});
        OptimizerConfig no_wd = plain;
        no_wd.lambda = 0.0;
        variants.push_back({"sgd_no_wd", no_wd});
    }

    struct Cell {
        double final_loss = 0.0;
        double initial_loss = 0.0;
        bool diverged = false;
        bool stalled = false;
        std::vector<double> loss_curve, norm_curve;
    };
    const std::size_t stride = std::max<std::size_t>(1, cfg.steps / 200);

    std::vector<std::future<Cell>> jobs;
    for (const auto& var : variants) {
        for (double scale : scales) {
            jobs.push_back(std::async(std::launch::async, [&cfg, var, scale, stride]() {
                Cell cell;
                RunResult run = run_experiment(cfg, var.ocfg, scale);
                cell.initial_loss = run.initial_loss;
                cell.diverged = run.traj.diverged;
                if (!run.traj.steps.empty()) cell.final_loss = run.traj.steps.back().loss;
                cell.stalled = !run.traj.steps.empty() &&
                               cell.final_loss >= 0.9 * cell.initial_loss;
                for (std::size_t t = 0; t < run.traj.steps.size(); t += stride) {
                    cell.loss_curve.push_back(run.traj.steps[t].loss);
                    cell.norm_curve.push_back(run.traj.steps[t].groups[0].norm);
                }
                return cell;
            }));
        }
    }

    json j;
    j["loss"] = cfg.loss;
    j["scales"] = scales;
    j["steps"] = cfg.steps;
    j["seed"] = cfg.seed;
    json jvariants = json::array();
    std::size_t idx = 0;
    for (const auto& var : variants) {
        json jv;
        jv["variant"] = var.name;
        jv["eta"] = var.ocfg.eta;
        jv["lambda"] = var.ocfg.lambda;
        jv["clip_factor"] =
            std::isfinite(var.ocfg.clip_factor) ? var.ocfg.clip_factor : 0.0;
        json runs = json::array();
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        bool any = false;
        for (std::size_t s = 0; s < scales.size(); ++s) {
            Cell cell = jobs[idx++].get();
            json jr;
            jr["init_scale"] = scales[s];
            jr["final_loss"] = cell.final_loss;
            jr["initial_loss"] = cell.initial_loss;
            jr["diverged"] = cell.diverged;
            jr["stalled"] = cell.stalled;
            jr["loss_curve"] = cell.loss_curve;
            jr["norm_curve"] = cell.norm_curve;
            runs.push_back(std::move(jr));
            if (!cell.diverged) {
                any = true;
                lo = std::min(lo, cell.final_loss);
                hi = std::max(hi, cell.final_loss);
            }
        }
        jv["runs"] = std::move(runs);
        jv["final_loss_spread"] = any && lo > 0.0 ? (hi - lo) / lo : 0.0;
        jvariants.push_back(std::move(jv));
    }
    j["variants"] = std::move(jvariants);

    const std::string out = j.dump(2) + "\n";
    const fs::path dir = resolve_output_dir(cfg);
    fs::create_directories(dir);
    atomic_write((dir / (cfg.run_name + "_sweep.json")).string(), out);
    return out;
}

std::string cmd_clipstats(const std::string& dist_csv_path, double c) {
    std::ifstream is(dist_csv_path);
    if (!is) throw std::runtime_error("cannot open distribution file " + dist_csv_path);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        auto h = line.find('#');
        if (h != std::string::npos) line.erase(h);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        double v = 0.0, w = 0.0;
        if (std::sscanf(line.c_str(), "%lf , %lf", &v, &w) != 2)
            throw std::runtime_error("distribution file line " + std::to_string(n) +
                                     ": expected value,weight");
        rows.emplace_back(v, w);
    }
    if (rows.empty()) throw std::runtime_error("distribution file is empty");
    std::sort(rows.begin(), rows.end());
    std::vector<double> atoms, weights;
    double total = 0.0;
    for (auto& [v, w] : rows) total += w;
    for (auto& [v, w] : rows) {
        if (!atoms.empty() && v <= atoms.back() + 1e-12 * (1.0 + std::abs(v))) {
            weights.back() += w / total;
        } else {
            atoms.push_back(v);
            weights.push_back(w / total);
        }
    }
    EmpiricalDist p(std::move(atoms), std::move(weights));
    const auto cm = clipped_mean(p, c);
    json j;
    j["c"] = c;
    j["mean"] = p.mean();
    j["mu_c"] = cm.mu_c;
    j["classification"] = cm.classification;
    j["m_inv_c"] = cm.m_inv_c;
    j["alpha_c_bound"] = cm.alpha_c_bound;
    return j.dump(2) + "\n";
}

}  // namespace silab
