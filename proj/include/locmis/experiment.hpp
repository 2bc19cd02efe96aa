#pragma once

#include "locmis/gae.hpp"
#include "locmis/hard_instance.hpp"
#include "locmis/lqr.hpp"
#include "locmis/rollout.hpp"
#include "locmis/spi.hpp"
#include "locmis/tabular_io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace locmis {

/// Malformed or out-of-range configuration.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

enum class ExperimentKind { hard_instance, lqr, spi_check, custom_tabular };
enum class EtaMode { monte_carlo, gae };

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::lqr;
    double gamma = 0.9;
    double zeta = 50.0;
    double delta = 0.1;
    std::uint64_t seed = 1;
    /// behavior trajectories per target (LQR)
    std::size_t n_traj = 2000;
    std::size_t traj_length = 20;
    /// rollouts per (policy, model) cell for occupancy and value estimates
    std::size_t rollout_traj = 2000;
    std::size_t horizon = 200;
    /// rollouts per policy for true values
    std::size_t eval_traj = 10000;
    std::size_t bins = 10;
    TruncationMode truncation_mode = TruncationMode::indicator;
    SignConvention sign_convention = SignConvention::minus_B;
    double true_x = 6.0;
    double behavior_noise = 0.5;
    double policy_noise = 0.1;
    double action_bound = 2.5;
    EtaMode eta_mode = EtaMode::monte_carlo;
    double gae_lambda = 0.95;
    MmlBasisKind mml_basis = MmlBasisKind::squared;
    MmlLinearMethod mml_method = MmlLinearMethod::closed_form;
    std::size_t mml_steps = 500;
    double mml_rate = 0.01;
    /// 0 selects the median heuristic
    double kernel_bandwidth = 0.0;
    std::size_t mml_records = 1000;
    std::size_t mml_samples = 32;
    std::size_t d = 4;
    double theta_spacing = 0.1;
    double selection_spacing = 0.25;
    std::size_t dataset_size = 5000;
    std::size_t spi_trials = 20;
    std::string mdp_path;
    std::vector<std::string> model_paths;
    std::size_t max_policies = 4096;
    bool write_dataset = true;
    std::string output = ".";
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

inline double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out))
        throw ConfigError("'" + key + "' expects a real number, got '" + value + "'");
    return out;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end)
        throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

template <class Enum>
Enum parse_choice(const std::string& key, const std::string& value,
                  std::initializer_list<std::pair<const char*, Enum>> choices) {
    std::string allowed;
    for (const auto& [name, e] : choices) {
        if (value == name) return e;
        allowed += allowed.empty() ? name : std::string("|") + name;
    }
    throw ConfigError("'" + key + "' expects one of " + allowed + ", got '" + value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct ConfigKey {
    const char* name;
    const char* help;
    void (*apply)(ExperimentConfig&, const std::string& key, const std::string& value);
};

// clang-format off
inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"experiment", "hard-instance | lqr | spi-check | custom-tabular", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.experiment = parse_choice<ExperimentKind>(k, v, {{"hard-instance", ExperimentKind::hard_instance}, {"lqr", ExperimentKind::lqr},
                                                               {"spi-check", ExperimentKind::spi_check}, {"custom-tabular", ExperimentKind::custom_tabular}}); }},
        {"gamma", "discount in [0, 1)", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.gamma = parse_real(k, v); }},
        {"zeta", "ratio cutoff, > 0", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.zeta = parse_real(k, v); }},
        {"delta", "confidence level in (0, 1)", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.delta = parse_real(k, v); }},
        {"seed", "base random seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_count(k, v); }},
        {"n_traj", "behavior trajectories per target", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.n_traj = parse_count(k, v); }},
        {"traj_length", "behavior trajectory length", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.traj_length = parse_count(k, v); }},
        {"rollout_traj", "rollouts per (policy, model) cell", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.rollout_traj = parse_count(k, v); }},
        {"horizon", "rollout horizon", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.horizon = parse_count(k, v); }},
        {"eval_traj", "rollouts per policy for true values", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval_traj = parse_count(k, v); }},
        {"bins", "histogram bins per axis", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.bins = parse_count(k, v); }},
        {"truncation_mode", "indicator | clip", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.truncation_mode = parse_choice<TruncationMode>(k, v, {{"indicator", TruncationMode::indicator}, {"clip", TruncationMode::clip}}); }},
        {"sign_convention", "minus_B | plus_B", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.sign_convention = parse_choice<SignConvention>(k, v, {{"minus_B", SignConvention::minus_B}, {"plus_B", SignConvention::plus_B}}); }},
        {"true_x", "LQR scenario parameter", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.true_x = parse_real(k, v); }},
        {"behavior_noise", "action noise std of the behavior policies", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.behavior_noise = parse_real(k, v); }},
        {"policy_noise", "action noise std of candidate policies", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.policy_noise = parse_real(k, v); }},
        {"action_bound", "histogram action range [-b, b]", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.action_bound = parse_real(k, v); }},
        {"eta_mode", "mc | gae", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.eta_mode = parse_choice<EtaMode>(k, v, {{"mc", EtaMode::monte_carlo}, {"gae", EtaMode::gae}}); }},
        {"gae_lambda", "GAE lambda in [0, 1]", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.gae_lambda = parse_real(k, v); }},
        {"mml_basis", "squared | polynomial2", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.mml_basis = parse_choice<MmlBasisKind>(k, v, {{"squared", MmlBasisKind::squared}, {"polynomial2", MmlBasisKind::polynomial2}}); }},
        {"mml_method", "closed_form | gradient", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.mml_method = parse_choice<MmlLinearMethod>(k, v, {{"closed_form", MmlLinearMethod::closed_form}, {"gradient", MmlLinearMethod::gradient}}); }},
        {"mml_steps", "ascent steps", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.mml_steps = parse_count(k, v); }},
        {"mml_rate", "ascent rate", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.mml_rate = parse_real(k, v); }},
        {"kernel_bandwidth", "RBF bandwidth, 0 for the median heuristic", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.kernel_bandwidth = parse_real(k, v); }},
        {"mml_records", "records kept for the kernel loss", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.mml_records = parse_count(k, v); }},
        {"mml_samples", "next-state draws for sampled models", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.mml_samples = parse_count(k, v); }},
        {"d", "hard-instance arm count", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.d = parse_count(k, v); }},
        {"theta_spacing", "grid spacing of the theta sweep", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.theta_spacing = parse_real(k, v); }},
        {"selection_spacing", "grid spacing of the selection model class", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.selection_spacing = parse_real(k, v); }},
        {"dataset_size", "sampled transitions for tabular experiments", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset_size = parse_count(k, v); }},
        {"spi_trials", "random setups in spi-check", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.spi_trials = parse_count(k, v); }},
        {"mdp", "true MDP JSON (custom-tabular)", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.mdp_path = v; }},
        {"models", "comma-separated model JSONs (custom-tabular)", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.model_paths = split_list(v); }},
        {"max_policies", "cap on enumerated deterministic policies", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.max_policies = parse_count(k, v); }},
        {"write_dataset", "write dataset.csv", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.write_dataset = parse_bool(k, v); }},
        {"output", "output directory", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output = v; }},
    };
    return keys;
}
// clang-format on

} // namespace detail

inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (key == k.name) return k.apply(cfg, key, detail::trim(value));
    throw ConfigError("unknown configuration key '" + key + "'");
}

/// Flat key=value text; '#' starts a comment. Relative mdp/models paths are
/// resolved against base_dir when it is given.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& base_dir = "") {
    std::stringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + " is not key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (!base_dir.empty() && (key == "mdp" || key == "models")) {
            std::string joined;
            for (const auto& item : detail::split_list(value)) {
                const std::filesystem::path p(item);
                joined += (joined.empty() ? "" : ",") + (p.is_relative() ? (std::filesystem::path(base_dir) / p).string() : item);
            }
            value = joined;
        }
        apply_setting(cfg, key, value);
    }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    apply_config_text(cfg, buffer.str(), std::filesystem::path(path).parent_path().string());
}

inline void validate(const ExperimentConfig& c) {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    check(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
    check(c.zeta > 0.0, "zeta must be positive");
    check(c.delta > 0.0 && c.delta < 1.0, "delta must lie in (0, 1)");
    check(c.n_traj > 0 && c.traj_length > 0, "behavior data needs trajectories");
    check(c.rollout_traj > 0 && c.eval_traj > 0 && c.horizon > 0, "rollout counts and horizon must be positive");
    check(c.bins > 0, "bins must be positive");
    check(c.behavior_noise >= 0.0 && c.policy_noise >= 0.0, "noise std must be nonnegative");
    check(c.action_bound > 0.0, "action_bound must be positive");
    check(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
    check(c.mml_rate > 0.0, "mml_rate must be positive");
    check(c.kernel_bandwidth >= 0.0, "kernel_bandwidth must be nonnegative");
    check(c.mml_records >= 2 && c.mml_samples > 0, "kernel loss needs records and samples");
    check(c.d >= 2, "d must be at least 2");
    check(c.theta_spacing > 0.0 && c.theta_spacing <= 1.0, "theta_spacing must lie in (0, 1]");
    check(c.selection_spacing > 0.0 && c.selection_spacing <= 1.0, "selection_spacing must lie in (0, 1]");
    check(c.dataset_size > 0, "dataset_size must be positive");
    if (c.experiment == ExperimentKind::custom_tabular) {
        check(!c.mdp_path.empty(), "custom-tabular needs mdp=<path>");
        check(!c.model_paths.empty(), "custom-tabular needs models=<path>[,<path>...]");
    }
}

/// Names and help strings of every configuration key, in schema order.
inline std::vector<std::pair<std::string, std::string>> config_schema() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : detail::config_keys()) out.emplace_back(k.name, k.help);
    return out;
}

/// One line per selection method in summary.csv.
struct SummaryRow {
    std::string method;
    std::size_t policy_id = 0;
    std::size_t model_id = 0;
    std::string label;
    double eta_true = 0.0;
};

struct ExperimentResult {
    std::vector<SummaryRow> summary;
    std::vector<std::string> files;
};

namespace detail {

class OutputDir {
public:
    explicit OutputDir(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        require(std::filesystem::is_directory(dir_), "cannot create output directory " + dir);
    }

    template <class Writer>
    void write(const std::string& name, Writer writer, ExperimentResult& result) const {
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        require(static_cast<bool>(out), "cannot write " + path.string());
        writer(out);
        require(static_cast<bool>(out), "failed writing " + path.string());
        result.files.push_back(path.string());
    }

private:
    std::filesystem::path dir_;
};

inline void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "method,policy_id,model_id,label,eta_true\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.policy_id << ',' << r.model_id << ',' << r.label << ','
            << format_double(r.eta_true) << '\n';
}

inline std::string fmt_v(double v) { return "v=" + format_double(v); }

/// Seed for the rollouts of one grid cell.
inline std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t stream) { return derive_rng(seed, stream)(); }

} // namespace detail

/// Candidate policies of the hard-instance selection: the arm policies, the
/// greedy policy of every basis model and the uniform policy.
inline std::vector<TabularPolicy> hard_instance_policies(const HardInstanceSpec& spec) {
    std::vector<TabularPolicy> out;
    for (std::size_t x = 1; x <= spec.d; ++x) out.push_back(arm_policy(spec, x));
    for (std::size_t j = 0; j < spec.d; ++j)
        out.push_back(greedy_policy(build_theta_mdp(spec, ThetaDynamics::basis(spec.d, j))));
    out.push_back(TabularPolicy::uniform(spec.num_states(), spec.num_actions()));
    return out;
}

struct HardSelectionOutcome {
    SelectionReport report;
    std::vector<TabularPolicy> policies;
    std::vector<ThetaDynamics> thetas;
    double eta_true = 0.0;
};

/// Joint selection on the hard instance with exact densities: mu = mu_hat =
/// occupancy of the uniform policy under the true dynamics.
inline HardSelectionOutcome hard_instance_selection(const HardInstanceSpec& spec, double zeta, double spacing) {
    const auto family = build_hard_family(spec);
    HardSelectionOutcome out;
    out.policies = hard_instance_policies(spec);
    out.thetas = theta_grid(spec.d, spacing);
    std::vector<TabularMDP> models;
    for (const auto& t : out.thetas) models.push_back(build_theta_mdp(spec, t));
    const auto mu = exact_occupancy(family.true_mdp, TabularPolicy::uniform(spec.num_states(), spec.num_actions()));
    const TabularPopulationEvaluator evaluator{&family.true_mdp, out.policies, models, family.values,
                                               mu.mass,          mu.mass,      zeta,   TruncationMode::indicator};
    out.report = select_mblb(out.policies.size(), models.size(), evaluator);
    out.eta_true = eta(family.true_mdp, out.policies[out.report.chosen_policy]);
    return out;
}

struct DecoupledOutcome {
    ThetaDynamics theta;
    TabularPolicy policy;
    double eta_true = 0.0;
};

/// Maximum-likelihood theta on uniform-policy transitions, then the greedy
/// policy of the fitted model.
inline DecoupledOutcome hard_instance_decoupled(const HardInstanceSpec& spec, std::span<const ThetaDynamics> grid,
                                                std::size_t n, std::uint64_t seed) {
    const auto truth = build_true_hard_mdp(spec);
    const auto mu = exact_occupancy(truth, TabularPolicy::uniform(spec.num_states(), spec.num_actions()));
    Rng rng = derive_rng(seed, 0x6475);
    const auto data = sample_tabular_transitions(truth, mu.mass, n, rng);
    auto theta = fit_theta_by_likelihood(spec, data, grid);
    auto policy = greedy_policy(build_theta_mdp(spec, theta));
    const double value = eta(truth, policy);
    return {std::move(theta), std::move(policy), value};
}

inline ExperimentResult run_hard_instance(const ExperimentConfig& cfg) {
    const HardInstanceSpec spec(cfg.d, cfg.gamma);
    const detail::OutputDir dir(cfg.output);
    ExperimentResult result;

    const auto sweep_grid = theta_grid(spec.d, cfg.theta_spacing);
    const auto sweep = hard_instance_sweep(spec, sweep_grid);
    dir.write("sweep.csv", [&](std::ostream& o) { write_sweep_csv(sweep, o); }, result);

    const auto selection = hard_instance_selection(spec, cfg.zeta, cfg.selection_spacing);
    dir.write("bounds.csv", [&](std::ostream& o) { write_selection_csv(selection.report, o); }, result);

    const auto truth = build_true_hard_mdp(spec);
    dir.write("policy_values.csv", [&](std::ostream& o) {
        o << "policy_id,eta_true\n";
        for (std::size_t p = 0; p < selection.policies.size(); ++p)
            o << p << ',' << format_double(eta(truth, selection.policies[p])) << '\n';
    }, result);

    result.summary.push_back({"mblb", selection.report.chosen_policy, selection.report.chosen_model,
                              "theta_index=" + std::to_string(selection.report.chosen_model), selection.eta_true});

    // MML with population losses picks the model with the smallest worst-case
    // loss and plans in it.
    std::size_t mml_best = 0;
    double mml_loss = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sweep.size(); ++k)
        if (sweep[k].mml_loss < mml_loss) mml_loss = sweep[k].mml_loss, mml_best = k;
    const double mml_eta = eta(truth, greedy_policy(build_theta_mdp(spec, sweep_grid[mml_best])));
    result.summary.push_back({"mml-population", 0, mml_best, "sweep_theta_index=" + std::to_string(mml_best), mml_eta});

    const auto decoupled = hard_instance_decoupled(spec, sweep_grid, cfg.dataset_size, cfg.seed);
    std::size_t fitted = 0;
    for (std::size_t k = 0; k < sweep_grid.size(); ++k)
        if (sweep_grid[k].theta == decoupled.theta.theta) fitted = k;
    result.summary.push_back({"likelihood-plan", 0, fitted, "sweep_theta_index=" + std::to_string(fitted),
                              decoupled.eta_true});
    result.summary.push_back({"optimal", 0, 0, "max_pi", optimal_eta(truth)});
    dir.write("summary.csv", [&](std::ostream& o) { detail::write_summary(o, result.summary); }, result);
    return result;
}

/// Everything computed by the LQR experiment.
struct LqrOutcome {
    Lqr1DParams params;
    LqrClasses classes;
    TransitionDataset data;
    HistogramDensity mu_hat;
    SelectionReport mblb;
    SelectionReport mml_linear;
    SelectionReport mml_rkhs;
    /// true Monte-Carlo value of every candidate policy
    std::vector<McEstimate> true_values;
    /// policy maximizing the model value under each model
    std::vector<std::size_t> planned_policy;
    bool sparse_data_warning = false;
};

inline LqrOutcome lqr_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    LqrOutcome out;
    out.params.x = cfg.true_x;
    out.params.gamma = cfg.gamma;
    out.params.sign_convention = cfg.sign_convention;
    out.params.validate();
    out.classes = build_lqr_classes(out.params, cfg.policy_noise);

    BehaviorDataConfig data_cfg;
    data_cfg.trajectories_per_target = cfg.n_traj;
    data_cfg.length = cfg.traj_length;
    data_cfg.policy_noise_std = cfg.behavior_noise;
    out.data = generate_behavior_dataset(out.params, cfg.seed, data_cfg);

    const auto disc = Discretizer::uniform(out.params.state_lo, out.params.state_hi, cfg.bins, -cfg.action_bound,
                                           cfg.action_bound, cfg.bins);
    out.mu_hat = fit_histogram(out.data, disc);
    out.sparse_data_warning = sparse_for_histogram(out.data, disc);
    const double v_max = lqr_v_max(out.params, cfg.action_bound);
    const auto& policies = out.classes.policies;
    const auto& models = out.classes.transitions;
    const FiniteClass<QuadraticValueFn> tests{out.classes.values};
    const ClassSizes sizes{tests.members.size(), models.size(), policies.size()};
    const double stat = statistical_correction(out.data.size(), cfg.zeta, sizes, cfg.delta, v_max);

    out.mblb = select_mblb(policies.size(), models.size(), [&](std::size_t p, std::size_t m) {
        const std::uint64_t cell = p * models.size() + m;
        const auto& model = models[m];
        const auto& policy = policies[p];
        const auto rho = estimate_occupancy(model, policy, disc, cfg.rollout_traj, cfg.horizon, cfg.gamma,
                                            detail::cell_seed(cfg.seed, 0x1000 + cell));
        const auto w = truncated_ratio(rho, out.mu_hat, cfg.zeta, cfg.truncation_mode);
        const double sup = sup_model_loss(out.data, disc, w, model, tests);
        const double penalty = mismatch_penalty(rho, out.mu_hat, cfg.zeta, v_max);
        double eta_model = 0.0;
        const auto value_seed = detail::cell_seed(cfg.seed, 0x2000 + cell);
        if (cfg.eta_mode == EtaMode::monte_carlo) {
            eta_model = mc_eta(model, policy, cfg.rollout_traj, cfg.horizon, cfg.gamma, value_seed).mean;
        } else {
            const auto rollouts = collect_trajectories(model, policy, cfg.rollout_traj, cfg.horizon, value_seed);
            eta_model = gae_eta(rollouts, cfg.gamma, cfg.gae_lambda).eta;
        }
        auto report = lower_bound(eta_model, sup, penalty, cfg.gamma);
        report.stat_correction = stat;
        return report;
    });
    out.mblb.sparse_data_warning = out.sparse_data_warning;

    // Each model is paired with the policy that is best in it.
    out.planned_policy.assign(models.size(), 0);
    for (std::size_t m = 0; m < models.size(); ++m) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < policies.size(); ++p) {
            const double v = out.mblb.rows[p * models.size() + m].bound.eta_model;
            if (v > best) best = v, out.planned_policy[m] = p;
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t m = 0; m < models.size(); ++m) pairs.emplace_back(out.planned_policy[m], m);

    MmlLinearConfig linear_cfg;
    linear_cfg.method = cfg.mml_method;
    linear_cfg.steps = cfg.mml_steps;
    linear_cfg.rate = cfg.mml_rate;
    out.mml_linear = select_mml_linear<PiecewiseTransition>(pairs, models, out.data, PolynomialBasis{cfg.mml_basis},
                                                            linear_cfg);
    const auto small = subsample(out.data, cfg.mml_records);
    const KernelSpec kernel = cfg.kernel_bandwidth > 0.0 ? KernelSpec(cfg.kernel_bandwidth) : triple_bandwidth(small);
    out.mml_rkhs = select_mml_rkhs<PiecewiseTransition>(pairs, models, small, kernel,
                                                        {cfg.mml_samples, cfg.seed});

    const LqrTrueDynamics truth{out.params};
    out.true_values.resize(policies.size());
    for (std::size_t p = 0; p < policies.size(); ++p)
        out.true_values[p] =
            mc_eta(truth, policies[p], cfg.eval_traj, cfg.horizon, cfg.gamma, detail::cell_seed(cfg.seed, 0x3000 + p));
    return out;
}

inline ExperimentResult run_lqr(const ExperimentConfig& cfg) {
    const auto out = lqr_experiment(cfg);
    const detail::OutputDir dir(cfg.output);
    ExperimentResult result;
    if (cfg.write_dataset) dir.write("dataset.csv", [&](std::ostream& o) { write_dataset_csv(out.data, o); }, result);
    dir.write("histogram.csv", [&](std::ostream& o) { write_histogram_csv(out.mu_hat, o); }, result);
    dir.write("bounds.csv", [&](std::ostream& o) { write_selection_csv(out.mblb, o); }, result);
    dir.write("mml_linear.csv", [&](std::ostream& o) { write_selection_csv(out.mml_linear, o); }, result);
    dir.write("mml_rkhs.csv", [&](std::ostream& o) { write_selection_csv(out.mml_rkhs, o); }, result);
    const auto& policies = out.classes.policies;
    dir.write("policy_values.csv", [&](std::ostream& o) {
        o << "policy_id,v,eta_true,std_err\n";
        for (std::size_t p = 0; p < policies.size(); ++p)
            o << p << ',' << format_double(policies[p].v) << ',' << format_double(out.true_values[p].mean) << ','
              << format_double(out.true_values[p].std_err) << '\n';
    }, result);
    for (const auto* rep : {&out.mblb, &out.mml_linear, &out.mml_rkhs})
        result.summary.push_back({method_name(rep->method), rep->chosen_policy, rep->chosen_model,
                                  detail::fmt_v(policies[rep->chosen_policy].v),
                                  out.true_values[rep->chosen_policy].mean});
    std::size_t best = 0;
    for (std::size_t p = 1; p < policies.size(); ++p)
        if (out.true_values[p].mean > out.true_values[best].mean) best = p;
    result.summary.push_back({"oracle", best, 0, detail::fmt_v(policies[best].v), out.true_values[best].mean});
    dir.write("summary.csv", [&](std::ostream& o) { detail::write_summary(o, result.summary); }, result);
    return result;
}

/// Safe-improvement check on the hard instance (exact densities) followed by
/// random tabular setups.
inline std::vector<std::pair<std::string, SpiReport>> spi_experiment(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, SpiReport>> out;
    const HardInstanceSpec spec(cfg.d, cfg.gamma);
    const auto family = build_hard_family(spec);
    std::vector<TabularMDP> models;
    for (std::size_t j = 0; j < spec.d; ++j) models.push_back(build_theta_mdp(spec, ThetaDynamics::basis(spec.d, j)));
    const auto mu = exact_occupancy(family.true_mdp, TabularPolicy::uniform(spec.num_states(), spec.num_actions()));
    const SpiSetup hard{family.true_mdp, models, hard_instance_policies(spec), family.values, mu.mass, mu.mass};
    out.emplace_back("hard-instance", verify_spi(hard, cfg.zeta, cfg.delta));
    for (std::size_t trial = 0; trial < cfg.spi_trials; ++trial) {
        Rng rng = derive_rng(cfg.seed, 0x5000 + trial);
        const auto setup = random_spi_setup(rng, 4, 2, cfg.gamma);
        out.emplace_back("random-" + std::to_string(trial), verify_spi(setup, cfg.zeta, cfg.delta));
    }
    return out;
}

inline ExperimentResult run_spi_check(const ExperimentConfig& cfg) {
    const auto reports = spi_experiment(cfg);
    const detail::OutputDir dir(cfg.output);
    ExperimentResult result;
    dir.write("spi.csv", [&](std::ostream& o) {
        o << "setup,chosen_policy,chosen_model,lhs,rhs,slack,holds\n";
        for (const auto& [name, r] : reports)
            o << name << ',' << r.chosen_policy << ',' << r.chosen_model << ',' << format_double(r.lhs) << ','
              << format_double(r.rhs) << ',' << format_double(r.slack()) << ',' << (r.holds() ? 1 : 0) << '\n';
    }, result);
    for (const auto& [name, r] : reports)
        result.summary.push_back({"mblb", r.chosen_policy, r.chosen_model, name, r.lhs});
    dir.write("summary.csv", [&](std::ostream& o) { detail::write_summary(o, result.summary); }, result);
    return result;
}

/// Joint selection over user-supplied tabular models on transitions sampled
/// from the uniform policy of the true MDP.
inline ExperimentResult run_custom_tabular(const ExperimentConfig& cfg) {
    const auto truth = load_mdp(cfg.mdp_path);
    std::vector<TabularMDP> models;
    for (const auto& path : cfg.model_paths) {
        models.push_back(load_mdp(path));
        require(truth.compatible_with(models.back()), "model " + path + " does not match the true MDP");
    }
    const auto policies = all_deterministic_policies(truth.num_states(), truth.num_actions(), cfg.max_policies);
    std::vector<ValueTable> values;
    for (const auto& p : policies) values.push_back(exact_value(truth, p));
    const auto mu = exact_occupancy(truth, TabularPolicy::uniform(truth.num_states(), truth.num_actions()));
    Rng rng = derive_rng(cfg.seed, 0x7462);
    const auto data = sample_tabular_transitions(truth, mu.mass, cfg.dataset_size, rng);
    const TabularDatasetEvaluator evaluator(policies, models, values, data, cfg.zeta, cfg.truncation_mode, cfg.delta);
    auto report = select_mblb(policies.size(), models.size(), evaluator);
    report.sparse_data_warning = sparse_for_histogram(data, evaluator.disc);

    const detail::OutputDir dir(cfg.output);
    ExperimentResult result;
    if (cfg.write_dataset) dir.write("dataset.csv", [&](std::ostream& o) { write_dataset_csv(data, o); }, result);
    dir.write("bounds.csv", [&](std::ostream& o) { write_selection_csv(report, o); }, result);
    dir.write("policy_values.csv", [&](std::ostream& o) {
        o << "policy_id,eta_true\n";
        for (std::size_t p = 0; p < policies.size(); ++p) o << p << ',' << format_double(eta(truth, policies[p])) << '\n';
    }, result);
    result.summary.push_back({"mblb", report.chosen_policy, report.chosen_model, "",
                              eta(truth, policies[report.chosen_policy])});
    result.summary.push_back({"optimal", 0, 0, "max_pi", optimal_eta(truth)});
    dir.write("summary.csv", [&](std::ostream& o) { detail::write_summary(o, result.summary); }, result);
    return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    switch (cfg.experiment) {
    case ExperimentKind::hard_instance: return run_hard_instance(cfg);
    case ExperimentKind::lqr: return run_lqr(cfg);
    case ExperimentKind::spi_check: return run_spi_check(cfg);
    case ExperimentKind::custom_tabular: return run_custom_tabular(cfg);
    }
    throw ConfigError("unknown experiment");
}

} // namespace locmis
