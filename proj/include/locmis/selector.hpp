#pragma once

#include "locmis/bounds.hpp"
#include "locmis/local_errors.hpp"
#include "locmis/mml.hpp"

#include <ostream>
#include <string>

namespace locmis {

enum class SelectionMethod { mblb, mml_linear, mml_rkhs };

inline std::string method_name(SelectionMethod m) {
    switch (m) {
    case SelectionMethod::mblb: return "mblb";
    case SelectionMethod::mml_linear: return "mml-linear";
    case SelectionMethod::mml_rkhs: return "mml-rkhs";
    }
    return "unknown";
}

struct SelectionRow {
    std::size_t policy_id = 0;
    std::size_t model_id = 0;
    /// filled for MBLB selection
    LowerBoundReport bound;
    /// filled for MML selection
    MmlScore mml;
};

struct SelectionReport {
    SelectionMethod method = SelectionMethod::mblb;
    std::vector<SelectionRow> rows;
    std::size_t chosen_policy = 0;
    std::size_t chosen_model = 0;
    /// set when the dataset is small relative to the histogram resolution
    bool sparse_data_warning = false;

    const SelectionRow& chosen_row() const {
        for (const auto& r : rows)
            if (r.policy_id == chosen_policy && r.model_id == chosen_model) return r;
        throw InvalidArgument("chosen pair is not in the report");
    }
};

/// Argmax of lb over the policy x model grid. evaluator(p, m) returns the
/// LowerBoundReport of the pair; cells run in parallel and ties go to the
/// lowest (policy index, model index).
template <class Evaluator>
SelectionReport select_mblb(std::size_t num_policies, std::size_t num_models, Evaluator&& evaluator) {
    require(num_policies > 0, "policy class is empty");
    require(num_models > 0, "dynamics class is empty");
    SelectionReport report;
    report.method = SelectionMethod::mblb;
    report.rows.resize(num_policies * num_models);
    parallel_for(report.rows.size(), [&](std::size_t cell) {
        const std::size_t p = cell / num_models, m = cell % num_models;
        report.rows[cell] = {p, m, evaluator(p, m), {}};
    });
    std::size_t best = 0;
    for (std::size_t cell = 1; cell < report.rows.size(); ++cell)
        if (report.rows[cell].bound.lb > report.rows[best].bound.lb) best = cell;
    if (!std::isfinite(report.rows[best].bound.lb)) throw NumericalError("lower bound is not finite");
    report.chosen_policy = report.rows[best].policy_id;
    report.chosen_model = report.rows[best].model_id;
    return report;
}

/// Exact-density evaluator on tabular problems. The loss expectation runs
/// over the behavior density mu with true next states; ratios and the
/// mismatch penalty use the estimate mu_hat.
struct TabularPopulationEvaluator {
    const TabularMDP* mdp_true;
    std::span<const TabularPolicy> policies;
    std::span<const TabularMDP> models;
    std::span<const ValueTable> value_class;
    std::span<const double> mu;
    std::span<const double> mu_hat;
    double zeta = 50.0;
    TruncationMode mode = TruncationMode::indicator;

    LowerBoundReport operator()(std::size_t p, std::size_t m) const {
        const auto& model = models[m];
        const auto& policy = policies[p];
        const auto rho = exact_occupancy(model, policy);
        const auto w = truncated_ratio(rho.mass, mu_hat, zeta, mode);
        double sup = 0.0;
        for (const auto& g : value_class)
            sup = std::max(sup, population_model_loss(*mdp_true, model, mu, w.weight, g.value));
        const double penalty = mismatch_penalty(rho.mass, mu_hat, zeta, mdp_true->v_max());
        return lower_bound(eta(model, policy), sup, penalty, model.gamma());
    }
};

/// Dataset evaluator on tabular problems: mu_hat is the empirical (s, a)
/// frequency and the loss is the empirical model loss.
struct TabularDatasetEvaluator {
    std::span<const TabularPolicy> policies;
    std::span<const TabularMDP> models;
    std::span<const ValueTable> value_class;
    const TransitionDataset* data;
    double zeta = 50.0;
    TruncationMode mode = TruncationMode::indicator;
    /// reported as the statistical correction when delta is set
    std::optional<double> delta;
    Discretizer disc;
    HistogramDensity mu_hat;
    FiniteClass<TableFn> tests;

    TabularDatasetEvaluator(std::span<const TabularPolicy> policies_, std::span<const TabularMDP> models_,
                            std::span<const ValueTable> value_class_, const TransitionDataset& data_, double zeta_,
                            TruncationMode mode_ = TruncationMode::indicator, std::optional<double> delta_ = {})
        : policies(policies_), models(models_), value_class(value_class_), data(&data_), zeta(zeta_), mode(mode_),
          delta(delta_), disc(Discretizer::tabular(models_.front().num_states(), models_.front().num_actions())),
          mu_hat(fit_histogram(data_, disc)) {
        for (const auto& g : value_class) tests.members.push_back({g.value});
    }

    LowerBoundReport operator()(std::size_t p, std::size_t m) const {
        const auto& model = models[m];
        const auto rho = exact_occupancy(model, policies[p]);
        const auto w = truncated_ratio(rho.mass, mu_hat.mass, zeta, mode);
        const double sup = sup_model_loss(*data, disc, w, model, tests);
        const double penalty = mismatch_penalty(rho.mass, mu_hat.mass, zeta, model.v_max());
        auto report = lower_bound(eta(model, policies[p]), sup, penalty, model.gamma());
        if (delta)
            report.stat_correction = statistical_correction(
                data->size(), zeta, {value_class.size(), models.size(), policies.size()}, *delta, model.v_max());
        return report;
    }
};

/// True when the dataset has fewer than 10 records per histogram bin.
inline bool sparse_for_histogram(const TransitionDataset& data, const Discretizer& disc) {
    return data.size() < disc.size() * 10;
}

/// Paired candidates scored by an MML loss; the highest score wins and ties
/// go to the earliest candidate. loss(i) returns the MmlScore of candidate i.
template <class LossFn>
SelectionReport select_mml(std::span<const std::pair<std::size_t, std::size_t>> candidates, SelectionMethod method,
                           LossFn&& loss) {
    require(!candidates.empty(), "candidate list is empty");
    require(method != SelectionMethod::mblb, "select_mml needs an MML method");
    SelectionReport report;
    report.method = method;
    report.rows.resize(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) {
        report.rows[i] = {candidates[i].first, candidates[i].second, {}, loss(i)};
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        if (report.rows[i].mml.score > report.rows[best].mml.score) best = i;
    report.chosen_policy = report.rows[best].policy_id;
    report.chosen_model = report.rows[best].model_id;
    return report;
}

/// MML over (policy, model) pairs on a dataset with a linear test basis.
template <class Model, class Basis>
SelectionReport select_mml_linear(std::span<const std::pair<std::size_t, std::size_t>> candidates,
                                  std::span<const Model> models, const TransitionDataset& data, const Basis& basis,
                                  const MmlLinearConfig& cfg = {}) {
    return select_mml(candidates, SelectionMethod::mml_linear,
                      [&](std::size_t i) { return mml_linear_loss(data, models[candidates[i].second], basis, cfg); });
}

/// MML over (policy, model) pairs on a dataset with the kernel test class.
template <class Model>
SelectionReport select_mml_rkhs(std::span<const std::pair<std::size_t, std::size_t>> candidates,
                                std::span<const Model> models, const TransitionDataset& data,
                                const KernelSpec& kernel, const MmlRkhsConfig& cfg = {}) {
    return select_mml(candidates, SelectionMethod::mml_rkhs,
                      [&](std::size_t i) { return mml_rkhs_loss(data, models[candidates[i].second], kernel, cfg); });
}

inline void write_selection_csv(const SelectionReport& report, std::ostream& out) {
    if (report.method == SelectionMethod::mblb) {
        out << "policy_id,model_id,eta_model,sup_loss,penalty,lb,stat_correction,chosen\n";
        for (const auto& r : report.rows) {
            const auto& b = r.bound;
            out << r.policy_id << ',' << r.model_id << ',' << format_double(b.eta_model) << ','
                << format_double(b.sup_loss) << ',' << format_double(b.mismatch_penalty) << ','
                << format_double(b.lb) << ',' << (b.stat_correction ? format_double(*b.stat_correction) : "") << ','
                << (r.policy_id == report.chosen_policy && r.model_id == report.chosen_model ? 1 : 0) << '\n';
        }
    } else {
        out << "policy_id,model_id,loss,score,chosen\n";
        for (const auto& r : report.rows)
            out << r.policy_id << ',' << r.model_id << ',' << format_double(r.mml.loss) << ','
                << format_double(r.mml.score) << ','
                << (r.policy_id == report.chosen_policy && r.model_id == report.chosen_model ? 1 : 0) << '\n';
    }
}

} // namespace locmis
