#pragma once

#include "locmis/core.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace locmis {

enum class Domain { tabular, continuous_1d };

/// One logged transition. For tabular data, s, a and s_next hold exact
/// integer indices.
struct TransitionRecord {
    std::int64_t traj_id = 0;
    std::int64_t t = 0;
    double s = 0.0;
    double a = 0.0;
    double r = 0.0;
    double s_next = 0.0;

    bool operator==(const TransitionRecord&) const = default;
};

/// Offline dataset of transitions with trajectory bookkeeping.
struct TransitionDataset {
    Domain domain = Domain::continuous_1d;
    std::vector<TransitionRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    /// Validates finiteness and, for tabular data, index ranges.
    void validate(std::size_t num_states = 0, std::size_t num_actions = 0) const {
        for (const auto& rec : records) {
            require(std::isfinite(rec.s) && std::isfinite(rec.a) && std::isfinite(rec.r) &&
                        std::isfinite(rec.s_next),
                    "dataset contains non-finite values");
            if (domain == Domain::tabular && num_states > 0) {
                auto is_index = [](double x, std::size_t n) {
                    return x >= 0.0 && x < static_cast<double>(n) && x == std::floor(x);
                };
                require(is_index(rec.s, num_states) && is_index(rec.s_next, num_states) &&
                            is_index(rec.a, num_actions),
                        "tabular dataset index out of range");
            }
        }
    }
};

/// Records of one trajectory, ordered by time step.
struct Trajectory {
    std::int64_t traj_id = 0;
    std::vector<TransitionRecord> steps;
};

/// Groups records by trajectory id (ascending) and checks that time indices
/// are contiguous from the first recorded step.
inline std::vector<Trajectory> split_trajectories(const TransitionDataset& data) {
    std::map<std::int64_t, std::vector<TransitionRecord>> grouped;
    for (const auto& rec : data.records) grouped[rec.traj_id].push_back(rec);
    std::vector<Trajectory> out;
    out.reserve(grouped.size());
    for (auto& [id, steps] : grouped) {
        std::stable_sort(steps.begin(), steps.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
        for (std::size_t i = 1; i < steps.size(); ++i)
            require(steps[i].t == steps[i - 1].t + 1,
                    "trajectory " + std::to_string(id) + " has non-contiguous time indices");
        out.push_back({id, std::move(steps)});
    }
    return out;
}

inline constexpr const char* kDatasetCsvHeader = "traj_id,t,s,a,r,s_next";

inline void write_dataset_csv(const TransitionDataset& data, std::ostream& out) {
    out << kDatasetCsvHeader << '\n';
    for (const auto& rec : data.records)
        out << rec.traj_id << ',' << rec.t << ',' << format_double(rec.s) << ',' << format_double(rec.a) << ','
            << format_double(rec.r) << ',' << format_double(rec.s_next) << '\n';
}

inline TransitionDataset read_dataset_csv(std::istream& in, Domain domain = Domain::continuous_1d) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "dataset CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == kDatasetCsvHeader, "dataset CSV header must be '" + std::string(kDatasetCsvHeader) + "'");
    TransitionDataset data;
    data.domain = domain;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        require(fields.size() == 6, "dataset CSV line " + std::to_string(line_no) + " must have 6 fields");
        TransitionRecord rec;
        try {
            rec.traj_id = std::stoll(fields[0]);
            rec.t = std::stoll(fields[1]);
            rec.s = std::stod(fields[2]);
            rec.a = std::stod(fields[3]);
            rec.r = std::stod(fields[4]);
            rec.s_next = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw InvalidArgument("dataset CSV line " + std::to_string(line_no) + " is not numeric");
        }
        data.records.push_back(rec);
    }
    data.validate();
    return data;
}

inline void save_dataset_csv(const TransitionDataset& data, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write dataset file " + path);
    write_dataset_csv(data, out);
}

inline TransitionDataset load_dataset_csv(const std::string& path, Domain domain = Domain::continuous_1d) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open dataset file " + path);
    return read_dataset_csv(in, domain);
}

} // namespace locmis
