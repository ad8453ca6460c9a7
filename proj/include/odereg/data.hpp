#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace odereg {

/// One individual's observed recurrent-event history on [0, censor].
struct Subject {
    std::string id;
    Eigen::VectorXd x;           ///< covariates
    std::vector<double> events;  ///< sorted event times in (0, censor]
    double censor = 0.0;
};

struct Dataset {
    std::vector<Subject> subjects;
    std::size_t num_covariates = 0;

    std::size_t size() const noexcept { return subjects.size(); }
    bool empty() const noexcept { return subjects.empty(); }

    std::size_t total_events() const;
    /// Pooled event times, sorted ascending.
    std::vector<double> pooled_event_times() const;
    /// Largest observed time (event or censoring).
    double max_time() const;

    /// Throws ValidationError naming the offending subject when an invariant
    /// (positive sorted events within [0, censor], finite covariates of the
    /// declared dimension) is violated.
    void validate() const;
};

}  // namespace odereg
