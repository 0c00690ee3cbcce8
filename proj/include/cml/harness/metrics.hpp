#pragma once

#include <span>
#include <string>
#include <vector>

#include "cml/meta/sequential.hpp"

namespace cml::harness {

using ad::Index;
using meta::AccuracyTable;

struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

/// Normal-approximation 95% interval: mean ± 1.96 sd/√n, sd with n-1.
Interval confidence_interval(std::span<const double> samples);

/// Value rounded to 6 significant digits (what the outputs store).
double round6(double v);
std::string format6(double v);

/// Per-cell statistics over independent sequences. `cells` is n*n,
/// row-major (task, time step); absent cells hold NaN. Half-widths are NaN
/// when there is a single sequence.
struct Aggregate {
    Index n = 0;
    Index sequences = 0;
    std::vector<Interval> cells;
    /// Mean over tasks of the last column, per sequence, then aggregated.
    Interval final_average;
    /// Accuracy right after learning each task (the diagonal), pooled.
    Interval fresh_accuracy;

    const Interval& at(Index task, Index step) const { return cells[static_cast<std::size_t>(task * n + step)]; }
};

Aggregate aggregate(std::span<const AccuracyTable> tables);

/// One point of the per-task accuracy curves. Time steps before the task
/// arrives carry accuracy 0.
struct TimelinePoint {
    Index task = 0;
    Index step = 0;
    double accuracy = 0.0;
    double half_width = 0.0;
};

std::vector<TimelinePoint> timeline(const Aggregate& agg);

/// "method,task,time_step,accuracy,ci_half_width" with 1-based task/step.
std::string timeline_csv(const std::string& method, const Aggregate& agg);
/// "method,row,time_step,mean,ci_half_width": one line per present cell
/// (row T1..Tn), then the "Average" row over the last time step.
std::string tables_csv(const std::string& method, const Aggregate& agg);

} // namespace cml::harness
