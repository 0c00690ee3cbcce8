#include "cml/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cml/error.hpp"

namespace cml::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Interval interval_or_point(const std::vector<double>& samples)
{
    if (samples.size() >= 2) {
        return confidence_interval(samples);
    }
    return {samples.at(0), kNaN};
}

std::string cell(double v)
{
    return std::isnan(v) ? std::string() : format6(v);
}

} // namespace

Interval confidence_interval(std::span<const double> samples)
{
    if (samples.size() < 2) {
        throw InvalidArgument("confidence interval needs at least 2 samples, got " + std::to_string(samples.size()));
    }
    const auto n = static_cast<double>(samples.size());
    // shifted by the first sample, so a constant sample has exactly zero spread
    const double shift = samples[0];
    double sum = 0.0;
    double sq = 0.0;
    for (double s : samples) {
        sum += s - shift;
        sq += (s - shift) * (s - shift);
    }
    const double mean = shift + sum / n;
    const double sd = std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1.0)));
    return {mean, 1.96 * sd / std::sqrt(n)};
}

double round6(double v)
{
    if (!std::isfinite(v)) {
        return v;
    }
    return std::stod(format6(v));
}

std::string format6(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

Aggregate aggregate(std::span<const AccuracyTable> tables)
{
    if (tables.empty()) {
        throw InvalidArgument("aggregate: no accuracy tables");
    }
    Aggregate agg;
    agg.n = tables[0].size();
    agg.sequences = static_cast<Index>(tables.size());
    for (const auto& t : tables) {
        if (t.size() != agg.n) {
            throw ShapeError("aggregate: tables of different sizes");
        }
    }
    agg.cells.assign(static_cast<std::size_t>(agg.n * agg.n), Interval{kNaN, kNaN});
    std::vector<double> samples;
    std::vector<double> fresh;
    for (Index i = 0; i < agg.n; ++i) {
        for (Index j = i; j < agg.n; ++j) {
            samples.clear();
            for (const auto& t : tables) {
                samples.push_back(t.at(i, j));
                if (i == j) {
                    fresh.push_back(t.at(i, j));
                }
            }
            agg.cells[static_cast<std::size_t>(i * agg.n + j)] = interval_or_point(samples);
        }
    }
    samples.clear();
    for (const auto& t : tables) {
        samples.push_back(t.final_average());
    }
    agg.final_average = interval_or_point(samples);
    agg.fresh_accuracy = interval_or_point(fresh);
    return agg;
}

std::vector<TimelinePoint> timeline(const Aggregate& agg)
{
    std::vector<TimelinePoint> out;
    for (Index i = 0; i < agg.n; ++i) {
        for (Index j = 0; j < agg.n; ++j) {
            if (j < i) {
                out.push_back({i, j, 0.0, 0.0});
            } else {
                out.push_back({i, j, agg.at(i, j).mean, agg.at(i, j).half_width});
            }
        }
    }
    return out;
}

std::string timeline_csv(const std::string& method, const Aggregate& agg)
{
    std::string out = "method,task,time_step,accuracy,ci_half_width\n";
    for (const auto& p : timeline(agg)) {
        out += method + "," + std::to_string(p.task + 1) + "," + std::to_string(p.step + 1) + "," +
               cell(p.accuracy) + "," + cell(p.half_width) + "\n";
    }
    return out;
}

std::string tables_csv(const std::string& method, const Aggregate& agg)
{
    std::string out = "method,row,time_step,mean,ci_half_width\n";
    for (Index i = 0; i < agg.n; ++i) {
        for (Index j = i; j < agg.n; ++j) {
            out += method + ",T" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "," +
                   cell(agg.at(i, j).mean) + "," + cell(agg.at(i, j).half_width) + "\n";
        }
    }
    out += method + ",Average," + std::to_string(agg.n) + "," + cell(agg.final_average.mean) + "," +
           cell(agg.final_average.half_width) + "\n";
    return out;
}

} // namespace cml::harness
