#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracedvfs/cluster_sim.hpp"

namespace tracedvfs {

/// Per-tier index into that tier's frequency list.
struct FrequencyVector {
    std::vector<int> level;

    bool operator==(const FrequencyVector&) const = default;
};

FrequencyVector max_frequencies(std::span<const NodeSpec> nodes);
FrequencyVector min_frequencies(std::span<const NodeSpec> nodes);
std::string to_string(const FrequencyVector& f);

class ModelError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ProfileSample {
    std::size_t load_index = 0;
    int pattern = 0;
    int tier = 0;
    int swept_tier = 0;  // tier whose frequency was varied in the run
    double freq_ghz = 0.0;
    double mean_service_us = 0.0;
    std::size_t count = 0;
};

struct GammaSample {
    std::size_t load_index = 0;
    int pattern = 0;
    double mean_gap_us = 0.0;
    std::size_t count = 0;
};

struct UtilizationSample {
    std::size_t load_index = 0;
    int tier = 0;
    double utilization = 0.0;  // all nodes at max frequency
};

struct ProfilingDataset {
    int tier_count = 0;
    int pattern_count = 0;
    std::vector<double> load_levels;        // req/s, ascending
    std::vector<double> pattern_centroids;  // first-message size per pattern id
    std::vector<int> swept_tiers;
    std::vector<ProfileSample> samples;
    std::vector<GammaSample> gamma_samples;
    std::vector<UtilizationSample> utilization_samples;
    std::size_t run_count = 0;
};

struct QuadraticFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double r2 = 1.0;

    double operator()(double f) const { return (a * f + b) * f + c; }
    bool operator==(const QuadraticFit&) const = default;
};

/// Least squares t = aF^2 + bF + c. Needs 3 distinct abscissae.
QuadraticFit fit_quadratic(std::span<const double> f, std::span<const double> t);

/// 1 - SSres/SStot, or 1 when the targets have no variance.
double r_squared(std::span<const double> observed, std::span<const double> predicted);

struct PerformanceModel {
    int tier_count = 0;
    int pattern_count = 0;
    std::vector<double> load_levels;
    std::vector<double> pattern_centroids;
    std::vector<int> dominated_tiers;
    /// coeffs[L][i][j]
    std::vector<std::vector<std::vector<QuadraticFit>>> coeffs;
    /// gamma[L][i], microseconds
    std::vector<std::vector<double>> gamma;
    /// utilization[L][j] with every node at max frequency
    std::vector<std::vector<double>> utilization;

    std::size_t load_index(double load) const;
    const QuadraticFit& coef(std::size_t l, int i, int j) const;
    bool operator==(const PerformanceModel&) const = default;
};

struct FitOptions {
    /// Replace per-(L, i) gamma by one global mean.
    bool global_gamma = false;
};

PerformanceModel fit_model(const ProfilingDataset& dataset, const FitOptions& options = {});

/// D_i = sum_j max(0, f_{L,i,j}(F_j)) + gamma_{L,i} for every pattern.
/// Negative polynomial values are clamped and counted in `clamped`.
std::vector<double> predict_latency(const PerformanceModel& model, double load, const FrequencyVector& f,
                                    std::span<const NodeSpec> nodes, int* clamped = nullptr);
std::vector<double> predict_latency_at(const PerformanceModel& model, std::size_t load_index,
                                       const FrequencyVector& f, std::span<const NodeSpec> nodes,
                                       int* clamped = nullptr);

/// Expected cluster power at a frequency vector given the utilization each
/// node shows at max frequency: work stretches by fmax/f, capped at 1.
double predicted_power(std::span<const NodeSpec> nodes, std::span<const double> utilization_at_max,
                       const FrequencyVector& f);

/**
 * Enumerates the whole frequency lattice and returns the cheapest vector
 * whose predicted latency meets thresholds[i] for every i < thresholds.size().
 * Equal-power ties go to the lexicographically smallest level vector. Falls
 * back to all-max when no vector is feasible.
 */
FrequencyVector fast_modulation(const PerformanceModel& model, std::size_t load_index,
                                std::span<const double> thresholds, std::span<const NodeSpec> nodes);

/// Tiers with percentage >= threshold, largest first; never empty.
std::vector<int> dominated_tiers(std::span<const double> percentages, double threshold);

void write_pre_model(std::ostream& out, const PerformanceModel& model);
std::string write_pre_model(const PerformanceModel& model);
PerformanceModel parse_pre_model(std::istream& in);
PerformanceModel parse_pre_model(const std::string& text);

}  // namespace tracedvfs
