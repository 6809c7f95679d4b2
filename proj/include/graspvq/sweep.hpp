#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "graspvq/config.hpp"
#include "graspvq/evaluation.hpp"

namespace graspvq {

/// Runs every (ratio, seed) cell: a fresh split, then the proposed pipeline
/// and/or the baseline. A failing cell becomes a row with status "failed".
/// Rows are ordered by (ratio, method, seed).
std::vector<MetricsRecord> run_sweep(const ExperimentConfig& config, const std::vector<Sample>& samples,
                                     const std::function<void(const std::string&)>& log = {});

/// Header labelled_ratio,method,seed,test_accuracy,status; 6 decimals.
/// Failed rows leave test_accuracy empty.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& rows);

}  // namespace graspvq
