// Copyright 2026 The stubmatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stubmatch/identify.hpp"
#include "stubmatch/registry.hpp"

namespace stubmatch::metrics {

/// One-vs-rest counts for one packer. A sample of this packer answered with
/// UNKNOWN lands in `unknown` instead of `fn`, so
/// tp + fp + fn + tn + unknown == total.
struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    std::size_t unknown = 0;
    std::size_t total = 0;

    std::size_t support() const { return tp + fn + unknown; }
    bool operator==(const ClassCounts&) const = default;
};

struct ConfusionTable {
    std::map<std::string, ClassCounts> classes;
    std::size_t total = 0;
    std::size_t unknown = 0;  // all UNKNOWN answers, whatever the truth
};

/// Counts over `classes`; labels outside it (external samples) only ever
/// produce false positives or true negatives. Failed results count as UNKNOWN.
ConfusionTable tabulate(std::span<const IdentificationResult> results, std::span<const std::string> truth,
                        std::span<const std::string> classes);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    double fpr = 0.0;
    double unknown_rate = 0.0;
    ClassCounts counts;
};

struct MetricsReport {
    std::map<std::string, ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double macro_accuracy = 0.0;
    double macro_fpr = 0.0;
    double unknown_rate = 0.0;
    double mean_calls = 0.0;
    double std_calls = 0.0;  // population
    std::size_t samples = 0;
};

/// Metrics per packer and their unweighted means. `classes` defaults to every
/// truth label. Throws InvalidArgument when the lengths differ.
MetricsReport evaluate(std::span<const IdentificationResult> results, std::span<const std::string> truth,
                       std::optional<std::vector<std::string>> classes = std::nullopt);

std::string report_to_json(const MetricsReport& r);
/// Header plus one row per packer and a final "macro" row.
std::string report_to_csv(const MetricsReport& r);

enum class CostMode { retrain, incremental };

/// Samples that pass through training when m new packers with l samples each
/// join n known ones: (n + m) * l when retraining, m * l otherwise.
std::size_t integration_cost(std::size_t n_known, std::size_t m_new, std::size_t l_samples, CostMode mode);

struct BenchOptions {
    std::vector<std::size_t> packer_counts{5, 10};
    std::size_t samples_per_packer = 10;
    std::size_t test_per_packer = 10;
    ConfigureOptions configure;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct BenchRow {
    std::size_t packers = 0;
    std::size_t samples_per_packer = 0;
    std::size_t clusters = 0;  // m
    double ideal = 0.0;        // m + samples_per_packer
    double clustered_mean = 0.0;
    double clustered_std = 0.0;
    double flat_mean = 0.0;
    double flat_std = 0.0;
};

/// For each packer count: configure on synthetic families, then identify a
/// held-out batch in both modes and record inference calls.
std::vector<BenchRow> bench_scalability(const BenchOptions& options);

std::string bench_to_csv(std::span<const BenchRow> rows);
std::string bench_to_table(std::span<const BenchRow> rows);

/// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> xs);

}  // namespace stubmatch::metrics
