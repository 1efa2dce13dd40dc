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

#include "stubmatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include "json.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/synth.hpp"

namespace stubmatch::metrics {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

std::pair<double, double> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

ConfusionTable tabulate(std::span<const IdentificationResult> results, std::span<const std::string> truth,
                        std::span<const std::string> classes) {
    if (results.size() != truth.size()) {
        throw InvalidArgument("evaluate: " + std::to_string(results.size()) + " results but " +
                              std::to_string(truth.size()) + " labels");
    }
    ConfusionTable t;
    t.total = results.size();
    for (const auto& c : classes) t.classes[c].total = results.size();
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const bool unknown = r.error.has_value() || !r.verdict.has_value();
        if (unknown) ++t.unknown;
        for (auto& [name, c] : t.classes) {
            const bool actual = truth[i] == name;
            const bool predicted = !unknown && *r.verdict == name;
            if (actual && predicted) {
                ++c.tp;
            } else if (actual && unknown) {
                ++c.unknown;
            } else if (actual) {
                ++c.fn;
            } else if (predicted) {
                ++c.fp;
            } else {
                ++c.tn;
            }
        }
    }
    return t;
}

MetricsReport evaluate(std::span<const IdentificationResult> results, std::span<const std::string> truth,
                       std::optional<std::vector<std::string>> classes) {
    if (!classes) {
        const std::set<std::string> labels(truth.begin(), truth.end());
        classes.emplace(labels.begin(), labels.end());
    }
    const ConfusionTable table = tabulate(results, truth, *classes);

    MetricsReport r;
    r.samples = results.size();
    for (const auto& [name, c] : table.classes) {
        ClassMetrics m;
        m.counts = c;
        m.precision = ratio(c.tp, c.tp + c.fp);
        m.recall = ratio(c.tp, c.support());
        m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        m.accuracy = ratio(c.tp + c.tn, c.total);
        m.fpr = ratio(c.fp, c.fp + c.tn);
        m.unknown_rate = ratio(c.unknown, c.support());
        r.per_class[name] = m;
    }
    if (!r.per_class.empty()) {
        const double k = static_cast<double>(r.per_class.size());
        for (const auto& [name, m] : r.per_class) {
            r.macro_precision += m.precision / k;
            r.macro_recall += m.recall / k;
            r.macro_f1 += m.f1 / k;
            r.macro_accuracy += m.accuracy / k;
            r.macro_fpr += m.fpr / k;
        }
    }
    r.unknown_rate = ratio(table.unknown, table.total);
    std::vector<double> calls;
    calls.reserve(results.size());
    for (const auto& res : results) calls.push_back(static_cast<double>(res.inference_calls));
    std::tie(r.mean_calls, r.std_calls) = mean_std(calls);
    return r;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["samples"] = r.samples;
    j["macro"] = {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1},
                  {"accuracy", r.macro_accuracy},   {"fpr", r.macro_fpr}};
    j["unknown_rate"] = r.unknown_rate;
    j["inference_calls"] = {{"mean", r.mean_calls}, {"std", r.std_calls}};
    j["per_packer"] = nlohmann::ordered_json::object();
    for (const auto& [name, m] : r.per_class) {
        j["per_packer"][name] = {{"precision", m.precision},
                                 {"recall", m.recall},
                                 {"f1", m.f1},
                                 {"accuracy", m.accuracy},
                                 {"fpr", m.fpr},
                                 {"unknown_rate", m.unknown_rate},
                                 {"tp", m.counts.tp},
                                 {"fp", m.counts.fp},
                                 {"fn", m.counts.fn},
                                 {"tn", m.counts.tn},
                                 {"unknown", m.counts.unknown}};
    }
    return j.dump(2) + "\n";
}

std::string report_to_csv(const MetricsReport& r) {
    std::string out = "packer,precision,recall,f1,accuracy,fpr,unknown_rate\n";
    for (const auto& [name, m] : r.per_class) {
        out += name + "," + fixed(m.precision, 4) + "," + fixed(m.recall, 4) + "," + fixed(m.f1, 4) + "," +
               fixed(m.accuracy, 4) + "," + fixed(m.fpr, 4) + "," + fixed(m.unknown_rate, 4) + "\n";
    }
    out += "macro," + fixed(r.macro_precision, 4) + "," + fixed(r.macro_recall, 4) + "," + fixed(r.macro_f1, 4) +
           "," + fixed(r.macro_accuracy, 4) + "," + fixed(r.macro_fpr, 4) + "," + fixed(r.unknown_rate, 4) + "\n";
    return out;
}

std::size_t integration_cost(std::size_t n_known, std::size_t m_new, std::size_t l_samples, CostMode mode) {
    return mode == CostMode::retrain ? (n_known + m_new) * l_samples : m_new * l_samples;
}

std::vector<BenchRow> bench_scalability(const BenchOptions& options) {
    std::vector<BenchRow> rows;
    for (std::size_t count : options.packer_counts) {
        const auto families = synth::default_families(count, options.seed);
        std::vector<CallGraph> train, test;
        for (const auto& f : families) {
            auto graphs = synth::generate_family(f, options.samples_per_packer + options.test_per_packer);
            train.insert(train.end(), graphs.begin(), graphs.begin() + static_cast<std::ptrdiff_t>(options.samples_per_packer));
            test.insert(test.end(), graphs.begin() + static_cast<std::ptrdiff_t>(options.samples_per_packer), graphs.end());
        }
        const Registry reg = configure(train, options.configure);
        const Identifier id(reg, IdentifyOptions{true, options.jobs});

        BenchRow row;
        row.packers = count;
        row.samples_per_packer = options.samples_per_packer;
        row.clusters = reg.cluster_count();
        row.ideal = static_cast<double>(row.clusters + row.samples_per_packer);
        std::vector<double> clustered, flat;
        for (const auto& r : id.identify_batch(test, false)) clustered.push_back(static_cast<double>(r.inference_calls));
        for (const auto& r : id.identify_batch(test, true)) flat.push_back(static_cast<double>(r.inference_calls));
        std::tie(row.clustered_mean, row.clustered_std) = mean_std(clustered);
        std::tie(row.flat_mean, row.flat_std) = mean_std(flat);
        rows.push_back(row);
    }
    return rows;
}

std::string bench_to_csv(std::span<const BenchRow> rows) {
    std::string out = "packers,samples_per_packer,clusters,ideal,clustered_mean,clustered_std,flat_mean,flat_std\n";
    for (const auto& r : rows) {
        out += std::to_string(r.packers) + "," + std::to_string(r.samples_per_packer) + "," +
               std::to_string(r.clusters) + "," + fixed(r.ideal, 2) + "," + fixed(r.clustered_mean, 2) + "," +
               fixed(r.clustered_std, 2) + "," + fixed(r.flat_mean, 2) + "," + fixed(r.flat_std, 2) + "\n";
    }
    return out;
}

std::string bench_to_table(std::span<const BenchRow> rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %-6s %-4s %-8s %-16s %-16s\n", "packers", "spp", "m", "ideal",
                  "clustered", "flat");
    std::string out = line;
    for (const auto& r : rows) {
        const std::string c = fixed(r.clustered_mean, 2) + " ± " + fixed(r.clustered_std, 2);
        const std::string f = fixed(r.flat_mean, 2) + " ± " + fixed(r.flat_std, 2);
        std::snprintf(line, sizeof(line), "%-8zu %-6zu %-4zu %-8s %-16s %-16s\n", r.packers, r.samples_per_packer,
                      r.clusters, fixed(r.ideal, 2).c_str(), c.c_str(), f.c_str());
        out += line;
    }
    return out;
}

}  // namespace stubmatch::metrics
