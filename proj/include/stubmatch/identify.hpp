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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stubmatch/call_graph.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/registry.hpp"
#include "stubmatch/stub_extract.hpp"

namespace stubmatch {

struct SelectedCluster {
    std::string packer;
    std::size_t cluster_index = 0;
    double medoid_similarity = 0.0;

    bool operator==(const SelectedCluster&) const = default;
};

struct IdentificationResult {
    std::string sample_id;
    std::optional<std::string> verdict;  // nullopt means UNKNOWN
    double score = 0.0;
    std::map<std::string, double> per_packer_scores;
    std::vector<SelectedCluster> selected;
    std::size_t inference_calls = 0;
    StubBranch branch = StubBranch::entry_component;
    std::optional<std::string> error;  // set when this input could not be processed

    bool unknown() const { return !verdict.has_value(); }
    bool operator==(const IdentificationResult&) const = default;
};

struct IdentifyOptions {
    /// Report UNKNOWN when the best score is 0 even though some cluster gated in.
    bool unknown_on_zero_score = true;
    std::size_t jobs = 1;
};

/// Threshold passes and compared members of one candidate packer.
struct PackerTally {
    std::size_t passes = 0;
    std::size_t members = 0;
};

struct Decision {
    std::optional<std::string> verdict;
    double score = 0.0;
    std::map<std::string, double> per_packer_scores;
};

/// Scores every candidate as passes / (largest member count among candidates)
/// and picks the best one. Ties go to more passes, then the smaller name.
/// No candidates, or a best score of 0 with `unknown_on_zero_score`, give UNKNOWN.
Decision decide(const std::map<std::string, PackerTally>& tallies, bool unknown_on_zero_score);

/// Identification against one immutable registry snapshot. Stored graphs are
/// prepared once up front.
class Identifier {
public:
    /// Throws InvalidArgument for a registry without packers.
    explicit Identifier(const Registry& reg, IdentifyOptions options = {});
    virtual ~Identifier() = default;

    Identifier(const Identifier&) = delete;
    Identifier& operator=(const Identifier&) = delete;

    /// Medoid gating, then threshold counting over the selected clusters.
    IdentificationResult identify(const CallGraph& g) const;

    /// Compares against every stored graph with per-packer flat thresholds.
    /// Never UNKNOWN.
    IdentificationResult identify_flat(const CallGraph& g) const;

    /// Order-preserving. A failing input yields a result with `error` set.
    std::vector<IdentificationResult> identify_batch(std::span<const CallGraph> inputs, bool flat = false) const;

    const Registry& registry() const noexcept { return reg_; }

protected:
    /// One model inference between the input stub and a stored graph.
    virtual double similarity(const gmn::PreparedGraph& input, const GraphId& stored) const;

private:
    IdentificationResult run(const CallGraph& g, bool flat) const;

    const Registry& reg_;
    IdentifyOptions options_;
    std::map<GraphId, gmn::PreparedGraph> prepared_;
};

IdentificationResult identify(const CallGraph& g, const Registry& reg, const IdentifyOptions& options = {});
IdentificationResult identify_flat(const CallGraph& g, const Registry& reg, const IdentifyOptions& options = {});
std::vector<IdentificationResult> identify_batch(std::span<const CallGraph> inputs, const Registry& reg,
                                                 const IdentifyOptions& options = {}, bool flat = false);

/// One JSON object per result, keys in a fixed order.
std::string result_to_json(const IdentificationResult& r);
std::string csv_header();
std::string result_to_csv(const IdentificationResult& r);

}  // namespace stubmatch
