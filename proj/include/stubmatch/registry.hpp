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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stubmatch/call_graph.hpp"
#include "stubmatch/cluster.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/stub_extract.hpp"

namespace stubmatch {

inline constexpr int kRegistryVersion = 1;

/// Content address of a stored stub graph: SHA-256 of its canonical text.
using GraphId = std::string;

GraphId graph_id(const StubGraph& g);

struct ClusterRecord {
    std::vector<GraphId> members;
    GraphId medoid;
    double threshold = 0.0;
    bool low_confidence = false;

    bool operator==(const ClusterRecord&) const = default;
};

struct PackerEntry {
    std::vector<GraphId> graphs;  // sorted
    std::vector<ClusterRecord> clusters;
    double flat_threshold = 0.0;  // packer-wide threshold used without clustering

    bool operator==(const PackerEntry&) const = default;
};

struct AuditRecord {
    std::size_t sequence = 0;
    std::string event;  // "configure" or "integrate"
    std::string mode;   // "train", "no_fine_tune" or "fine_tune"
    std::vector<std::string> packers;
    std::size_t samples = 0;
    std::size_t cost = 0;  // samples that went through model training or clustering as new data

    bool operator==(const AuditRecord&) const = default;
};

struct Registry {
    int version = kRegistryVersion;
    gmn::GmnParams model;
    FeatureStats stats;
    cluster::ClusterOptions cluster_options;
    std::map<GraphId, StubGraph> graphs;
    std::map<std::string, PackerEntry> packers;
    std::vector<AuditRecord> audit;

    std::size_t cluster_count() const;

    /// Throws IntegrityError if an id does not resolve or a label disagrees
    /// with its packer entry.
    void check_integrity() const;

    bool operator==(const Registry&) const = default;
};

struct ConfigureOptions {
    gmn::GmnConfig gmn;
    cluster::ClusterOptions cluster;
    std::size_t jobs = 1;
    gmn::EpochCallback on_epoch;
};

/// Extracts stubs, freezes feature statistics, trains the model and clusters
/// every packer. Every graph needs a packer label; at least two packers.
Registry configure(std::span<const CallGraph> dataset, const ConfigureOptions& options);

/// configure() followed by an atomic save to `out`.
Registry configure(std::span<const CallGraph> dataset, const ConfigureOptions& options,
                   const std::filesystem::path& out);

struct IntegrateOptions {
    bool fine_tune = false;
    /// Existing graphs per other packer mixed into fine-tuning pairs.
    std::size_t old_per_packer = 20;
    /// Training knobs for fine-tuning; architecture must match the stored model.
    /// Defaults to the stored model's config.
    std::optional<gmn::GmnConfig> training;
    std::size_t jobs = 1;
    gmn::EpochCallback on_epoch;
};

/// Adds graphs of one packer. Without fine-tuning the model and every other
/// packer's clusters stay as they are; with fine-tuning the model is updated
/// and all packers are clustered again.
Registry integrate(const Registry& reg, std::span<const CallGraph> new_graphs, const IntegrateOptions& options);

/// Writes into a sibling temporary directory and renames it into place.
void save(const Registry& reg, const std::filesystem::path& dir);

/// Verifies the format version and every content hash.
Registry load(const std::filesystem::path& dir);

/// SHA-256 over the manifest and audit log; equal registries share it.
std::string content_hash(const Registry& reg);

/// Rebuilds one packer entry from its graphs with the registry's current model.
PackerEntry cluster_packer_entry(const Registry& reg, const std::vector<GraphId>& ids, std::size_t jobs = 1);

}  // namespace stubmatch
