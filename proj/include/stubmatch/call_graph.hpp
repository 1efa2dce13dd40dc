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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stubmatch {

inline constexpr std::size_t kFeatureCount = 12;

using NodeId = std::uint64_t;
using FeatureVector = std::array<double, kFeatureCount>;

/// Position of each node feature inside FeatureVector.
enum class Feature : std::size_t {
    type = 0,
    size,
    real_size,
    is_pure,
    calling_conventions,
    n_basic_blocks,
    n_instructions,
    n_local_vars,
    n_args,
    edges,
    indegree,
    outdegree,
};

constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

enum class NodeKind { internal = 0, import = 1, entry = 2 };

/// Numeric value stored in the `type` feature for a kind.
constexpr double kind_code(NodeKind k) { return static_cast<double>(static_cast<int>(k)); }

std::string_view to_string(NodeKind k);
NodeKind parse_node_kind(std::string_view s);

struct FunctionNode {
    NodeId id = 0;
    NodeKind kind = NodeKind::internal;
    FeatureVector features{};

    bool operator==(const FunctionNode&) const = default;
};

using Edge = std::pair<NodeId, NodeId>;  // (caller, callee)

struct GraphMeta {
    std::string sample_id;
    std::string sha256;  // lowercase hex or empty
    std::optional<std::string> packer_label;
    std::vector<NodeId> entry_ids;

    bool operator==(const GraphMeta&) const = default;
};

/// Directed call graph. Nodes are kept sorted by id and edges sorted
/// lexicographically, so two graphs built from the same content compare equal
/// regardless of insertion order. Immutable once constructed.
class CallGraph {
public:
    /// Validates every invariant and throws IntegrityError on violation.
    /// Duplicate edges are rejected rather than silently merged.
    CallGraph(GraphMeta meta, std::vector<FunctionNode> nodes, std::vector<Edge> edges);

    const GraphMeta& meta() const noexcept { return meta_; }
    std::span<const FunctionNode> nodes() const noexcept { return nodes_; }
    std::span<const Edge> edges() const noexcept { return edges_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    /// Pointer to the node with this id, or nullptr.
    const FunctionNode* find(NodeId id) const noexcept;
    bool contains(NodeId id) const noexcept { return find(id) != nullptr; }
    /// Position of the node in nodes(); throws IntegrityError when absent.
    std::size_t index_of(NodeId id) const;

    const std::optional<std::string>& packer_label() const noexcept { return meta_.packer_label; }
    CallGraph with_label(std::optional<std::string> label) const;

    bool operator==(const CallGraph&) const = default;

private:
    GraphMeta meta_;
    std::vector<FunctionNode> nodes_;
    std::vector<Edge> edges_;
};

/// Per-feature z-score statistics, frozen at configuration time.
struct FeatureStats {
    FeatureVector mean{};
    FeatureVector std{};
    std::size_t computed_over = 0;

    bool operator==(const FeatureStats&) const = default;
};

/// Canonical interchange text for a call graph.
std::string serialize_graph(const CallGraph& g);

/// Throws ParseError for malformed text and IntegrityError for invariant violations.
CallGraph parse_graph(std::string_view document);

CallGraph load_graph_file(const std::string& path);

/// Population mean and standard deviation over all nodes of all graphs.
FeatureStats compute_feature_stats(std::span<const CallGraph> graphs);

/// (x - mean) / std per component; components with zero std map to 0.
FeatureVector normalize(const FeatureVector& x, const FeatureStats& stats);

std::string serialize_stats(const FeatureStats& stats);
FeatureStats parse_stats(std::string_view document);

}  // namespace stubmatch
