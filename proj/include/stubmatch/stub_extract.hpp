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

#include <string>
#include <string_view>
#include <vector>

#include "stubmatch/call_graph.hpp"

namespace stubmatch {

/// Which rule of the stub heuristic produced a StubGraph.
enum class StubBranch {
    entry_component,    // components touching an entry that has edges
    second_component,   // entries are isolated: entries plus the largest other component
    no_edges_fallback,  // no edges at all: entries plus imported functions
};

std::string_view to_string(StubBranch b);
StubBranch parse_stub_branch(std::string_view s);

/// Induced subgraph of a call graph that stands for the unpacking stub.
struct StubGraph {
    CallGraph graph;
    StubBranch branch = StubBranch::entry_component;

    bool operator==(const StubGraph&) const = default;
};

/// Undirected connected components, each sorted ascending, components ordered
/// by their smallest id.
std::vector<std::vector<NodeId>> connected_components(const CallGraph& g);

StubGraph extract_stub(const CallGraph& g);

/// Call graph restricted to `keep`, with every edge whose endpoints both survive.
CallGraph induced_subgraph(const CallGraph& g, const std::vector<NodeId>& keep);

/// Interchange text with an extra `provenance` object.
std::string serialize_stub(const StubGraph& s);
/// Accepts documents with or without `provenance`; without it the document
/// is treated as a plain call graph and the stub is extracted.
StubGraph parse_stub(std::string_view document);

}  // namespace stubmatch
