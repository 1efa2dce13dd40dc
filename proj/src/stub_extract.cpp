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

#include "stubmatch/stub_extract.hpp"

#include <algorithm>
#include <numeric>

#include "json_internal.hpp"
#include "stubmatch/errors.hpp"

namespace stubmatch {

namespace {

struct DisjointSets {
    std::vector<std::size_t> parent;

    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent[b] = a;
    }
};

}  // namespace

std::string_view to_string(StubBranch b) {
    switch (b) {
    case StubBranch::entry_component: return "entry_component";
    case StubBranch::second_component: return "second_component";
    case StubBranch::no_edges_fallback: return "no_edges_fallback";
    }
    return "entry_component";
}

StubBranch parse_stub_branch(std::string_view s) {
    if (s == "entry_component") return StubBranch::entry_component;
    if (s == "second_component") return StubBranch::second_component;
    if (s == "no_edges_fallback") return StubBranch::no_edges_fallback;
    throw ParseError("unknown stub branch '" + std::string(s) + "'");
}

std::vector<std::vector<NodeId>> connected_components(const CallGraph& g) {
    const auto nodes = g.nodes();
    DisjointSets sets(nodes.size());
    for (const auto& [from, to] : g.edges()) sets.unite(g.index_of(from), g.index_of(to));

    // Nodes are sorted by id, so the representative (smallest index) is the
    // smallest id and visiting in index order yields sorted components.
    std::vector<std::vector<NodeId>> components;
    std::vector<std::size_t> slot(nodes.size(), SIZE_MAX);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::size_t root = sets.find(i);
        if (slot[root] == SIZE_MAX) {
            slot[root] = components.size();
            components.emplace_back();
        }
        components[slot[root]].push_back(nodes[i].id);
    }
    return components;
}

CallGraph induced_subgraph(const CallGraph& g, const std::vector<NodeId>& keep) {
    std::vector<NodeId> ids = keep;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    auto kept = [&](NodeId id) { return std::binary_search(ids.begin(), ids.end(), id); };

    std::vector<FunctionNode> nodes;
    nodes.reserve(ids.size());
    for (NodeId id : ids) {
        const FunctionNode* n = g.find(id);
        if (n == nullptr) throw IntegrityError("induced subgraph: no node " + std::to_string(id));
        nodes.push_back(*n);
    }
    std::vector<Edge> edges;
    for (const auto& e : g.edges()) {
        if (kept(e.first) && kept(e.second)) edges.push_back(e);
    }
    GraphMeta meta = g.meta();
    std::erase_if(meta.entry_ids, [&](NodeId e) { return !kept(e); });
    return CallGraph(std::move(meta), std::move(nodes), std::move(edges));
}

StubGraph extract_stub(const CallGraph& g) {
    const auto& entries = g.meta().entry_ids;
    const auto components = connected_components(g);

    std::vector<std::size_t> component_of(g.node_count());
    for (std::size_t c = 0; c < components.size(); ++c) {
        for (NodeId id : components[c]) component_of[g.index_of(id)] = c;
    }
    std::vector<bool> has_edge(g.node_count(), false);
    for (const auto& [from, to] : g.edges()) {
        has_edge[g.index_of(from)] = true;
        has_edge[g.index_of(to)] = true;
    }

    std::vector<NodeId> keep(entries.begin(), entries.end());
    std::vector<bool> taken(components.size(), false);
    bool any_connected_entry = false;
    for (NodeId e : entries) {
        const std::size_t idx = g.index_of(e);
        if (!has_edge[idx]) continue;
        any_connected_entry = true;
        const std::size_t c = component_of[idx];
        if (!taken[c]) {
            taken[c] = true;
            keep.insert(keep.end(), components[c].begin(), components[c].end());
        }
    }
    if (any_connected_entry) return {induced_subgraph(g, keep), StubBranch::entry_component};

    if (g.edge_count() > 0) {
        // Largest component that holds no entry; ties go to the smaller minimum id,
        // which is the earlier component in the ordering.
        std::vector<bool> holds_entry(components.size(), false);
        for (NodeId e : entries) holds_entry[component_of[g.index_of(e)]] = true;
        std::size_t best = SIZE_MAX;
        for (std::size_t c = 0; c < components.size(); ++c) {
            if (holds_entry[c]) continue;
            if (best == SIZE_MAX || components[c].size() > components[best].size()) best = c;
        }
        // With edges present and every entry isolated, some other component exists.
        keep.insert(keep.end(), components[best].begin(), components[best].end());
        return {induced_subgraph(g, keep), StubBranch::second_component};
    }

    for (const auto& n : g.nodes()) {
        if (n.kind == NodeKind::import) keep.push_back(n.id);
    }
    return {induced_subgraph(g, keep), StubBranch::no_edges_fallback};
}

std::string serialize_stub(const StubGraph& s) {
    auto doc = detail::graph_to_json(s.graph);
    doc["provenance"] = {{"branch_taken", std::string(to_string(s.branch))}};
    return doc.dump() + "\n";
}

StubGraph parse_stub(std::string_view document) {
    const auto doc = detail::parse_json_text(document);
    CallGraph g = detail::graph_from_json(doc);
    auto prov = doc.find("provenance");
    if (prov == doc.end()) return extract_stub(g);
    if (!prov->is_object() || !prov->contains("branch_taken") || !(*prov)["branch_taken"].is_string()) {
        throw ParseError("provenance.branch_taken: expected a string");
    }
    return {std::move(g), parse_stub_branch((*prov)["branch_taken"].get<std::string>())};
}

}  // namespace stubmatch
