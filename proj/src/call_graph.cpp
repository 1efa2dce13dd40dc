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

#include "stubmatch/call_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_internal.hpp"
#include "stubmatch/errors.hpp"

namespace stubmatch {

namespace {

using ojson = nlohmann::ordered_json;

bool is_hex(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
    });
}

void check_features(const FunctionNode& n) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (!std::isfinite(n.features[i])) {
            throw IntegrityError("node " + std::to_string(n.id) + ": feature " + std::to_string(i) +
                                 " is not finite");
        }
        if (n.features[i] < 0.0) {
            throw IntegrityError("node " + std::to_string(n.id) + ": feature " + std::to_string(i) +
                                 " is negative");
        }
    }
    const double pure = n.features[index_of(Feature::is_pure)];
    if (pure != 0.0 && pure != 1.0) {
        throw IntegrityError("node " + std::to_string(n.id) + ": is_pure must be 0 or 1");
    }
    if (n.features[index_of(Feature::type)] != kind_code(n.kind)) {
        throw IntegrityError("node " + std::to_string(n.id) + ": type feature disagrees with kind '" +
                             std::string(to_string(n.kind)) + "'");
    }
}

// Line/column of a byte offset, 1-based.
std::pair<std::size_t, std::size_t> locate(std::string_view text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

const ojson& require(const ojson& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + ": missing field '" + key + "'");
    return *it;
}

NodeId as_node_id(const ojson& v, const std::string& path) {
    if (!v.is_number_unsigned()) {
        throw ParseError(path + ": expected a non-negative integer");
    }
    return v.get<NodeId>();
}

}  // namespace

std::string_view to_string(NodeKind k) {
    switch (k) {
    case NodeKind::internal: return "internal";
    case NodeKind::import: return "import";
    case NodeKind::entry: return "entry";
    }
    return "internal";
}

NodeKind parse_node_kind(std::string_view s) {
    if (s == "internal") return NodeKind::internal;
    if (s == "import") return NodeKind::import;
    if (s == "entry") return NodeKind::entry;
    throw ParseError("unknown node kind '" + std::string(s) + "'");
}

CallGraph::CallGraph(GraphMeta meta, std::vector<FunctionNode> nodes, std::vector<Edge> edges)
    : meta_(std::move(meta)), nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::sort(nodes_.begin(), nodes_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
        if (nodes_[i].id == nodes_[i - 1].id) {
            throw IntegrityError("duplicate node id " + std::to_string(nodes_[i].id));
        }
    }
    for (const auto& n : nodes_) check_features(n);

    std::sort(edges_.begin(), edges_.end());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        if (i > 0 && edges_[i] == edges_[i - 1]) {
            throw IntegrityError("duplicate edge (" + std::to_string(edges_[i].first) + "," +
                                 std::to_string(edges_[i].second) + ")");
        }
        for (NodeId end : {edges_[i].first, edges_[i].second}) {
            if (!contains(end)) {
                throw IntegrityError("edge (" + std::to_string(edges_[i].first) + "," +
                                     std::to_string(edges_[i].second) + ") references missing node " +
                                     std::to_string(end));
            }
        }
    }

    if (meta_.entry_ids.empty()) throw IntegrityError("entry_ids must not be empty");
    for (NodeId e : meta_.entry_ids) {
        const FunctionNode* n = find(e);
        if (n == nullptr) throw IntegrityError("entry id " + std::to_string(e) + " does not exist");
        if (n->kind != NodeKind::entry) {
            throw IntegrityError("entry id " + std::to_string(e) + " has kind '" +
                                 std::string(to_string(n->kind)) + "'");
        }
    }
    std::sort(meta_.entry_ids.begin(), meta_.entry_ids.end());
    if (std::adjacent_find(meta_.entry_ids.begin(), meta_.entry_ids.end()) != meta_.entry_ids.end()) {
        throw IntegrityError("duplicate entry id");
    }
    if (!is_hex(meta_.sha256)) throw IntegrityError("sha256 must be hex or empty");
}

const FunctionNode* CallGraph::find(NodeId id) const noexcept {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const FunctionNode& n, NodeId v) { return n.id < v; });
    return (it != nodes_.end() && it->id == id) ? &*it : nullptr;
}

std::size_t CallGraph::index_of(NodeId id) const {
    const FunctionNode* n = find(id);
    if (n == nullptr) throw IntegrityError("no node with id " + std::to_string(id));
    return static_cast<std::size_t>(n - nodes_.data());
}

CallGraph CallGraph::with_label(std::optional<std::string> label) const {
    GraphMeta m = meta_;
    m.packer_label = std::move(label);
    return CallGraph(std::move(m), nodes_, edges_);
}

namespace detail {

ojson graph_to_json(const CallGraph& g) {
    ojson meta = ojson::object();
    meta["sample_id"] = g.meta().sample_id;
    meta["sha256"] = g.meta().sha256;
    if (g.meta().packer_label) meta["packer_label"] = *g.meta().packer_label;
    meta["entry_ids"] = g.meta().entry_ids;

    ojson nodes = ojson::array();
    for (const auto& n : g.nodes()) {
        ojson node = ojson::object();
        node["id"] = n.id;
        node["kind"] = std::string(to_string(n.kind));
        node["features"] = n.features;
        nodes.push_back(std::move(node));
    }
    ojson edges = ojson::array();
    for (const auto& [from, to] : g.edges()) edges.push_back(ojson::array({from, to}));

    ojson doc = ojson::object();
    doc["meta"] = std::move(meta);
    doc["nodes"] = std::move(nodes);
    doc["edges"] = std::move(edges);
    return doc;
}

CallGraph graph_from_json(const ojson& doc) {
    if (!doc.is_object()) throw ParseError("document: expected an object");
    const ojson& meta = require(doc, "meta", "document");
    GraphMeta m;
    const ojson& sid = require(meta, "sample_id", "meta");
    if (!sid.is_string()) throw ParseError("meta.sample_id: expected a string");
    m.sample_id = sid.get<std::string>();
    if (auto it = meta.find("sha256"); it != meta.end()) {
        if (!it->is_string()) throw ParseError("meta.sha256: expected a string");
        m.sha256 = it->get<std::string>();
    }
    if (auto it = meta.find("packer_label"); it != meta.end() && !it->is_null()) {
        if (!it->is_string()) throw ParseError("meta.packer_label: expected a string");
        m.packer_label = it->get<std::string>();
    }
    const ojson& entries = require(meta, "entry_ids", "meta");
    if (!entries.is_array()) throw ParseError("meta.entry_ids: expected an array");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        m.entry_ids.push_back(as_node_id(entries[i], "meta.entry_ids[" + std::to_string(i) + "]"));
    }

    const ojson& nodes = require(doc, "nodes", "document");
    if (!nodes.is_array()) throw ParseError("nodes: expected an array");
    std::vector<FunctionNode> out_nodes;
    out_nodes.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string path = "nodes[" + std::to_string(i) + "]";
        FunctionNode n;
        n.id = as_node_id(require(nodes[i], "id", path), path + ".id");
        const ojson& kind = require(nodes[i], "kind", path);
        if (!kind.is_string()) throw ParseError(path + ".kind: expected a string");
        try {
            n.kind = parse_node_kind(kind.get<std::string>());
        } catch (const ParseError& e) {
            throw ParseError(path + ".kind: " + e.what());
        }
        const ojson& feats = require(nodes[i], "features", path);
        if (!feats.is_array()) throw ParseError(path + ".features: expected an array");
        if (feats.size() != kFeatureCount) {
            throw IntegrityError(path + ".features: expected " + std::to_string(kFeatureCount) +
                                 " numbers, got " + std::to_string(feats.size()));
        }
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (!feats[f].is_number()) {
                throw ParseError(path + ".features[" + std::to_string(f) + "]: expected a number");
            }
            n.features[f] = feats[f].get<double>();
        }
        out_nodes.push_back(n);
    }

    const ojson& edges = require(doc, "edges", "document");
    if (!edges.is_array()) throw ParseError("edges: expected an array");
    std::vector<Edge> out_edges;
    out_edges.reserve(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string path = "edges[" + std::to_string(i) + "]";
        if (!edges[i].is_array() || edges[i].size() != 2) {
            throw ParseError(path + ": expected [caller, callee]");
        }
        out_edges.emplace_back(as_node_id(edges[i][0], path + "[0]"), as_node_id(edges[i][1], path + "[1]"));
    }
    return CallGraph(std::move(m), std::move(out_nodes), std::move(out_edges));
}

ojson parse_json_text(std::string_view document) {
    try {
        return ojson::parse(document.begin(), document.end());
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = locate(document, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
    }
}

}  // namespace detail

std::string serialize_graph(const CallGraph& g) { return detail::graph_to_json(g).dump() + "\n"; }

CallGraph parse_graph(std::string_view document) {
    return detail::graph_from_json(detail::parse_json_text(document));
}

CallGraph load_graph_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_graph(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    } catch (const IntegrityError& e) {
        throw IntegrityError(path + ": " + e.what());
    }
}

FeatureStats compute_feature_stats(std::span<const CallGraph> graphs) {
    FeatureStats stats;
    FeatureVector sum{};
    for (const auto& g : graphs) {
        for (const auto& n : g.nodes()) {
            for (std::size_t i = 0; i < kFeatureCount; ++i) sum[i] += n.features[i];
            ++stats.computed_over;
        }
    }
    if (stats.computed_over == 0) throw InvalidArgument("feature statistics need at least one node");
    const double count = static_cast<double>(stats.computed_over);
    for (std::size_t i = 0; i < kFeatureCount; ++i) stats.mean[i] = sum[i] / count;

    // Second pass over centered values.
    FeatureVector sq{};
    for (const auto& g : graphs) {
        for (const auto& n : g.nodes()) {
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                const double d = n.features[i] - stats.mean[i];
                sq[i] += d * d;
            }
        }
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) stats.std[i] = std::sqrt(sq[i] / count);
    return stats;
}

FeatureVector normalize(const FeatureVector& x, const FeatureStats& stats) {
    FeatureVector out{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        out[i] = stats.std[i] > 0.0 ? (x[i] - stats.mean[i]) / stats.std[i] : 0.0;
    }
    return out;
}

std::string serialize_stats(const FeatureStats& stats) {
    ojson doc = ojson::object();
    doc["computed_over"] = stats.computed_over;
    doc["mean"] = stats.mean;
    doc["std"] = stats.std;
    return doc.dump() + "\n";
}

FeatureStats parse_stats(std::string_view document) {
    const ojson doc = detail::parse_json_text(document);
    FeatureStats s;
    const ojson& over = require(doc, "computed_over", "stats");
    if (!over.is_number_unsigned()) throw ParseError("stats.computed_over: expected a non-negative integer");
    s.computed_over = over.get<std::size_t>();
    for (const char* key : {"mean", "std"}) {
        const ojson& arr = require(doc, key, "stats");
        if (!arr.is_array() || arr.size() != kFeatureCount) {
            throw ParseError(std::string("stats.") + key + ": expected 12 numbers");
        }
        FeatureVector& dst = std::string_view(key) == "mean" ? s.mean : s.std;
        for (std::size_t i = 0; i < kFeatureCount; ++i) dst[i] = arr[i].get<double>();
    }
    if (s.computed_over < 1) throw IntegrityError("stats.computed_over must be >= 1");
    for (double v : s.std) {
        if (!(v >= 0.0)) throw IntegrityError("stats.std components must be >= 0");
    }
    return s;
}

}  // namespace stubmatch
