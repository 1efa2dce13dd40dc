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

#include "stubmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "stubmatch/errors.hpp"
#include "stubmatch/random.hpp"

namespace stubmatch::synth {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

// Features that carry a magnitude; type and is_pure stay categorical.
bool noisy(std::size_t f) { return f != index_of(Feature::type) && f != index_of(Feature::is_pure); }

FeatureVector make_features(NodeKind kind, double magnitude, Rng& rng) {
    FeatureVector x{};
    auto jitter = [&](double v) { return v * rng.uniform(0.8, 1.25); };
    x[index_of(Feature::type)] = kind_code(kind);
    x[index_of(Feature::size)] = jitter(40.0 * magnitude);
    x[index_of(Feature::real_size)] = jitter(36.0 * magnitude);
    x[index_of(Feature::is_pure)] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    x[index_of(Feature::calling_conventions)] = kind == NodeKind::import ? 1.0 : jitter(1.0 + magnitude / 8.0);
    x[index_of(Feature::n_basic_blocks)] = jitter(2.0 * magnitude);
    x[index_of(Feature::n_instructions)] = jitter(12.0 * magnitude);
    x[index_of(Feature::n_local_vars)] = jitter(0.5 * magnitude);
    x[index_of(Feature::n_args)] = jitter(1.0 + 0.25 * magnitude);
    x[index_of(Feature::edges)] = jitter(3.0 * magnitude);
    x[index_of(Feature::indegree)] = jitter(1.0 + magnitude / 4.0);
    x[index_of(Feature::outdegree)] = jitter(1.0 + magnitude / 2.0);
    // Counts and byte sizes are whole numbers.
    for (auto& v : x) v = std::round(v);
    return x;
}

}  // namespace

std::vector<CallGraph> generate_family(const FamilySpec& spec, std::size_t n) {
    const Perturbation& p = spec.perturbation;
    if (n == 0) throw InvalidArgument("generate_family: n must be at least 1");
    if (!is_probability(p.node_add_prob) || !is_probability(p.edge_flip_prob)) {
        throw InvalidArgument("generate_family: perturbation probabilities must lie in [0, 1]");
    }
    if (!(p.feature_noise_scale >= 0.0)) throw InvalidArgument("generate_family: noise scale must be non-negative");

    const CallGraph& t = spec.stub_template;
    const std::set<Edge> template_edges(t.edges().begin(), t.edges().end());
    const bool has_edges = !template_edges.empty();
    const NodeId first_free = t.nodes().back().id + 1;

    std::vector<CallGraph> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(spec.seed, i));
        std::vector<FunctionNode> nodes(t.nodes().begin(), t.nodes().end());
        std::vector<Edge> edges;
        for (const auto& [a, b] : t.edges()) {
            const bool flip = rng.bernoulli(p.edge_flip_prob) && a != b && !template_edges.contains({b, a});
            edges.emplace_back(flip ? Edge{b, a} : Edge{a, b});
        }

        NodeId next = first_free;
        if (rng.bernoulli(p.node_add_prob)) {
            // Copy a non-entry function; hook it under a node that already has edges.
            std::vector<const FunctionNode*> donors;
            for (const auto& node : t.nodes()) {
                if (node.kind != NodeKind::entry) donors.push_back(&node);
            }
            if (!donors.empty()) {
                FunctionNode extra = *donors[rng.index(donors.size())];
                extra.id = next++;
                if (has_edges) {
                    std::vector<NodeId> callers;
                    for (const auto& [a, b] : template_edges) {
                        callers.push_back(a);
                        callers.push_back(b);
                    }
                    edges.emplace_back(callers[rng.index(callers.size())], extra.id);
                } else {
                    extra.kind = NodeKind::import;
                    extra.features[index_of(Feature::type)] = kind_code(NodeKind::import);
                }
                nodes.push_back(extra);
            }
        }

        for (auto& node : nodes) {
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                if (noisy(f) && p.feature_noise_scale > 0.0) {
                    node.features[f] = std::round(node.features[f] * std::exp(p.feature_noise_scale * rng.normal()));
                }
            }
        }

        for (std::size_t k = 0; k < spec.payload_nodes; ++k) {
            FunctionNode payload;
            payload.id = next++;
            payload.kind = NodeKind::internal;
            payload.features = make_features(NodeKind::internal, std::exp(rng.uniform(0.0, 6.0)), rng);
            nodes.push_back(payload);
        }

        GraphMeta meta = t.meta();
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "-%04zu", i);
        meta.sample_id = spec.packer_name + suffix;
        meta.sha256.clear();
        meta.packer_label = spec.packer_name;
        out.emplace_back(std::move(meta), std::move(nodes), std::move(edges));
    }
    return out;
}

std::vector<FamilySpec> default_families(std::size_t count, std::uint64_t seed) {
    std::vector<FamilySpec> out;
    out.reserve(count);
    for (std::size_t f = 0; f < count; ++f) {
        Rng rng(derive_seed(seed, 0xfa0000 + f));
        // Neighbouring families sit a factor of two apart in feature magnitude.
        const double magnitude = std::exp2(static_cast<double>(f) + 1.0);
        const std::size_t stub_size = 2 + (f / 3) % 3;
        std::vector<FunctionNode> nodes;
        std::vector<Edge> edges;
        auto add = [&](NodeKind kind) {
            const NodeId id = nodes.size();
            nodes.push_back({id, kind, make_features(kind, magnitude, rng)});
            return id;
        };

        const NodeId entry = add(NodeKind::entry);
        switch (f % 3) {
            case 0:  // entry calls into the rest of the stub
                for (std::size_t k = 1; k < stub_size; ++k) {
                    const NodeId id = add(k + 1 == stub_size ? NodeKind::import : NodeKind::internal);
                    edges.emplace_back(k == 1 ? entry : id - 1, id);
                }
                break;
            case 1: {  // entry has no calls; the stub is a separate component
                NodeId prev = add(NodeKind::internal);
                for (std::size_t k = 1; k < stub_size; ++k) {
                    const NodeId id = add(k + 1 == stub_size ? NodeKind::import : NodeKind::internal);
                    edges.emplace_back(prev, id);
                    prev = id;
                }
                break;
            }
            default:  // no call edges at all
                for (std::size_t k = 1; k < stub_size; ++k) add(NodeKind::import);
                break;
        }

        char name[32];
        std::snprintf(name, sizeof(name), "packer_%02zu", f);
        GraphMeta meta{name, "", std::string(name), {entry}};
        FamilySpec spec{name, CallGraph(std::move(meta), std::move(nodes), std::move(edges)), {}, 6,
                        derive_seed(seed, 0xfb0000 + f)};
        spec.perturbation = {0.2, 0.15, 0.1};
        out.push_back(std::move(spec));
    }
    return out;
}

}  // namespace stubmatch::synth
