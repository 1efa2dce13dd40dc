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

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "stubmatch/call_graph.hpp"
#include "stubmatch/errors.hpp"

using namespace stubmatch;

namespace {

FunctionNode make_node(NodeId id, NodeKind kind, double size) {
    FunctionNode n{id, kind, {}};
    n.features[index_of(Feature::type)] = kind_code(kind);
    n.features[index_of(Feature::size)] = size;
    return n;
}

}  // namespace

TEST_SUITE("cg_model") {
    TEST_CASE("fixture upx_like_small has three nodes and entry 0") {
        const CallGraph g = load_graph_file(fixture::path("upx_like_small.cg.json"));
        CHECK(g.node_count() == 3);
        CHECK(g.edge_count() == 0);
        CHECK(g.meta().entry_ids == std::vector<NodeId>{0});
        CHECK(g.packer_label() == std::optional<std::string>("upx"));
    }

    TEST_CASE("insertion order does not change the serialized bytes") {
        std::vector<FunctionNode> nodes = {make_node(0, NodeKind::entry, 1), make_node(4, NodeKind::internal, 2),
                                           make_node(2, NodeKind::import, 3)};
        std::vector<Edge> edges = {{0, 4}, {0, 2}, {4, 4}};
        const CallGraph a({"s", "", std::nullopt, {0}}, nodes, edges);
        std::reverse(nodes.begin(), nodes.end());
        std::reverse(edges.begin(), edges.end());
        const CallGraph b({"s", "", std::nullopt, {0}}, nodes, edges);
        CHECK(a == b);
        CHECK(serialize_graph(a) == serialize_graph(b));
    }

    TEST_CASE("round trip over random graphs") {
        Rng rng(11);
        for (int i = 0; i < 50; ++i) {
            const CallGraph g = oracle::random_graph(rng, 25, i % 3);
            const std::string text = serialize_graph(g);
            const CallGraph back = parse_graph(text);
            CHECK(back == g);
            CHECK(serialize_graph(back) == text);
        }
    }

    TEST_CASE("one-node graph serializes with an empty edge array") {
        const CallGraph g({"one", "", std::nullopt, {7}}, {make_node(7, NodeKind::entry, 1)}, {});
        const std::string text = serialize_graph(g);
        CHECK(text.find("\"edges\":[]") != std::string::npos);
        CHECK(parse_graph(text).node_count() == 1);
    }

    TEST_CASE("dangling edge is an integrity error") {
        CHECK_THROWS_AS(load_graph_file(fixture::path("dangling_edge.cg.json")), IntegrityError);
    }

    TEST_CASE("syntax errors report a position") {
        try {
            load_graph_file(fixture::path("malformed.cg.json"));
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line") != std::string::npos);
        }
    }

    TEST_CASE("field errors name the field") {
        const std::string doc =
            R"({"meta":{"sample_id":"x","sha256":"","entry_ids":[0]},"nodes":[{"id":0,"kind":"entry","features":[2,1,1,0,1,1,1,0,0,1,0]}],"edges":[]})";
        try {
            parse_graph(doc);
            FAIL("expected an integrity error");
        } catch (const IntegrityError& e) {
            CHECK(std::string(e.what()).find("nodes[0].features") != std::string::npos);
        }
        const std::string bad_kind =
            R"({"meta":{"sample_id":"x","sha256":"","entry_ids":[0]},"nodes":[{"id":0,"kind":"main","features":[2,1,1,0,1,1,1,0,0,1,0,0]}],"edges":[]})";
        CHECK_THROWS_AS(parse_graph(bad_kind), ParseError);
    }

    TEST_CASE("invariants are enforced at construction") {
        const auto e = make_node(0, NodeKind::entry, 1);
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {}}, {e}, {}), IntegrityError);
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {1}}, {e}, {}), IntegrityError);
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {0}}, {e, e}, {}), IntegrityError);
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {0}}, {e}, {{0, 0}, {0, 0}}), IntegrityError);
        auto wrong_type = e;
        wrong_type.features[0] = 1.0;
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {0}}, {wrong_type}, {}), IntegrityError);
        auto negative = e;
        negative.features[index_of(Feature::size)] = -1.0;
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {0}}, {negative}, {}), IntegrityError);
        auto internal_entry = make_node(0, NodeKind::internal, 1);
        CHECK_THROWS_AS(CallGraph({"x", "", std::nullopt, {0}}, {internal_entry}, {}), IntegrityError);
        // Self-loops are allowed.
        CHECK_NOTHROW(CallGraph({"x", "", std::nullopt, {0}}, {e}, {{0, 0}}));
    }

    TEST_CASE("stats: identical nodes give zero std") {
        const CallGraph g({"x", "", std::nullopt, {0}},
                          {make_node(0, NodeKind::entry, 5), make_node(1, NodeKind::entry, 5)}, {});
        const CallGraph graphs[] = {g};
        const FeatureStats s = compute_feature_stats(graphs);
        CHECK(s.computed_over == 2);
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            CHECK(s.std[f] == 0.0);
            CHECK(s.mean[f] == g.nodes()[0].features[f]);
        }
    }

    TEST_CASE("stats: two-point population std") {
        const CallGraph g({"x", "", std::nullopt, {0}},
                          {make_node(0, NodeKind::entry, 10), make_node(1, NodeKind::internal, 30)}, {});
        const CallGraph graphs[] = {g};
        const FeatureStats s = compute_feature_stats(graphs);
        CHECK(s.mean[index_of(Feature::size)] == doctest::Approx(20.0));
        CHECK(s.std[index_of(Feature::size)] == doctest::Approx(10.0));
    }

    TEST_CASE("stats match a streaming recomputation") {
        Rng rng(5);
        std::vector<CallGraph> graphs;
        for (int i = 0; i < 5; ++i) graphs.push_back(oracle::random_graph(rng, 30, 0));
        const FeatureStats s = compute_feature_stats(graphs);
        // Welford's update, one node at a time.
        FeatureVector mean{}, m2{};
        std::size_t n = 0;
        for (const auto& g : graphs)
            for (const auto& node : g.nodes()) {
                ++n;
                for (std::size_t f = 0; f < kFeatureCount; ++f) {
                    const double delta = node.features[f] - mean[f];
                    mean[f] += delta / static_cast<double>(n);
                    m2[f] += delta * (node.features[f] - mean[f]);
                }
            }
        CHECK(s.computed_over == n);
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            CHECK(s.mean[f] == doctest::Approx(mean[f]).epsilon(1e-12));
            CHECK(s.std[f] == doctest::Approx(std::sqrt(m2[f] / static_cast<double>(n))).epsilon(1e-12));
        }
    }

    TEST_CASE("stats of nothing is an error") {
        std::vector<CallGraph> none;
        CHECK_THROWS(compute_feature_stats(none));
    }

    TEST_CASE("normalize") {
        FeatureStats s;
        s.computed_over = 1;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            s.mean[f] = static_cast<double>(f);
            s.std[f] = f % 2 == 0 ? 0.0 : 2.0;
        }
        const FeatureVector at_mean = normalize(s.mean, s);
        FeatureVector shifted = s.mean;
        for (std::size_t f = 0; f < kFeatureCount; ++f) shifted[f] += s.std[f] + (f % 2 == 0 ? 5.0 : 0.0);
        const FeatureVector one = normalize(shifted, s);
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            CHECK(at_mean[f] == 0.0);
            CHECK(one[f] == (f % 2 == 0 ? 0.0 : 1.0));
        }
    }

    TEST_CASE("stats round trip") {
        Rng rng(3);
        std::vector<CallGraph> graphs = {oracle::random_graph(rng, 20, 0)};
        const FeatureStats s = compute_feature_stats(graphs);
        CHECK(parse_stats(serialize_stats(s)) == s);
    }
}
