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
#include <set>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "stubmatch/cluster.hpp"
#include "stubmatch/errors.hpp"

using namespace stubmatch;
using namespace stubmatch::cluster;

namespace {

DistanceMatrix to_matrix(const std::vector<std::vector<double>>& d) {
    DistanceMatrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = i + 1; j < d.size(); ++j) m.set(i, j, d[i][j]);
    return m;
}

std::vector<std::size_t> all(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

std::vector<double> heights(const Dendrogram& t) {
    std::vector<double> h;
    for (const auto& m : t.merges) h.push_back(m.height);
    return h;
}

}  // namespace

TEST_SUITE("cluster") {
    TEST_CASE("three-point hand trace") {
        const auto d = to_matrix({{0, 0.1, 0.5}, {0.1, 0, 0.6}, {0.5, 0.6, 0}});
        const auto t = single_linkage(d);
        REQUIRE(t.merges.size() == 2);
        CHECK(t.merges[0].left == 0);
        CHECK(t.merges[0].right == 1);
        CHECK(t.merges[0].height == 0.1);
        CHECK(t.merges[1].height == 0.5);
        CHECK(t.merges[1].size == 3);
        CHECK(cut(t, 2) == std::vector<std::size_t>{0, 0, 1});
        CHECK(cut(t, 3) == std::vector<std::size_t>{0, 1, 2});
        CHECK(cut(t, 1) == std::vector<std::size_t>{0, 0, 0});
    }

    TEST_CASE("all-zero matrix merges at height zero") {
        const auto t = single_linkage(DistanceMatrix(6));
        CHECK(t.merges.size() == 5);
        for (double h : heights(t)) CHECK(h == 0.0);
    }

    TEST_CASE("merge heights match a spanning tree oracle") {
        Rng rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n = 2 + rng.index(15);
            const auto raw = oracle::random_distances(rng, n);
            const auto h = heights(single_linkage(to_matrix(raw)));
            CHECK(std::is_sorted(h.begin(), h.end()));
            const auto expected = oracle::mst_heights(raw);
            REQUIRE(h.size() == expected.size());
            for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(h[i] - expected[i]) <= 1e-9);
        }
    }

    TEST_CASE("cuts refine as k grows") {
        Rng rng(4);
        const auto d = to_matrix(oracle::random_distances(rng, 12));
        const auto t = single_linkage(d);
        for (std::size_t k = 1; k < 12; ++k) {
            const auto coarse = cut(t, k);
            const auto fine = cut(t, k + 1);
            CHECK(std::set<std::size_t>(coarse.begin(), coarse.end()).size() == k);
            // Points together at k + 1 stay together at k.
            for (std::size_t i = 0; i < 12; ++i)
                for (std::size_t j = 0; j < 12; ++j)
                    if (fine[i] == fine[j]) CHECK(coarse[i] == coarse[j]);
        }
    }

    TEST_CASE("silhouette: tight pairs, random labels, oracle") {
        const auto raw = std::vector<std::vector<double>>{
            {0, 0.05, 1.9, 1.9}, {0.05, 0, 1.9, 1.9}, {1.9, 1.9, 0, 0.05}, {1.9, 1.9, 0.05, 0}};
        const auto d = to_matrix(raw);
        const std::vector<std::size_t> good = {0, 0, 1, 1};
        const double best = silhouette_score(d, good);
        CHECK(best > 0.9);
        // Every other 2-assignment of 4 points scores strictly lower.
        for (unsigned mask = 1; mask < 15; ++mask) {
            std::vector<std::size_t> l(4);
            for (std::size_t i = 0; i < 4; ++i) l[i] = (mask >> i) & 1U;
            if (l == good || l == std::vector<std::size_t>{1, 1, 0, 0}) continue;
            CHECK(silhouette_score(d, l) < best);
        }
        Rng rng(6);
        for (int trial = 0; trial < 50; ++trial) {
            const auto r = oracle::random_distances(rng, 10);
            std::vector<std::size_t> labels(10);
            for (auto& l : labels) l = rng.index(3);
            labels[0] = 0;
            labels[1] = 1;
            CHECK(std::abs(silhouette_score(to_matrix(r), labels) - oracle::silhouette(r, labels)) <= 1e-9);
        }
        CHECK_THROWS_AS(silhouette_score(d, std::vector<std::size_t>{0, 0, 0, 0}), InvalidArgument);
    }

    TEST_CASE("equidistant point contributes zero") {
        const auto raw =
            std::vector<std::vector<double>>{{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}};
        CHECK(silhouette_score(to_matrix(raw), std::vector<std::size_t>{0, 0, 1, 1}) == 0.0);
    }

    TEST_CASE("medoid matches exhaustive argmin") {
        Rng rng(12);
        for (int trial = 0; trial < 50; ++trial) {
            const auto raw = oracle::random_distances(rng, 10);
            CHECK(medoid(to_matrix(raw), all(10)) == oracle::medoid(raw));
        }
        const auto line = to_matrix({{0, 0.1, 1.0}, {0.1, 0, 0.1}, {1.0, 0.1, 0}});
        CHECK(medoid(line, all(3)) == 1);
        CHECK(medoid(line, std::vector<std::size_t>{2}) == 2);
    }

    TEST_CASE("threshold is mean minus population std over distinct pairs") {
        const auto d = to_matrix({{0, 0.1, 0.3}, {0.1, 0, 0.2}, {0.3, 0.2, 0}});
        // Similarities 0.9, 0.7, 0.8.
        const double mean = 0.8;
        const double sd = std::sqrt((0.01 + 0.01 + 0.0) / 3.0);
        CHECK(similarity_threshold(d, all(3)) == doctest::Approx(mean - sd).epsilon(1e-12));
        CHECK(similarity_threshold(DistanceMatrix(4), all(4)) == 1.0);
        CHECK_THROWS_AS(similarity_threshold(d, std::vector<std::size_t>{0}), InvalidArgument);
    }

    TEST_CASE("cluster_distances: two groups, singletons, small n") {
        SUBCASE("two separated groups") {
            std::vector<std::vector<double>> raw(8, std::vector<double>(8, 0.0));
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j)
                    if (i != j) raw[i][j] = (i < 4) == (j < 4) ? 0.02 + 0.001 * static_cast<double>(i + j) : 1.5;
            const auto c = cluster_distances(to_matrix(raw));
            REQUIRE(c.clusters.size() == 2);
            CHECK(c.chosen_k == 2);
            CHECK(c.clusters[0].members == std::vector<std::size_t>{0, 1, 2, 3});
            CHECK(c.clusters[1].members == std::vector<std::size_t>{4, 5, 6, 7});
        }
        SUBCASE("an outlier is merged and lowers the threshold") {
            const std::size_t n = 10;
            std::vector<std::vector<double>> raw(n, std::vector<double>(n, 0.0));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j) raw[i][j] = (i == n - 1 || j == n - 1) ? 0.9 : 0.01;
            const auto c = cluster_distances(to_matrix(raw));
            REQUIRE(c.clusters.size() == 1);
            CHECK(c.clusters[0].members.size() == n);
            std::vector<std::size_t> core(n - 1);
            for (std::size_t i = 0; i + 1 < n; ++i) core[i] = i;
            CHECK(c.clusters[0].threshold < similarity_threshold(to_matrix(raw), core));
        }
        SUBCASE("fewer than three points is one cluster") {
            const auto c = cluster_distances(to_matrix({{0, 1.8}, {1.8, 0}}));
            CHECK(c.clusters.size() == 1);
            CHECK(c.chosen_k == 1);
        }
        SUBCASE("one graph falls back to the fixed threshold") {
            const auto c = cluster_distances(DistanceMatrix(1));
            REQUIRE(c.clusters.size() == 1);
            CHECK(c.clusters[0].low_confidence);
            CHECK(c.clusters[0].threshold == ClusterOptions{}.singleton_threshold);
        }
    }

    TEST_CASE("cluster invariants on random matrices") {
        Rng rng(77);
        for (int trial = 0; trial < 40; ++trial) {
            const std::size_t n = 1 + rng.index(25);
            const auto raw = oracle::random_distances(rng, n);
            const auto d = to_matrix(raw);
            const auto c = cluster_distances(d);
            std::vector<std::size_t> seen;
            for (const auto& cl : c.clusters) {
                CHECK(!cl.members.empty());
                CHECK(std::binary_search(cl.members.begin(), cl.members.end(), cl.medoid));
                CHECK(cl.medoid == medoid(d, cl.members));
                if (cl.members.size() >= 2) {
                    CHECK(!cl.low_confidence);
                    double mean = 0;
                    std::size_t pairs = 0;
                    for (std::size_t i = 0; i < cl.members.size(); ++i)
                        for (std::size_t j = i + 1; j < cl.members.size(); ++j) {
                            mean += 1.0 - raw[cl.members[i]][cl.members[j]];
                            ++pairs;
                        }
                    CHECK(cl.threshold <= mean / static_cast<double>(pairs) + 1e-12);
                }
                seen.insert(seen.end(), cl.members.begin(), cl.members.end());
            }
            std::sort(seen.begin(), seen.end());
            CHECK(seen == all(n));
            if (n >= 2) {
                for (const auto& cl : c.clusters) CHECK(cl.members.size() >= 2);
            }
        }
    }

    TEST_CASE("distance matrix under the model") {
        const auto reg = fixture::small_registry();
        std::vector<StubGraph> graphs;
        for (const auto& id : reg.packers.at("packer_00").graphs) graphs.push_back(reg.graphs.at(id));
        const auto d = build_distance_matrix(graphs, reg.model, reg.stats);
        REQUIRE(d.size() == graphs.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(d(i, i) == 0.0);
            for (std::size_t j = i + 1; j < d.size(); ++j) {
                CHECK(d(i, j) == d(j, i));
                const double s = gmn::similarity(gmn::prepare(graphs[i].graph, reg.stats),
                                                 gmn::prepare(graphs[j].graph, reg.stats), reg.model);
                CHECK(std::abs(d(i, j) - (1.0 - s)) <= 1e-12);
            }
        }
        CHECK(build_distance_matrix(graphs, reg.model, reg.stats, 3) == d);
        CHECK(build_distance_matrix(std::span(graphs).first(1), reg.model, reg.stats).size() == 1);

        std::vector<StubGraph> copies(5, graphs[0]);
        const auto z = build_distance_matrix(copies, reg.model, reg.stats);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(z(i, j)) <= 1e-9);

        graphs.push_back(reg.graphs.at(reg.packers.at("packer_01").graphs.front()));
        CHECK_THROWS_AS(build_distance_matrix(graphs, reg.model, reg.stats), InvalidArgument);
    }

    TEST_CASE("registry clusters are packer-pure") {
        const auto reg = fixture::small_registry();
        for (const auto& [name, entry] : reg.packers)
            for (const auto& c : entry.clusters)
                for (const auto& id : c.members) CHECK(reg.graphs.at(id).graph.packer_label() == name);
    }
}
