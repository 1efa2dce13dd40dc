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

#include "stubmatch/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "stubmatch/errors.hpp"
#include "stubmatch/parallel.hpp"

namespace stubmatch::cluster {

Dendrogram single_linkage(const DistanceMatrix& d) {
    const std::size_t n = d.size();
    Dendrogram tree;
    tree.leaves = n;
    if (n < 2) return tree;

    // Slot i holds the active cluster whose smallest member is i.
    std::vector<double> dist(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = d(i, j);
    }
    std::vector<bool> active(n, true);
    std::vector<std::size_t> id(n), size(n, 1);
    std::iota(id.begin(), id.end(), 0);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (active[j] && dist[i * n + j] < best) {
                    best = dist[i * n + j];
                    bi = i;
                    bj = j;
                }
            }
        }
        tree.merges.push_back({id[bi], id[bj], best, size[bi] + size[bj]});
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            const double m = std::min(dist[bi * n + k], dist[bj * n + k]);
            dist[bi * n + k] = m;
            dist[k * n + bi] = m;
        }
        active[bj] = false;
        id[bi] = n + step;
        size[bi] += size[bj];
    }
    return tree;
}

std::vector<std::size_t> cut(const Dendrogram& tree, std::size_t k) {
    const std::size_t n = tree.leaves;
    if (k == 0 || k > n) throw InvalidArgument("cut: k must lie in [1, n]");
    // Union-find over leaves; cluster id n + s maps to a representative leaf.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::size_t> leaf_of(n + tree.merges.size());
    std::iota(leaf_of.begin(), leaf_of.begin() + static_cast<std::ptrdiff_t>(n), 0);
    for (std::size_t s = 0; s < n - k; ++s) {
        const Merge& m = tree.merges[s];
        const std::size_t a = find(leaf_of[m.left]);
        const std::size_t b = find(leaf_of[m.right]);
        parent[std::max(a, b)] = std::min(a, b);
        leaf_of[n + s] = std::min(a, b);
    }
    std::vector<std::size_t> labels(n);
    std::vector<std::size_t> label_of_root(n, SIZE_MAX);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (label_of_root[r] == SIZE_MAX) label_of_root[r] = next++;
        labels[i] = label_of_root[r];
    }
    return labels;
}

double silhouette_score(const DistanceMatrix& d, std::span<const std::size_t> labels) {
    const std::size_t n = d.size();
    if (labels.size() != n) throw InvalidArgument("silhouette: label count does not match the matrix");
    if (n == 0) throw InvalidArgument("silhouette: empty matrix");
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : labels) ++counts[l];
    const auto nonempty = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
    if (nonempty < 2) throw InvalidArgument("silhouette is undefined for a single cluster");

    double total = 0.0;
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] == 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[labels[j]] += d(i, j);
        }
        const double a = sums[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c != labels[i] && counts[c] > 0) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
        }
        const double scale = std::max(a, b);
        if (scale > 0.0) total += (b - a) / scale;
    }
    return total / static_cast<double>(n);
}

std::size_t medoid(const DistanceMatrix& d, std::span<const std::size_t> members) {
    if (members.empty()) throw InvalidArgument("medoid of an empty cluster");
    std::size_t best = members.front();
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t i : members) {
        double sum = 0.0;
        for (std::size_t j : members) sum += d(i, j);
        if (sum < best_sum) {
            best_sum = sum;
            best = i;
        }
    }
    return best;
}

double similarity_threshold(const DistanceMatrix& d, std::span<const std::size_t> members) {
    if (members.size() < 2) throw InvalidArgument("threshold needs at least two members");
    std::vector<double> sims;
    for (std::size_t x = 0; x < members.size(); ++x) {
        for (std::size_t y = x + 1; y < members.size(); ++y) sims.push_back(1.0 - d(members[x], members[y]));
    }
    const double mean = std::accumulate(sims.begin(), sims.end(), 0.0) / static_cast<double>(sims.size());
    double var = 0.0;
    for (double s : sims) var += (s - mean) * (s - mean);
    var /= static_cast<double>(sims.size());
    return mean - std::sqrt(var);
}

Clustering cluster_distances(const DistanceMatrix& d, const ClusterOptions& options) {
    const std::size_t n = d.size();
    if (n == 0) throw InvalidArgument("cannot cluster an empty packer");
    Clustering out;

    std::vector<std::size_t> labels(n, 0);
    if (n >= 3) {
        const Dendrogram tree = single_linkage(d);
        const std::size_t k_hi = std::min(n - 1, options.k_max);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<std::size_t> best_labels;
        std::size_t best_k = 1;
        for (std::size_t k = 2; k <= k_hi; ++k) {
            auto candidate = cut(tree, k);
            const double s = silhouette_score(d, candidate);
            if (s > best) {
                best = s;
                best_k = k;
                best_labels = std::move(candidate);
            }
        }
        if (best_k >= 2 && best >= options.s_min) {
            labels = std::move(best_labels);
            out.chosen_k = best_k;
            out.silhouette = best;
        }
    }

    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= groups.size()) groups.resize(labels[i] + 1);
        groups[labels[i]].push_back(i);
    }

    // Fold every single-member group into its nearest group by single-linkage distance.
    while (groups.size() > 1) {
        auto lone = std::find_if(groups.begin(), groups.end(), [](const auto& g) { return g.size() == 1; });
        if (lone == groups.end()) break;
        const std::size_t point = lone->front();
        std::size_t target = SIZE_MAX;
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (&groups[g] == &*lone) continue;
            for (std::size_t j : groups[g]) {
                if (d(point, j) < nearest) {
                    nearest = d(point, j);
                    target = g;
                }
            }
        }
        groups[target].push_back(point);
        std::sort(groups[target].begin(), groups[target].end());
        groups.erase(lone);
        std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    }

    for (auto& members : groups) {
        Cluster c;
        c.medoid = medoid(d, members);
        if (members.size() == 1) {
            c.threshold = options.singleton_threshold;
            c.low_confidence = true;
        } else {
            c.threshold = similarity_threshold(d, members);
        }
        c.members = std::move(members);
        out.clusters.push_back(std::move(c));
    }
    return out;
}

DistanceMatrix build_distance_matrix(std::span<const gmn::PreparedGraph> graphs, const gmn::GmnParams& params,
                                     std::size_t jobs) {
    const std::size_t n = graphs.size();
    if (n == 0) throw InvalidArgument("distance matrix needs at least one graph");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    std::vector<double> dist(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t k) {
        const double s = gmn::similarity(graphs[pairs[k].first], graphs[pairs[k].second], params);
        dist[k] = std::clamp(1.0 - s, 0.0, 2.0);
    });
    DistanceMatrix d(n);
    for (std::size_t k = 0; k < pairs.size(); ++k) d.set(pairs[k].first, pairs[k].second, dist[k]);
    return d;
}

DistanceMatrix build_distance_matrix(std::span<const StubGraph> graphs, const gmn::GmnParams& params,
                                     const FeatureStats& stats, std::size_t jobs) {
    std::set<std::optional<std::string>> labels;
    for (const auto& g : graphs) labels.insert(g.graph.packer_label());
    if (labels.size() > 1) throw InvalidArgument("distance matrix: graphs come from more than one packer");
    std::vector<gmn::PreparedGraph> prepared;
    prepared.reserve(graphs.size());
    for (const auto& g : graphs) prepared.push_back(gmn::prepare(g.graph, stats));
    return build_distance_matrix(prepared, params, jobs);
}

PackerClustering cluster_packer(std::span<const StubGraph> graphs, const gmn::GmnParams& params,
                                const FeatureStats& stats, const ClusterOptions& options, std::size_t jobs) {
    PackerClustering out;
    out.distances = build_distance_matrix(graphs, params, stats, jobs);
    out.clustering = cluster_distances(out.distances, options);
    return out;
}

}  // namespace stubmatch::cluster
