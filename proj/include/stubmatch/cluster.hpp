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
#include <span>
#include <vector>

#include "stubmatch/gmn.hpp"
#include "stubmatch/stub_extract.hpp"

namespace stubmatch::cluster {

/// Dense symmetric matrix of pairwise distances, 1 - cosine similarity.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

    /// Sets both (i, j) and (j, i).
    void set(std::size_t i, std::size_t j, double d) {
        data_[i * n_ + j] = d;
        data_[j * n_ + i] = d;
    }

    bool operator==(const DistanceMatrix&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// One agglomeration step. Leaves are 0..n-1 and the cluster formed by merge k
/// gets id n + k, as in the usual linkage-matrix convention.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double height = 0.0;
    std::size_t size = 0;
};

struct Dendrogram {
    std::size_t leaves = 0;
    std::vector<Merge> merges;
};

/// Agglomerative clustering with the minimum inter-cluster distance. Among
/// equally close pairs the one whose smallest members are lexicographically
/// smallest merges first.
Dendrogram single_linkage(const DistanceMatrix& d);

/// Flat labels after applying the first n - k merges. Labels are numbered in
/// order of each cluster's smallest member.
std::vector<std::size_t> cut(const Dendrogram& tree, std::size_t k);

/// Mean silhouette; points alone in their cluster contribute 0.
/// Throws InvalidArgument with fewer than two clusters.
double silhouette_score(const DistanceMatrix& d, std::span<const std::size_t> labels);

/// Member with the smallest sum of distances to the other members; ties go to
/// the first one in `members`.
std::size_t medoid(const DistanceMatrix& d, std::span<const std::size_t> members);

/// Mean pairwise similarity over distinct member pairs minus its population
/// standard deviation. Requires at least two members.
double similarity_threshold(const DistanceMatrix& d, std::span<const std::size_t> members);

struct ClusterOptions {
    std::size_t k_max = 10;
    double s_min = 0.25;
    double singleton_threshold = 0.9;

    bool operator==(const ClusterOptions&) const = default;
};

struct Cluster {
    std::vector<std::size_t> members;  // ascending positions in the packer's graph list
    std::size_t medoid = 0;
    double threshold = 0.0;
    bool low_confidence = false;  // single member, threshold is the fixed fallback

    bool operator==(const Cluster&) const = default;
};

struct Clustering {
    std::vector<Cluster> clusters;
    std::size_t chosen_k = 1;    // flat cut before singleton merging
    double silhouette = 0.0;     // score of the chosen cut, 0 when k = 1
};

/// Silhouette-selected cut of the single-linkage tree, singleton merging,
/// medoids and thresholds.
Clustering cluster_distances(const DistanceMatrix& d, const ClusterOptions& options = {});

/// Pairwise distances under the model; one forward pass per unordered pair.
DistanceMatrix build_distance_matrix(std::span<const gmn::PreparedGraph> graphs, const gmn::GmnParams& params,
                                     std::size_t jobs = 1);

/// Throws InvalidArgument when the graphs do not all carry the same packer label.
DistanceMatrix build_distance_matrix(std::span<const StubGraph> graphs, const gmn::GmnParams& params,
                                     const FeatureStats& stats, std::size_t jobs = 1);

struct PackerClustering {
    DistanceMatrix distances;
    Clustering clustering;
};

PackerClustering cluster_packer(std::span<const StubGraph> graphs, const gmn::GmnParams& params,
                                const FeatureStats& stats, const ClusterOptions& options = {}, std::size_t jobs = 1);

}  // namespace stubmatch::cluster
