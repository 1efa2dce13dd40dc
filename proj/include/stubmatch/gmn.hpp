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
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stubmatch/call_graph.hpp"
#include "stubmatch/stub_extract.hpp"

namespace stubmatch::gmn {

inline constexpr std::size_t kEmbeddingDim = 256;

/// Hinge applied to the similarity of a pair.
///  reinterpreted: max(0, margin - label * s)
///  as_written:    max(0, margin - label * (1 - s))
enum class LossForm { reinterpreted, as_written };

std::string_view to_string(LossForm f);
LossForm parse_loss_form(std::string_view s);

struct GmnConfig {
    std::size_t node_hidden_dim = 32;
    std::size_t message_dim = 64;
    std::size_t propagation_rounds = 5;
    std::size_t embedding_dim = kEmbeddingDim;
    double margin = 0.5;
    double learning_rate = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_pairs = 32;
    std::size_t pairs_per_epoch = 256;
    std::size_t fine_tune_epochs = 10;
    double positive_fraction = 0.5;
    LossForm loss_form = LossForm::reinterpreted;
    std::uint64_t seed = 0;

    bool operator==(const GmnConfig&) const = default;
};

/// Throws InvalidArgument when a field is out of range.
void validate(const GmnConfig& config);

/// Offsets of one affine map (out x in weight, column-major, then bias) in the
/// flat parameter vector.
struct AffineSlot {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t in = 0;
    std::size_t out = 0;
};

/// Two affine maps with a tanh in between.
struct MlpSlot {
    AffineSlot hidden;
    AffineSlot output;
};

struct ParamLayout {
    MlpSlot encoder;    // 12 -> H -> H
    MlpSlot message;    // 2H -> M -> M
    MlpSlot update;     // H + M + H -> H -> H
    AffineSlot gate;    // H -> E
    AffineSlot transform;  // H -> E
    AffineSlot readout;    // E -> E
    std::size_t total = 0;
};

ParamLayout make_layout(const GmnConfig& config);

/// Every weight of the network in one flat vector, plus the config that fixes
/// its shapes.
struct GmnParams {
    GmnConfig config;
    std::vector<double> values;

    bool operator==(const GmnParams&) const = default;
};

/// Uniform Glorot initialization, seeded from config.seed. Biases start at 0.
GmnParams init_params(const GmnConfig& config);

using Embedding = Eigen::VectorXd;

/// Node features normalized and laid out for the network, plus the message
/// list over the symmetrized edge set as (receiver, sender) row indices.
struct PreparedGraph {
    Eigen::MatrixXd features;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> messages;

    Eigen::Index size() const { return features.rows(); }
};

PreparedGraph prepare(const CallGraph& g, const FeatureStats& stats);

/// Joint embedding of a pair. The result for `a` depends on `b` through the
/// cross-graph attention, and swapping the arguments swaps the output exactly.
std::pair<Embedding, Embedding> embed_pair(const PreparedGraph& a, const PreparedGraph& b, const GmnParams& params);
std::pair<Embedding, Embedding> embed_pair(const StubGraph& a, const StubGraph& b, const GmnParams& params,
                                           const FeatureStats& stats);

/// Clamped to [-1, 1]. Throws InvalidArgument for a zero vector.
double cosine_similarity(const Embedding& x, const Embedding& y);

/// Cosine similarity of the joint embedding of a and b.
double similarity(const PreparedGraph& a, const PreparedGraph& b, const GmnParams& params);

double pair_loss(double similarity, int label, double margin, LossForm form = LossForm::reinterpreted);

/// Loss of one labeled pair. When `gradient` is non-empty it must have
/// params.values.size() entries; d loss / d params is added into it.
double pair_loss_and_gradient(const PreparedGraph& a, const PreparedGraph& b, int label, const GmnParams& params,
                              std::span<double> gradient);

/// A labeled pair of dataset positions. label is +1 when both graphs carry the
/// same packer label, -1 otherwise.
struct PairSample {
    std::size_t a = 0;
    std::size_t b = 0;
    int label = -1;

    bool operator==(const PairSample&) const = default;
};

/// `labels[i]` is the packer of dataset graph i. round(count * balance) pairs
/// are positive, the rest negative; no graph is paired with itself.
std::vector<PairSample> sample_pairs(std::span<const std::string> labels, std::size_t count, double balance,
                                     std::uint64_t seed);

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
    GmnParams params;
    TrainingLog log;
};

/// Labels are read from each graph's packer_label; unlabeled graphs are rejected.
TrainResult train(std::span<const StubGraph> dataset, const GmnConfig& config, const FeatureStats& stats,
                  const EpochCallback& on_epoch = {});

/// Continues optimization from `params` on pairs drawn from new_graphs and
/// old_sample. Runs config.fine_tune_epochs epochs with config's step size.
TrainResult fine_tune(const GmnParams& params, std::span<const StubGraph> new_graphs,
                      std::span<const StubGraph> old_sample, const GmnConfig& config, const FeatureStats& stats,
                      const EpochCallback& on_epoch = {});

/// Central difference of the pair loss along one parameter.
double finite_difference(const PreparedGraph& a, const PreparedGraph& b, int label, const GmnParams& params,
                         std::size_t index, double epsilon);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    double loss = 0.0;
    double analytic_norm = 0.0;
};

/// Compares the analytic gradient with central differences on a seeded random
/// subset of `fraction` of the parameters. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradientCheckResult gradient_check(const GmnParams& params, const PreparedGraph& a, const PreparedGraph& b,
                                   int label, double epsilon, std::uint64_t seed, double fraction = 0.01);

/// Versioned binary blob: magic, format version, config header, weights and a
/// trailing SHA-256 of everything before it.
std::string serialize_params(const GmnParams& params);
GmnParams parse_params(std::string_view blob);

std::string config_to_json(const GmnConfig& config);
GmnConfig config_from_json(std::string_view text);

}  // namespace stubmatch::gmn
