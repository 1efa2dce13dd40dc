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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "stubmatch/errors.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/random.hpp"

namespace stubmatch::gmn {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

class Adam {
public:
    explicit Adam(std::size_t n) : first_(n, 0.0), second_(n, 0.0) {}

    void step(std::vector<double>& values, const std::vector<double>& grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < values.size(); ++i) {
            first_[i] = kBeta1 * first_[i] + (1.0 - kBeta1) * grad[i];
            second_[i] = kBeta2 * second_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            values[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + kAdamEpsilon);
        }
    }

private:
    std::vector<double> first_;
    std::vector<double> second_;
    std::size_t t_ = 0;
};

std::vector<std::string> labels_of(std::span<const StubGraph> graphs, const char* what) {
    std::vector<std::string> labels;
    labels.reserve(graphs.size());
    for (const auto& g : graphs) {
        if (!g.graph.packer_label()) {
            throw InvalidArgument(std::string(what) + ": graph '" + g.graph.meta().sample_id + "' has no packer label");
        }
        labels.push_back(*g.graph.packer_label());
    }
    return labels;
}

// Runs `epochs` epochs of mini-batch Adam in place. `stream` separates the
// pair-sampling streams of training and fine-tuning.
TrainingLog optimize(GmnParams& params, const std::vector<PreparedGraph>& graphs, const std::vector<std::string>& labels,
                     const GmnConfig& config, std::size_t epochs, std::uint64_t stream,
                     const EpochCallback& on_epoch) {
    TrainingLog log;
    Adam adam(params.values.size());
    std::vector<double> grad(params.values.size());
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto pairs = sample_pairs(labels, config.pairs_per_epoch, config.positive_fraction,
                                        derive_seed(config.seed, stream + epoch));
        double epoch_loss = 0.0;
        for (std::size_t start = 0, batch = 0; start < pairs.size(); start += config.batch_pairs, ++batch) {
            const std::size_t stop = std::min(pairs.size(), start + config.batch_pairs);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                batch_loss += pair_loss_and_gradient(graphs[pairs[k].a], graphs[pairs[k].b], pairs[k].label, params,
                                                     grad);
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (double& g : grad) g *= scale;
            if (!std::isfinite(batch_loss) ||
                !std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch));
            }
            adam.step(params.values, grad, config.learning_rate);
            epoch_loss += batch_loss;
        }
        EpochRecord rec{epoch, epoch_loss / static_cast<double>(pairs.size())};
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return log;
}

}  // namespace

std::vector<PairSample> sample_pairs(std::span<const std::string> labels, std::size_t count, double balance,
                                     std::uint64_t seed) {
    if (!(balance >= 0.0 && balance <= 1.0)) throw InvalidArgument("balance must lie in [0, 1]");
    std::map<std::string, std::vector<std::size_t>> by_packer;
    for (std::size_t i = 0; i < labels.size(); ++i) by_packer[labels[i]].push_back(i);

    std::vector<const std::vector<std::size_t>*> groups;
    std::vector<const std::vector<std::size_t>*> pairable;
    for (const auto& [name, members] : by_packer) {
        groups.push_back(&members);
        if (members.size() >= 2) pairable.push_back(&members);
    }

    const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(count) * balance));
    const std::size_t negatives = count - positives;
    if (positives > 0 && pairable.empty()) {
        throw InvalidArgument("positive pairs need a packer with at least two graphs");
    }
    if (negatives > 0 && groups.size() < 2) {
        throw InvalidArgument("negative pairs need at least two packers");
    }

    Rng rng(seed);
    std::vector<PairSample> pairs;
    pairs.reserve(count);
    for (std::size_t i = 0; i < positives; ++i) {
        const auto& members = *pairable[rng.index(pairable.size())];
        const std::size_t first = rng.index(members.size());
        std::size_t second = rng.index(members.size() - 1);
        if (second >= first) ++second;
        pairs.push_back({members[first], members[second], 1});
    }
    for (std::size_t i = 0; i < negatives; ++i) {
        const std::size_t g1 = rng.index(groups.size());
        std::size_t g2 = rng.index(groups.size() - 1);
        if (g2 >= g1) ++g2;
        const auto& m1 = *groups[g1];
        const auto& m2 = *groups[g2];
        pairs.push_back({m1[rng.index(m1.size())], m2[rng.index(m2.size())], -1});
    }
    rng.shuffle(pairs);
    return pairs;
}

TrainResult train(std::span<const StubGraph> dataset, const GmnConfig& config, const FeatureStats& stats,
                  const EpochCallback& on_epoch) {
    validate(config);
    const auto labels = labels_of(dataset, "train");
    if (std::set<std::string>(labels.begin(), labels.end()).size() < 2) {
        throw InvalidArgument("training needs graphs from at least two packers");
    }
    std::vector<PreparedGraph> prepared;
    prepared.reserve(dataset.size());
    for (const auto& g : dataset) prepared.push_back(prepare(g.graph, stats));

    TrainResult result{init_params(config), {}};
    result.log = optimize(result.params, prepared, labels, config, config.epochs, 0x10000, on_epoch);
    return result;
}

TrainResult fine_tune(const GmnParams& params, std::span<const StubGraph> new_graphs,
                      std::span<const StubGraph> old_sample, const GmnConfig& config, const FeatureStats& stats,
                      const EpochCallback& on_epoch) {
    validate(config);
    if (make_layout(config).total != params.values.size()) {
        throw InvalidArgument("fine-tune config does not match the model's architecture");
    }
    if (new_graphs.empty()) throw InvalidArgument("fine-tune needs new graphs");
    if (old_sample.empty()) throw InvalidArgument("fine-tune needs a sample of existing graphs");
    const auto new_labels = labels_of(new_graphs, "fine_tune");
    if (std::set<std::string>(new_labels.begin(), new_labels.end()).size() != 1) {
        throw InvalidArgument("fine-tune expects every new graph to carry the same packer label");
    }
    auto labels = labels_of(old_sample, "fine_tune");
    labels.insert(labels.begin(), new_labels.begin(), new_labels.end());

    std::vector<PreparedGraph> prepared;
    prepared.reserve(labels.size());
    for (const auto& g : new_graphs) prepared.push_back(prepare(g.graph, stats));
    for (const auto& g : old_sample) prepared.push_back(prepare(g.graph, stats));

    TrainResult result{params, {}};
    result.log = optimize(result.params, prepared, labels, config, config.fine_tune_epochs, 0x20000, on_epoch);
    return result;
}

}  // namespace stubmatch::gmn
