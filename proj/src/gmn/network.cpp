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

// Forward and backward passes of the graph matching network.
//
// Node states are row matrices (one row per function). One propagation round
// updates both graphs from the states of the previous round:
//   m_i  = sum over symmetrized in-edges (j -> i) of MLP_msg([h_i, h_j])
//   mu_i = sum_j a_ij (h_i - h_j),  a_i. = softmax_j(h_i . h_j) over the other graph
//   h_i' = MLP_upd([h_i, m_i, mu_i])
// and the readout is  e = W_r sum_i sigmoid(W_g h_i + b_g) * (W_t h_i + b_t) + b_r.

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "stubmatch/errors.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/random.hpp"

namespace stubmatch::gmn {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Eigen::Index;

Eigen::Map<const Mat> weight_of(const double* base, const AffineSlot& s) {
    return {base + s.weight, static_cast<Index>(s.out), static_cast<Index>(s.in)};
}

Eigen::Map<const RowVec> bias_of(const double* base, const AffineSlot& s) {
    return {base + s.bias, static_cast<Index>(s.out)};
}

Mat affine(const Mat& x, const AffineSlot& s, const double* base) {
    Mat y = x * weight_of(base, s).transpose();
    y.rowwise() += bias_of(base, s);
    return y;
}

// Accumulates parameter gradients and returns d loss / d x.
Mat affine_backward(const Mat& x, const Mat& dy, const AffineSlot& s, const double* base, double* grad) {
    Eigen::Map<Mat> dw(grad + s.weight, static_cast<Index>(s.out), static_cast<Index>(s.in));
    Eigen::Map<RowVec> db(grad + s.bias, static_cast<Index>(s.out));
    dw.noalias() += dy.transpose() * x;
    db += dy.colwise().sum();
    return dy * weight_of(base, s);
}

struct MlpTrace {
    Mat input;
    Mat hidden;  // tanh activations
};

Mat mlp_forward(const Mat& x, const MlpSlot& s, const double* base, MlpTrace* trace) {
    Mat hidden = affine(x, s.hidden, base).array().tanh().matrix();
    Mat out = affine(hidden, s.output, base);
    if (trace != nullptr) {
        trace->input = x;
        trace->hidden = std::move(hidden);
    }
    return out;
}

Mat mlp_backward(const MlpTrace& t, const Mat& dy, const MlpSlot& s, const double* base, double* grad) {
    Mat dhidden = affine_backward(t.hidden, dy, s.output, base, grad);
    dhidden.array() *= 1.0 - t.hidden.array().square();
    return affine_backward(t.input, dhidden, s.hidden, base, grad);
}

void softmax_rows(Mat& m) {
    for (Index r = 0; r < m.rows(); ++r) {
        const double top = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - top).exp().matrix();
        m.row(r) /= m.row(r).sum();
    }
}

struct RoundTrace {
    MlpTrace message;
    Mat attention;
    MlpTrace update;
};

Mat propagate(const Mat& self, const Mat& other, const PreparedGraph& g, const ParamLayout& l, const double* base,
              RoundTrace* trace) {
    const Index n = self.rows();
    const Index h = self.cols();
    const auto& msgs = g.messages;

    Mat pairs(static_cast<Index>(msgs.size()), 2 * h);
    for (std::size_t k = 0; k < msgs.size(); ++k) {
        pairs.row(static_cast<Index>(k)) << self.row(msgs[k].first), self.row(msgs[k].second);
    }
    const Mat msg_out = mlp_forward(pairs, l.message, base, trace ? &trace->message : nullptr);
    Mat aggregated = Mat::Zero(n, msg_out.cols());
    for (std::size_t k = 0; k < msgs.size(); ++k) aggregated.row(msgs[k].first) += msg_out.row(static_cast<Index>(k));

    Mat attention = self * other.transpose();
    softmax_rows(attention);
    const Mat cross = self - attention * other;

    Mat input(n, 2 * h + aggregated.cols());
    input << self, aggregated, cross;
    Mat out = mlp_forward(input, l.update, base, trace ? &trace->update : nullptr);
    if (trace != nullptr) trace->attention = std::move(attention);
    return out;
}

void propagate_backward(const Mat& self, const Mat& other, const PreparedGraph& g, const RoundTrace& t,
                        const Mat& d_out, Mat& d_self, Mat& d_other, const ParamLayout& l, const double* base,
                        double* grad) {
    const Index h = self.cols();
    const Index m = static_cast<Index>(l.message.output.out);
    const Mat d_in = mlp_backward(t.update, d_out, l.update, base, grad);
    d_self += d_in.leftCols(h);
    const Mat d_agg = d_in.middleCols(h, m);
    const Mat d_cross = d_in.rightCols(h);

    // cross = self - A other
    const Mat& a = t.attention;
    d_self += d_cross;
    const Mat d_att = -d_cross * other.transpose();
    d_other.noalias() -= a.transpose() * d_cross;
    const Vec row_dot = (d_att.array() * a.array()).rowwise().sum();
    const Mat d_scores = (a.array() * (d_att.colwise() - row_dot).array()).matrix();
    d_self.noalias() += d_scores * other;
    d_other.noalias() += d_scores.transpose() * self;

    const auto& msgs = g.messages;
    Mat d_msg(static_cast<Index>(msgs.size()), m);
    for (std::size_t k = 0; k < msgs.size(); ++k) d_msg.row(static_cast<Index>(k)) = d_agg.row(msgs[k].first);
    const Mat d_pairs = mlp_backward(t.message, d_msg, l.message, base, grad);
    for (std::size_t k = 0; k < msgs.size(); ++k) {
        d_self.row(msgs[k].first) += d_pairs.row(static_cast<Index>(k)).head(h);
        d_self.row(msgs[k].second) += d_pairs.row(static_cast<Index>(k)).tail(h);
    }
}

struct ReadoutTrace {
    Mat gate;       // sigmoid activations
    Mat transform;
    Mat pooled;     // 1 x E
};

Vec readout(const Mat& states, const ParamLayout& l, const double* base, ReadoutTrace* trace) {
    Mat gate = (1.0 / (1.0 + (-affine(states, l.gate, base)).array().exp())).matrix();
    Mat transform = affine(states, l.transform, base);
    Mat pooled = (gate.array() * transform.array()).colwise().sum().matrix();
    Vec out = affine(pooled, l.readout, base).row(0).transpose();
    if (trace != nullptr) {
        trace->gate = std::move(gate);
        trace->transform = std::move(transform);
        trace->pooled = std::move(pooled);
    }
    return out;
}

Mat readout_backward(const Mat& states, const ReadoutTrace& t, const Vec& d_embedding, const ParamLayout& l,
                     const double* base, double* grad) {
    const Mat d_pooled = affine_backward(t.pooled, d_embedding.transpose(), l.readout, base, grad);
    const Index n = states.rows();
    const Mat d_rows = d_pooled.replicate(n, 1);
    const Mat d_transform = (d_rows.array() * t.gate.array()).matrix();
    const Mat d_gate_pre = (d_rows.array() * t.transform.array() * t.gate.array() * (1.0 - t.gate.array())).matrix();
    Mat d_states = affine_backward(states, d_gate_pre, l.gate, base, grad);
    d_states += affine_backward(states, d_transform, l.transform, base, grad);
    return d_states;
}

struct PairTrace {
    std::array<MlpTrace, 2> encoder;
    std::array<std::vector<Mat>, 2> states;  // rounds + 1 entries each
    std::array<std::vector<RoundTrace>, 2> rounds;
    std::array<ReadoutTrace, 2> readout;
};

void require_finite(const Mat& m, const std::string& where) {
    if (!m.allFinite()) throw NumericError("non-finite values after " + where);
}

std::pair<Vec, Vec> forward(const PreparedGraph& a, const PreparedGraph& b, const GmnParams& params,
                            PairTrace* trace) {
    if (a.size() == 0 || b.size() == 0) throw InvalidArgument("embed_pair: graphs must be nonempty");
    const ParamLayout l = make_layout(params.config);
    if (params.values.size() != l.total) throw InvalidArgument("parameter vector does not match its config");
    const double* base = params.values.data();
    const std::array<const PreparedGraph*, 2> graphs{&a, &b};

    std::array<Mat, 2> h;
    for (int s = 0; s < 2; ++s) {
        h[s] = mlp_forward(graphs[s]->features, l.encoder, base, trace ? &trace->encoder[s] : nullptr);
        require_finite(h[s], "encoder layer");
        if (trace != nullptr) {
            trace->states[s].push_back(h[s]);
            trace->rounds[s].resize(params.config.propagation_rounds);
        }
    }
    for (std::size_t t = 0; t < params.config.propagation_rounds; ++t) {
        Mat next_a = propagate(h[0], h[1], a, l, base, trace ? &trace->rounds[0][t] : nullptr);
        Mat next_b = propagate(h[1], h[0], b, l, base, trace ? &trace->rounds[1][t] : nullptr);
        require_finite(next_a, "propagation round " + std::to_string(t + 1));
        require_finite(next_b, "propagation round " + std::to_string(t + 1));
        h[0] = std::move(next_a);
        h[1] = std::move(next_b);
        if (trace != nullptr) {
            trace->states[0].push_back(h[0]);
            trace->states[1].push_back(h[1]);
        }
    }
    Vec ea = readout(h[0], l, base, trace ? &trace->readout[0] : nullptr);
    Vec eb = readout(h[1], l, base, trace ? &trace->readout[1] : nullptr);
    require_finite(ea, "readout layer");
    require_finite(eb, "readout layer");
    return {std::move(ea), std::move(eb)};
}

void backward(const PreparedGraph& a, const PreparedGraph& b, const PairTrace& t, const Vec& d_ea, const Vec& d_eb,
              const GmnParams& params, double* grad) {
    const ParamLayout l = make_layout(params.config);
    const double* base = params.values.data();
    const std::size_t rounds = params.config.propagation_rounds;
    const std::array<const Vec*, 2> d_emb{&d_ea, &d_eb};

    std::array<Mat, 2> d_h;
    for (int s = 0; s < 2; ++s) {
        d_h[s] = readout_backward(t.states[s][rounds], t.readout[s], *d_emb[s], l, base, grad);
    }
    for (std::size_t r = rounds; r-- > 0;) {
        std::array<Mat, 2> d_prev{Mat::Zero(d_h[0].rows(), d_h[0].cols()), Mat::Zero(d_h[1].rows(), d_h[1].cols())};
        propagate_backward(t.states[0][r], t.states[1][r], a, t.rounds[0][r], d_h[0], d_prev[0], d_prev[1], l, base,
                           grad);
        propagate_backward(t.states[1][r], t.states[0][r], b, t.rounds[1][r], d_h[1], d_prev[1], d_prev[0], l, base,
                           grad);
        d_h = std::move(d_prev);
    }
    for (int s = 0; s < 2; ++s) mlp_backward(t.encoder[s], d_h[s], l.encoder, base, grad);
}

double loss_slope(int label, LossForm form) {
    // d loss / d s on the active side of the hinge.
    return form == LossForm::reinterpreted ? -static_cast<double>(label) : static_cast<double>(label);
}

}  // namespace

PreparedGraph prepare(const CallGraph& g, const FeatureStats& stats) {
    PreparedGraph p;
    const auto nodes = g.nodes();
    p.features.resize(static_cast<Index>(nodes.size()), static_cast<Index>(kFeatureCount));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const FeatureVector x = normalize(nodes[i].features, stats);
        for (std::size_t f = 0; f < kFeatureCount; ++f) p.features(static_cast<Index>(i), static_cast<Index>(f)) = x[f];
    }
    std::set<std::pair<Index, Index>> directed;
    for (const auto& [from, to] : g.edges()) {
        const auto u = static_cast<Index>(g.index_of(from));
        const auto v = static_cast<Index>(g.index_of(to));
        directed.emplace(v, u);
        directed.emplace(u, v);
    }
    p.messages.assign(directed.begin(), directed.end());
    return p;
}

std::pair<Embedding, Embedding> embed_pair(const PreparedGraph& a, const PreparedGraph& b, const GmnParams& params) {
    return forward(a, b, params, nullptr);
}

std::pair<Embedding, Embedding> embed_pair(const StubGraph& a, const StubGraph& b, const GmnParams& params,
                                           const FeatureStats& stats) {
    return embed_pair(prepare(a.graph, stats), prepare(b.graph, stats), params);
}

double cosine_similarity(const Embedding& x, const Embedding& y) {
    if (x.size() != y.size()) throw InvalidArgument("cosine similarity: dimension mismatch");
    const double nx = x.norm();
    const double ny = y.norm();
    if (nx == 0.0 || ny == 0.0) throw InvalidArgument("cosine similarity of a zero vector is undefined");
    return std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
}

double similarity(const PreparedGraph& a, const PreparedGraph& b, const GmnParams& params) {
    const auto [ea, eb] = embed_pair(a, b, params);
    return cosine_similarity(ea, eb);
}

double pair_loss(double s, int label, double margin, LossForm form) {
    const double l = static_cast<double>(label);
    const double target = form == LossForm::reinterpreted ? l * s : l * (1.0 - s);
    return std::max(0.0, margin - target);
}

double pair_loss_and_gradient(const PreparedGraph& a, const PreparedGraph& b, int label, const GmnParams& params,
                              std::span<double> gradient) {
    if (label != 1 && label != -1) throw InvalidArgument("pair label must be -1 or +1");
    if (gradient.empty()) {
        return pair_loss(similarity(a, b, params), label, params.config.margin, params.config.loss_form);
    }
    if (gradient.size() != params.values.size()) throw InvalidArgument("gradient buffer has the wrong size");

    PairTrace trace;
    const auto [ea, eb] = forward(a, b, params, &trace);
    const double na = ea.norm();
    const double nb = eb.norm();
    if (na == 0.0 || nb == 0.0) throw NumericError("zero embedding");
    const double raw = ea.dot(eb) / (na * nb);
    const double s = std::clamp(raw, -1.0, 1.0);
    const double loss = pair_loss(s, label, params.config.margin, params.config.loss_form);
    if (loss <= 0.0) return loss;

    const double slope = loss_slope(label, params.config.loss_form);
    const Vec d_ea = slope * (eb / (na * nb) - raw * ea / (na * na));
    const Vec d_eb = slope * (ea / (na * nb) - raw * eb / (nb * nb));
    backward(a, b, trace, d_ea, d_eb, params, gradient.data());
    return loss;
}

double finite_difference(const PreparedGraph& a, const PreparedGraph& b, int label, const GmnParams& params,
                         std::size_t index, double epsilon) {
    GmnParams probe = params;
    const double origin = params.values.at(index);
    probe.values[index] = origin + epsilon;
    const double up = pair_loss_and_gradient(a, b, label, probe, {});
    probe.values[index] = origin - epsilon;
    const double down = pair_loss_and_gradient(a, b, label, probe, {});
    return (up - down) / (2.0 * epsilon);
}

GradientCheckResult gradient_check(const GmnParams& params, const PreparedGraph& a, const PreparedGraph& b, int label,
                                   double epsilon, std::uint64_t seed, double fraction) {
    if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) throw InvalidArgument("epsilon must lie in [1e-6, 1e-3]");
    std::vector<double> grad(params.values.size(), 0.0);
    GradientCheckResult result;
    result.loss = pair_loss_and_gradient(a, b, label, params, grad);
    result.analytic_norm = Eigen::Map<const Vec>(grad.data(), static_cast<Index>(grad.size())).norm();

    std::vector<std::size_t> order(params.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * order.size())));
    order.resize(std::min(count, order.size()));
    std::sort(order.begin(), order.end());

    for (std::size_t idx : order) {
        const double numeric = finite_difference(a, b, label, params, idx, epsilon);
        const double analytic = grad[idx];
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / scale);
        ++result.checked;
    }
    return result;
}

}  // namespace stubmatch::gmn
