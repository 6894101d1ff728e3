/*
 * Copyright 2025 The slaudit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "slaudit/tinyformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "slaudit/rng.hpp"

namespace slaudit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskLogit = -1e30;

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab Vocab::build(const Corpus& train, int max_size) {
    std::map<std::string, long long> freq;
    for (const auto& n : train.notes)
        for (const auto& tok : tokenize(n.text, n.note_id).tokens) freq[tok]++;

    std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    v.id_to_token = {"<pad>", "<unk>", kMaskToken};
    for (const auto& [tok, count] : items) {
        if (static_cast<int>(v.id_to_token.size()) >= max_size + 3) break;
        if (tok == "<pad>" || tok == "<unk>" || tok == kMaskToken) continue;
        v.id_to_token.push_back(tok);
    }
    for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i)
        v.token_to_id[v.id_to_token[i]] = i;
    return v;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<Tensor*> TransformerModel::params() {
    std::vector<Tensor*> out;
    out.push_back(&embedding);
    for (auto& l : layers) {
        out.push_back(&l.attn.wq);
        out.push_back(&l.attn.wk);
        out.push_back(&l.attn.wv);
        out.push_back(&l.attn.wo);
        out.push_back(&l.ln1_g);
        out.push_back(&l.ln1_b);
        out.push_back(&l.w1);
        out.push_back(&l.b1);
        out.push_back(&l.w2);
        out.push_back(&l.b2);
        out.push_back(&l.ln2_g);
        out.push_back(&l.ln2_b);
    }
    out.push_back(&final_ln_g);
    out.push_back(&final_ln_b);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

std::vector<const Tensor*> TransformerModel::params() const {
    auto mutable_list = const_cast<TransformerModel*>(this)->params();
    return {mutable_list.begin(), mutable_list.end()};
}

void TransformerModel::init_parameters(uint64_t init_seed) {
    const int d = hyper.model_dim;
    if (hyper.head_count < 1 || d % hyper.head_count != 0)
        throw std::invalid_argument("tinyformer: model_dim must be divisible by head_count");

    embedding.reset("embedding", vocab.size(), d);
    layers.assign(static_cast<size_t>(hyper.layer_count), {});
    for (int l = 0; l < hyper.layer_count; ++l) {
        auto& layer = layers[static_cast<size_t>(l)];
        std::string p = "layer" + std::to_string(l) + ".";
        layer.attn.head_count = hyper.head_count;
        layer.attn.d_k = d / hyper.head_count;
        layer.attn.wq.reset(p + "wq", d, d);
        layer.attn.wk.reset(p + "wk", d, d);
        layer.attn.wv.reset(p + "wv", d, d);
        layer.attn.wo.reset(p + "wo", d, d);
        layer.ln1_g.reset(p + "ln1_g", 1, d);
        layer.ln1_b.reset(p + "ln1_b", 1, d);
        layer.w1.reset(p + "w1", d, hyper.ffn_dim);
        layer.b1.reset(p + "b1", 1, hyper.ffn_dim);
        layer.w2.reset(p + "w2", hyper.ffn_dim, d);
        layer.b2.reset(p + "b2", 1, d);
        layer.ln2_g.reset(p + "ln2_g", 1, d);
        layer.ln2_b.reset(p + "ln2_b", 1, d);
    }
    final_ln_g.reset("final_ln_g", 1, d);
    final_ln_b.reset("final_ln_b", 1, d);
    head_w.reset("head_w", d, 1);
    head_b.reset("head_b", 1, 1);

    // Initialization is a pure function of (seed, tensor name) and, for
    // embeddings, of (seed, token string). Corpus variants that share tokens
    // therefore start from identical weights, which keeps paired comparisons
    // paired even when the vocabulary composition differs.
    auto xavier = [&](Tensor& t) {
        Rng rng(splitmix64(init_seed ^ hash_str(t.name)));
        double std = std::sqrt(2.0 / double(t.w.rows() + t.w.cols()));
        for (long i = 0; i < t.w.rows(); ++i)
            for (long j = 0; j < t.w.cols(); ++j) t.w(i, j) = rng.normal(0.0, std);
    };
    for (long i = 0; i < embedding.w.rows(); ++i) {
        Rng rng(splitmix64(init_seed ^ hash_str("emb:" + vocab.id_to_token[size_t(i)])));
        for (long j = 0; j < embedding.w.cols(); ++j) embedding.w(i, j) = rng.normal(0.0, 0.02);
    }
    embedding.w.row(Vocab::pad_id).setZero();
    for (auto& layer : layers) {
        xavier(layer.attn.wq);
        xavier(layer.attn.wk);
        xavier(layer.attn.wv);
        xavier(layer.attn.wo);
        layer.ln1_g.w.setOnes();
        layer.ln2_g.w.setOnes();
        xavier(layer.w1);
        xavier(layer.w2);
    }
    final_ln_g.w.setOnes();
    xavier(head_w);
}

Eigen::MatrixXd TransformerModel::positional_encoding(int length) const {
    const int d = hyper.model_dim;
    MatrixXd pe(length, d);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d; i += 2) {
            double angle = pos / std::pow(10000.0, double(i) / double(d));
            pe(pos, i) = std::sin(angle);
            if (i + 1 < d) pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

// ---------------------------------------------------------------------------
// Attention

namespace {

// Row-wise softmax of S into A (in place allowed via copy).
MatrixXd row_softmax(const MatrixXd& S) {
    MatrixXd A(S.rows(), S.cols());
    for (long i = 0; i < S.rows(); ++i) {
        double mx = S.row(i).maxCoeff();
        VectorXd e = (S.row(i).array() - mx).exp().matrix().transpose();
        A.row(i) = (e / e.sum()).transpose();
    }
    return A;
}

struct AttnCache {
    MatrixXd Q, K, V;            // n x d
    std::vector<MatrixXd> A;     // per head, n x n
    MatrixXd ctx;                // n x d, concatenated head outputs
};

// Per-head scaled dot-product attention with an optional key mask
// (real[j] == false means column j is excluded from every softmax row).
AttnCache attention_forward(const MatrixXd& X, const AttentionLayer& layer,
                            const std::vector<bool>* real) {
    const long n = X.rows();
    const int H = layer.head_count;
    const int dk = layer.d_k;
    AttnCache c;
    c.Q = X * layer.wq.w;
    c.K = X * layer.wk.w;
    c.V = X * layer.wv.w;
    c.A.resize(static_cast<size_t>(H));
    c.ctx.resize(n, X.cols());
    const double scale = 1.0 / std::sqrt(double(dk));
    for (int h = 0; h < H; ++h) {
        auto Qh = c.Q.middleCols(h * dk, dk);
        auto Kh = c.K.middleCols(h * dk, dk);
        auto Vh = c.V.middleCols(h * dk, dk);
        MatrixXd S = Qh * Kh.transpose() * scale;
        if (real) {
            for (long j = 0; j < n; ++j)
                if (!(*real)[static_cast<size_t>(j)]) S.col(j).setConstant(kMaskLogit);
        }
        c.A[static_cast<size_t>(h)] = row_softmax(S);
        c.ctx.middleCols(h * dk, dk) = c.A[static_cast<size_t>(h)] * Vh;
    }
    return c;
}

// Backward through attention_forward. dctx is the gradient at c.ctx.
// Accumulates parameter gradients and returns dX.
MatrixXd attention_backward(const MatrixXd& X, AttentionLayer& layer, const AttnCache& c,
                            const MatrixXd& dctx) {
    const int H = layer.head_count;
    const int dk = layer.d_k;
    const double scale = 1.0 / std::sqrt(double(dk));

    MatrixXd dQ = MatrixXd::Zero(c.Q.rows(), c.Q.cols());
    MatrixXd dK = MatrixXd::Zero(c.K.rows(), c.K.cols());
    MatrixXd dV = MatrixXd::Zero(c.V.rows(), c.V.cols());

    for (int h = 0; h < H; ++h) {
        const MatrixXd& A = c.A[static_cast<size_t>(h)];
        auto Qh = c.Q.middleCols(h * dk, dk);
        auto Kh = c.K.middleCols(h * dk, dk);
        auto Vh = c.V.middleCols(h * dk, dk);
        auto dctx_h = dctx.middleCols(h * dk, dk);

        MatrixXd dA = dctx_h * Vh.transpose();
        dV.middleCols(h * dk, dk) += A.transpose() * dctx_h;

        // softmax backward, row-wise; masked columns carry A == 0 so they
        // contribute nothing.
        MatrixXd dS(A.rows(), A.cols());
        for (long i = 0; i < A.rows(); ++i) {
            double dot = dA.row(i).dot(A.row(i));
            dS.row(i) = (A.row(i).array() * (dA.row(i).array() - dot)).matrix();
        }
        dQ.middleCols(h * dk, dk) += dS * Kh * scale;
        dK.middleCols(h * dk, dk) += dS.transpose() * Qh * scale;
    }

    layer.wq.g += X.transpose() * dQ;
    layer.wk.g += X.transpose() * dK;
    layer.wv.g += X.transpose() * dV;
    return dQ * layer.wq.w.transpose() + dK * layer.wk.w.transpose() + dV * layer.wv.w.transpose();
}

}  // namespace

SelfAttentionResult self_attention(const Eigen::MatrixXd& X, const AttentionLayer& layer) {
    if (X.rows() < 1) throw std::invalid_argument("self_attention: X must have at least one row");
    if (X.cols() != layer.wq.w.rows())
        throw std::invalid_argument("self_attention: X has " + std::to_string(X.cols()) +
                                    " columns but the layer expects " +
                                    std::to_string(layer.wq.w.rows()));
    if (layer.d_k * layer.head_count != X.cols())
        throw std::invalid_argument("self_attention: head_count * d_k must equal model_dim");
    AttnCache c = attention_forward(X, layer, nullptr);
    return {std::move(c.ctx), std::move(c.A)};
}

// ---------------------------------------------------------------------------
// Full forward/backward

namespace {

struct LayerCache {
    MatrixXd X;  // layer input
    MatrixXd N1, n1hat;  // pre-attention norm
    VectorXd inv_std1;
    AttnCache attn;
    MatrixXd M, R1;
    MatrixXd N2, n2hat;  // pre-feed-forward norm
    VectorXd inv_std2;
    MatrixXd Fpre, F, G, X2;
};

struct ForwardCache {
    std::vector<int> ids;
    std::vector<bool> real;
    int n_real = 0;
    MatrixXd X0;
    std::vector<LayerCache> layers;
    MatrixXd Xf, xfhat;  // final norm
    VectorXd inv_stdf;
    VectorXd pooled;
    double z = 0, p = 0;
};

void layer_norm_forward(const MatrixXd& R, const Tensor& g, const Tensor& b, MatrixXd& Y,
                        MatrixXd& xhat, VectorXd& inv_std) {
    const long n = R.rows(), d = R.cols();
    Y.resize(n, d);
    xhat.resize(n, d);
    inv_std.resize(n);
    for (long i = 0; i < n; ++i) {
        double mu = R.row(i).mean();
        double var = (R.row(i).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std(i) = is;
        xhat.row(i) = (R.row(i).array() - mu) * is;
        Y.row(i) = xhat.row(i).cwiseProduct(g.w.row(0)) + b.w.row(0);
    }
}

// Returns dR given dY; accumulates into g.g and b.g.
MatrixXd layer_norm_backward(const MatrixXd& dY, const MatrixXd& xhat, const VectorXd& inv_std,
                             Tensor& g, Tensor& b) {
    MatrixXd dR(dY.rows(), dY.cols());
    for (long i = 0; i < dY.rows(); ++i) {
        g.g.row(0) += dY.row(i).cwiseProduct(xhat.row(i));
        b.g.row(0) += dY.row(i);
        Eigen::RowVectorXd dxhat = dY.row(i).cwiseProduct(g.w.row(0));
        double mean_dxhat = dxhat.mean();
        double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).mean();
        dR.row(i) = (inv_std(i) *
                     (dxhat.array() - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat))
                        .matrix();
    }
    return dR;
}

ForwardCache forward_ids(const TransformerModel& m, const std::vector<int>& ids,
                         const MatrixXd& pe) {
    ForwardCache fc;
    fc.ids = ids;
    const long n = static_cast<long>(ids.size());
    fc.real.resize(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        fc.real[i] = ids[i] != Vocab::pad_id;
        if (fc.real[i]) fc.n_real++;
    }
    if (fc.n_real == 0) throw std::invalid_argument("tinyformer: segment has no real tokens");

    const double emb_scale = std::sqrt(double(m.hyper.model_dim));
    fc.X0.resize(n, m.hyper.model_dim);
    for (long i = 0; i < n; ++i)
        fc.X0.row(i) = m.embedding.w.row(ids[static_cast<size_t>(i)]) * emb_scale + pe.row(i);

    // Pre-norm residual blocks, then a final norm before pooling.
    const MatrixXd* X = &fc.X0;
    fc.layers.resize(m.layers.size());
    for (size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        LayerCache& lc = fc.layers[l];
        lc.X = *X;
        layer_norm_forward(lc.X, layer.ln1_g, layer.ln1_b, lc.N1, lc.n1hat, lc.inv_std1);
        lc.attn = attention_forward(lc.N1, layer.attn, &fc.real);
        lc.M = lc.attn.ctx * layer.attn.wo.w;
        lc.R1 = lc.X + lc.M;
        layer_norm_forward(lc.R1, layer.ln2_g, layer.ln2_b, lc.N2, lc.n2hat, lc.inv_std2);
        lc.Fpre = (lc.N2 * layer.w1.w).rowwise() + layer.b1.w.row(0);
        lc.F = lc.Fpre.cwiseMax(0.0);
        lc.G = (lc.F * layer.w2.w).rowwise() + layer.b2.w.row(0);
        lc.X2 = lc.R1 + lc.G;
        X = &lc.X2;
    }
    layer_norm_forward(*X, m.final_ln_g, m.final_ln_b, fc.Xf, fc.xfhat, fc.inv_stdf);

    fc.pooled = VectorXd::Zero(m.hyper.model_dim);
    for (long i = 0; i < n; ++i)
        if (fc.real[static_cast<size_t>(i)]) fc.pooled += fc.Xf.row(i).transpose();
    fc.pooled /= double(fc.n_real);

    fc.z = (m.head_w.w.transpose() * fc.pooled)(0, 0) + m.head_b.w(0, 0);
    fc.p = sigmoid(fc.z);
    return fc;
}

// Backward from dz; accumulates all parameter gradients.
void backward_ids(TransformerModel& m, ForwardCache& fc, double dz) {
    const long n = static_cast<long>(fc.ids.size());

    m.head_w.g += dz * fc.pooled;
    m.head_b.g(0, 0) += dz;
    VectorXd dpooled = dz * m.head_w.w.col(0);

    MatrixXd dXf = MatrixXd::Zero(n, m.hyper.model_dim);
    for (long i = 0; i < n; ++i)
        if (fc.real[static_cast<size_t>(i)])
            dXf.row(i) = dpooled.transpose() / double(fc.n_real);
    MatrixXd dX = layer_norm_backward(dXf, fc.xfhat, fc.inv_stdf, m.final_ln_g, m.final_ln_b);

    for (size_t li = m.layers.size(); li-- > 0;) {
        auto& layer = m.layers[li];
        LayerCache& lc = fc.layers[li];

        // dX is the gradient at lc.X2 = R1 + G
        MatrixXd dR1 = dX;  // residual branch
        const MatrixXd& dG = dX;

        layer.w2.g += lc.F.transpose() * dG;
        layer.b2.g.row(0) += dG.colwise().sum();
        MatrixXd dF = dG * layer.w2.w.transpose();
        MatrixXd dFpre = dF.cwiseProduct((lc.Fpre.array() > 0.0).cast<double>().matrix());
        layer.w1.g += lc.N2.transpose() * dFpre;
        layer.b1.g.row(0) += dFpre.colwise().sum();
        MatrixXd dN2 = dFpre * layer.w1.w.transpose();
        dR1 += layer_norm_backward(dN2, lc.n2hat, lc.inv_std2, layer.ln2_g, layer.ln2_b);

        // dR1 is the gradient at R1 = X + M
        MatrixXd dXin = dR1;  // residual branch
        layer.attn.wo.g += lc.attn.ctx.transpose() * dR1;
        MatrixXd dctx = dR1 * layer.attn.wo.w.transpose();
        MatrixXd dN1 = attention_backward(lc.N1, layer.attn, lc.attn, dctx);
        dXin += layer_norm_backward(dN1, lc.n1hat, lc.inv_std1, layer.ln1_g, layer.ln1_b);
        dX = std::move(dXin);
    }

    const double emb_scale = std::sqrt(double(m.hyper.model_dim));
    for (long i = 0; i < n; ++i)
        m.embedding.g.row(fc.ids[static_cast<size_t>(i)]) += dX.row(i) * emb_scale;
}

struct Sample {
    std::vector<int> ids;
    int label = 0;
    std::string note_id;
};

std::vector<Sample> make_samples(const Corpus& c, const Vocab& vocab, int max_len) {
    std::vector<Sample> out;
    for (const auto& note : c.notes) {
        TokenSeq toks = tokenize(note.text, note.note_id);
        for (const auto& seg : segment(toks, static_cast<size_t>(max_len))) {
            Sample s;
            s.label = note.label;
            s.note_id = note.note_id;
            s.ids.reserve(seg.tokens.size());
            for (const auto& tok : seg.tokens) s.ids.push_back(vocab.id(tok));
            if (!s.ids.empty()) out.push_back(std::move(s));
        }
    }
    return out;
}

double sample_loss(double p, int label, double weight) {
    // Numerically stable weighted BCE via softplus on the logit would need z;
    // p here is already clamped away from 0/1.
    double pc = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    return label ? -weight * std::log(pc) : -std::log(1.0 - pc);
}

}  // namespace

TransformerModel train(const Corpus& train_corpus, const Hyperparams& hyper, uint64_t seed) {
    if (train_corpus.notes.empty()) throw std::invalid_argument("train: empty corpus");
    bool has_pos = false, has_neg = false;
    for (const auto& n : train_corpus.notes) (n.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::invalid_argument("train: corpus contains a single label class");

    TransformerModel m;
    m.hyper = hyper;
    m.seed = seed;
    m.vocab = Vocab::build(train_corpus, hyper.vocab_size);
    m.init_parameters(seed);

    auto samples = make_samples(train_corpus, m.vocab, hyper.max_len);
    long long pos = 0, neg = 0;
    for (const auto& s : samples) (s.label ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("train: segments contain a single label class");
    m.pos_weight = std::min(hyper.pos_weight_cap, double(neg) / double(pos));

    MatrixXd pe = m.positional_encoding(hyper.max_len);
    Rng shuffle_rng(splitmix64(seed ^ 0x5eedULL));

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto tensors = m.params();
    long long step = 0;
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0;
        long long correct = 0;
        size_t batch_index = 0;
        for (size_t start = 0; start < order.size(); start += size_t(hyper.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(hyper.batch_size));
            for (auto* t : tensors) t->g.setZero();

            double batch_loss = 0;
            for (size_t k = start; k < end; ++k) {
                const Sample& s = samples[order[k]];
                ForwardCache fc = forward_ids(m, s.ids, pe);
                double w = s.label ? m.pos_weight : 1.0;
                batch_loss += sample_loss(fc.p, s.label, w);
                if ((fc.p > hyper.threshold ? 1 : 0) == s.label) correct++;
                double dz = w * (fc.p - double(s.label));
                backward_ids(m, fc, dz);
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index));
            epoch_loss += batch_loss;

            double inv_bs = 1.0 / double(end - start);
            ++step;
            double bc1 = 1.0 - std::pow(beta1, double(step));
            double bc2 = 1.0 - std::pow(beta2, double(step));
            for (auto* t : tensors) {
                t->g *= inv_bs;
                t->m = beta1 * t->m + (1.0 - beta1) * t->g;
                t->v = beta2 * t->v + (1.0 - beta2) * t->g.cwiseProduct(t->g);
                t->w -= (hyper.learning_rate / bc1) * t->m.cwiseQuotient(
                            ((t->v / bc2).cwiseSqrt().array() + adam_eps).matrix());
            }
            ++batch_index;
        }
        m.curve.push_back({epoch, epoch_loss / double(samples.size()),
                           double(correct) / double(samples.size())});
    }
    return m;
}

PredictResult predict(const TransformerModel& m, const TokenSeq& t, bool want_trace) {
    if (t.tokens.empty()) throw std::invalid_argument("predict: empty token sequence");

    PredictResult res;
    auto segments = segment(t, static_cast<size_t>(m.hyper.max_len));
    MatrixXd pe = m.positional_encoding(m.hyper.max_len);

    double sum_p = 0;
    int scored = 0;
    for (const auto& seg : segments) {
        std::vector<int> ids;
        ids.reserve(seg.tokens.size());
        bool any_real = false;
        for (const auto& tok : seg.tokens) {
            int id = m.vocab.id(tok);
            ids.push_back(id);
            any_real = any_real || id != Vocab::pad_id;
        }
        if (!any_real) continue;  // all-padding segment carries no content
        ForwardCache fc = forward_ids(m, ids, pe);
        sum_p += fc.p;
        ++scored;
        if (want_trace) {
            std::vector<std::vector<MatrixXd>> seg_weights;
            std::vector<double> col_score(ids.size(), 0.0);
            for (const auto& lc : fc.layers) {
                std::vector<MatrixXd> heads;
                for (const auto& A : lc.attn.A) {
                    for (size_t j = 0; j < ids.size(); ++j)
                        col_score[j] += A.col(static_cast<long>(j)).mean();
                    heads.push_back(A);
                }
                seg_weights.push_back(std::move(heads));
            }
            double denom = double(m.layers.size() * size_t(m.hyper.head_count));
            for (double& s : col_score) s /= denom;
            res.trace.weights.push_back(std::move(seg_weights));
            res.trace.token_scores.insert(res.trace.token_scores.end(), col_score.begin(),
                                          col_score.end());
        }
    }
    if (scored == 0) throw std::invalid_argument("predict: no real tokens in input");
    res.probability = sum_p / double(scored);
    res.at_risk = exceeds_threshold(res.probability, m.hyper.threshold);
    return res;
}

double gradient_check(TransformerModel& m, const TokenSeq& t, double epsilon, int label,
                      double label_weight, int sample_count, uint64_t seed) {
    if (epsilon < 1e-6 || epsilon > 1e-3)
        throw std::invalid_argument("gradient_check: epsilon must be in [1e-6, 1e-3]");
    if (t.tokens.empty()) throw std::invalid_argument("gradient_check: empty token sequence");

    MatrixXd pe = m.positional_encoding(m.hyper.max_len);
    auto segments = segment(t, static_cast<size_t>(m.hyper.max_len));
    std::vector<std::vector<int>> seg_ids;
    for (const auto& seg : segments) {
        std::vector<int> ids;
        for (const auto& tok : seg.tokens) ids.push_back(m.vocab.id(tok));
        seg_ids.push_back(std::move(ids));
    }

    double w = (label ? m.pos_weight : 1.0) * label_weight;
    // Returns the loss plus a hash of the ReLU activation pattern; a central
    // difference straddling a ReLU kink is not a valid derivative estimate,
    // so such sample points are discarded below.
    auto loss_of = [&]() {
        double total = 0;
        uint64_t pattern = 1469598103934665603ULL;
        for (const auto& ids : seg_ids) {
            ForwardCache fc = forward_ids(m, ids, pe);
            total += w * (label ? softplus(-fc.z) : softplus(fc.z));
            for (const auto& lc : fc.layers)
                for (long i = 0; i < lc.Fpre.rows(); ++i)
                    for (long j = 0; j < lc.Fpre.cols(); ++j) {
                        pattern ^= lc.Fpre(i, j) > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x517cc1b727220a95ULL;
                        pattern *= 1099511628211ULL;
                    }
        }
        return std::pair<double, uint64_t>(total, pattern);
    };

    auto tensors = m.params();
    for (auto* tn : tensors) tn->g.setZero();
    for (const auto& ids : seg_ids) {
        ForwardCache fc = forward_ids(m, ids, pe);
        double dz = w * (fc.p - double(label));
        backward_ids(m, fc, dz);
    }

    Rng rng(seed);
    double max_rel = 0;
    int taken = 0;
    int attempts = 0;
    const int max_attempts = sample_count * 10;
    while (taken < sample_count && attempts < max_attempts) {
        ++attempts;
        size_t ti = static_cast<size_t>(rng.bounded(tensors.size()));
        Tensor* tn = tensors[ti];
        long count = tn->w.size();
        long idx = static_cast<long>(rng.bounded(static_cast<uint64_t>(count)));
        double* cell = tn->w.data() + idx;
        double orig = *cell;

        *cell = orig + epsilon;
        auto [lp, pat_p] = loss_of();
        *cell = orig - epsilon;
        auto [lm, pat_m] = loss_of();
        *cell = orig;
        if (pat_p != pat_m) continue;  // kink inside the interval

        double fd = (lp - lm) / (2.0 * epsilon);
        double analytic = *(tn->g.data() + idx);
        double rel = std::abs(fd - analytic) / std::max(std::abs(fd) + std::abs(analytic), 1e-8);
        max_rel = std::max(max_rel, rel);
        ++taken;
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Checkpoint: magic, little-endian header length, JSON header, then raw
// float32 little-endian arrays in header order.

namespace {

constexpr char kMagic[8] = {'S', 'L', 'T', 'F', '0', '0', '0', '1'};

void put_u64_le(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void put_f32_le(std::ostream& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

float get_f32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= uint32_t(b[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

nlohmann::json hyper_to_json(const Hyperparams& h) {
    return {{"model_dim", h.model_dim},   {"head_count", h.head_count},
            {"layer_count", h.layer_count}, {"ffn_dim", h.ffn_dim},
            {"max_len", h.max_len},       {"vocab_size", h.vocab_size},
            {"learning_rate", h.learning_rate}, {"epochs", h.epochs},
            {"batch_size", h.batch_size}, {"pos_weight_cap", h.pos_weight_cap},
            {"threshold", h.threshold}};
}

Hyperparams hyper_from_json(const nlohmann::json& j) {
    Hyperparams h;
    h.model_dim = j.value("model_dim", h.model_dim);
    h.head_count = j.value("head_count", h.head_count);
    h.layer_count = j.value("layer_count", h.layer_count);
    h.ffn_dim = j.value("ffn_dim", h.ffn_dim);
    h.max_len = j.value("max_len", h.max_len);
    h.vocab_size = j.value("vocab_size", h.vocab_size);
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.epochs = j.value("epochs", h.epochs);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.pos_weight_cap = j.value("pos_weight_cap", h.pos_weight_cap);
    h.threshold = j.value("threshold", h.threshold);
    return h;
}

}  // namespace

void save_checkpoint(const TransformerModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);

    nlohmann::json header;
    header["version"] = 1;
    header["hyper"] = hyper_to_json(m.hyper);
    header["seed"] = m.seed;
    header["pos_weight"] = m.pos_weight;
    header["vocab"] = m.vocab.id_to_token;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto* t : m.params())
        tensors.push_back({{"name", t->name}, {"rows", t->w.rows()}, {"cols", t->w.cols()}});
    header["tensors"] = tensors;

    std::string hs = header.dump();
    out.write(kMagic, 8);
    put_u64_le(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto* t : m.params())
        for (long i = 0; i < t->w.rows(); ++i)
            for (long j = 0; j < t->w.cols(); ++j)
                put_f32_le(out, static_cast<float>(t->w(i, j)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

TransformerModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint64_t hlen = get_u64_le(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.at("version").get<int>() != 1)
        throw std::runtime_error("load_checkpoint: unsupported version");

    TransformerModel m;
    m.hyper = hyper_from_json(header.at("hyper"));
    m.seed = header.at("seed").get<uint64_t>();
    m.pos_weight = header.at("pos_weight").get<double>();
    for (const auto& tok : header.at("vocab")) m.vocab.id_to_token.push_back(tok.get<std::string>());
    for (int i = 0; i < m.vocab.size(); ++i) m.vocab.token_to_id[m.vocab.id_to_token[size_t(i)]] = i;

    m.init_parameters(0);  // shapes only; weights overwritten below
    auto tensors = m.params();
    const auto& meta = header.at("tensors");
    if (meta.size() != tensors.size())
        throw std::runtime_error("load_checkpoint: tensor count mismatch");
    for (size_t k = 0; k < tensors.size(); ++k) {
        long rows = meta[k].at("rows").get<long>();
        long cols = meta[k].at("cols").get<long>();
        if (rows != tensors[k]->w.rows() || cols != tensors[k]->w.cols())
            throw std::runtime_error("load_checkpoint: shape mismatch for " +
                                     meta[k].at("name").get<std::string>());
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j)
                tensors[k]->w(i, j) = static_cast<double>(get_f32_le(in));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return m;
}

void write_training_curve(const TransformerModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_training_curve: cannot open " + path);
    out << "epoch,loss,train_accuracy\n";
    char buf[128];
    for (const auto& p : m.curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.8f,%.6f\n", p.epoch, p.loss, p.train_accuracy);
        out << buf;
    }
}

DilutionReport attention_dilution_report(const TransformerModel& m, const Corpus& c,
                                         const SlLexicon& lex) {
    DilutionReport rep;
    double corpus_sl_sum = 0, corpus_all_sum = 0;
    for (const auto& note : c.notes) {
        TokenSeq toks = tokenize(note.text, note.note_id);
        if (toks.empty()) continue;
        PredictResult pr = predict(m, toks, /*want_trace=*/true);
        const auto& scores = pr.trace.token_scores;

        std::vector<bool> is_sl(toks.size(), false);
        for (const auto& match : detect(toks, lex))
            for (size_t i = match.start_token; i <= match.end_token; ++i) is_sl[i] = true;

        NoteDilution nd;
        nd.note_id = note.note_id;
        nd.total_tokens = static_cast<long long>(scores.size());
        double sl_sum = 0, all_sum = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            all_sum += scores[i];
            if (i < is_sl.size() && is_sl[i]) {
                sl_sum += scores[i];
                nd.sl_tokens++;
            }
        }
        nd.all_mean = all_sum / double(scores.size());
        nd.has_sl = nd.sl_tokens > 0;
        if (nd.has_sl) {
            nd.sl_mean = sl_sum / double(nd.sl_tokens);
            nd.ratio = nd.sl_mean / nd.all_mean;
        }
        rep.per_note.push_back(nd);

        corpus_all_sum += all_sum;
        corpus_sl_sum += sl_sum;
        rep.total_tokens += nd.total_tokens;
        rep.sl_tokens += nd.sl_tokens;
    }
    if (rep.total_tokens > 0) rep.all_mean = corpus_all_sum / double(rep.total_tokens);
    rep.has_sl = rep.sl_tokens > 0;
    if (rep.has_sl) {
        rep.sl_mean = corpus_sl_sum / double(rep.sl_tokens);
        rep.ratio = rep.sl_mean / rep.all_mean;
    }
    return rep;
}

}  // namespace slaudit
