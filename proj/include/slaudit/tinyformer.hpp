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

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "slaudit/corpus.hpp"
#include "slaudit/lexicon.hpp"

namespace slaudit {

struct Hyperparams {
    int model_dim = 64;
    int head_count = 2;
    int layer_count = 2;
    int ffn_dim = 256;
    int max_len = 128;       // tokens per segment
    int vocab_size = 5000;   // learned tokens, reserved ids extra
    double learning_rate = 1e-3;
    int epochs = 8;
    int batch_size = 32;
    double pos_weight_cap = 10.0;
    double threshold = 0.5;
};

struct Vocab {
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;
    static constexpr int mask_id = 2;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;

    int id(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }
    int size() const { return static_cast<int>(id_to_token.size()); }

    /// Most frequent `max_size` tokens of the corpus (ties broken
    /// lexicographically) plus the reserved pad/unk/mask entries.
    static Vocab build(const Corpus& train, int max_size);
};

/// A parameter tensor with its gradient and Adam state.
struct Tensor {
    std::string name;
    Eigen::MatrixXd w, g, m, v;

    void reset(const std::string& n, long rows, long cols) {
        name = n;
        w = Eigen::MatrixXd::Zero(rows, cols);
        g = Eigen::MatrixXd::Zero(rows, cols);
        m = Eigen::MatrixXd::Zero(rows, cols);
        v = Eigen::MatrixXd::Zero(rows, cols);
    }
};

struct AttentionLayer {
    Tensor wq, wk, wv, wo;  // model_dim x model_dim, heads as column blocks
    int head_count = 1;
    int d_k = 0;
};

struct TransformerLayer {
    AttentionLayer attn;
    Tensor w1, b1, w2, b2;          // position-wise feed-forward
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct SelfAttentionResult {
    Eigen::MatrixXd output;                  // n x model_dim, heads concatenated
    std::vector<Eigen::MatrixXd> attention;  // per head, n x n, rows sum to 1
};

/// Scaled dot-product self-attention over the rows of X: per head,
/// softmax(Q K^T / sqrt(d_k)) V; head outputs concatenated. The output
/// projection wo is applied by the full layer, not here.
SelfAttentionResult self_attention(const Eigen::MatrixXd& X, const AttentionLayer& layer);

struct CurvePoint {
    int epoch = 0;
    double loss = 0;
    double train_accuracy = 0;
};

struct AttentionTrace {
    // weights[segment][layer][head]: row-stochastic n_s x n_s matrix
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> weights;
    // Aggregate attention received by each input token: mean over layers and
    // heads of the column mean of the attention matrix.
    std::vector<double> token_scores;
};

class TransformerModel {
public:
    Hyperparams hyper;
    uint64_t seed = 0;
    Vocab vocab;
    double pos_weight = 1.0;

    Tensor embedding;  // vocab_size x model_dim
    std::vector<TransformerLayer> layers;
    Tensor final_ln_g, final_ln_b;  // norm before pooling
    Tensor head_w;  // model_dim x 1
    Tensor head_b;  // 1 x 1

    std::vector<CurvePoint> curve;

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;

    void init_parameters(uint64_t init_seed);
    Eigen::MatrixXd positional_encoding(int length) const;
};

struct PredictResult {
    double probability = 0;
    bool at_risk = false;
    AttentionTrace trace;
};

/// Deterministic seeded training: Adam on weighted binary cross-entropy over
/// note segments. Throws on a single-class corpus and on non-finite loss.
TransformerModel train(const Corpus& train_corpus, const Hyperparams& hyper, uint64_t seed);

/// Multi-segment notes are scored as the mean of segment probabilities;
/// at_risk is probability strictly above the threshold. Throws on an empty
/// token sequence.
PredictResult predict(const TransformerModel& m, const TokenSeq& t, bool want_trace = false);

inline bool exceeds_threshold(double probability, double threshold = 0.5) {
    return probability > threshold;
}

/// Compares analytic gradients of the loss on (t, label) against central
/// finite differences on `sample_count` randomly chosen parameters; returns
/// the maximum relative error. label_weight scales the whole loss.
double gradient_check(TransformerModel& m, const TokenSeq& t, double epsilon, int label = 1,
                      double label_weight = 1.0, int sample_count = 60, uint64_t seed = 0);

void save_checkpoint(const TransformerModel& m, const std::string& path);
TransformerModel load_checkpoint(const std::string& path);

void write_training_curve(const TransformerModel& m, const std::string& path);

struct NoteDilution {
    std::string note_id;
    bool has_sl = false;
    long long sl_tokens = 0;
    long long total_tokens = 0;
    double sl_mean = 0;   // valid only when has_sl
    double all_mean = 0;
    double ratio = 0;     // sl_mean / all_mean, valid only when has_sl
};

struct DilutionReport {
    std::vector<NoteDilution> per_note;
    bool has_sl = false;
    long long sl_tokens = 0;
    long long total_tokens = 0;
    double sl_mean = 0;
    double all_mean = 0;
    double ratio = 0;
};

/// Mean per-token attention received by SL tokens vs all tokens, per note
/// and corpus-wide. Notes without SL contribute to the all-token baseline.
DilutionReport attention_dilution_report(const TransformerModel& m, const Corpus& c,
                                         const SlLexicon& lex);

}  // namespace slaudit
