// Test-only reference implementations. These stay deliberately independent
// of the library code paths they are used to check: plain loops, no shared
// helpers beyond the public data types.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slaudit/carenet.hpp"
#include "slaudit/corpus.hpp"
#include "slaudit/lexicon.hpp"
#include "slaudit/tinyformer.hpp"

namespace oracle {

// Dense evaluation of per-head softmax(Q K^T / sqrt(d_k)) V with explicit
// loops, heads concatenated. Mirrors the published formula, not the library.
struct DenseAttentionResult {
    Eigen::MatrixXd output;
    std::vector<Eigen::MatrixXd> attention;
};

inline DenseAttentionResult dense_self_attention(const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& Wq,
                                                 const Eigen::MatrixXd& Wk,
                                                 const Eigen::MatrixXd& Wv, int head_count) {
    const long n = X.rows();
    const long d = X.cols();
    const long dk = d / head_count;

    auto matmul = [](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(A.rows(), B.cols());
        for (long i = 0; i < A.rows(); ++i)
            for (long k = 0; k < A.cols(); ++k)
                for (long j = 0; j < B.cols(); ++j) C(i, j) += A(i, k) * B(k, j);
        return C;
    };

    Eigen::MatrixXd Q = matmul(X, Wq), K = matmul(X, Wk), V = matmul(X, Wv);
    DenseAttentionResult res;
    res.output = Eigen::MatrixXd::Zero(n, d);
    for (int h = 0; h < head_count; ++h) {
        Eigen::MatrixXd S(n, n);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < n; ++j) {
                double dot = 0;
                for (long k = 0; k < dk; ++k) dot += Q(i, h * dk + k) * K(j, h * dk + k);
                S(i, j) = dot / std::sqrt(double(dk));
            }
        Eigen::MatrixXd A(n, n);
        for (long i = 0; i < n; ++i) {
            double mx = S(i, 0);
            for (long j = 1; j < n; ++j) mx = std::max(mx, S(i, j));
            double sum = 0;
            for (long j = 0; j < n; ++j) {
                A(i, j) = std::exp(S(i, j) - mx);
                sum += A(i, j);
            }
            for (long j = 0; j < n; ++j) A(i, j) /= sum;
        }
        for (long i = 0; i < n; ++i)
            for (long k = 0; k < dk; ++k) {
                double acc = 0;
                for (long j = 0; j < n; ++j) acc += A(i, j) * V(j, h * dk + k);
                res.output(i, h * dk + k) = acc;
            }
        res.attention.push_back(A);
    }
    return res;
}

// All-entries, all-positions brute-force matcher with the same selection
// rule as the spec: scan left to right, longest candidate wins.
inline std::vector<slaudit::SlMatch> brute_force_detect(const slaudit::TokenSeq& t,
                                                        const slaudit::SlLexicon& lex) {
    struct Cand {
        size_t start, len;
        std::string entry;
    };
    std::vector<Cand> cands;
    for (const auto& entry : lex.entries()) {
        std::vector<std::string> words;
        {
            std::string cur;
            for (char ch : entry) {
                if (ch == ' ') {
                    words.push_back(cur);
                    cur.clear();
                } else {
                    cur.push_back(ch);
                }
            }
            words.push_back(cur);
        }
        for (size_t pos = 0; pos + words.size() <= t.tokens.size(); ++pos) {
            bool ok = true;
            for (size_t k = 0; k < words.size(); ++k)
                if (t.tokens[pos + k] != words[k]) {
                    ok = false;
                    break;
                }
            if (ok) cands.push_back({pos, words.size(), entry});
        }
    }
    std::vector<slaudit::SlMatch> out;
    size_t next = 0;
    while (next < t.tokens.size()) {
        const Cand* best = nullptr;
        for (const auto& c : cands) {
            if (c.start != next) continue;
            if (!best || c.len > best->len) best = &c;
        }
        if (best) {
            out.push_back({best->entry, best->start, best->start + best->len - 1});
            next += best->len;
        } else {
            ++next;
        }
    }
    return out;
}

// Quadratic strength oracle: for every clinician pair, count the distinct
// patients both served.
inline std::map<std::string, long long> brute_force_strengths(const slaudit::Corpus& c) {
    std::map<std::string, std::set<std::string>> patients_of;
    std::set<std::string> all;
    for (const auto& n : c.notes)
        for (const auto& cid : n.clinician_ids) {
            patients_of[cid].insert(n.patient_id);
            all.insert(cid);
        }
    std::map<std::string, long long> strength;
    for (const auto& a : all) strength[a] = 0;
    for (auto ia = all.begin(); ia != all.end(); ++ia) {
        auto ib = ia;
        for (++ib; ib != all.end(); ++ib) {
            long long shared = 0;
            for (const auto& p : patients_of[*ia])
                if (patients_of[*ib].count(p)) ++shared;
            strength[*ia] += shared;
            strength[*ib] += shared;
        }
    }
    return strength;
}

// Bag-of-words logistic regression, plain gradient descent. Used as the
// separability baseline for training tests.
struct BowLogistic {
    std::map<std::string, int> index;
    std::vector<double> w;
    double b = 0;

    static BowLogistic fit(const slaudit::Corpus& c, int epochs = 200, double lr = 0.5) {
        BowLogistic m;
        std::vector<std::pair<std::vector<int>, int>> rows;
        for (const auto& n : c.notes) {
            std::vector<int> feats;
            for (const auto& tok : slaudit::tokenize(n.text).tokens) {
                auto [it, fresh] = m.index.try_emplace(tok, int(m.index.size()));
                feats.push_back(it->second);
            }
            rows.push_back({feats, n.label});
        }
        m.w.assign(m.index.size(), 0.0);
        for (int e = 0; e < epochs; ++e) {
            for (const auto& [feats, label] : rows) {
                double z = m.b;
                for (int f : feats) z += m.w[size_t(f)];
                double p = 1.0 / (1.0 + std::exp(-z));
                double g = p - label;
                double step = lr / double(rows.size());
                m.b -= step * g;
                for (int f : feats) m.w[size_t(f)] -= step * g;
            }
        }
        return m;
    }

    double prob(const std::string& text) const {
        double z = b;
        for (const auto& tok : slaudit::tokenize(text).tokens) {
            auto it = index.find(tok);
            if (it != index.end()) z += w[size_t(it->second)];
        }
        return 1.0 / (1.0 + std::exp(-z));
    }

    double accuracy(const slaudit::Corpus& c) const {
        long long correct = 0;
        for (const auto& n : c.notes)
            if ((prob(n.text) > 0.5 ? 1 : 0) == n.label) ++correct;
        return double(correct) / double(c.notes.size());
    }
};

}  // namespace oracle
