#pragma once

#include <algorithm>

#include "clm/lm/model.hpp"

namespace clm::lm {

// Incremental decoder state: per-layer K/V caches, advanced one token at a
// time. Copyable so beam search can branch.
template <typename Float>
class DecodeState {
public:
    explicit DecodeState(const Model<Float>& model) : model_(&model) {
        const auto& c = model.config;
        kcache_.assign(c.layers, {});
        vcache_.assign(c.layers, {});
        for (int l = 0; l < c.layers; ++l) {
            kcache_[l].reserve(static_cast<std::size_t>(c.context_length) * c.model_dim);
            vcache_[l].reserve(kcache_[l].capacity());
        }
    }

    int position() const { return pos_; }
    const std::vector<Float>& last_logits() const { return logits_; }

    // Runs one forward step; logits afterwards condition on everything fed so far.
    void append(tok::TokenId token) {
        const ModelConfig& c = model_->config;
        if (pos_ >= c.context_length) throw ModelError("decode past context_length");
        if (token >= c.vocab_size) throw ModelError("token id out of range");
        const int D = c.model_dim, H = c.heads, hd = c.head_dim(), F = c.resolved_ff(),
                  V = c.vocab_size;
        const Float inv_sqrt_hd = Float(1) / std::sqrt(Float(hd));
        auto W = [&](std::string_view name) {
            return model_->w.data() + model_->info(name).offset;
        };

        std::vector<Float> x(W("embed") + static_cast<std::size_t>(token) * D,
                             W("embed") + static_cast<std::size_t>(token + 1) * D);
        std::vector<Float> normed(D), q(D), k(D), v(D), ctx(D), proj(D), rinv(1);
        std::vector<Float> gate(F), up(F), act(F);

        for (int l = 0; l < c.layers; ++l) {
            std::string p = "l" + std::to_string(l) + ".";
            detail::rmsnorm_forward(x.data(), W(p + "att_norm"), normed.data(), rinv.data(), 1, D);
            serial::matmul_nt(q.data(), normed.data(), W(p + "wq"), 1, D, D);
            serial::matmul_nt(k.data(), normed.data(), W(p + "wk"), 1, D, D);
            serial::matmul_nt(v.data(), normed.data(), W(p + "wv"), 1, D, D);
            detail::rope_apply(q.data(), 1, H, hd, c.rope_base, pos_, +1);
            detail::rope_apply(k.data(), 1, H, hd, c.rope_base, pos_, +1);
            kcache_[l].insert(kcache_[l].end(), k.begin(), k.end());
            vcache_[l].insert(vcache_[l].end(), v.begin(), v.end());

            const int S = pos_ + 1;
            std::vector<Float> row(S);
            for (int h = 0; h < H; ++h) {
                for (int s = 0; s < S; ++s)
                    row[s] = dot_lanes(q.data() + h * hd,
                                       kcache_[l].data() + static_cast<std::size_t>(s) * D + h * hd,
                                       hd) *
                             inv_sqrt_hd;
                detail::softmax_row(row.data(), S);
                Float* ch = ctx.data() + h * hd;
                for (int j = 0; j < hd; ++j) ch[j] = Float(0);
                for (int s = 0; s < S; ++s) {
                    const Float* vs = vcache_[l].data() + static_cast<std::size_t>(s) * D + h * hd;
                    for (int j = 0; j < hd; ++j) ch[j] += row[s] * vs[j];
                }
            }
            serial::matmul_nt(proj.data(), ctx.data(), W(p + "wo"), 1, D, D);
            for (int i = 0; i < D; ++i) x[i] += proj[i];

            detail::rmsnorm_forward(x.data(), W(p + "ffn_norm"), normed.data(), rinv.data(), 1, D);
            serial::matmul_nt(gate.data(), normed.data(), W(p + "w_gate"), 1, D, F);
            serial::matmul_nt(up.data(), normed.data(), W(p + "w_up"), 1, D, F);
            for (int i = 0; i < F; ++i) {
                Float z = gate[i];
                act[i] = z / (Float(1) + std::exp(-z)) * up[i];
            }
            serial::matmul_nt(proj.data(), act.data(), W(p + "w_down"), 1, F, D);
            for (int i = 0; i < D; ++i) x[i] += proj[i];
        }

        detail::rmsnorm_forward(x.data(), W("final_norm"), normed.data(), rinv.data(), 1, D);
        logits_.resize(V);
        serial::matmul_nt(logits_.data(), normed.data(), W("head"), 1, D, V);
        ++pos_;
    }

    // log-softmax of the last logits
    std::vector<double> last_logprobs() const {
        const Float* row = logits_.data();
        int V = static_cast<int>(logits_.size());
        Float mx = row[0];
        for (int i = 1; i < V; ++i) mx = std::max(mx, row[i]);
        double sum = 0;
        for (int i = 0; i < V; ++i) sum += std::exp(static_cast<double>(row[i] - mx));
        double lse = static_cast<double>(mx) + std::log(sum);
        std::vector<double> lp(V);
        for (int i = 0; i < V; ++i) lp[i] = static_cast<double>(row[i]) - lse;
        return lp;
    }

private:
    const Model<Float>* model_;
    int pos_ = 0;
    std::vector<std::vector<Float>> kcache_, vcache_;  // per layer [pos, D]
    std::vector<Float> logits_;
};

struct DecodeResult {
    std::vector<tok::TokenId> tokens;  // prompt included
    bool truncated = false;            // max_len hit before stop_token
    double score = 0;                  // length-normalized log-likelihood (beam search)
};

// Appends the argmax token (ties: lowest id) until stop_token or max_len
// total tokens.
template <typename Float>
DecodeResult greedy_decode(const Model<Float>& model, std::span<const tok::TokenId> prompt,
                           tok::TokenId stop_token, int max_len) {
    if (prompt.empty()) throw ModelError("empty prompt");
    DecodeResult res;
    res.tokens.assign(prompt.begin(), prompt.end());
    if (static_cast<int>(prompt.size()) >= max_len) {
        res.tokens.resize(std::min<std::size_t>(res.tokens.size(), max_len));
        res.truncated = true;
        return res;
    }
    DecodeState<Float> st(model);
    for (auto t : prompt) st.append(t);
    while (static_cast<int>(res.tokens.size()) < max_len) {
        const auto& lg = st.last_logits();
        int best = 0;
        for (int v = 1; v < static_cast<int>(lg.size()); ++v)
            if (lg[v] > lg[best]) best = v;
        res.tokens.push_back(static_cast<tok::TokenId>(best));
        if (best == stop_token) return res;
        st.append(static_cast<tok::TokenId>(best));
    }
    res.truncated = true;
    return res;
}

// Length-normalized beam search with nucleus-restricted expansion: candidate
// tokens are the smallest probability-descending set whose cumulative
// probability reaches top_p (ties broken by lowest id).
template <typename Float>
std::vector<DecodeResult> beam_search_decode(const Model<Float>& model,
                                             std::span<const tok::TokenId> prompt, int beams,
                                             double top_p, tok::TokenId stop_token, int max_len) {
    if (beams < 1) throw ModelError("beams must be >= 1");
    if (!(top_p > 0 && top_p <= 1)) throw ModelError("top_p must be in (0,1]");
    if (prompt.empty()) throw ModelError("empty prompt");

    struct Beam {
        DecodeState<Float> state;
        std::vector<tok::TokenId> tokens;
        double loglik = 0;  // sum over generated tokens
        bool truncated = false;
    };

    auto normalized = [&](const Beam& b) {
        std::size_t gen = b.tokens.size() - prompt.size();
        return gen == 0 ? 0.0 : b.loglik / static_cast<double>(gen);
    };

    Beam root{DecodeState<Float>(model), {prompt.begin(), prompt.end()}, 0.0, false};
    if (static_cast<int>(prompt.size()) >= max_len) {
        DecodeResult r;
        r.tokens = root.tokens;
        r.tokens.resize(std::min<std::size_t>(r.tokens.size(), max_len));
        r.truncated = true;
        return {r};
    }
    for (auto t : prompt) root.state.append(t);

    std::vector<Beam> live;
    live.push_back(std::move(root));
    std::vector<Beam> finished;

    while (!live.empty()) {
        struct Cand {
            std::size_t beam;
            int token;
            double loglik;
        };
        std::vector<Cand> cands;
        for (std::size_t bi = 0; bi < live.size(); ++bi) {
            auto lp = live[bi].state.last_logprobs();
            std::vector<int> order(lp.size());
            for (std::size_t i = 0; i < lp.size(); ++i) order[i] = static_cast<int>(i);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return lp[a] != lp[b] ? lp[a] > lp[b] : a < b;
            });
            double cum = 0;
            for (int v : order) {
                cands.push_back({bi, v, live[bi].loglik + lp[v]});
                cum += std::exp(lp[v]);
                if (cum >= top_p) break;
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.loglik != b.loglik ? a.loglik > b.loglik
                                        : std::tie(a.beam, a.token) < std::tie(b.beam, b.token);
        });
        if (cands.size() > static_cast<std::size_t>(beams)) cands.resize(beams);

        std::vector<Beam> next;
        for (const auto& cd : cands) {
            Beam nb = live[cd.beam];  // copies the KV cache
            nb.tokens.push_back(static_cast<tok::TokenId>(cd.token));
            nb.loglik = cd.loglik;
            if (cd.token == stop_token) {
                finished.push_back(std::move(nb));
            } else if (static_cast<int>(nb.tokens.size()) >= max_len) {
                nb.truncated = true;
                finished.push_back(std::move(nb));
            } else {
                nb.state.append(static_cast<tok::TokenId>(cd.token));
                next.push_back(std::move(nb));
            }
        }
        live = std::move(next);
        if (finished.size() >= static_cast<std::size_t>(beams)) break;
    }
    for (auto& b : live) {
        b.truncated = true;
        finished.push_back(std::move(b));
    }

    std::sort(finished.begin(), finished.end(),
              [&](const Beam& a, const Beam& b) { return normalized(a) > normalized(b); });
    if (finished.size() > static_cast<std::size_t>(beams))
        finished.erase(finished.begin() + beams, finished.end());

    std::vector<DecodeResult> out;
    for (auto& b : finished) {
        DecodeResult r;
        r.tokens = std::move(b.tokens);
        r.truncated = b.truncated;
        r.score = normalized(b);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace clm::lm
