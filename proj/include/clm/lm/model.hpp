#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clm/lm/kernels.hpp"
#include "clm/rng.hpp"
#include "clm/tok/sentence.hpp"

namespace clm::lm {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int vocab_size = tok::kVocabSize;
    int context_length = 1024;
    int layers = 6;
    int model_dim = 256;
    int heads = 8;
    int ff_hidden = 0;  // 0 resolves to 2/3 * 4 * model_dim, rounded up to a multiple of 8
    double rope_base = 10000.0;
    double dropout = 0.0;  // residual dropout + input-token substitution noise
    std::uint64_t seed = 0;

    int resolved_ff() const {
        if (ff_hidden > 0) return ff_hidden;
        int f = (8 * model_dim + 2) / 3;
        return (f + 7) / 8 * 8;
    }
    int head_dim() const { return model_dim / heads; }

    void validate() const {
        if (vocab_size < 2) throw ModelError("vocab_size too small");
        if (layers < 1 || model_dim < 1 || heads < 1) throw ModelError("bad architecture sizes");
        if (model_dim % heads != 0) throw ModelError("model_dim must be divisible by heads");
        if (head_dim() % 2 != 0) throw ModelError("head_dim must be even for rotary embedding");
        if (context_length < 2) throw ModelError("context_length too small");
        if (dropout < 0 || dropout >= 1) throw ModelError("dropout must be in [0,1)");
    }

    bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
    std::string name;
    std::vector<int> dims;
    std::size_t offset = 0;
    std::size_t size = 0;
};

template <typename Float>
struct Model {
    ModelConfig config;
    std::vector<TensorInfo> tensors;
    std::vector<Float> w;  // all parameters, concatenated in tensor order

    struct TrainState {
        std::vector<Float> m, v;  // AdamW moments, same layout as w
        long step = 0;
    };
    std::optional<TrainState> train_state;

    Float* tensor(std::string_view name) {
        for (auto& t : tensors)
            if (t.name == name) return w.data() + t.offset;
        throw ModelError("no tensor named " + std::string(name));
    }
    const TensorInfo& info(std::string_view name) const {
        for (auto& t : tensors)
            if (t.name == name) return t;
        throw ModelError("no tensor named " + std::string(name));
    }
};

namespace detail {

inline std::vector<TensorInfo> build_directory(const ModelConfig& c) {
    std::vector<TensorInfo> dir;
    std::size_t off = 0;
    auto add = [&](std::string name, std::vector<int> dims) {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        dir.push_back({std::move(name), std::move(dims), off, n});
        off += n;
    };
    int D = c.model_dim, F = c.resolved_ff(), V = c.vocab_size;
    add("embed", {V, D});
    for (int l = 0; l < c.layers; ++l) {
        std::string p = "l" + std::to_string(l) + ".";
        add(p + "att_norm", {D});
        add(p + "wq", {D, D});
        add(p + "wk", {D, D});
        add(p + "wv", {D, D});
        add(p + "wo", {D, D});
        add(p + "ffn_norm", {D});
        add(p + "w_gate", {F, D});
        add(p + "w_up", {F, D});
        add(p + "w_down", {D, F});
    }
    add("final_norm", {D});
    add("head", {V, D});
    return dir;
}

constexpr double kNormEps = 1e-5;

}  // namespace detail

template <typename Float>
Model<Float> init_model(const ModelConfig& config) {
    config.validate();
    Model<Float> m;
    m.config = config;
    m.tensors = detail::build_directory(config);
    std::size_t total = m.tensors.back().offset + m.tensors.back().size;
    m.w.assign(total, Float(0));

    double residual_scale = 1.0 / std::sqrt(2.0 * config.layers);
    for (const auto& t : m.tensors) {
        auto rng = make_rng(config.seed, "init/" + t.name);
        Float* p = m.w.data() + t.offset;
        bool is_norm = t.name.find("norm") != std::string::npos;
        if (is_norm) {
            for (std::size_t i = 0; i < t.size; ++i) p[i] = Float(1);
            continue;
        }
        double sd = 0.02;
        if (t.name.find(".wo") != std::string::npos || t.name.find(".w_down") != std::string::npos)
            sd *= residual_scale;
        std::normal_distribution<double> g(0.0, sd);
        for (std::size_t i = 0; i < t.size; ++i) p[i] = static_cast<Float>(g(rng));
    }
    return m;
}

// Everything the backward pass needs from the forward pass.
template <typename Float>
struct Activations {
    int T = 0;
    std::vector<Float> x_embed;           // [T,D] embedding output (input to layer 0)
    std::vector<tok::TokenId> eff_tokens; // input ids after token noise, empty when p=0
    struct Layer {
        std::vector<Float> x_in;       // [T,D] residual stream entering the layer
        std::vector<Float> att_rinv;   // [T] rmsnorm 1/rms
        std::vector<Float> att_normed; // [T,D]
        std::vector<Float> q, k, v;    // [T,D], q/k post-rope
        std::vector<Float> probs;      // [H,T,T] causal softmax rows
        std::vector<Float> ctx;        // [T,D] heads concatenated
        std::vector<Float> att_drop;   // [T,D] dropout scale, empty when p=0
        std::vector<Float> x_mid;      // [T,D] residual stream after attention
        std::vector<Float> ffn_rinv;   // [T]
        std::vector<Float> ffn_normed; // [T,D]
        std::vector<Float> gate, up;   // [T,F] pre-activation gate, up projection
        std::vector<Float> act;        // [T,F] silu(gate) * up
        std::vector<Float> ffn_drop;   // [T,D]
    };
    std::vector<Layer> layers;
    std::vector<Float> x_final;      // [T,D] residual stream after last layer
    std::vector<Float> final_rinv;   // [T]
    std::vector<Float> final_normed; // [T,D]
};

namespace detail {

template <typename Float>
void rmsnorm_forward(const Float* x, const Float* w, Float* y, Float* rinv, int T, int D) {
    for (int t = 0; t < T; ++t) {
        const Float* xt = x + static_cast<std::size_t>(t) * D;
        Float* yt = y + static_cast<std::size_t>(t) * D;
        Float ss = 0;
        for (int i = 0; i < D; ++i) ss += xt[i] * xt[i];
        Float r = Float(1) / std::sqrt(ss / D + Float(kNormEps));
        rinv[t] = r;
        for (int i = 0; i < D; ++i) yt[i] = w[i] * xt[i] * r;
    }
}

// accumulates into dx and dw
template <typename Float>
void rmsnorm_backward(const Float* x, const Float* w, const Float* rinv, const Float* dy,
                      Float* dx, Float* dw, int T, int D) {
    for (int t = 0; t < T; ++t) {
        const Float* xt = x + static_cast<std::size_t>(t) * D;
        const Float* dyt = dy + static_cast<std::size_t>(t) * D;
        Float* dxt = dx + static_cast<std::size_t>(t) * D;
        Float r = rinv[t];
        Float dot = 0;
        for (int i = 0; i < D; ++i) dot += dyt[i] * w[i] * xt[i];
        Float coef = r * r * r * dot / D;
        for (int i = 0; i < D; ++i) {
            dxt[i] += r * w[i] * dyt[i] - coef * xt[i];
            dw[i] += dyt[i] * xt[i] * r;
        }
    }
}

template <typename Float>
void rope_apply(Float* qk, int T, int H, int hd, double base, int pos0, int dir) {
    int D = H * hd;
    for (int t = 0; t < T; ++t)
        for (int h = 0; h < H; ++h) {
            Float* p = qk + static_cast<std::size_t>(t) * D + h * hd;
            for (int i = 0; i < hd / 2; ++i) {
                double theta = (pos0 + t) * std::pow(base, -2.0 * i / hd) * dir;
                Float c = static_cast<Float>(std::cos(theta));
                Float s = static_cast<Float>(std::sin(theta));
                Float a = p[2 * i], b = p[2 * i + 1];
                p[2 * i] = a * c - b * s;
                p[2 * i + 1] = a * s + b * c;
            }
        }
}

template <typename Float>
void softmax_row(Float* p, int n) {
    Float mx = p[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, p[i]);
    Float sum = 0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(p[i] - mx);
        sum += p[i];
    }
    for (int i = 0; i < n; ++i) p[i] /= sum;
}

}  // namespace detail

// Full-sequence forward pass; fills logits [T, V]. When `acts` is non-null the
// intermediates needed by backward() are cached. `dropout_rng` enables
// dropout (training only); null means inference.
template <typename Float>
void forward(const Model<Float>& model, std::span<const tok::TokenId> tokens,
             std::vector<Float>& logits, Activations<Float>* acts = nullptr,
             std::mt19937_64* dropout_rng = nullptr) {
    const ModelConfig& c = model.config;
    const int T = static_cast<int>(tokens.size());
    if (T < 1) throw ModelError("empty token sequence");
    if (T > c.context_length) throw ModelError("sequence exceeds context_length");
    const int D = c.model_dim, H = c.heads, hd = c.head_dim(), F = c.resolved_ff(),
              V = c.vocab_size;
    const Float inv_sqrt_hd = Float(1) / std::sqrt(Float(hd));
    const std::size_t TD = static_cast<std::size_t>(T) * D;

    auto W = [&](std::string_view name) { return model.w.data() + model.info(name).offset; };

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<tok::TokenId> noisy;
    if (dropout_rng && c.dropout > 0) {
        // input-token noise: each context token is replaced by a random byte
        // token with probability p, so the network learns predictions that
        // survive a single unreliable context token (targets are unchanged)
        noisy.assign(tokens.begin(), tokens.end());
        std::uniform_int_distribution<tok::TokenId> byte_id(0, 255);
        for (int t = 0; t < T; ++t)
            if (unif(*dropout_rng) < c.dropout) noisy[t] = byte_id(*dropout_rng);
        tokens = noisy;
        if (acts) acts->eff_tokens = noisy;
    }

    std::vector<Float> x(TD);
    const Float* embed = W("embed");
    for (int t = 0; t < T; ++t) {
        if (tokens[t] >= V) throw ModelError("token id out of range");
        std::copy_n(embed + static_cast<std::size_t>(tokens[t]) * D, D, x.data() + t * D);
    }
    if (acts) {
        acts->T = T;
        acts->x_embed = x;
        acts->layers.assign(c.layers, {});
    }

    std::vector<Float> normed(TD), q(TD), k(TD), v(TD), ctx(TD), proj(TD), rinv(T);
    std::vector<Float> gate(static_cast<std::size_t>(T) * F), up(gate.size()), act(gate.size());
    std::vector<Float> probs(static_cast<std::size_t>(H) * T * T);

    for (int l = 0; l < c.layers; ++l) {
        std::string p = "l" + std::to_string(l) + ".";
        auto* L = acts ? &acts->layers[l] : nullptr;
        if (L) L->x_in = x;

        detail::rmsnorm_forward(x.data(), W(p + "att_norm"), normed.data(), rinv.data(), T, D);
        if (L) {
            L->att_rinv = rinv;
            L->att_normed = normed;
        }
        matmul_nt(q.data(), normed.data(), W(p + "wq"), T, D, D);
        matmul_nt(k.data(), normed.data(), W(p + "wk"), T, D, D);
        matmul_nt(v.data(), normed.data(), W(p + "wv"), T, D, D);
        detail::rope_apply(q.data(), T, H, hd, c.rope_base, 0, +1);
        detail::rope_apply(k.data(), T, H, hd, c.rope_base, 0, +1);
        if (L) {
            L->q = q;
            L->k = k;
            L->v = v;
        }

        std::fill(probs.begin(), probs.end(), Float(0));
        for (int h = 0; h < H; ++h) {
            Float* ph = probs.data() + static_cast<std::size_t>(h) * T * T;
            for (int t = 0; t < T; ++t) {
                Float* row = ph + static_cast<std::size_t>(t) * T;
                for (int s = 0; s <= t; ++s)
                    row[s] = dot_lanes(q.data() + static_cast<std::size_t>(t) * D + h * hd,
                                       k.data() + static_cast<std::size_t>(s) * D + h * hd, hd) *
                             inv_sqrt_hd;
                detail::softmax_row(row, t + 1);
                Float* ct = ctx.data() + static_cast<std::size_t>(t) * D + h * hd;
                for (int j = 0; j < hd; ++j) ct[j] = Float(0);
                for (int s = 0; s <= t; ++s) {
                    Float w_ts = row[s];
                    const Float* vs = v.data() + static_cast<std::size_t>(s) * D + h * hd;
                    for (int j = 0; j < hd; ++j) ct[j] += w_ts * vs[j];
                }
            }
        }
        if (L) {
            L->probs = probs;
            L->ctx = ctx;
        }

        matmul_nt(proj.data(), ctx.data(), W(p + "wo"), T, D, D);
        if (dropout_rng && c.dropout > 0) {
            Float keep = Float(1) / Float(1 - c.dropout);
            if (L) L->att_drop.resize(TD);
            for (std::size_t i = 0; i < TD; ++i) {
                Float g = unif(*dropout_rng) < c.dropout ? Float(0) : keep;
                if (L) L->att_drop[i] = g;
                proj[i] *= g;
            }
        }
        for (std::size_t i = 0; i < TD; ++i) x[i] += proj[i];
        if (L) L->x_mid = x;

        detail::rmsnorm_forward(x.data(), W(p + "ffn_norm"), normed.data(), rinv.data(), T, D);
        if (L) {
            L->ffn_rinv = rinv;
            L->ffn_normed = normed;
        }
        matmul_nt(gate.data(), normed.data(), W(p + "w_gate"), T, D, F);
        matmul_nt(up.data(), normed.data(), W(p + "w_up"), T, D, F);
        for (std::size_t i = 0; i < gate.size(); ++i) {
            Float z = gate[i];
            Float sig = Float(1) / (Float(1) + std::exp(-z));
            act[i] = z * sig * up[i];
        }
        if (L) {
            L->gate = gate;
            L->up = up;
            L->act = act;
        }
        matmul_nt(proj.data(), act.data(), W(p + "w_down"), T, F, D);
        if (dropout_rng && c.dropout > 0) {
            Float keep = Float(1) / Float(1 - c.dropout);
            if (L) L->ffn_drop.resize(TD);
            for (std::size_t i = 0; i < TD; ++i) {
                Float g = unif(*dropout_rng) < c.dropout ? Float(0) : keep;
                if (L) L->ffn_drop[i] = g;
                proj[i] *= g;
            }
        }
        for (std::size_t i = 0; i < TD; ++i) x[i] += proj[i];
    }

    if (acts) acts->x_final = x;
    detail::rmsnorm_forward(x.data(), W("final_norm"), normed.data(), rinv.data(), T, D);
    if (acts) {
        acts->final_rinv = rinv;
        acts->final_normed = normed;
    }
    logits.resize(static_cast<std::size_t>(T) * V);
    matmul_nt(logits.data(), normed.data(), W("head"), T, D, V);
}

// Backward pass for d(scalar)/d(logits) already in dlogits [T,V]; accumulates
// parameter gradients into `grad` (same layout as model.w).
template <typename Float>
void backward(const Model<Float>& model, std::span<const tok::TokenId> tokens,
              const Activations<Float>& acts, const std::vector<Float>& dlogits,
              std::vector<Float>& grad) {
    const ModelConfig& c = model.config;
    const int T = acts.T, D = c.model_dim, H = c.heads, hd = c.head_dim(), F = c.resolved_ff(),
              V = c.vocab_size;
    const Float inv_sqrt_hd = Float(1) / std::sqrt(Float(hd));
    const std::size_t TD = static_cast<std::size_t>(T) * D;
    grad.resize(model.w.size(), Float(0));

    auto W = [&](const std::string& name) { return model.w.data() + model.info(name).offset; };
    auto G = [&](const std::string& name) { return grad.data() + model.info(name).offset; };

    std::vector<Float> dx(TD, Float(0)), dnormed(TD), dbranch(TD), dctx(TD), dq(TD), dk(TD),
        dv(TD);
    std::vector<Float> dgate(static_cast<std::size_t>(T) * F), dup(dgate.size()),
        dact(dgate.size());

    // head + final norm
    matmul_nn(dnormed.data(), dlogits.data(), W("head"), T, V, D);
    matmul_tn(G("head"), dlogits.data(), acts.final_normed.data(), V, T, D, true);
    detail::rmsnorm_backward(acts.x_final.data(), W("final_norm"), acts.final_rinv.data(),
                             dnormed.data(), dx.data(), G("final_norm"), T, D);

    for (int l = c.layers - 1; l >= 0; --l) {
        const auto& L = acts.layers[l];
        std::string p = "l" + std::to_string(l) + ".";

        // FFN branch: dx currently holds d(loss)/d(x after ffn residual)
        std::copy(dx.begin(), dx.end(), dbranch.begin());
        if (!L.ffn_drop.empty())
            for (std::size_t i = 0; i < TD; ++i) dbranch[i] *= L.ffn_drop[i];
        matmul_nn(dact.data(), dbranch.data(), W(p + "w_down"), T, D, F);
        matmul_tn(G(p + "w_down"), dbranch.data(), L.act.data(), D, T, F, true);
        for (std::size_t i = 0; i < dact.size(); ++i) {
            Float z = L.gate[i];
            Float sig = Float(1) / (Float(1) + std::exp(-z));
            Float silu = z * sig;
            dup[i] = dact[i] * silu;
            dgate[i] = dact[i] * L.up[i] * sig * (Float(1) + z * (Float(1) - sig));
        }
        std::fill(dnormed.begin(), dnormed.end(), Float(0));
        matmul_nn(dnormed.data(), dgate.data(), W(p + "w_gate"), T, F, D);
        matmul_nn(dbranch.data(), dup.data(), W(p + "w_up"), T, F, D);
        for (std::size_t i = 0; i < TD; ++i) dnormed[i] += dbranch[i];
        matmul_tn(G(p + "w_gate"), dgate.data(), L.ffn_normed.data(), F, T, D, true);
        matmul_tn(G(p + "w_up"), dup.data(), L.ffn_normed.data(), F, T, D, true);
        detail::rmsnorm_backward(L.x_mid.data(), W(p + "ffn_norm"), L.ffn_rinv.data(),
                                 dnormed.data(), dx.data(), G(p + "ffn_norm"), T, D);

        // attention branch: dx now holds d/d(x after attention residual)
        std::copy(dx.begin(), dx.end(), dbranch.begin());
        if (!L.att_drop.empty())
            for (std::size_t i = 0; i < TD; ++i) dbranch[i] *= L.att_drop[i];
        matmul_nn(dctx.data(), dbranch.data(), W(p + "wo"), T, D, D);
        matmul_tn(G(p + "wo"), dbranch.data(), L.ctx.data(), D, T, D, true);

        std::fill(dq.begin(), dq.end(), Float(0));
        std::fill(dk.begin(), dk.end(), Float(0));
        std::fill(dv.begin(), dv.end(), Float(0));
        std::vector<Float> dprow(T);
        for (int h = 0; h < H; ++h) {
            const Float* ph = L.probs.data() + static_cast<std::size_t>(h) * T * T;
            for (int t = 0; t < T; ++t) {
                const Float* row = ph + static_cast<std::size_t>(t) * T;
                const Float* dct = dctx.data() + static_cast<std::size_t>(t) * D + h * hd;
                // dprobs, then softmax jacobian
                Float dot = 0;
                for (int s = 0; s <= t; ++s) {
                    dprow[s] = dot_lanes(dct, L.v.data() + static_cast<std::size_t>(s) * D + h * hd,
                                         hd);
                    dot += dprow[s] * row[s];
                }
                for (int s = 0; s <= t; ++s) {
                    Float dscore = row[s] * (dprow[s] - dot);
                    const Float* ks = L.k.data() + static_cast<std::size_t>(s) * D + h * hd;
                    const Float* qt = L.q.data() + static_cast<std::size_t>(t) * D + h * hd;
                    Float* dqt = dq.data() + static_cast<std::size_t>(t) * D + h * hd;
                    Float* dks = dk.data() + static_cast<std::size_t>(s) * D + h * hd;
                    Float* dvs = dv.data() + static_cast<std::size_t>(s) * D + h * hd;
                    Float a = dscore * inv_sqrt_hd;
                    Float w_ts = row[s];
                    for (int j = 0; j < hd; ++j) {
                        dqt[j] += a * ks[j];
                        dks[j] += a * qt[j];
                        dvs[j] += w_ts * dct[j];
                    }
                }
            }
        }
        detail::rope_apply(dq.data(), T, H, hd, c.rope_base, 0, -1);
        detail::rope_apply(dk.data(), T, H, hd, c.rope_base, 0, -1);

        std::fill(dnormed.begin(), dnormed.end(), Float(0));
        matmul_nn(dnormed.data(), dq.data(), W(p + "wq"), T, D, D);
        matmul_nn(dbranch.data(), dk.data(), W(p + "wk"), T, D, D);
        for (std::size_t i = 0; i < TD; ++i) dnormed[i] += dbranch[i];
        matmul_nn(dbranch.data(), dv.data(), W(p + "wv"), T, D, D);
        for (std::size_t i = 0; i < TD; ++i) dnormed[i] += dbranch[i];
        matmul_tn(G(p + "wq"), dq.data(), L.att_normed.data(), D, T, D, true);
        matmul_tn(G(p + "wk"), dk.data(), L.att_normed.data(), D, T, D, true);
        matmul_tn(G(p + "wv"), dv.data(), L.att_normed.data(), D, T, D, true);
        detail::rmsnorm_backward(L.x_in.data(), W(p + "att_norm"), L.att_rinv.data(),
                                 dnormed.data(), dx.data(), G(p + "att_norm"), T, D);
    }

    Float* ge = G("embed");
    const tok::TokenId* in = acts.eff_tokens.empty() ? tokens.data() : acts.eff_tokens.data();
    for (int t = 0; t < T; ++t) {
        Float* row = ge + static_cast<std::size_t>(in[t]) * D;
        const Float* dxt = dx.data() + static_cast<std::size_t>(t) * D;
        for (int i = 0; i < D; ++i) row[i] += dxt[i];
    }
}

// Sum of -log p(tokens[t] | prefix) over masked positions t >= 1.
// When `grad` is non-null, accumulates d(sum)/dθ into it.
template <typename Float>
Float masked_nll(const Model<Float>& model, std::span<const tok::TokenId> tokens,
                 std::span<const std::uint8_t> mask, int* masked_count = nullptr,
                 std::vector<Float>* grad = nullptr, std::mt19937_64* dropout_rng = nullptr) {
    const int T = static_cast<int>(tokens.size());
    const int V = model.config.vocab_size;
    if (mask.size() != tokens.size()) throw ModelError("mask length mismatch");

    Activations<Float> acts;
    std::vector<Float> logits;
    forward(model, tokens, logits, grad ? &acts : nullptr, dropout_rng);

    std::vector<Float> dlogits;
    if (grad) dlogits.assign(logits.size(), Float(0));

    Float loss = 0;
    int count = 0;
    for (int t = 1; t < T; ++t) {
        if (!mask[t]) continue;
        ++count;
        const Float* row = logits.data() + static_cast<std::size_t>(t - 1) * V;
        Float mx = row[0];
        for (int v = 1; v < V; ++v) mx = std::max(mx, row[v]);
        Float sum = 0;
        for (int v = 0; v < V; ++v) sum += std::exp(row[v] - mx);
        Float lse = mx + std::log(sum);
        loss += lse - row[tokens[t]];
        if (grad) {
            Float* drow = dlogits.data() + static_cast<std::size_t>(t - 1) * V;
            for (int v = 0; v < V; ++v) drow[v] += std::exp(row[v] - lse);
            drow[tokens[t]] -= Float(1);
        }
    }
    if (masked_count) *masked_count = count;
    if (grad) backward(model, tokens, acts, dlogits, *grad);
    return loss;
}

// log p(tokens[t] | tokens[:t]) for t in [1, T); entry 0 is 0.
template <typename Float>
std::vector<double> token_logprobs(const Model<Float>& model,
                                   std::span<const tok::TokenId> tokens) {
    const int T = static_cast<int>(tokens.size());
    const int V = model.config.vocab_size;
    std::vector<Float> logits;
    forward(model, tokens, logits);
    std::vector<double> out(T, 0.0);
    for (int t = 1; t < T; ++t) {
        const Float* row = logits.data() + static_cast<std::size_t>(t - 1) * V;
        Float mx = row[0];
        for (int v = 1; v < V; ++v) mx = std::max(mx, row[v]);
        double sum = 0;
        for (int v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row[v] - mx));
        out[t] = static_cast<double>(row[tokens[t]] - mx) - std::log(sum);
    }
    return out;
}

enum class Region { all, bytes_only };

// Sum of token_logprobs over the selected region. `bytes_only` covers the
// byte targets strictly inside <bytes>...</bytes> plus the </bytes> target.
template <typename Float>
double sequence_loglik(const Model<Float>& model, std::span<const tok::TokenId> tokens,
                       Region region = Region::all) {
    auto lp = token_logprobs(model, tokens);
    int lo = 1, hi = static_cast<int>(tokens.size());
    if (region == Region::bytes_only) {
        int ib = -1, ic = -1;
        for (int t = 0; t < static_cast<int>(tokens.size()); ++t) {
            if (tokens[t] == tok::kBytesOpen && ib < 0) ib = t;
            if (tokens[t] == tok::kBytesClose && ib >= 0 && ic < 0) ic = t;
        }
        if (ib < 0 || ic < 0) throw ModelError("bytes_only region needs <bytes>...</bytes>");
        lo = ib + 1;
        hi = ic + 1;
    }
    double s = 0;
    for (int t = lo; t < hi; ++t) s += lp[t];
    return s;
}

}  // namespace clm::lm
