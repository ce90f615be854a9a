#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "clm/lm/model.hpp"

namespace clm::lm {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

constexpr char kMagic[8] = {'C', 'L', 'M', 'J', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename Float>
const char* dtype_name() {
    if constexpr (std::is_same_v<Float, float>) return "f32";
    else if constexpr (std::is_same_v<Float, double>) return "f64";
    else static_assert(sizeof(Float) == 0, "unsupported checkpoint scalar");
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"vocab_size", c.vocab_size},   {"context_length", c.context_length},
            {"layers", c.layers},           {"model_dim", c.model_dim},
            {"heads", c.heads},             {"ff_hidden", c.ff_hidden},
            {"rope_base", c.rope_base},     {"dropout", c.dropout},
            {"seed", c.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.context_length = j.at("context_length").get<int>();
    c.layers = j.at("layers").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_hidden = j.at("ff_hidden").get<int>();
    c.rope_base = j.at("rope_base").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline void append_bytes(ByteSequence& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

}  // namespace detail

// Container layout: magic, format_version u32, u32 JSON header length, JSON
// header (config, dtype, tensor directory, vocab hash, training-state flag),
// little-endian scalar payload (w, then optimizer moments when present), and
// a trailing fnv1a64 of everything before it.
template <typename Float>
void save_checkpoint(const Model<Float>& model, const std::filesystem::path& path,
                     std::uint64_t corpus_hash = 0) {
    static_assert(std::endian::native == std::endian::little,
                  "payload serialization assumes a little-endian host");
    nlohmann::json header;
    header["config"] = detail::config_to_json(model.config);
    header["dtype"] = detail::dtype_name<Float>();
    header["vocab_hash"] = tok::vocab_hash();
    header["corpus_hash"] = corpus_hash;
    header["has_train_state"] = model.train_state.has_value();
    header["step"] = model.train_state ? model.train_state->step : 0;
    header["tensors"] = nlohmann::json::array();
    for (const auto& t : model.tensors)
        header["tensors"].push_back({{"name", t.name}, {"dims", t.dims}, {"offset", t.offset},
                                     {"size", t.size}});
    std::string hs = header.dump();

    ByteSequence out;
    detail::append_bytes(out, detail::kMagic, sizeof(detail::kMagic));
    std::uint32_t ver = detail::kFormatVersion;
    detail::append_bytes(out, &ver, 4);
    std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    detail::append_bytes(out, &hlen, 4);
    detail::append_bytes(out, hs.data(), hs.size());
    detail::append_bytes(out, model.w.data(), model.w.size() * sizeof(Float));
    if (model.train_state) {
        detail::append_bytes(out, model.train_state->m.data(),
                             model.train_state->m.size() * sizeof(Float));
        detail::append_bytes(out, model.train_state->v.data(),
                             model.train_state->v.size() * sizeof(Float));
    }
    std::uint64_t hash = fnv1a64(reinterpret_cast<const char*>(out.data()), out.size());
    detail::append_bytes(out, &hash, 8);
    write_file(path, out);
}

template <typename Float>
Model<Float> load_checkpoint(const std::filesystem::path& path) {
    ByteSequence b = read_file(path);
    if (b.size() < sizeof(detail::kMagic) + 8 + 8 ||
        std::memcmp(b.data(), detail::kMagic, sizeof(detail::kMagic)) != 0)
        throw CheckpointError("not a checkpoint file: " + path.string());

    std::uint64_t stored_hash;
    std::memcpy(&stored_hash, b.data() + b.size() - 8, 8);
    std::uint64_t actual = fnv1a64(reinterpret_cast<const char*>(b.data()), b.size() - 8);
    if (stored_hash != actual) throw CheckpointError("checkpoint content hash mismatch");

    std::size_t off = sizeof(detail::kMagic);
    std::uint32_t ver, hlen;
    std::memcpy(&ver, b.data() + off, 4);
    off += 4;
    if (ver != detail::kFormatVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(ver));
    std::memcpy(&hlen, b.data() + off, 4);
    off += 4;
    if (off + hlen > b.size() - 8) throw CheckpointError("corrupt checkpoint header");
    nlohmann::json header = nlohmann::json::parse(b.begin() + off, b.begin() + off + hlen);
    off += hlen;

    if (header.at("dtype").get<std::string>() != detail::dtype_name<Float>())
        throw CheckpointError("checkpoint dtype is " + header.at("dtype").get<std::string>());
    if (header.at("vocab_hash").get<std::uint64_t>() != tok::vocab_hash())
        throw CheckpointError("checkpoint vocabulary hash does not match this build");

    Model<Float> m;
    m.config = detail::config_from_json(header.at("config"));
    m.config.validate();
    m.tensors = detail::build_directory(m.config);
    std::size_t total = m.tensors.back().offset + m.tensors.back().size;

    // directory sanity against the rebuilt layout
    const auto& jt = header.at("tensors");
    if (jt.size() != m.tensors.size()) throw CheckpointError("tensor directory mismatch");
    for (std::size_t i = 0; i < m.tensors.size(); ++i) {
        if (jt[i].at("name").get<std::string>() != m.tensors[i].name ||
            jt[i].at("offset").get<std::size_t>() != m.tensors[i].offset ||
            jt[i].at("size").get<std::size_t>() != m.tensors[i].size)
            throw CheckpointError("tensor directory mismatch at " + m.tensors[i].name);
    }

    bool has_ts = header.at("has_train_state").get<bool>();
    std::size_t need = total * sizeof(Float) * (has_ts ? 3 : 1);
    if (b.size() - 8 - off != need) throw CheckpointError("checkpoint payload truncated");

    m.w.resize(total);
    std::memcpy(m.w.data(), b.data() + off, total * sizeof(Float));
    off += total * sizeof(Float);
    if (has_ts) {
        m.train_state.emplace();
        m.train_state->m.resize(total);
        m.train_state->v.resize(total);
        std::memcpy(m.train_state->m.data(), b.data() + off, total * sizeof(Float));
        off += total * sizeof(Float);
        std::memcpy(m.train_state->v.data(), b.data() + off, total * sizeof(Float));
        m.train_state->step = header.at("step").get<long>();
    }
    return m;
}

}  // namespace clm::lm
