#include "lfvit/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "json.hpp"

namespace lfvit {

namespace {

using nlohmann::json;

std::vector<int> vshape(std::initializer_list<int> dims) { return std::vector<int>(dims); }

void append_block_names(std::vector<std::pair<std::string, std::vector<int>>>& out, int i,
                        const ModelConfig& cfg) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    const int d = cfg.dim;
    const int h = cfg.ffn_hidden();
    out.emplace_back(p + "ln1_gamma", vshape({d}));
    out.emplace_back(p + "ln1_beta", vshape({d}));
    out.emplace_back(p + "wq", vshape({d, d}));
    out.emplace_back(p + "wk", vshape({d, d}));
    out.emplace_back(p + "wv", vshape({d, d}));
    out.emplace_back(p + "wo", vshape({d, d}));
    out.emplace_back(p + "ln2_gamma", vshape({d}));
    out.emplace_back(p + "ln2_beta", vshape({d}));
    out.emplace_back(p + "ffn_w1", vshape({d, h}));
    out.emplace_back(p + "ffn_b1", vshape({h}));
    out.emplace_back(p + "ffn_w2", vshape({h, d}));
    out.emplace_back(p + "ffn_b2", vshape({d}));
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"depth", cfg.depth},
                {"dim", cfg.dim},
                {"heads", cfg.heads},
                {"patch", cfg.patch},
                {"image_side", cfg.image_side},
                {"classes", cfg.classes},
                {"region_m", cfg.region_m},
                {"eta", cfg.eta},
                {"alpha", cfg.alpha},
                {"beta", cfg.beta},
                {"focus_mode", focus_mode_name(cfg.focus_mode)},
                {"eps", cfg.eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.depth = j.at("depth").get<int>();
    cfg.dim = j.at("dim").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.image_side = j.at("image_side").get<int>();
    cfg.classes = j.at("classes").get<int>();
    cfg.region_m = j.at("region_m").get<int>();
    cfg.eta = j.at("eta").get<double>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.beta = j.at("beta").get<double>();
    cfg.focus_mode = focus_mode_from_name(j.at("focus_mode").get<std::string>());
    cfg.eps = j.at("eps").get<double>();
    return cfg;
}

// Uniform in [0,1) from the top 24 bits of one mt19937 draw. Fully specified
// by the standard, so gen_weights is byte-stable across platforms.
float next_unit(std::mt19937& rng) {
    return static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
}

void fill_uniform(Tensor& t, std::mt19937& rng, float bound) {
    for (float& v : t.data) v = (2.0f * next_unit(rng) - 1.0f) * bound;
}

void store_le(const float* src, std::size_t n, std::vector<unsigned char>& out) {
    const std::size_t base = out.size();
    out.resize(base + n * 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + base, src, n * 4);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, src + i, 4);
            out[base + 4 * i + 0] = static_cast<unsigned char>(bits & 0xff);
            out[base + 4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
            out[base + 4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
            out[base + 4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
        }
    }
}

void load_le(const unsigned char* src, std::size_t n, float* dst) {
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(dst, src, n * 4);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t bits = static_cast<std::uint32_t>(src[4 * i]) |
                                       (static_cast<std::uint32_t>(src[4 * i + 1]) << 8) |
                                       (static_cast<std::uint32_t>(src[4 * i + 2]) << 16) |
                                       (static_cast<std::uint32_t>(src[4 * i + 3]) << 24);
            std::memcpy(dst + i, &bits, 4);
        }
    }
}

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> expected_tensor_shapes(
    const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    out.emplace_back("patch_proj", vshape({3 * cfg.patch * cfg.patch, cfg.dim}));
    out.emplace_back("cls_token", vshape({cfg.dim}));
    out.emplace_back("pos_embed", vshape({cfg.n_fine() + 1, cfg.dim}));
    for (int i = 0; i < cfg.depth; ++i) append_block_names(out, i, cfg);
    out.emplace_back("align_mlp.w", vshape({cfg.dim, cfg.dim}));
    out.emplace_back("align_mlp.b", vshape({cfg.dim}));
    out.emplace_back("head.w", vshape({cfg.dim, cfg.classes}));
    out.emplace_back("head.b", vshape({cfg.classes}));
    return out;
}

std::vector<TensorRef> tensor_refs(const WeightStore& w) {
    std::vector<TensorRef> out;
    out.push_back({"patch_proj", &w.patch_proj});
    out.push_back({"cls_token", &w.cls_token});
    out.push_back({"pos_embed", &w.pos_embed});
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        const BlockWeights& b = w.blocks[i];
        out.push_back({p + "ln1_gamma", &b.ln1_gamma});
        out.push_back({p + "ln1_beta", &b.ln1_beta});
        out.push_back({p + "wq", &b.wq});
        out.push_back({p + "wk", &b.wk});
        out.push_back({p + "wv", &b.wv});
        out.push_back({p + "wo", &b.wo});
        out.push_back({p + "ln2_gamma", &b.ln2_gamma});
        out.push_back({p + "ln2_beta", &b.ln2_beta});
        out.push_back({p + "ffn_w1", &b.ffn_w1});
        out.push_back({p + "ffn_b1", &b.ffn_b1});
        out.push_back({p + "ffn_w2", &b.ffn_w2});
        out.push_back({p + "ffn_b2", &b.ffn_b2});
    }
    out.push_back({"align_mlp.w", &w.align_w});
    out.push_back({"align_mlp.b", &w.align_b});
    out.push_back({"head.w", &w.head_w});
    out.push_back({"head.b", &w.head_b});
    return out;
}

WeightStore gen_weights(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    const int d = cfg.dim;
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));

    WeightStore w;
    w.patch_proj = Tensor({3 * cfg.patch * cfg.patch, d});
    fill_uniform(w.patch_proj, rng, 1.0f / std::sqrt(static_cast<float>(3 * cfg.patch * cfg.patch)));
    w.cls_token = Tensor({d});
    fill_uniform(w.cls_token, rng, inv_sqrt_d);
    w.pos_embed = Tensor({cfg.n_fine() + 1, d});
    fill_uniform(w.pos_embed, rng, inv_sqrt_d);

    w.blocks.resize(static_cast<std::size_t>(cfg.depth));
    for (BlockWeights& b : w.blocks) {
        b.ln1_gamma = Tensor({d}, std::vector<float>(static_cast<std::size_t>(d), 1.0f));
        b.ln1_beta = Tensor({d});
        b.wq = Tensor({d, d});
        fill_uniform(b.wq, rng, inv_sqrt_d);
        b.wk = Tensor({d, d});
        fill_uniform(b.wk, rng, inv_sqrt_d);
        b.wv = Tensor({d, d});
        fill_uniform(b.wv, rng, inv_sqrt_d);
        b.wo = Tensor({d, d});
        fill_uniform(b.wo, rng, inv_sqrt_d);
        b.ln2_gamma = Tensor({d}, std::vector<float>(static_cast<std::size_t>(d), 1.0f));
        b.ln2_beta = Tensor({d});
        b.ffn_w1 = Tensor({d, cfg.ffn_hidden()});
        fill_uniform(b.ffn_w1, rng, inv_sqrt_d);
        b.ffn_b1 = Tensor({cfg.ffn_hidden()});
        b.ffn_w2 = Tensor({cfg.ffn_hidden(), d});
        fill_uniform(b.ffn_w2, rng, 1.0f / std::sqrt(static_cast<float>(cfg.ffn_hidden())));
        b.ffn_b2 = Tensor({d});
    }

    w.align_w = Tensor({d, d});
    fill_uniform(w.align_w, rng, inv_sqrt_d);
    w.align_b = Tensor({d});
    w.head_w = Tensor({d, cfg.classes});
    fill_uniform(w.head_w, rng, inv_sqrt_d);
    w.head_b = Tensor({cfg.classes});
    return w;
}

void save_lfw1(const std::string& path, const WeightStore& w, const ModelConfig& cfg) {
    const auto refs = tensor_refs(w);
    const auto expected = expected_tensor_shapes(cfg);
    if (refs.size() != expected.size()) {
        throw IoError("weight store does not match config: " + std::to_string(refs.size()) +
                      " tensors vs " + std::to_string(expected.size()) + " expected");
    }

    json tensors = json::array();
    std::vector<unsigned char> blob;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const Tensor& t = *refs[i].tensor;
        if (refs[i].name != expected[i].first || t.shape != expected[i].second) {
            throw IoError("tensor " + refs[i].name + " has shape " + t.shape_str() +
                          ", expected " + shape_to_string(expected[i].second));
        }
        json entry;
        entry["name"] = refs[i].name;
        entry["shape"] = t.shape;
        entry["offset"] = blob.size();
        entry["length"] = t.numel() * 4;
        tensors.push_back(entry);
        store_le(t.data.data(), t.numel(), blob);
    }

    json manifest;
    manifest["format"] = "LFW1";
    manifest["config"] = config_to_json(cfg);
    manifest["tensors"] = tensors;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const std::string header = manifest.dump();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write to " + path);
}

LoadedModel load_lfw1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    std::string header;
    if (!std::getline(in, header)) throw IoError(path + ": missing LFW1 manifest line");

    json manifest;
    try {
        manifest = json::parse(header);
    } catch (const json::exception& e) {
        throw IoError(path + ": manifest is not valid JSON: " + e.what());
    }

    LoadedModel model;
    try {
        if (manifest.at("format").get<std::string>() != "LFW1") {
            throw IoError(path + ": not an LFW1 file");
        }
        model.config = config_from_json(manifest.at("config"));
    } catch (const json::exception& e) {
        throw IoError(path + ": bad manifest: " + e.what());
    }
    model.config.validate();

    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    const auto expected = expected_tensor_shapes(model.config);
    const json& tensors = manifest.at("tensors");
    if (!tensors.is_array() || tensors.size() != expected.size()) {
        throw IoError(path + ": manifest consistency: expected " +
                      std::to_string(expected.size()) + " tensors, found " +
                      std::to_string(tensors.size()));
    }

    model.weights.blocks.resize(static_cast<std::size_t>(model.config.depth));
    const auto refs = tensor_refs(model.weights);

    std::size_t running = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const json& entry = tensors[i];
        std::string name;
        std::vector<int> shape;
        std::size_t offset = 0, length = 0;
        try {
            name = entry.at("name").get<std::string>();
            shape = entry.at("shape").get<std::vector<int>>();
            offset = entry.at("offset").get<std::size_t>();
            length = entry.at("length").get<std::size_t>();
        } catch (const json::exception& e) {
            throw IoError(path + ": bad tensor entry: " + e.what());
        }
        if (name != expected[i].first) {
            throw IoError(path + ": manifest consistency: tensor " + std::to_string(i) +
                          " is '" + name + "', expected '" + expected[i].first + "'");
        }
        if (shape != expected[i].second) {
            throw IoError(path + ": tensor " + name + " has shape " + shape_to_string(shape) +
                          ", expected " + shape_to_string(expected[i].second));
        }
        const std::size_t want = Tensor::count(shape) * 4;
        if (length != want || offset != running || offset + length > blob.size()) {
            throw IoError(path + ": manifest consistency: tensor " + name +
                          " offset/length do not tile the blob");
        }
        running += length;

        Tensor t(shape);
        load_le(blob.data() + offset, t.numel(), t.data.data());
        *const_cast<Tensor*>(refs[i].tensor) = std::move(t);
    }
    if (running != blob.size()) {
        throw IoError(path + ": manifest consistency: blob has " + std::to_string(blob.size()) +
                      " bytes, manifest covers " + std::to_string(running));
    }
    return model;
}

}  // namespace lfvit
