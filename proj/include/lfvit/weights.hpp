#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfvit/config.hpp"
#include "lfvit/tensor.hpp"

namespace lfvit {

struct BlockWeights {
    Tensor ln1_gamma, ln1_beta;   // [D]
    Tensor wq, wk, wv, wo;        // [D x D]
    Tensor ln2_gamma, ln2_beta;   // [D]
    Tensor ffn_w1;                // [D x 4D]
    Tensor ffn_b1;                // [4D]
    Tensor ffn_w2;                // [4D x D]
    Tensor ffn_b2;                // [D]
};

// All learned parameters. Shared between the localization and focus stages;
// immutable after load.
//
// Patch pixels are flattened channel-major (c, y, x) before the projection,
// so patch_proj row (c*P*P + y*P + x) is the contribution of that pixel.
struct WeightStore {
    Tensor patch_proj;             // [3*P*P x D]
    Tensor cls_token;              // [D]
    Tensor pos_embed;              // [(n_fine+1) x D], row 0 is the class row
    std::vector<BlockWeights> blocks;
    Tensor align_w, align_b;       // [D x D], [D]
    Tensor head_w, head_b;         // [D x classes], [classes]
};

// One named tensor slot; load/save walk this list in a canonical order.
struct TensorRef {
    std::string name;
    const Tensor* tensor;
};
std::vector<TensorRef> tensor_refs(const WeightStore& w);
// Expected shape per tensor name for a config; load rejects any mismatch.
std::vector<std::pair<std::string, std::vector<int>>> expected_tensor_shapes(
    const ModelConfig& cfg);

// Deterministic pseudo-random initialization. Weight matrices draw uniform
// in +-1/sqrt(fan_in) where fan_in is the input dimension, cls_token and
// pos_embed draw uniform in +-1/sqrt(D), layer-norm gammas are 1, every bias
// and layer-norm beta is 0. Draws come from one mt19937 stream in canonical
// tensor order, mapped to [0,1) via the top 24 bits, so the same seed yields
// a byte-identical weight file on every platform.
WeightStore gen_weights(const ModelConfig& cfg, std::uint64_t seed);

// LFW1 container: one line of compact JSON
//   {"format":"LFW1","config":{...},"tensors":[{name,shape,offset,length}...]}
// terminated by '\n', then a contiguous little-endian float32 blob. Offsets
// and lengths are in bytes from the blob start.
void save_lfw1(const std::string& path, const WeightStore& w, const ModelConfig& cfg);

struct LoadedModel {
    ModelConfig config;
    WeightStore weights;
};
LoadedModel load_lfw1(const std::string& path);

}  // namespace lfvit
