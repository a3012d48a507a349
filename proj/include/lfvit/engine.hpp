#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfvit/attention_maps.hpp"
#include "lfvit/backbone.hpp"
#include "lfvit/config.hpp"
#include "lfvit/focus.hpp"
#include "lfvit/weights.hpp"

namespace lfvit {

// Multiply-accumulate counts per pipeline stage. MACs are counted as single
// operations — the convention under which the full-resolution reference
// transformer comes out at 4.6e9.
struct FlopsReport {
    double localization = 0.0;
    double align = 0.0;
    double focus = 0.0;
    double total = 0.0;
    bool exited_early = false;
};

enum class Stage { localization, focus };

const char* stage_name(Stage s);

struct InferenceResult {
    Stage stage = Stage::localization;
    std::vector<float> probs;
    int pred = -1;
    float conf = 0.0f;
    bool has_region = false;
    Region region{};
    FlopsReport flops{};
    std::int64_t loc_ns = 0;
    std::int64_t focus_ns = 0;
};

// Optional capture of pipeline intermediates (heatmap export, tests).
struct InferDebug {
    Classification loc_cls{};
    ClassAttentionTrace trace{};
    AttentionCapture loc_attention{};  // per layer [H x T x T] post-softmax rows
    bool has_attention = false;        // GCA/NGCA/plan populated (focus stage ran)
    GcaMap gca{};
    Tensor ngca;
    FocusPlan plan{};
    FocusSequence focus_input{};
    AttentionCapture focus_attention{};
    Classification focus_cls{};
};

// Sequence lengths and embedding counts that drive the analytic FLOPs model.
// focus_seq_len == 0 describes a localization-only (early-exit) run.
struct StageSpec {
    int loc_seq_len = 0;
    int loc_patches = 0;
    int focus_seq_len = 0;
    int focus_fresh_patches = 0;
};

// The spec the two-stage pipeline realizes for a given config (no early exit).
StageSpec stage_spec_for(const ModelConfig& cfg);

// Analytic multiply-accumulate counts.
double encoder_flops(int seq_len, int dim, int depth);
double patch_embed_flops(int n_patches, int patch, int dim);
double align_flops(const ModelConfig& cfg);
double head_flops(int dim, int classes);
FlopsReport flops_model(const ModelConfig& cfg, const StageSpec& spec);

// Two-stage inference with strict conf > eta early exit.
InferenceResult infer(const Tensor& image, const WeightStore& w, const ModelConfig& cfg,
                      InferDebug* dbg = nullptr);

// Training objective: CE(p_f; y) + KL(p_l || p_f), natural log, computed in
// double precision from raw logits.
double loss(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
            int label);

// Variant objective: CE(p_f; y) + KL(y || p_l). Against a one-hot target the
// KL term reduces to CE(p_l; y) (the zero-entropy constant vanishes), so this
// is implemented as CE(p_f; y) + CE(p_l; y).
double loss_variant(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
                    int label);

struct LossGrad {
    std::vector<double> grad_loc;
    std::vector<double> grad_foc;
};

// Analytic gradients of `loss` with respect to the two logit vectors, treating
// both as live variables. stop_grad_localization zeroes grad_loc (the
// alternative reading in which the localization branch is detached).
LossGrad loss_grad(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
                   int label, bool stop_grad_localization = false);

double softmax_double(const std::vector<double>& logits, std::vector<double>& probs_out);

struct BatchReport {
    std::vector<InferenceResult> results;  // index-aligned with the input batch
    std::vector<std::string> errors;       // empty string = success
    int n_ok = 0;
    double mean_flops = 0.0;
    double exit_fraction = 0.0;
    double throughput_ips = 0.0;
    bool has_accuracy = false;
    double accuracy = 0.0;
    std::int64_t wall_ns = 0;
};

// workers: >0 explicit thread count; 0 resolves via LFVIT_WORKERS then
// hardware concurrency.
int resolve_workers(int requested);

BatchReport run_batch(const std::vector<Tensor>& images, const std::vector<int>* labels,
                      const WeightStore& w, const ModelConfig& cfg, int workers = 0);

// Benchmark entry: warm-up inferences (excluded from timing) then a timed
// run_batch pass.
BatchReport bench(const std::vector<Tensor>& images, const WeightStore& w, const ModelConfig& cfg,
                  int warmup = 3, int workers = 0);

}  // namespace lfvit
