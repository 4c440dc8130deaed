#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "silab/optim.hpp"
#include "silab/tensor.hpp"

namespace silab {

struct SinetConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_k = 16;
    std::size_t d_v = 16;
    std::size_t vocab_size = 64;
    std::size_t max_seq_len = 32;
    bool head_enabled = true;
    // Replaces the ReLU+row-normalization attention scores with row-wise
    // softmax. Breaks the homogeneity contract; kept as a negative control.
    bool softmax_attention = false;

    void validate() const;
};

// Position of one named tensor inside a packed flat parameter vector.
struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

std::vector<TensorSpec> encoder_layout(const SinetConfig& cfg);
std::vector<TensorSpec> head_layout(const SinetConfig& cfg);
std::size_t layout_size(const std::vector<TensorSpec>& layout);

struct SinetModel {
    SinetConfig cfg;
    std::vector<double> encoder;  // packed per encoder_layout
    std::vector<double> head;     // packed per head_layout

    std::vector<ParamGroup> param_groups() const;
};

// Truncated-normal (cut at 2 std) init: weight std 0.02 * init_scale,
// normalization gains init_scale, biases 0. The head is initialized at
// init_scale 1 regardless (it is not part of the invariant group).
SinetModel init_model(const SinetConfig& cfg, double init_scale, std::uint64_t seed);

// Multi-head attention with normalized-ReLU scores:
// sum_i Norm(ReLU(Q Wq_i (K Wk_i)^T)) V Wv_i Wo_i.
struct AttentionParams {
    std::vector<Tensor> w_q, w_k, w_v, w_o;  // one entry per head
};
Tensor si_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                    const AttentionParams& p, bool softmax_scores = false);

struct EncoderLayerParams {
    AttentionParams attn;
    Tensor ff_w1, ff_b1, ff_w2;
};
// PreNorm residual block: z + Attn(N(z)) then + FF(N(.)), all degree-2.
Tensor encoder_layer(const Tensor& z, const EncoderLayerParams& p,
                     bool softmax_scores = false);

// Named intermediates of one forward pass with their claimed homogeneity
// degrees with respect to the encoder group (token ids held fixed).
struct ForwardTrace {
    std::vector<std::pair<std::string, double>> claimed_degrees;
    std::map<std::string, std::vector<double>> values;
};

// Builds the differentiable graph from leaf tensors mapped by layout name.
// Returns logits when the head is enabled, else the encoder features.
Tensor sinet_graph(const SinetConfig& cfg, const std::map<std::string, Tensor>& enc,
                   const std::map<std::string, Tensor>& head,
                   const std::vector<std::size_t>& ids, ForwardTrace* trace = nullptr);

// Convenience forward over packed vectors; no gradients.
std::vector<double> sinet_forward(const SinetModel& model,
                                  const std::vector<std::size_t>& ids,
                                  ForwardTrace* trace = nullptr);

// Synthetic masked-token objective: sequences drawn from a fixed seeded
// Markov chain over tokens {1..vocab-1}; masked positions are replaced by
// the reserved token 0 and scored with cross-entropy. Gradients are
// returned per parameter group (encoder, head).
class MaskedTokenLoss : public GroupedStochasticLoss {
  public:
    MaskedTokenLoss(SinetConfig cfg, std::size_t seq_len, double mask_rate,
                    std::uint64_t task_seed);
    GroupedEval eval(std::uint64_t gamma, const std::vector<ParamGroup>& groups) const override;

    // Draws one (sequence, targets, mask) batch; exposed for tests.
    void sample_batch(std::uint64_t gamma, std::vector<std::size_t>& ids,
                      std::vector<std::size_t>& targets, std::vector<bool>& mask) const;
    const SinetConfig& config() const { return cfg_; }

  private:
    SinetConfig cfg_;
    std::size_t seq_len_;
    double mask_rate_;
    std::vector<double> transition_;  // row-major vocab x vocab
};

// Flat single-group view of the encoder parameters with the head held
// fixed; used for Euler/orthogonality checks on the encoder group.
class SinetEncoderLoss : public StochasticLoss {
  public:
    SinetEncoderLoss(const MaskedTokenLoss& task, std::vector<double> head_params);
    std::size_t dim() const override;
    Grad eval(std::uint64_t gamma, std::span<const double> x) const override;
    Grad mean_eval(std::span<const double> x) const override;

  private:
    const MaskedTokenLoss& task_;
    std::vector<double> head_;
};

// Scales the whole encoder parameter vector by each c in `scales` and checks
// every traced intermediate against its claimed homogeneity degree
// (value(c x) = c^deg value(x), token ids and head fixed).
struct DegreeAuditResult {
    bool pass = false;
    std::string worst_name;
    double max_rel_err = 0.0;
};
DegreeAuditResult audit_degrees(const SinetConfig& cfg, std::uint64_t seed,
                                const std::vector<double>& scales, double tol = 1e-6);

// Versioned textual checkpoint of config + packed parameters (hex floats,
// bit-exact round trip).
void save_checkpoint(const SinetModel& model, const std::string& path);
SinetModel load_checkpoint(const std::string& path);

}  // namespace silab
