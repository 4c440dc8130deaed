#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace silab {

// Dense row-major tensor of doubles with an optional grad slot, built on a
// tape of backward closures. A Tensor is a cheap handle; copying shares the
// underlying node. Data is treated as immutable once the tensor has been
// consumed by an op; only the grad slot mutates afterwards.
class Tensor {
  public:
    struct Node {
        std::vector<std::size_t> shape;
        std::vector<double> data;
        std::vector<double> grad;
        std::vector<std::shared_ptr<Node>> inputs;
        std::function<void()> backward;  // empty for leaves

        std::size_t size() const { return data.size(); }
        void ensure_grad() {
            if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        }
    };

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor scalar(double v) { return from({}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.at(1); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& grad() { node_->ensure_grad(); return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    double item() const {
        if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar");
        return node_->data[0];
    }

    std::shared_ptr<Node> node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a [m x d] times b [n x d] transposed -> [m x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
// Row-wise normalization by sum. Entries must be nonnegative; an all-zero
// row maps to an all-zero row with zero backward gradient.
Tensor row_normalize_sum(const Tensor& a);
// Per-last-axis standardization (mean 0, variance 1). A constant slice maps
// to the zero slice with zero backward gradient. n >= 2 along the last axis.
Tensor layer_norm(const Tensor& a);
Tensor layer_norm_affine(const Tensor& a, const Tensor& gain, const Tensor& bias);
// Row-wise softmax; present as the non-homogeneous negative control.
Tensor softmax_rows(const Tensor& a);
// Gathers rows of `table` by id. ids are degree-0 constants.
Tensor embedding_rows(const Tensor& table, const std::vector<std::size_t>& ids);
// Adds a row vector [1 x n] to every row of a [m x n].
Tensor add_row_broadcast(const Tensor& a, const Tensor& row);
Tensor sum(const Tensor& a);
Tensor sum_squares(const Tensor& a);
// Mean cross-entropy of row-wise log-softmax(logits) against targets,
// restricted to rows with mask[i] true. Empty mask gives loss 0.
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<std::size_t>& targets,
                            const std::vector<bool>& mask);

// Reverse-mode sweep from a scalar root. Each reachable node's backward
// closure runs exactly once; leaf grads accumulate d(root)/d(leaf).
void backward(const Tensor& root);

}  // namespace silab
