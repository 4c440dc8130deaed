#include "silab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "silab/kernels.hpp"

namespace silab {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::shared_ptr<Tensor::Node> make_node(std::vector<std::size_t> shape) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->data.assign(shape_numel(n->shape), 0.0);
    return n;
}

// Flattens leading axes: views the tensor as [rows x cols] with cols = last axis.
void last_axis_view(const Tensor& t, std::size_t& rows, std::size_t& cols) {
    const auto& s = t.shape();
    if (s.empty()) throw std::invalid_argument("last_axis_view: scalar input");
    cols = s.back();
    rows = t.size() / cols;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    return Tensor(make_node(std::move(shape)));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    if (shape_numel(n->shape) != data.size())
        throw std::invalid_argument("Tensor::from: shape/data size mismatch");
    n->data = std::move(data);
    return Tensor(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul: dimension mismatch");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node({m, n});
    const auto& K = kernels::active();
    K.matmul_acc(a.data().data(), b.data().data(), out->data.data(), m, k, n);

    auto an = a.node(), bn = b.node();
    Tensor::Node* self = out.get();
    out->inputs = {an, bn};
    out->backward = [an, bn, self, m, k, n]() {
        const auto& K = kernels::active();
        an->ensure_grad();
        bn->ensure_grad();
        // a.grad += g * b^T ; b.grad += a^T * g
        K.matmul_nt_acc(self->grad.data(), bn->data.data(), an->grad.data(), m, n, k);
        K.matmul_tn_acc(an->data.data(), self->grad.data(), bn->grad.data(), m, k, n);
    };
    return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols())
        throw std::invalid_argument("matmul_nt: dimension mismatch");
    const std::size_t m = a.rows(), d = a.cols(), n = b.rows();
    auto out = make_node({m, n});
    const auto& K = kernels::active();
    K.matmul_nt_acc(a.data().data(), b.data().data(), out->data.data(), m, d, n);

    auto an = a.node(), bn = b.node();
    Tensor::Node* self = out.get();
    out->inputs = {an, bn};
    out->backward = [an, bn, self, m, d, n]() {
        const auto& K = kernels::active();
        an->ensure_grad();
        bn->ensure_grad();
        // a.grad += g * b ; b.grad += g^T * a
        K.matmul_acc(self->grad.data(), bn->data.data(), an->grad.data(), m, n, d);
        K.matmul_tn_acc(self->grad.data(), an->data.data(), bn->grad.data(), m, n, d);
    };
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = a.data()[i] + b.data()[i];
    auto an = a.node(), bn = b.node();
    Tensor::Node* self = out.get();
    out->inputs = {an, bn};
    out->backward = [an, bn, self]() {
        an->ensure_grad();
        bn->ensure_grad();
        const auto& K = kernels::active();
        K.axpy(1.0, self->grad.data(), an->grad.data(), self->grad.size());
        K.axpy(1.0, self->grad.data(), bn->grad.data(), self->grad.size());
    };
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    Tensor::Node* self = out.get();
    out->inputs = {an, bn};
    out->backward = [an, bn, self]() {
        an->ensure_grad();
        bn->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i] * bn->data[i];
            bn->grad[i] += self->grad[i] * an->data[i];
        }
    };
    return Tensor(out);
}

Tensor scale(const Tensor& a, double c) {
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = c * a.data()[i];
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self, c]() {
        an->ensure_grad();
        kernels::active().axpy(c, self->grad.data(), an->grad.data(), self->grad.size());
    };
    return Tensor(out);
}

Tensor relu(const Tensor& a) {
    auto out = make_node(a.shape());
    kernels::active().relu(a.data().data(), out->data.data(), a.size());
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self]() {
        an->ensure_grad();
        kernels::active().relu_backward(an->data.data(), self->grad.data(), an->grad.data(),
                                        self->grad.size());
    };
    return Tensor(out);
}

Tensor row_normalize_sum(const Tensor& a) {
    std::size_t rows, cols;
    last_axis_view(a, rows, cols);
    for (double v : a.data())
        if (v < 0.0) throw std::domain_error("row_normalize_sum: negative entry");
    auto out = make_node(a.shape());
    std::vector<double> row_sums(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = a.data().data() + i * cols;
        double s = kernels::active().sum(x, cols);
        row_sums[i] = s;
        double* y = out->data.data() + i * cols;
        if (s > 0.0)
            for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] / s;
        // all-zero row stays all-zero
    }
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self, rows, cols, row_sums]() {
        an->ensure_grad();
        for (std::size_t i = 0; i < rows; ++i) {
            const double s = row_sums[i];
            if (s <= 0.0) continue;
            const double* g = self->grad.data() + i * cols;
            const double* y = self->data.data() + i * cols;
            double* dx = an->grad.data() + i * cols;
            const double gy = kernels::active().dot(g, y, cols);
            for (std::size_t j = 0; j < cols; ++j) dx[j] += (g[j] - gy) / s;
        }
    };
    return Tensor(out);
}

namespace {

// Shared forward for layer_norm variants: standardizes each last-axis slice,
// zeroing slices with zero variance. Returns per-slice 1/std (0 where zeroed).
std::vector<double> standardize(const Tensor& a, std::vector<double>& out_data) {
    std::size_t rows, cols;
    last_axis_view(a, rows, cols);
    if (cols < 2) throw std::invalid_argument("layer_norm: last axis must have n >= 2");
    std::vector<double> inv_std(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = a.data().data() + i * cols;
        double* y = out_data.data() + i * cols;
        const double mean = kernels::active().sum(x, cols) / double(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= double(cols);
        if (var > 0.0) {
            const double is = 1.0 / std::sqrt(var);
            inv_std[i] = is;
            for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * is;
        }  // constant slice stays zero
    }
    return inv_std;
}

void standardize_backward(Tensor::Node* an, const double* y, const double* g,
                          const std::vector<double>& inv_std, std::size_t rows,
                          std::size_t cols) {
    an->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i) {
        const double is = inv_std[i];
        if (is == 0.0) continue;
        const double* gi = g + i * cols;
        const double* yi = y + i * cols;
        double* dx = an->grad.data() + i * cols;
        const double gmean = kernels::active().sum(gi, cols) / double(cols);
        const double gy_mean = kernels::active().dot(gi, yi, cols) / double(cols);
        for (std::size_t j = 0; j < cols; ++j)
            dx[j] += is * (gi[j] - gmean - yi[j] * gy_mean);
    }
}

}  // namespace

Tensor layer_norm(const Tensor& a) {
    std::size_t rows, cols;
    last_axis_view(a, rows, cols);
    auto out = make_node(a.shape());
    auto inv_std = standardize(a, out->data);
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self, inv_std, rows, cols]() {
        standardize_backward(an.get(), self->data.data(), self->grad.data(), inv_std, rows,
                             cols);
    };
    return Tensor(out);
}

Tensor layer_norm_affine(const Tensor& a, const Tensor& gain, const Tensor& bias) {
    std::size_t rows, cols;
    last_axis_view(a, rows, cols);
    if (gain.size() != cols || bias.size() != cols)
        throw std::invalid_argument("layer_norm_affine: gain/bias length mismatch");
    auto out = make_node(a.shape());
    // keep the standardized values for the backward pass
    auto norm = std::make_shared<std::vector<double>>(a.size(), 0.0);
    auto inv_std = standardize(a, *norm);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out->data[i * cols + j] = (*norm)[i * cols + j] * gain.data()[j] + bias.data()[j];
    auto an = a.node(), gn = gain.node(), bn = bias.node();
    Tensor::Node* self = out.get();
    out->inputs = {an, gn, bn};
    out->backward = [an, gn, bn, self, norm, inv_std, rows, cols]() {
        gn->ensure_grad();
        bn->ensure_grad();
        std::vector<double> gnorm(self->grad.size());
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                const double g = self->grad[i * cols + j];
                gn->grad[j] += g * (*norm)[i * cols + j];
                bn->grad[j] += g;
                gnorm[i * cols + j] = g * gn->data[j];
            }
        }
        standardize_backward(an.get(), norm->data(), gnorm.data(), inv_std, rows, cols);
    };
    return Tensor(out);
}

Tensor softmax_rows(const Tensor& a) {
    std::size_t rows, cols;
    last_axis_view(a, rows, cols);
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = a.data().data() + i * cols;
        double* y = out->data.data() + i * cols;
        const double mx = *std::max_element(x, x + cols);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) y[j] /= s;
    }
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self, rows, cols]() {
        an->ensure_grad();
        for (std::size_t i = 0; i < rows; ++i) {
            const double* g = self->grad.data() + i * cols;
            const double* y = self->data.data() + i * cols;
            double* dx = an->grad.data() + i * cols;
            const double gy = kernels::active().dot(g, y, cols);
            for (std::size_t j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - gy);
        }
    };
    return Tensor(out);
}

Tensor embedding_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    if (table.shape().size() != 2) throw std::invalid_argument("embedding_rows: table not 2-D");
    const std::size_t vocab = table.rows(), dim = table.cols();
    for (auto id : ids)
        if (id >= vocab) throw std::out_of_range("embedding_rows: id out of range");
    auto out = make_node({ids.size(), dim});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().data() + ids[i] * dim, dim, out->data.data() + i * dim);
    auto tn = table.node();
    Tensor::Node* self = out.get();
    out->inputs = {tn};
    out->backward = [tn, self, ids, dim]() {
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            kernels::active().axpy(1.0, self->grad.data() + i * dim,
                                   tn->grad.data() + ids[i] * dim, dim);
    };
    return Tensor(out);
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& row) {
    std::size_t rows, cols;
    last_axis_view(a, rows, cols);
    if (row.size() != cols) throw std::invalid_argument("add_row_broadcast: length mismatch");
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out->data[i * cols + j] = a.data()[i * cols + j] + row.data()[j];
    auto an = a.node(), rn = row.node();
    Tensor::Node* self = out.get();
    out->inputs = {an, rn};
    out->backward = [an, rn, self, rows, cols]() {
        an->ensure_grad();
        rn->ensure_grad();
        kernels::active().axpy(1.0, self->grad.data(), an->grad.data(), self->grad.size());
        for (std::size_t i = 0; i < rows; ++i)
            kernels::active().axpy(1.0, self->grad.data() + i * cols, rn->grad.data(), cols);
    };
    return Tensor(out);
}

Tensor sum(const Tensor& a) {
    auto out = make_node({});
    out->data[0] = kernels::active().sum(a.data().data(), a.size());
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self]() {
        an->ensure_grad();
        const double g = self->grad[0];
        for (auto& v : an->grad) v += g;
    };
    return Tensor(out);
}

Tensor sum_squares(const Tensor& a) {
    auto out = make_node({});
    out->data[0] = kernels::active().sq_norm(a.data().data(), a.size());
    auto an = a.node();
    Tensor::Node* self = out.get();
    out->inputs = {an};
    out->backward = [an, self]() {
        an->ensure_grad();
        kernels::active().axpy(2.0 * self->grad[0], an->data.data(), an->grad.data(),
                               an->data.size());
    };
    return Tensor(out);
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<std::size_t>& targets,
                            const std::vector<bool>& mask) {
    if (logits.shape().size() != 2) throw std::invalid_argument("cross_entropy: logits not 2-D");
    const std::size_t n = logits.rows(), v = logits.cols();
    if (targets.size() != n || mask.size() != n)
        throw std::invalid_argument("cross_entropy: targets/mask length mismatch");
    std::size_t n_masked = 0;
    for (bool m : mask) n_masked += m;
    auto out = make_node({});
    auto probs = std::make_shared<std::vector<double>>(logits.size(), 0.0);
    if (n_masked > 0) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!mask[i]) continue;
            const double* x = logits.data().data() + i * v;
            double* p = probs->data() + i * v;
            const double mx = *std::max_element(x, x + v);
            double s = 0.0;
            for (std::size_t j = 0; j < v; ++j) s += (p[j] = std::exp(x[j] - mx));
            for (std::size_t j = 0; j < v; ++j) p[j] /= s;
            total += std::log(s) + mx - x[targets[i]];
        }
        out->data[0] = total / double(n_masked);
    }
    auto ln = logits.node();
    Tensor::Node* self = out.get();
    out->inputs = {ln};
    out->backward = [ln, self, probs, targets, mask, n, v, n_masked]() {
        if (n_masked == 0) return;
        ln->ensure_grad();
        const double g = self->grad[0] / double(n_masked);
        for (std::size_t i = 0; i < n; ++i) {
            if (!mask[i]) continue;
            double* dx = ln->grad.data() + i * v;
            const double* p = probs->data() + i * v;
            for (std::size_t j = 0; j < v; ++j) dx[j] += g * p[j];
            dx[targets[i]] -= g;
        }
    };
    return Tensor(out);
}

void backward(const Tensor& root) {
    if (root.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    // iterative post-order DFS; each node visited once
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> seen;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Tensor::Node* child = node->inputs[idx++].get();
            if (seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad();
    root.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        // a node may receive no gradient at all (e.g. an empty mask);
        // closures can then rely on an allocated all-zero grad
        (*it)->ensure_grad();
        if ((*it)->backward) (*it)->backward();
    }
}

}  // namespace silab
