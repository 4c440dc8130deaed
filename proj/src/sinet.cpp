#include "silab/sinet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace silab {

namespace {

std::size_t ff_dim(const SinetConfig& cfg) { return 2 * cfg.d_model; }

void push(std::vector<TensorSpec>& layout, std::size_t& offset, std::string name,
          std::vector<std::size_t> shape) {
    std::size_t sz = 1;
    for (auto d : shape) sz *= d;
    layout.push_back(TensorSpec{std::move(name), std::move(shape), offset, sz});
    offset += sz;
}

}  // namespace

void SinetConfig::validate() const {
    if (n_layers < 1 || d_model < 2 || n_heads < 1 || d_k < 1 || d_v < 1 ||
        vocab_size < 2 || max_seq_len < 1)
        throw std::invalid_argument("sinet config: dimensions out of range");
    if (d_model != n_heads * d_v)
        throw std::invalid_argument("sinet config: d_model must equal n_heads * d_v");
}

std::vector<TensorSpec> encoder_layout(const SinetConfig& cfg) {
    cfg.validate();
    std::vector<TensorSpec> layout;
    std::size_t off = 0;
    push(layout, off, "tok_emb", {cfg.vocab_size, cfg.d_model});
    push(layout, off, "pos_emb", {cfg.max_seq_len, cfg.d_model});
    push(layout, off, "emb_ln_gain", {cfg.d_model});
    push(layout, off, "emb_ln_bias", {cfg.d_model});
    push(layout, off, "w_in", {cfg.d_model, cfg.d_model});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::string hp = p + "h" + std::to_string(h) + ".";
            push(layout, off, hp + "w_q", {cfg.d_model, cfg.d_k});
            push(layout, off, hp + "w_k", {cfg.d_model, cfg.d_k});
            push(layout, off, hp + "w_v", {cfg.d_model, cfg.d_v});
            push(layout, off, hp + "w_o", {cfg.d_v, cfg.d_model});
        }
        push(layout, off, p + "ff.w1", {cfg.d_model, ff_dim(cfg)});
        push(layout, off, p + "ff.b1", {ff_dim(cfg)});
        push(layout, off, p + "ff.w2", {ff_dim(cfg), cfg.d_model});
    }
    return layout;
}

std::vector<TensorSpec> head_layout(const SinetConfig& cfg) {
    cfg.validate();
    std::vector<TensorSpec> layout;
    std::size_t off = 0;
    push(layout, off, "head.w", {cfg.d_model, cfg.vocab_size});
    push(layout, off, "head.b", {cfg.vocab_size});
    return layout;
}

std::size_t layout_size(const std::vector<TensorSpec>& layout) {
    return layout.empty() ? 0 : layout.back().offset + layout.back().size;
}

std::vector<ParamGroup> SinetModel::param_groups() const {
    return {ParamGroup{"encoder", encoder, true, 0}, ParamGroup{"head", head, false, 1}};
}

namespace {

std::map<std::string, Tensor> unpack(const std::vector<TensorSpec>& layout,
                                     std::span<const double> flat) {
    if (flat.size() != layout_size(layout))
        throw std::invalid_argument("sinet: packed parameter size mismatch");
    std::map<std::string, Tensor> m;
    for (const auto& spec : layout) {
        std::vector<double> v(flat.begin() + long(spec.offset),
                              flat.begin() + long(spec.offset + spec.size));
        m.emplace(spec.name, Tensor::from(spec.shape, std::move(v)));
    }
    return m;
}

std::vector<double> collect_grads(const std::vector<TensorSpec>& layout,
                                  std::map<std::string, Tensor>& tensors) {
    std::vector<double> flat(layout_size(layout), 0.0);
    for (const auto& spec : layout) {
        Tensor& t = tensors.at(spec.name);
        if (!t.has_grad()) continue;
        std::copy(t.grad().begin(), t.grad().end(), flat.begin() + long(spec.offset));
    }
    return flat;
}

void record(ForwardTrace* trace, const std::string& name, double degree, const Tensor& t) {
    if (!trace) return;
    trace->claimed_degrees.emplace_back(name, degree);
    trace->values[name] = t.data();
}

}  // namespace

SinetModel init_model(const SinetConfig& cfg, double init_scale, std::uint64_t seed) {
    cfg.validate();
    if (!(init_scale > 0.0)) throw std::invalid_argument("init_model: init_scale > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // A standard normal truncated to [-2, 2] has standard deviation
    // sqrt(1 - 4 phi(2) / (2 Phi(2) - 1)) ~= 0.8796; divide it back out so the
    // draws have the requested standard deviation exactly in expectation.
    const double phi2 = std::exp(-2.0) / std::sqrt(2.0 * M_PI);
    const double mass = std::erf(std::sqrt(2.0));  // 2 Phi(2) - 1
    const double trunc_std = std::sqrt(1.0 - 4.0 * phi2 / mass);
    auto trunc_normal = [&](double std_dev) {
        double z;
        do {
            z = normal(rng);
        } while (std::abs(z) > 2.0);
        return std_dev * z / trunc_std;
    };

    SinetModel model;
    model.cfg = cfg;
    const auto enc = encoder_layout(cfg);
    model.encoder.assign(layout_size(enc), 0.0);
    for (const auto& spec : enc) {
        double* p = model.encoder.data() + spec.offset;
        if (spec.name == "emb_ln_gain") {
            for (std::size_t i = 0; i < spec.size; ++i) p[i] = init_scale;
        } else if (spec.name == "emb_ln_bias" || spec.name.ends_with(".b1")) {
            // biases start at 0 and inherit the group scale during training
        } else {
            for (std::size_t i = 0; i < spec.size; ++i) p[i] = trunc_normal(0.02 * init_scale);
        }
    }
    const auto hd = head_layout(cfg);
    model.head.assign(layout_size(hd), 0.0);
    for (const auto& spec : hd) {
        if (spec.name == "head.b") continue;
        double* p = model.head.data() + spec.offset;
        for (std::size_t i = 0; i < spec.size; ++i) p[i] = trunc_normal(0.02);
    }
    return model;
}

Tensor si_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                    const AttentionParams& p, bool softmax_scores) {
    if (p.w_q.size() != p.w_k.size() || p.w_q.size() != p.w_v.size() ||
        p.w_q.size() != p.w_o.size() || p.w_q.empty())
        throw std::invalid_argument("si_attention: head parameter lists mismatch");
    Tensor out;
    for (std::size_t h = 0; h < p.w_q.size(); ++h) {
        Tensor s = matmul_nt(matmul(q, p.w_q[h]), matmul(k, p.w_k[h]));
        Tensor scores = softmax_scores ? softmax_rows(s) : row_normalize_sum(relu(s));
        Tensor head_out = matmul(matmul(scores, matmul(v, p.w_v[h])), p.w_o[h]);
        out = out.defined() ? add(out, head_out) : head_out;
    }
    return out;
}

Tensor encoder_layer(const Tensor& z, const EncoderLayerParams& p, bool softmax_scores) {
    Tensor n1 = layer_norm(z);
    Tensor z1 = add(z, si_attention(n1, n1, n1, p.attn, softmax_scores));
    Tensor n2 = layer_norm(z1);
    Tensor ff = matmul(relu(add_row_broadcast(matmul(n2, p.ff_w1), p.ff_b1)), p.ff_w2);
    return add(z1, ff);
}

Tensor sinet_graph(const SinetConfig& cfg, const std::map<std::string, Tensor>& enc,
                   const std::map<std::string, Tensor>& head,
                   const std::vector<std::size_t>& ids, ForwardTrace* trace) {
    cfg.validate();
    if (ids.empty() || ids.size() > cfg.max_seq_len)
        throw std::invalid_argument("sinet: sequence length out of range");
    for (auto id : ids)
        if (id >= cfg.vocab_size) throw std::out_of_range("sinet: token id out of range");

    std::vector<std::size_t> positions(ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;

    Tensor emb = add(embedding_rows(enc.at("tok_emb"), ids),
                     embedding_rows(enc.at("pos_emb"), positions));
    record(trace, "emb", 1.0, emb);
    Tensor z = layer_norm_affine(emb, enc.at("emb_ln_gain"), enc.at("emb_ln_bias"));
    record(trace, "emb_ln", 1.0, z);
    z = matmul(z, enc.at("w_in"));
    record(trace, "proj_in", 2.0, z);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        AttentionParams ap;
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::string hp = p + "h" + std::to_string(h) + ".";
            ap.w_q.push_back(enc.at(hp + "w_q"));
            ap.w_k.push_back(enc.at(hp + "w_k"));
            ap.w_v.push_back(enc.at(hp + "w_v"));
            ap.w_o.push_back(enc.at(hp + "w_o"));
        }
        Tensor n1 = layer_norm(z);
        record(trace, p + "norm1", 0.0, n1);
        Tensor attn = si_attention(n1, n1, n1, ap, cfg.softmax_attention);
        record(trace, p + "attn", 2.0, attn);
        z = add(z, attn);
        record(trace, p + "res1", 2.0, z);
        Tensor n2 = layer_norm(z);
        record(trace, p + "norm2", 0.0, n2);
        Tensor ff = matmul(
            relu(add_row_broadcast(matmul(n2, enc.at(p + "ff.w1")), enc.at(p + "ff.b1"))),
            enc.at(p + "ff.w2"));
        record(trace, p + "ff", 2.0, ff);
        z = add(z, ff);
        record(trace, p + "res2", 2.0, z);
    }

    Tensor feats = layer_norm(z);
    record(trace, "features", 0.0, feats);
    if (!cfg.head_enabled) return feats;
    Tensor logits = add_row_broadcast(matmul(feats, head.at("head.w")), head.at("head.b"));
    record(trace, "logits", 0.0, logits);
    return logits;
}

std::vector<double> sinet_forward(const SinetModel& model,
                                  const std::vector<std::size_t>& ids,
                                  ForwardTrace* trace) {
    auto enc = unpack(encoder_layout(model.cfg), model.encoder);
    auto head = unpack(head_layout(model.cfg), model.head);
    return sinet_graph(model.cfg, enc, head, ids, trace).data();
}

// ---- masked-token task --------------------------------------------------

MaskedTokenLoss::MaskedTokenLoss(SinetConfig cfg, std::size_t seq_len, double mask_rate,
                                 std::uint64_t task_seed)
    : cfg_(std::move(cfg)), seq_len_(seq_len), mask_rate_(mask_rate) {
    cfg_.validate();
    if (!cfg_.head_enabled) throw std::invalid_argument("masked-token task: head required");
    if (seq_len_ < 1 || seq_len_ > cfg_.max_seq_len)
        throw std::invalid_argument("masked-token task: seq_len out of range");
    if (!(mask_rate_ > 0.0) || !(mask_rate_ < 1.0))
        throw std::invalid_argument("masked-token task: mask_rate in (0,1) required");
    // Peaked Markov chain over tokens 1..vocab-1 (token 0 is the mask):
    // one favored successor (0.6), one secondary (0.2), rest uniform.
    const std::size_t v = cfg_.vocab_size;
    const std::size_t states = v - 1;
    transition_.assign(v * v, 0.0);
    std::mt19937_64 rng(task_seed);
    std::uniform_int_distribution<std::size_t> pick(0, states - 1);
    for (std::size_t s = 1; s < v; ++s) {
        double* row = transition_.data() + s * v;
        const std::size_t fav = 1 + pick(rng);
        std::size_t sec = 1 + pick(rng);
        if (sec == fav) sec = 1 + (sec % states);
        for (std::size_t t = 1; t < v; ++t) row[t] = 0.2 / double(states);
        row[fav] += 0.6;
        row[sec] += 0.2;
    }
}

void MaskedTokenLoss::sample_batch(std::uint64_t gamma, std::vector<std::size_t>& ids,
                                   std::vector<std::size_t>& targets,
                                   std::vector<bool>& mask) const {
    std::mt19937_64 rng(gamma);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t v = cfg_.vocab_size;
    std::uniform_int_distribution<std::size_t> start(1, v - 1);
    ids.resize(seq_len_);
    targets.resize(seq_len_);
    mask.assign(seq_len_, false);
    std::size_t state = start(rng);
    for (std::size_t i = 0; i < seq_len_; ++i) {
        if (i > 0) {
            const double* row = transition_.data() + state * v;
            double u = u01(rng), acc = 0.0;
            std::size_t next = v - 1;
            for (std::size_t t = 1; t < v; ++t) {
                acc += row[t];
                if (u <= acc) {
                    next = t;
                    break;
                }
            }
            state = next;
        }
        targets[i] = state;
        const bool m = u01(rng) < mask_rate_;
        mask[i] = m;
        ids[i] = m ? 0 : state;
    }
}

GroupedEval MaskedTokenLoss::eval(std::uint64_t gamma,
                                  const std::vector<ParamGroup>& groups) const {
    if (groups.size() != 2)
        throw std::invalid_argument("masked-token task: expects encoder + head groups");
    const auto enc_layout = encoder_layout(cfg_);
    const auto hd_layout = head_layout(cfg_);
    auto enc = unpack(enc_layout, groups[0].x);
    auto head = unpack(hd_layout, groups[1].x);

    std::vector<std::size_t> ids, targets;
    std::vector<bool> mask;
    sample_batch(gamma, ids, targets, mask);

    Tensor logits = sinet_graph(cfg_, enc, head, ids, nullptr);
    Tensor loss = cross_entropy_masked(logits, targets, mask);
    backward(loss);

    GroupedEval ev;
    ev.loss = loss.item();
    ev.grads.push_back(collect_grads(enc_layout, enc));
    ev.grads.push_back(collect_grads(hd_layout, head));
    return ev;
}

SinetEncoderLoss::SinetEncoderLoss(const MaskedTokenLoss& task, std::vector<double> head_params)
    : task_(task), head_(std::move(head_params)) {}

std::size_t SinetEncoderLoss::dim() const {
    return layout_size(encoder_layout(task_.config()));
}

Grad SinetEncoderLoss::eval(std::uint64_t gamma, std::span<const double> x) const {
    std::vector<ParamGroup> groups{
        ParamGroup{"encoder", std::vector<double>(x.begin(), x.end()), true, 0},
        ParamGroup{"head", head_, false, 1}};
    auto ev = task_.eval(gamma, groups);
    return Grad{ev.loss, std::move(ev.grads[0])};
}

Grad SinetEncoderLoss::mean_eval(std::span<const double> x) const {
    Grad acc;
    const int n = 4;
    for (int g = 0; g < n; ++g) {
        auto one = eval(std::uint64_t(g), x);
        if (acc.grad.empty()) acc.grad.assign(one.grad.size(), 0.0);
        acc.loss += one.loss / n;
        for (std::size_t i = 0; i < one.grad.size(); ++i) acc.grad[i] += one.grad[i] / n;
    }
    return acc;
}

DegreeAuditResult audit_degrees(const SinetConfig& cfg, std::uint64_t seed,
                                const std::vector<double>& scales, double tol) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto enc_layout = encoder_layout(cfg);
    const auto hd_layout = head_layout(cfg);
    // fully random parameters (biases and gains included) so that every
    // degree rule is exercised, not just the zero-bias special case
    std::vector<double> enc_flat(layout_size(enc_layout));
    for (auto& v : enc_flat) v = normal(rng);
    std::vector<double> head_flat(layout_size(hd_layout));
    for (auto& v : head_flat) v = normal(rng);
    std::vector<std::size_t> ids(std::min<std::size_t>(cfg.max_seq_len, 8));
    std::uniform_int_distribution<std::size_t> tok(0, cfg.vocab_size - 1);
    for (auto& id : ids) id = tok(rng);

    auto head = unpack(hd_layout, head_flat);
    ForwardTrace base;
    sinet_graph(cfg, unpack(enc_layout, enc_flat), head, ids, &base);

    DegreeAuditResult res;
    res.pass = true;
    for (double c : scales) {
        std::vector<double> scaled = enc_flat;
        for (auto& v : scaled) v *= c;
        ForwardTrace got;
        sinet_graph(cfg, unpack(enc_layout, scaled), head, ids, &got);
        for (const auto& [name, deg] : base.claimed_degrees) {
            const auto& a = base.values.at(name);
            const auto& b = got.values.at(name);
            const double ck = std::pow(c, deg);
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double want = ck * a[i];
                num += (want - b[i]) * (want - b[i]);
                den += want * want;
            }
            const double err = std::sqrt(num) / (std::sqrt(den) + 1e-30);
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                res.worst_name = name;
            }
        }
    }
    res.pass = res.max_rel_err <= tol;
    return res;
}

// ---- checkpoints --------------------------------------------------------

namespace {
void write_vector(std::ostream& os, const std::vector<double>& v) {
    char buf[64];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", v[i]);
        os << buf << ((i + 1) % 8 == 0 || i + 1 == v.size() ? '\n' : ' ');
    }
}

std::vector<double> read_vector(std::istream& is, std::size_t n) {
    std::vector<double> v(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated parameter block");
        char* end = nullptr;
        v[i] = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str()) throw std::runtime_error("checkpoint: bad float token");
    }
    return v;
}
}  // namespace

void save_checkpoint(const SinetModel& model, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    const auto& c = model.cfg;
    os << "silab-sinet v1\n";
    os << "n_layers " << c.n_layers << "\nd_model " << c.d_model << "\nn_heads " << c.n_heads
       << "\nd_k " << c.d_k << "\nd_v " << c.d_v << "\nvocab_size " << c.vocab_size
       << "\nmax_seq_len " << c.max_seq_len << "\nhead_enabled " << int(c.head_enabled)
       << "\nsoftmax_attention " << int(c.softmax_attention) << "\n";
    os << "group encoder scale_invariant " << model.encoder.size() << "\n";
    write_vector(os, model.encoder);
    os << "group head plain " << model.head.size() << "\n";
    write_vector(os, model.head);
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

SinetModel load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string magic, version;
    is >> magic >> version;
    if (magic != "silab-sinet" || version != "v1")
        throw std::runtime_error("checkpoint: unrecognized header");
    SinetModel model;
    auto& c = model.cfg;
    std::string key;
    int flag = 0;
    auto expect = [&](const char* want) {
        if (!(is >> key) || key != want)
            throw std::runtime_error(std::string("checkpoint: expected key ") + want);
    };
    expect("n_layers"); is >> c.n_layers;
    expect("d_model"); is >> c.d_model;
    expect("n_heads"); is >> c.n_heads;
    expect("d_k"); is >> c.d_k;
    expect("d_v"); is >> c.d_v;
    expect("vocab_size"); is >> c.vocab_size;
    expect("max_seq_len"); is >> c.max_seq_len;
    expect("head_enabled"); is >> flag; c.head_enabled = flag != 0;
    expect("softmax_attention"); is >> flag; c.softmax_attention = flag != 0;
    c.validate();

    std::string tag;
    std::size_t n = 0;
    expect("group"); is >> key >> tag >> n;
    if (key != "encoder" || n != layout_size(encoder_layout(c)))
        throw std::runtime_error("checkpoint: encoder block mismatch");
    model.encoder = read_vector(is, n);
    expect("group"); is >> key >> tag >> n;
    if (key != "head" || n != layout_size(head_layout(c)))
        throw std::runtime_error("checkpoint: head block mismatch");
    model.head = read_vector(is, n);
    return model;
}

}  // namespace silab
