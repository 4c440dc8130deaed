#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <vector>

#include "silab/sinet.hpp"

using namespace silab;

namespace {

SinetConfig small_config() {
    SinetConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_k = 4;
    cfg.d_v = 8;
    cfg.vocab_size = 16;
    cfg.max_seq_len = 8;
    return cfg;
}

std::vector<std::size_t> test_ids() { return {3, 1, 4, 1, 5, 9, 2, 6}; }

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
    }
    return std::sqrt(num) / (std::sqrt(den) + 1e-30);
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(small_config().validate());
    auto cfg = small_config();
    cfg.d_v = 4;  // d_model != n_heads * d_v
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.vocab_size = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.n_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("layouts are packed without gaps and sized consistently") {
    const auto cfg = small_config();
    const auto enc = encoder_layout(cfg);
    std::size_t expect = 0;
    for (const auto& s : enc) {
        CHECK(s.offset == expect);
        std::size_t n = 1;
        for (auto d : s.shape) n *= d;
        CHECK(n == s.size);
        expect += s.size;
    }
    CHECK(layout_size(enc) == expect);
    const auto model = init_model(cfg, 1.0, 1);
    CHECK(model.encoder.size() == layout_size(enc));
    CHECK(model.head.size() == layout_size(head_layout(cfg)));
    const auto groups = model.param_groups();
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].scale_invariant);
    CHECK_FALSE(groups[1].scale_invariant);
}

TEST_CASE("outputs are invariant to rescaling the encoder group") {
    const auto cfg = small_config();
    auto model = init_model(cfg, 1.0, 7);
    const auto base = sinet_forward(model, test_ids());
    for (double c : {1e-2, 1e2}) {
        auto scaled = model;
        for (auto& v : scaled.encoder) v *= c;
        CHECK(rel_l2(base, sinet_forward(scaled, test_ids())) <= 1e-6);
    }
}

TEST_CASE("per-intermediate degree audit") {
    auto cfg = small_config();
    CHECK(audit_degrees(cfg, 3, {1e-2, 0.5, 2.0, 1e2}).pass);
    cfg.softmax_attention = true;
    const auto bad = audit_degrees(cfg, 3, {1e-2, 0.5, 2.0, 1e2});
    CHECK_FALSE(bad.pass);
    CHECK(bad.max_rel_err > 1e-3);
}

TEST_CASE("uniform attention scores average the value rows") {
    // Single head, d_k = 1, w_q = w_k = e_1: every score is 1, so the
    // normalized score matrix is uniform and each output row is the mean of
    // the value rows (w_v = w_o = I).
    const std::size_t n = 4, d = 2;
    std::vector<double> qk(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) qk[i * d] = 1.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> vv(n * d);
    for (auto& x : vv) x = u(rng);

    AttentionParams p;
    p.w_q.push_back(Tensor::from({d, 1}, {1.0, 0.0}));
    p.w_k.push_back(Tensor::from({d, 1}, {1.0, 0.0}));
    p.w_v.push_back(Tensor::from({d, d}, {1.0, 0.0, 0.0, 1.0}));
    p.w_o.push_back(Tensor::from({d, d}, {1.0, 0.0, 0.0, 1.0}));
    const Tensor out = si_attention(Tensor::from({n, d}, qk), Tensor::from({n, d}, qk),
                                    Tensor::from({n, d}, vv), p);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += vv[i * d + j] / n;
        for (std::size_t i = 0; i < n; ++i)
            CHECK(out.data()[i * d + j] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("initialization statistics") {
    SinetConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.d_k = 8;
    cfg.d_v = 8;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 32;
    for (double scale : {1.0, 3.0}) {
        const auto model = init_model(cfg, scale, 11);
        const auto enc = encoder_layout(cfg);
        double sum = 0.0, sum2 = 0.0;
        std::size_t n = 0;
        for (const auto& s : enc) {
            const bool is_weight = s.name.find("gain") == std::string::npos &&
                                   s.name.find("bias") == std::string::npos &&
                                   !s.name.ends_with(".b1");
            const double* p = model.encoder.data() + s.offset;
            for (std::size_t i = 0; i < s.size; ++i) {
                if (is_weight) {
                    sum += p[i];
                    sum2 += p[i] * p[i];
                    ++n;
                } else if (s.name.find("gain") != std::string::npos) {
                    CHECK(p[i] == scale);
                } else {
                    CHECK(p[i] == 0.0);
                }
            }
        }
        REQUIRE(n >= 10000);
        const double mean = sum / n;
        const double stdev = std::sqrt(sum2 / n - mean * mean);
        CHECK(std::abs(mean) <= 0.001 * scale);
        CHECK(stdev == doctest::Approx(0.02 * scale).epsilon(0.05));
        // cut at 2 target-std before the variance correction (~2.27 after)
        for (const auto& s : enc)
            if (s.name.find("gain") == std::string::npos)
                for (std::size_t i = 0; i < s.size; ++i)
                    CHECK(std::abs(model.encoder[s.offset + i]) <= 0.046 * scale);
    }
}

TEST_CASE("masked-token loss at a random init is near ln(vocab)") {
    const auto cfg = small_config();
    MaskedTokenLoss task(cfg, 8, 0.3, 99);
    const auto model = init_model(cfg, 1.0, 21);
    auto groups = model.param_groups();
    double mean_loss = 0.0;
    const int reps = 8;
    for (int g = 0; g < reps; ++g) mean_loss += task.eval(g, groups).loss / reps;
    CHECK(mean_loss == doctest::Approx(std::log(double(cfg.vocab_size))).epsilon(0.10));
}

TEST_CASE("encoder gradients are orthogonal to the encoder parameters") {
    const auto cfg = small_config();
    MaskedTokenLoss task(cfg, 8, 0.25, 123);
    const auto model = init_model(cfg, 1.0, 31);
    SinetEncoderLoss flat(task, model.head);
    REQUIRE(flat.dim() == model.encoder.size());
    for (std::uint64_t gamma = 0; gamma < 5; ++gamma) {
        const Grad g = flat.eval(gamma, model.encoder);
        double dot = 0.0, gn = 0.0, xn = 0.0;
        for (std::size_t i = 0; i < model.encoder.size(); ++i) {
            dot += g.grad[i] * model.encoder[i];
            gn += g.grad[i] * g.grad[i];
            xn += model.encoder[i] * model.encoder[i];
        }
        CHECK(std::abs(dot) <= 1e-8 * (std::sqrt(gn) * std::sqrt(xn) + 1e-30));
    }
}

TEST_CASE("batch sampling is deterministic and respects the mask contract") {
    const auto cfg = small_config();
    MaskedTokenLoss task(cfg, 8, 0.4, 7);
    std::vector<std::size_t> ids1, ids2, tg1, tg2;
    std::vector<bool> m1, m2;
    task.sample_batch(42, ids1, tg1, m1);
    task.sample_batch(42, ids2, tg2, m2);
    CHECK(ids1 == ids2);
    CHECK(tg1 == tg2);
    CHECK(m1 == m2);
    REQUIRE(ids1.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        if (m1[i]) {
            CHECK(ids1[i] == 0);  // masked positions carry the reserved token
            CHECK(tg1[i] >= 1);
            CHECK(tg1[i] < cfg.vocab_size);
        } else {
            CHECK(ids1[i] >= 1);
        }
    }
    // different gammas give different batches
    std::vector<std::size_t> ids3, tg3;
    std::vector<bool> m3;
    task.sample_batch(43, ids3, tg3, m3);
    CHECK((ids1 != ids3 || m1 != m3));
}

TEST_CASE("checkpoints round trip bit-exactly") {
    const auto cfg = small_config();
    const auto model = init_model(cfg, 2.5, 77);
    const std::string path = "test_sinet_ckpt.tmp";
    save_checkpoint(model, path);
    const auto back = load_checkpoint(path);
    CHECK(back.cfg.d_model == cfg.d_model);
    CHECK(back.cfg.n_layers == cfg.n_layers);
    CHECK(back.encoder == model.encoder);  // bitwise
    CHECK(back.head == model.head);
    std::remove(path.c_str());

    // corrupt header is rejected
    {
        FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("not-a-checkpoint v9\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}
