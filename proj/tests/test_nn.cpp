#include "nn/nn.hpp"

#include <cmath>
#include <set>

#include "doctest.h"
#include "nn/segnet.hpp"
#include "nn/unet.hpp"
#include "testutil.hpp"

using namespace dreampast;
using dptest::check_grad_buffer;

namespace {

Mat random_mat(int r, int c, uint64_t seed) {
    Mat m(r, c);
    Rng rng(seed);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("nn: pick_groups returns the largest divisor within the budget") {
    CHECK(pick_groups(12, 8) == 6);
    CHECK(pick_groups(16, 8) == 8);
    CHECK(pick_groups(7, 4) == 1);
    CHECK(pick_groups(8, 3) == 2);
    CHECK(pick_groups(6, 6) == 6);
    CHECK(pick_groups(5, 20) == 5);
}

TEST_CASE("nn: conv gradients match finite differences") {
    struct Fixture {
        int cin, cout, ksz, stride, h, w;
    };
    for (Fixture f : {Fixture{2, 3, 3, 1, 4, 5}, Fixture{3, 2, 1, 1, 4, 4},
                      Fixture{2, 4, 3, 2, 5, 5}}) {
        CAPTURE(f.ksz);
        CAPTURE(f.stride);
        Rng rng(7);
        Conv conv;
        conv.init(f.cin, f.cout, f.ksz, f.stride, rng);
        Mat x = random_mat(f.cin, f.h * f.w, 11);
        Mat wsum = random_mat(f.cout, conv.hout(f.h) * conv.wout(f.w), 13);

        auto loss = [&] { return (conv.forward(x, f.h, f.w).array() * wsum.array()).sum(); };

        conv.gw.setZero();
        conv.gb.setZero();
        loss();  // populate saved activations
        Mat dx = conv.backward(wsum);
        Mat gw = conv.gw;
        Vec gb = conv.gb;

        check_grad_buffer(conv.w.data(), gw.data(), size_t(conv.w.size()), loss, 8);
        check_grad_buffer(conv.b.data(), gb.data(), size_t(conv.b.size()), loss, 4);
        check_grad_buffer(x.data(), dx.data(), size_t(x.size()), loss, 8);
    }
}

TEST_CASE("nn: group norm gradients match finite differences") {
    Rng rng(3);
    GroupNorm gn;
    gn.init(4, 2);
    // non-trivial scale/shift so the gamma/beta paths are exercised
    for (int i = 0; i < 4; ++i) gn.gamma[i] = 0.5 + 0.3 * i, gn.beta[i] = 0.1 * i - 0.2;

    Mat x = random_mat(4, 6, 21);
    Mat wsum = random_mat(4, 6, 22);
    auto loss = [&] { return (gn.forward(x).array() * wsum.array()).sum(); };

    gn.ggamma.setZero();
    gn.gbeta.setZero();
    loss();
    Mat dx = gn.backward(wsum);
    Vec ggamma = gn.ggamma, gbeta = gn.gbeta;

    check_grad_buffer(gn.gamma.data(), ggamma.data(), 4, loss, 4);
    check_grad_buffer(gn.beta.data(), gbeta.data(), 4, loss, 4);
    check_grad_buffer(x.data(), dx.data(), size_t(x.size()), loss, 10);
}

TEST_CASE("nn: group norm output is normalized per group") {
    GroupNorm gn;
    gn.init(4, 2);  // groups {0,1} and {2,3}
    Mat x = random_mat(4, 50, 5);
    Mat y = gn.forward(x);
    for (int g = 0; g < 2; ++g) {
        double sum = 0.0, sq = 0.0;
        int n = 2 * 50;
        for (int c = 2 * g; c < 2 * g + 2; ++c)
            for (int j = 0; j < 50; ++j) sum += y(c, j), sq += y(c, j) * y(c, j);
        double mean = sum / n, var = sq / n - mean * mean;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
    }
}

TEST_CASE("nn: silu value and gradient") {
    SiLU act;
    Mat x(1, 3);
    x << -1.0, 0.0, 1.0;
    Mat y = act.forward(x);
    CHECK(y(0, 0) == doctest::Approx(-1.0 / (1.0 + std::exp(1.0))));
    CHECK(y(0, 1) == 0.0);
    CHECK(y(0, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

    Mat xs = random_mat(3, 7, 8);
    Mat wsum = random_mat(3, 7, 9);
    auto loss = [&] { return (act.forward(xs).array() * wsum.array()).sum(); };
    loss();
    Mat dx = act.backward(wsum);
    check_grad_buffer(xs.data(), dx.data(), size_t(xs.size()), loss, 10);
}

TEST_CASE("nn: linear gradients match finite differences") {
    Rng rng(4);
    Linear lin;
    lin.init(5, 3, rng);
    Vec x(5);
    Rng(6).fill_normal(x.data(), 5);
    Vec wsum(3);
    Rng(7).fill_normal(wsum.data(), 3);

    auto loss = [&] { return lin.forward(x).dot(wsum); };
    lin.gw.setZero();
    lin.gb.setZero();
    loss();
    Vec dx = lin.backward(wsum);
    Mat gw = lin.gw;
    Vec gb = lin.gb;

    check_grad_buffer(lin.w.data(), gw.data(), size_t(lin.w.size()), loss, 8);
    check_grad_buffer(lin.b.data(), gb.data(), 3, loss, 3);
    check_grad_buffer(x.data(), dx.data(), 5, loss, 5);
}

TEST_CASE("nn: upsample backward is the exact adjoint") {
    const int c = 3, h = 4, w = 5;
    Mat x = random_mat(c, h * w, 31);
    Mat y = random_mat(c, 4 * h * w, 32);

    Mat up = upsample2_forward(x, h, w);
    REQUIRE(up.rows() == c);
    REQUIRE(up.cols() == 4 * h * w);
    Mat down = upsample2_backward(y, h, w);

    double lhs = (up.array() * y.array()).sum();
    double rhs = (x.array() * down.array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

    // nearest neighbor: each source pixel appears in its 2x2 block
    for (int yy = 0; yy < 2 * h; ++yy)
        for (int xx = 0; xx < 2 * w; ++xx)
            CHECK(up(1, yy * 2 * w + xx) == x(1, (yy / 2) * w + xx / 2));
}

TEST_CASE("nn: conv init follows the fan-in scaling") {
    Rng rng(12);
    Conv conv;
    conv.init(8, 64, 3, 1, rng);
    double sq = 0.0;
    for (int i = 0; i < conv.w.size(); ++i) sq += conv.w.data()[i] * conv.w.data()[i];
    double std_emp = std::sqrt(sq / double(conv.w.size()));
    CHECK(std_emp == doctest::Approx(std::sqrt(2.0 / (8 * 9))).epsilon(0.05));
    CHECK(conv.b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nn: sgd applies momentum the classic way") {
    Mat w(1, 1), g(1, 1);
    w(0, 0) = 1.0;
    ParamSet ps;
    ps.add("w", w, g);

    Sgd opt;
    opt.momentum = 0.9;
    opt.init(ps);

    g(0, 0) = 0.5;
    opt.step(ps, 0.1);
    CHECK(w(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));  // v = 0.5

    g(0, 0) = 0.5;
    opt.step(ps, 0.1);
    // v = 0.9*0.5 + 0.5 = 0.95
    CHECK(w(0, 0) == doctest::Approx(0.95 - 0.1 * 0.95));
}

TEST_CASE("nn: adam first steps match the reference formula") {
    Mat w(1, 1), g(1, 1);
    w(0, 0) = 2.0;
    ParamSet ps;
    ps.add("w", w, g);

    Adam opt;
    CHECK_FALSE(opt.initialized());
    opt.init(ps);
    CHECK(opt.initialized());

    double lr = 1e-2, grad = 0.3;
    double m = 0, v = 0, wref = 2.0;
    for (int t = 1; t <= 3; ++t) {
        g(0, 0) = grad;
        opt.step(ps, lr);
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        double mhat = m / (1.0 - std::pow(0.9, t));
        double vhat = v / (1.0 - std::pow(0.999, t));
        wref -= lr * mhat / (std::sqrt(vhat) + 1e-8);
        CHECK(w(0, 0) == doctest::Approx(wref).epsilon(1e-12));
    }
    CHECK(opt.t() == 3);
}

TEST_CASE("nn: adam state survives a checkpoint round trip") {
    dptest::TmpDir tmp("adam");
    Mat w(2, 2), g(2, 2);
    w.setConstant(1.0);
    ParamSet ps;
    ps.add("w", w, g);

    Adam a;
    a.init(ps);
    Rng rng(5);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) g.data()[j] = rng.normal();
        a.step(ps, 1e-3);
    }

    {
        CkptWriter wr("opt", json::object());
        a.save(wr);
        wr.write(tmp / "a.ckpt");
    }
    Adam b;
    b.load(CkptReader(tmp / "a.ckpt"));
    CHECK(b.t() == a.t());

    // saving the restored state reproduces the same bytes (f32 fixed point)
    {
        CkptWriter wr("opt", json::object());
        b.save(wr);
        wr.write(tmp / "b.ckpt");
    }
    CHECK(fnv1a64_file(tmp / "a.ckpt") == fnv1a64_file(tmp / "b.ckpt"));

    // two optimizers restored from the same state step identically
    Mat w2 = w, g2 = g;
    ParamSet ps2;
    ps2.add("w", w2, g2);
    Adam c;
    c.load(CkptReader(tmp / "a.ckpt"));
    g.setConstant(0.25);
    g2.setConstant(0.25);
    b.step(ps, 1e-3);
    c.step(ps2, 1e-3);
    CHECK(w(0, 0) == w2(0, 0));
    CHECK(w(1, 1) == w2(1, 1));
}

TEST_CASE("nn: poly decay endpoints and midpoint") {
    CHECK(poly_lr(1.0, 0, 100) == doctest::Approx(1.0));
    CHECK(poly_lr(1.0, 100, 100) == doctest::Approx(0.0));
    CHECK(poly_lr(2.0, 50, 100, 1.0) == doctest::Approx(1.0));
    CHECK(poly_lr(1.0, 50, 100, 0.9) == doctest::Approx(std::pow(0.5, 0.9)));
    CHECK(poly_lr(1.0, 120, 100) == doctest::Approx(0.0));  // clamped past the end
}

TEST_CASE("nn: sinusoidal embeddings are bounded and separate timesteps") {
    Vec e0 = sinusoidal_embedding(0, 16);
    Vec e1 = sinusoidal_embedding(1, 16);
    Vec e500 = sinusoidal_embedding(500, 16);
    REQUIRE(e0.size() == 16);
    CHECK(e0.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    CHECK(e500.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    CHECK((e0 - e1).norm() > 1e-3);
    CHECK((e1 - e500).norm() > 1e-3);
    // deterministic
    CHECK((sinusoidal_embedding(500, 16) - e500).norm() == 0.0);
}

TEST_CASE("nn: param set bookkeeping") {
    Mat w1(2, 3), g1(2, 3);
    Vec w2(4), g2(4);
    w1.setConstant(1.5);
    w2.setConstant(-0.5);
    g1.setConstant(9.0);
    g2.setConstant(9.0);

    ParamSet ps;
    ps.add("a", w1, g1);
    ps.add("b", w2, g2);
    CHECK(ps.total() == 10);
    REQUIRE(ps.refs().size() == 2);
    CHECK(ps.refs()[0].name == "a");
    CHECK(ps.refs()[0].shape == std::vector<int64_t>{2, 3});

    ps.zero_grad();
    CHECK(g1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g2.cwiseAbs().maxCoeff() == 0.0);

    uint64_t h0 = ps.value_hash();
    w1(0, 0) += 1.0;
    CHECK(ps.value_hash() != h0);

    Mat w1c(2, 3), g1c(2, 3);
    Vec w2c(4), g2c(4);
    ParamSet pc;
    pc.add("a", w1c, g1c);
    pc.add("b", w2c, g2c);
    pc.copy_values_from(ps);
    CHECK(pc.value_hash() == ps.value_hash());
    CHECK(w1c(0, 0) == 2.5);

    dptest::TmpDir tmp("ps");
    {
        CkptWriter wr("demo", json::object());
        ps.save(wr);
        wr.write(tmp / "p.ckpt");
    }
    w1.setZero();
    w2.setZero();
    ps.load(CkptReader(tmp / "p.ckpt"));
    CHECK(ps.value_hash() == pc.value_hash());
}

TEST_CASE("nn: unet gradients match finite differences") {
    UNetConfig cfg;
    cfg.base = 4;
    cfg.cond_dim = 8;
    cfg.groups = 2;
    cfg.num_embeddings = 3;
    Rng rng(19);
    UNet net(cfg, rng);

    const int h = 8, w = 8;
    Mat x = 0.25 * random_mat(3, h * w, 41);
    EdgeMap edge(h, w);
    Rng er(42);
    for (auto& v : edge.v) v = uint8_t(er.bernoulli(0.3));
    Mat wsum = 0.5 * random_mat(3, h * w, 43);

    SUBCASE("class-conditioned path, including the embedding table") {
        auto loss = [&] {
            return (net.forward(x, h, w, &edge, 17, 2, nullptr).array() * wsum.array()).sum();
        };
        net.params().zero_grad();
        loss();
        net.backward(wsum);
        for (const auto& r : net.params().refs()) {
            std::vector<double> g(r.g, r.g + r.n);
            CAPTURE(r.name);
            check_grad_buffer(r.w, g.data(), r.n, loss, 2, 1e-5, 5e-4, 1e-6);
        }
    }

    SUBCASE("token path exposes the conditioning gradient") {
        Vec token = net.class_embedding(1);
        auto loss = [&] {
            return (net.forward(x, h, w, nullptr, 99, -1, &token).array() * wsum.array()).sum();
        };
        net.params().zero_grad();
        loss();
        net.backward(wsum);
        Vec dtok = net.last_dcemb();
        REQUIRE(dtok.size() == token.size());
        check_grad_buffer(token.data(), dtok.data(), size_t(token.size()), loss, 6, 1e-5,
                          5e-4, 1e-6);
    }
}

TEST_CASE("nn: unet conditioning actually changes the output") {
    UNetConfig cfg;
    cfg.base = 4;
    cfg.cond_dim = 8;
    cfg.groups = 2;
    cfg.num_embeddings = 4;
    Rng rng(20);
    UNet net(cfg, rng);

    const int h = 8, w = 8;
    Mat x = 0.25 * random_mat(3, h * w, 44);
    EdgeMap edge(h, w);
    for (int y = 0; y < h; ++y) edge.at(y, 4) = 1;

    Mat uncond = net.forward(x, h, w, nullptr, 10, -1, nullptr);
    Mat cls2 = net.forward(x, h, w, nullptr, 10, 2, nullptr);
    Mat cls3 = net.forward(x, h, w, nullptr, 10, 3, nullptr);
    Mat edged = net.forward(x, h, w, &edge, 10, -1, nullptr);
    Mat tau2 = net.forward(x, h, w, nullptr, 500, -1, nullptr);

    CHECK((cls2 - uncond).norm() > 1e-8);
    CHECK((cls3 - cls2).norm() > 1e-8);
    CHECK((edged - uncond).norm() > 1e-8);
    CHECK((tau2 - uncond).norm() > 1e-8);

    // the token path with the class's own embedding reproduces the class path
    Vec tok = net.class_embedding(2);
    Mat via_token = net.forward(x, h, w, nullptr, 10, -1, &tok);
    CHECK((via_token - cls2).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nn: unet save/load round trips values and meta") {
    dptest::TmpDir tmp("unet");
    UNetConfig cfg;
    cfg.base = 4;
    cfg.cond_dim = 8;
    cfg.groups = 2;
    cfg.num_embeddings = 3;
    Rng rng(23);
    UNet net(cfg, rng);

    net.save(tmp / "n.ckpt", json{{"purpose", "test"}});
    json meta;
    auto back = UNet::load(tmp / "n.ckpt", &meta);
    CHECK(meta.at("purpose") == "test");
    CHECK(back->config().base == 4);
    CHECK(back->params().value_hash() == net.params().value_hash());

    auto cl = net.clone();
    CHECK(cl->params().value_hash() == net.params().value_hash());
    // clone is detached storage
    net.params().refs()[0].w[0] += 1.0;
    CHECK(cl->params().value_hash() != net.params().value_hash());
}

TEST_CASE("nn: segnet gradients match finite differences") {
    SegNetConfig cfg;
    cfg.base = 4;
    cfg.groups = 2;
    Rng rng(29);
    SegNet net(cfg, 3, rng);

    const int h = 8, w = 8;
    Mat x = 0.25 * random_mat(3, h * w, 51);
    Mat wsum = 0.5 * random_mat(3, h * w, 52);

    auto loss = [&] { return (net.forward(x, h, w).array() * wsum.array()).sum(); };
    net.params().zero_grad();
    loss();
    net.backward(wsum);
    for (const auto& r : net.params().refs()) {
        std::vector<double> g(r.g, r.g + r.n);
        CAPTURE(r.name);
        check_grad_buffer(r.w, g.data(), r.n, loss, 2, 1e-5, 5e-4, 1e-6);
    }
}

TEST_CASE("nn: extending the head keeps old logits bit-identical") {
    SegNetConfig cfg;
    cfg.base = 4;
    cfg.groups = 2;
    Rng rng(31);
    SegNet net(cfg, 3, rng);

    const int h = 8, w = 8;
    Mat x = 0.25 * random_mat(3, h * w, 53);
    Mat before = net.forward(x, h, w);

    Rng head_rng(77);
    net.extend_head(2, head_rng);
    CHECK(net.num_classes() == 5);
    Mat after = net.forward(x, h, w);
    REQUIRE(after.rows() == 5);

    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < h * w; ++j) CHECK(after(c, j) == before(c, j));

    // fresh rows start near zero: tiny init noise times bounded features
    CHECK(after.block(3, 0, 2, h * w).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("nn: segnet save/load/clone round trips") {
    dptest::TmpDir tmp("segnet");
    SegNetConfig cfg;
    cfg.base = 4;
    cfg.groups = 2;
    Rng rng(37);
    SegNet net(cfg, 4, rng);

    net.save(tmp / "s.ckpt", json{{"class_ids", {0, 1, 2, 3}}});
    json meta;
    auto back = SegNet::load(tmp / "s.ckpt", &meta);
    CHECK(back->num_classes() == 4);
    CHECK(meta.at("class_ids") == json({0, 1, 2, 3}));
    CHECK(back->params().value_hash() == net.params().value_hash());

    // loaded model computes identical logits (values were already f32 on disk)
    const int h = 4, w = 4;
    Mat x = 0.25 * random_mat(3, h * w, 54);
    Mat a = back->forward(x, h, w);
    auto cl = back->clone();
    Mat b = cl->forward(x, h, w);
    CHECK((a - b).norm() == 0.0);
}
