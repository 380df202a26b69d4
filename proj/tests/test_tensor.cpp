#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "camf/rng.hpp"
#include "camf/tensor.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using camf::Tensor;
using testutil::grad_check;
using testutil::max_rel_err;
using testutil::rand_tensor;

TEST_CASE("tensor construction validates shape and finiteness") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({0, 4}, {}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), std::invalid_argument);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("matmul identity and hand cases") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor r = camf::matmul(eye, a);
    CHECK(r.data() == a.data());

    Tensor row({1, 2}, {1, 2});
    Tensor col({2, 1}, {3, 4});
    CHECK(camf::matmul(row, col).value() == 11.0);

    CHECK_THROWS_WITH_AS(camf::matmul(a, row), doctest::Contains("[2,2]"),
                         std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
    camf::Rng rng(11);
    Tensor a = rand_tensor({3, 4}, rng);
    Tensor b = rand_tensor({4, 2}, rng);
    double err_a = grad_check(
        [&](const Tensor& x) { return camf::sum(camf::matmul(x, b)); }, a);
    CHECK(err_a < 1e-6);
    double err_b = grad_check(
        [&](const Tensor& x) { return camf::sum(camf::matmul(a, x)); }, b);
    CHECK(err_b < 1e-6);
}

TEST_CASE("matmul_nt equals matmul with transposed operand") {
    camf::Rng rng(12);
    Tensor a = rand_tensor({3, 5}, rng);
    Tensor b = rand_tensor({4, 5}, rng);
    Tensor r = camf::matmul_nt(a, b);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(j, k);
            CHECK(r.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    double err = grad_check(
        [&](const Tensor& x) { return camf::sum(camf::matmul_nt(a, x)); }, b);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax symmetry, shift invariance, oracle") {
    Tensor z({4}, {0, 0, 0, 0});
    Tensor uniform = camf::softmax(z);
    for (double v : uniform.data()) CHECK(v == 0.25);

    camf::Rng rng(13);
    Tensor x = rand_tensor({6}, rng);
    Tensor shifted = camf::softmax(camf::add(x, Tensor::full({6}, 3.7)));
    Tensor base = camf::softmax(x);
    for (size_t i = 0; i < 6; ++i)
        CHECK(std::fabs(shifted.at(i) - base.at(i)) < 1e-12);

    Tensor t({3}, {1, 2, 3});
    auto expect = oracle::softmax({1, 2, 3});
    Tensor got = camf::softmax(t);
    for (size_t i = 0; i < 3; ++i) CHECK(std::fabs(got.at(i) - expect[i]) < 1e-12);
    // frozen values from the exp/normalize formula
    CHECK(got.at(0) == doctest::Approx(0.09003057317038046).epsilon(1e-12));
    CHECK(got.at(1) == doctest::Approx(0.24472847105479767).epsilon(1e-12));
    CHECK(got.at(2) == doctest::Approx(0.6652409557748219).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive") {
    camf::Rng rng(14);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor x = rand_tensor({4, 7}, rng, -30.0, 30.0);
        Tensor y = camf::softmax(x);
        for (size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (size_t j = 0; j < 7; ++j) {
                CHECK(y.at(i, j) > 0.0);
                s += y.at(i, j);
            }
            CHECK(std::fabs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax gradient") {
    camf::Rng rng(15);
    Tensor x = rand_tensor({2, 5}, rng);
    Tensor w = rand_tensor({2, 5}, rng);
    double err = grad_check(
        [&](const Tensor& t) { return camf::sum(camf::mul(camf::softmax(t), w)); }, x);
    CHECK(err < 1e-4);
}

TEST_CASE("activations at anchor points") {
    Tensor x({4}, {-1.0, 2.0, 0.0, 0.0});
    CHECK(camf::relu(x).at(0) == 0.0);
    CHECK(camf::relu(x).at(1) == 2.0);
    CHECK(camf::sigmoid(x).at(2) == 0.5);
    CHECK(camf::tanh(x).at(3) == 0.0);
}

TEST_CASE("activation gradients match finite differences") {
    camf::Rng rng(16);
    Tensor x = rand_tensor({3, 4}, rng);
    Tensor w = rand_tensor({3, 4}, rng);
    auto weighted = [&](auto op) {
        return [&, op](const Tensor& t) { return camf::sum(camf::mul(op(t), w)); };
    };
    CHECK(grad_check(weighted([](const Tensor& t) { return camf::relu(t); }), x) < 1e-6);
    CHECK(grad_check(weighted([](const Tensor& t) { return camf::sigmoid(t); }), x) < 1e-6);
    CHECK(grad_check(weighted([](const Tensor& t) { return camf::tanh(t); }), x) < 1e-6);
}

TEST_CASE("reduce_mean_std identical rows are exact") {
    camf::Rng rng(17);
    std::vector<double> row(8);
    for (auto& v : row) v = rng.uniform(-5, 5);
    std::vector<double> stacked;
    for (int i = 0; i < 6; ++i) stacked.insert(stacked.end(), row.begin(), row.end());
    auto [mu, sd] = camf::reduce_mean_std(Tensor({6, 8}, stacked));
    for (size_t j = 0; j < 8; ++j) {
        CHECK(mu.at(j) == row[j]);  // bit-exact
        CHECK(sd.at(j) == 0.0);
    }
}

TEST_CASE("reduce_mean_std two-point case and oracle") {
    auto [mu, sd] = camf::reduce_mean_std(Tensor({2, 1}, {1.0, 3.0}));
    CHECK(mu.at(0) == 2.0);
    CHECK(sd.at(0) == 1.0);

    camf::Rng rng(18);
    Tensor x = rand_tensor({6, 8}, rng);
    oracle::Mat m(6, oracle::Vec(8));
    for (size_t i = 0; i < 6; ++i)
        for (size_t j = 0; j < 8; ++j) m[i][j] = x.at(i, j);
    auto [omu, osd] = oracle::two_pass_mean_std(m);
    auto [mu2, sd2] = camf::reduce_mean_std(x);
    for (size_t j = 0; j < 8; ++j) {
        CHECK(std::fabs(mu2.at(j) - omu[j]) < 1e-12);
        CHECK(std::fabs(sd2.at(j) - osd[j]) < 1e-12);
    }
}

TEST_CASE("reduce_mean_std gradients") {
    camf::Rng rng(19);
    Tensor x = rand_tensor({5, 3}, rng);
    Tensor w = rand_tensor({3}, rng);
    CHECK(grad_check([&](const Tensor& t) {
              return camf::sum(camf::mul(camf::mean_rows(t), w));
          }, x) < 1e-6);
    CHECK(grad_check([&](const Tensor& t) {
              return camf::sum(camf::mul(camf::std_rows(t), w));
          }, x) < 1e-5);
}

TEST_CASE("dense identity, zero input, and composition oracle") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor zero_b = Tensor::zeros({3});
    camf::Rng rng(20);
    Tensor x = rand_tensor({4, 3}, rng);
    Tensor same = camf::dense(x, eye, zero_b);
    CHECK(same.data() == x.data());

    Tensor b({3}, {7, 8, 9});
    Tensor z = Tensor::zeros({2, 3});
    Tensor broadcast = camf::dense(z, eye, b);
    for (size_t i = 0; i < 2; ++i)
        for (size_t j = 0; j < 3; ++j) CHECK(broadcast.at(i, j) == b.at(j));

    Tensor W = rand_tensor({3, 5}, rng);
    Tensor bb = rand_tensor({5}, rng);
    Tensor got = camf::dense(x, W, bb);
    Tensor via = camf::matmul(x, W);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 5; ++j)
            CHECK(std::fabs(got.at(i, j) - (via.at(i, j) + bb.at(j))) < 1e-12);

    // rank-1 input
    Tensor v = rand_tensor({3}, rng);
    Tensor out1 = camf::dense(v, W, bb);
    CHECK(out1.rank() == 1);
    for (size_t j = 0; j < 5; ++j) {
        double s = bb.at(j);
        for (size_t k = 0; k < 3; ++k) s += v.at(k) * W.at(k, j);
        CHECK(std::fabs(out1.at(j) - s) < 1e-12);
    }
}

TEST_CASE("conv1d_k1 degenerates to dense bit-identically") {
    camf::Rng rng(21);
    Tensor x = rand_tensor({6, 4}, rng);
    Tensor W = rand_tensor({4, 3}, rng);
    Tensor b = rand_tensor({3}, rng);
    CHECK(camf::conv1d_k1(x, W, b).data() == camf::dense(x, W, b).data());

    // per-timestep matmul oracle
    Tensor got = camf::conv1d_k1(x, W, b);
    for (size_t t = 0; t < 6; ++t)
        for (size_t o = 0; o < 3; ++o) {
            double s = b.at(o);
            for (size_t c = 0; c < 4; ++c) s += x.at(t, c) * W.at(c, o);
            CHECK(std::fabs(got.at(t, o) - s) < 1e-12);
        }
}

TEST_CASE("lstm_seq zero parameters give zero output") {
    camf::Rng rng(22);
    Tensor x = rand_tensor({5, 3}, rng);
    Tensor out = camf::lstm_seq(x, Tensor::zeros({3, 8}), Tensor::zeros({2, 8}),
                                Tensor::zeros({8}), Tensor::zeros({2}), Tensor::zeros({2}));
    CHECK(out.rows() == 5);
    CHECK(out.cols() == 2);
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm_seq single step matches the gate-formula oracle") {
    camf::Rng rng(23);
    const size_t I = 3, U = 2;
    Tensor x = rand_tensor({1, I}, rng);
    Tensor W = rand_tensor({I, 4 * U}, rng);
    Tensor Ur = rand_tensor({U, 4 * U}, rng);
    Tensor b = rand_tensor({4 * U}, rng);
    Tensor h0 = rand_tensor({U}, rng);
    Tensor c0 = rand_tensor({U}, rng);

    oracle::Vec xv(I), h0v(U), c0v(U), bv(4 * U);
    oracle::Mat Wv(I, oracle::Vec(4 * U)), Uv(U, oracle::Vec(4 * U));
    for (size_t k = 0; k < I; ++k) xv[k] = x.at(0, k);
    for (size_t k = 0; k < U; ++k) h0v[k] = h0.at(k), c0v[k] = c0.at(k);
    for (size_t k = 0; k < 4 * U; ++k) bv[k] = b.at(k);
    for (size_t r = 0; r < I; ++r)
        for (size_t c = 0; c < 4 * U; ++c) Wv[r][c] = W.at(r, c);
    for (size_t r = 0; r < U; ++r)
        for (size_t c = 0; c < 4 * U; ++c) Uv[r][c] = Ur.at(r, c);

    auto [h1, c1] = oracle::lstm_cell(xv, h0v, c0v, Wv, Uv, bv);
    Tensor out = camf::lstm_seq(x, W, Ur, b, h0, c0);
    for (size_t u = 0; u < U; ++u) CHECK(std::fabs(out.at(0, u) - h1[u]) < 1e-12);
}

TEST_CASE("lstm_seq parameter gradients match finite differences") {
    camf::Rng rng(24);
    const size_t T = 3, I = 2, U = 2;
    Tensor x = rand_tensor({T, I}, rng, -1, 1);
    Tensor W = rand_tensor({I, 4 * U}, rng, -1, 1);
    Tensor Ur = rand_tensor({U, 4 * U}, rng, -1, 1);
    Tensor b = rand_tensor({4 * U}, rng, -1, 1);
    Tensor h0 = Tensor::zeros({U});
    Tensor c0 = Tensor::zeros({U});
    auto loss_w = [&](const Tensor& t) {
        return camf::sum(camf::lstm_seq(x, t, Ur, b, h0, c0));
    };
    auto loss_u = [&](const Tensor& t) {
        return camf::sum(camf::lstm_seq(x, W, t, b, h0, c0));
    };
    auto loss_b = [&](const Tensor& t) {
        return camf::sum(camf::lstm_seq(x, W, Ur, t, h0, c0));
    };
    auto loss_x = [&](const Tensor& t) {
        return camf::sum(camf::lstm_seq(t, W, Ur, b, h0, c0));
    };
    CHECK(grad_check(loss_w, W) < 1e-5);
    CHECK(grad_check(loss_u, Ur) < 1e-5);
    CHECK(grad_check(loss_b, b) < 1e-5);
    CHECK(grad_check(loss_x, x) < 1e-5);
}

TEST_CASE("backward fills leaves, zeros unused, rejects abuse") {
    Tensor w({3}, {1, 2, 3}, true);
    Tensor unused({2}, {5, 6}, true);
    Tensor loss = camf::sum(w);
    camf::backward(loss);
    for (size_t i = 0; i < 3; ++i) CHECK(w.grad().at(i) == 1.0);
    for (size_t i = 0; i < 2; ++i) CHECK(unused.grad().at(i) == 0.0);

    CHECK_THROWS_AS(camf::backward(loss), std::runtime_error);             // double call
    CHECK_THROWS_AS(camf::backward(w), std::invalid_argument);             // non-scalar
    Tensor plain = camf::sum(Tensor({2}, {1, 2}));
    CHECK_THROWS_AS(camf::backward(plain), std::runtime_error);            // detached
}

TEST_CASE("backward on a diamond graph accumulates once per path") {
    Tensor w({2}, {3.0, -1.0}, true);
    Tensor y = camf::add(camf::mul(w, w), w);  // w^2 + w
    camf::backward(camf::sum(y));
    CHECK(w.grad().at(0) == doctest::Approx(7.0).epsilon(1e-14));   // 2*3+1
    CHECK(w.grad().at(1) == doctest::Approx(-1.0).epsilon(1e-14));  // 2*(-1)+1
}

TEST_CASE("slice and concat ops round-trip with gradients") {
    camf::Rng rng(25);
    Tensor x = rand_tensor({4, 6}, rng);
    Tensor left = camf::slice_cols(x, 0, 2);
    Tensor right = camf::slice_cols(x, 2, 6);
    Tensor glued = camf::concat_cols({left, right});
    CHECK(glued.data() == x.data());

    Tensor top = camf::slice_rows(x, 0, 1);
    Tensor bottom = camf::slice_rows(x, 1, 4);
    CHECK(camf::concat_rows({top, bottom}).data() == x.data());

    Tensor w = rand_tensor({4, 6}, rng);
    CHECK(grad_check([&](const Tensor& t) {
              Tensor g = camf::concat_cols({camf::slice_cols(t, 0, 2), camf::slice_cols(t, 2, 6)});
              return camf::sum(camf::mul(g, w));
          }, x) < 1e-6);

    Tensor a = rand_tensor({3}, rng);
    Tensor bvec = rand_tensor({2}, rng);
    Tensor cat = camf::concat_vec({a, bvec});
    CHECK(cat.size() == 5);
    Tensor stack = camf::stack_rows({a, a});
    CHECK(stack.rows() == 2);
    CHECK(grad_check([&](const Tensor& t) {
              return camf::sum(camf::stack_rows({t, camf::mul(t, t)}));
          }, a) < 1e-6);
}

TEST_CASE("pick_per_row selects and routes gradients") {
    Tensor probs({2, 3}, {0.1, 0.7, 0.2, 0.5, 0.25, 0.25}, true);
    Tensor picked = camf::pick_per_row(probs, {1, 0});
    CHECK(picked.at(0) == 0.7);
    CHECK(picked.at(1) == 0.5);
    camf::backward(camf::sum(picked));
    CHECK(probs.grad().at(0, 1) == 1.0);
    CHECK(probs.grad().at(1, 0) == 1.0);
    CHECK(probs.grad().at(0, 0) == 0.0);
    CHECK_THROWS_AS(camf::pick_per_row(probs.detach(), {3, 0}), std::invalid_argument);
}

TEST_CASE("log_clamped floors the argument") {
    Tensor x({3}, {1.0, 1e-15, 2.0});
    Tensor y = camf::log_clamped(x);
    CHECK(y.at(0) == 0.0);
    CHECK(y.at(1) == doctest::Approx(std::log(1e-12)).epsilon(1e-12));
    CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::log_clamped(t)); },
                     Tensor({2}, {0.5, 3.0})) < 1e-6);
}

TEST_CASE("finite_diff_grad on analytic cases") {
    Tensor x({2}, {1.0, 2.0});
    Tensor g = camf::finite_diff_grad(
        [](const Tensor& t) {
            double s = 0.0;
            for (double v : t.data()) s += v * v;
            return s;
        },
        x, 1e-5);
    CHECK(std::fabs(g.at(0) - 2.0) < 1e-8);
    CHECK(std::fabs(g.at(1) - 4.0) < 1e-8);

    Tensor c = camf::finite_diff_grad([](const Tensor&) { return 42.0; }, x, 1e-5);
    CHECK(c.at(0) == 0.0);
    CHECK(c.at(1) == 0.0);
}

TEST_CASE("reverse mode and finite differences agree on a two-layer net") {
    camf::Rng rng(26);
    Tensor x = rand_tensor({4, 3}, rng, -1, 1);
    Tensor W1 = rand_tensor({3, 5}, rng, -1, 1);
    Tensor b1 = rand_tensor({5}, rng, -1, 1);
    Tensor W2 = rand_tensor({5, 2}, rng, -1, 1);
    Tensor b2 = rand_tensor({2}, rng, -1, 1);
    auto net = [&](const Tensor& w1) {
        Tensor h = camf::tanh(camf::dense(x, w1, b1));
        Tensor o = camf::softmax(camf::dense(h, W2, b2));
        return camf::sum(camf::mul(o, o));
    };
    CHECK(grad_check(net, W1) < 1e-4);
}

TEST_CASE("every differentiable primitive passes a randomized gradient sweep") {
    camf::Rng rng(27);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor a = rand_tensor({3, 4}, rng);
        Tensor b = rand_tensor({3, 4}, rng);
        Tensor m = rand_tensor({4, 2}, rng);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::add(t, b)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::sub(b, t)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::mul(t, b)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::scale(t, -1.7)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::matmul(t, m)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::mean_all(camf::relu(t)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::sigmoid(t)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::tanh(t)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::softmax(t)); }, a) < 1e-3);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::mean_rows(t)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return camf::sum(camf::std_rows(t)); }, a) < 1e-4);
    }
}
