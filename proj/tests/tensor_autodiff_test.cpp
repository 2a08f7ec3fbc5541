#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mmrl/autodiff.hpp"
#include "mmrl/errors.hpp"
#include "mmrl/nn.hpp"
#include "mmrl/rng.hpp"
#include "mmrl/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace mmrl;
using testsupport::check_gradients;
using testsupport::random_tensor;

TEST_CASE("tensor shape and data stay consistent") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 3}), ValueError);
    CHECK(Tensor::scalar(4.0).item() == 4.0);
    CHECK(Tensor::scalar(4.0).ndim() == 0);
    CHECK_THROWS_AS(t.reshaped({5}), ShapeError);
    CHECK(t.reshaped({3, 2}).size() == 6);
}

TEST_CASE("matmul identity and hand cases") {
    Tape tape;
    Var eye = tape.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var prod = tape.matmul(eye, a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(prod.value()[i] == a.value()[i]);

    Var row = tape.leaf(Tensor({1, 2}, {1, 2}));
    Var col = tape.leaf(Tensor({2, 1}, {3, 4}));
    CHECK(tape.matmul(row, col).value().item() == doctest::Approx(11.0));

    CHECK_THROWS_WITH_AS(tape.matmul(row, row), doctest::Contains("[1x2]"), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto res = check_gradients([&](Tape& tape, ParamBinder& binder) {
        return tape.sum(tape.matmul(binder.bind(a), binder.bind(b)));
    });
    CHECK(res.checked == 20);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("conv2d hand evaluation and output shape") {
    Tape tape;
    Var in = tape.leaf(Tensor::full({1, 1, 3, 3}, 1.0));
    Var w = tape.leaf(Tensor::full({1, 1, 3, 3}, 1.0));
    Var b = tape.leaf(Tensor({1}));
    CHECK(tape.conv2d(in, w, b, 1, 0).value().item() == doctest::Approx(9.0));

    Var big = tape.leaf(Tensor({1, 1, 28, 28}));
    Var k3 = tape.leaf(Tensor({1, 1, 3, 3}));
    const Tensor& out = tape.conv2d(big, k3, b, 1, 0).value();
    CHECK(out.extent(2) == 26);
    CHECK(out.extent(3) == 26);

    CHECK_THROWS_AS(tape.conv2d(in, tape.leaf(Tensor({1, 1, 5, 5})), b, 1, 0), ShapeError);
    CHECK_THROWS_AS(tape.conv2d(in, w, b, 0, 0), ValueError);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(11);
    Tensor in = random_tensor({1, 2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    auto res = check_gradients([&](Tape& tape, ParamBinder& binder) {
        return tape.sum(tape.conv2d(binder.bind(in), binder.bind(w), binder.bind(b), 2, 1));
    });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("maxpool2d forward and tie-break gradient") {
    Tape tape;
    Var small = tape.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), true);
    CHECK(tape.maxpool2d(small, 2, 2).value().item() == doctest::Approx(4.0));

    std::vector<double> ascending(16);
    for (int i = 0; i < 16; ++i) ascending[static_cast<std::size_t>(i)] = i;
    Var grid = tape.leaf(Tensor({1, 1, 4, 4}, ascending));
    const Tensor& pooled = tape.maxpool2d(grid, 2, 2).value();
    CHECK(pooled[0] == 5.0);
    CHECK(pooled[1] == 7.0);
    CHECK(pooled[2] == 13.0);
    CHECK(pooled[3] == 15.0);

    CHECK_THROWS_AS(tape.maxpool2d(small, 3, 1), ShapeError);

    // Constant input: each window routes its full unit of gradient to the
    // lowest flat index.
    Tape t2;
    Var flat = t2.leaf(Tensor::full({1, 1, 4, 4}, 2.5), true);
    Var loss = t2.sum(t2.maxpool2d(flat, 2, 2));
    t2.backward(loss);
    const Tensor& g = flat.grad();
    double total = 0.0;
    for (double v : g.values()) total += v;
    CHECK(total == doctest::Approx(4.0));
    CHECK(g(0, 0, 0, 0) == 1.0);
    CHECK(g(0, 0, 0, 2) == 1.0);
    CHECK(g(0, 0, 2, 0) == 1.0);
    CHECK(g(0, 0, 2, 2) == 1.0);
    CHECK(g(0, 0, 1, 1) == 0.0);
}

TEST_CASE("activations") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
    const Tensor& r = tape.relu(x).value();
    CHECK(r[0] == 0.0);
    CHECK(r[2] == 2.0);
    CHECK(tape.sigmoid(tape.leaf(Tensor::scalar(0.0))).value().item() == doctest::Approx(0.5));

    // identity returns the input node untouched
    Var same = tape.activation(x, Activation::identity);
    CHECK(same.id() == x.id());

    Tensor z = Tensor::scalar(0.0);
    auto res = check_gradients(
        [&](Tape& t, ParamBinder& binder) { return t.sum(t.sigmoid(binder.bind(z))); });
    CHECK(res.max_rel_err < 1e-8);

    // sigmoid'(0) = 0.25 analytically
    Tape t3;
    Var zero = t3.leaf(Tensor::scalar(0.0), true);
    Var s = t3.sigmoid(zero);
    t3.backward(t3.sum(s));
    CHECK(zero.grad().item() == doctest::Approx(0.25));
}

TEST_CASE("transpose2d") {
    Tape tape;
    Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    const Tensor& t = tape.transpose2d(a).value();
    CHECK(t(0, 1) == 3.0);
    CHECK(t(1, 0) == 2.0);

    Var round_trip = tape.transpose2d(tape.transpose2d(a));
    for (std::size_t i = 0; i < 4; ++i) CHECK(round_trip.value()[i] == a.value()[i]);

    Var sym = tape.leaf(Tensor({2, 2}, {1, 5, 5, 2}));
    const Tensor& ts = tape.transpose2d(sym).value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(ts[i] == sym.value()[i]);

    CHECK_THROWS_AS(tape.transpose2d(tape.leaf(Tensor({2, 2, 2}))), ShapeError);
}

TEST_CASE("concat columns and recovery") {
    Tape tape;
    Var a = tape.leaf(Tensor({1, 1}, {1}));
    Var b = tape.leaf(Tensor({1, 1}, {2}));
    const Tensor& cat = tape.concat(a, b).value();
    CHECK(cat(0, 0) == 1.0);
    CHECK(cat(0, 1) == 2.0);

    Rng rng(3);
    Tensor left = random_tensor({3, 2}, rng);
    Tensor right = random_tensor({3, 5}, rng);
    Var joined = tape.concat(tape.leaf(left), tape.leaf(right));
    CHECK(joined.value().shape() == std::vector<std::size_t>{3, 7});
    const Tensor back_left = slice_cols(joined.value(), 0, 2);
    const Tensor back_right = slice_cols(joined.value(), 2, 7);
    for (std::size_t i = 0; i < left.size(); ++i) CHECK(back_left[i] == left[i]);
    for (std::size_t i = 0; i < right.size(); ++i) CHECK(back_right[i] == right[i]);

    CHECK_THROWS_AS(tape.concat(tape.leaf(Tensor({2, 1})), tape.leaf(Tensor({3, 1}))), ShapeError);
}

TEST_CASE("mse loss values and gradient") {
    Tape tape;
    Tensor x({2}, {1, 2});
    CHECK(tape.mse_loss(tape.leaf(x), x).value().item() == 0.0);
    CHECK(tape.mse_loss(tape.leaf(Tensor({2}, {1, 2})), Tensor({2}, {3, 4})).value().item() ==
          doctest::Approx(4.0));
    CHECK_THROWS_AS(tape.mse_loss(tape.leaf(Tensor({2})), Tensor({3})), ShapeError);

    Rng rng(5);
    Tensor pred = random_tensor({4, 3}, rng);
    Tensor target = random_tensor({4, 3}, rng);
    auto res = check_gradients(
        [&](Tape& t, ParamBinder& binder) { return t.mse_loss(binder.bind(pred), target); });
    CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("backward populates gradients in reverse topological order") {
    Tape tape;
    Var x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    tape.backward(tape.sum(x));
    for (double g : x.grad().values()) CHECK(g == 1.0);

    CHECK_THROWS_AS(tape.backward(x), ShapeError);  // non-scalar loss
}

TEST_CASE("backward on a linear model matches the closed form") {
    Rng rng(17);
    Tensor x = random_tensor({5, 3}, rng);
    Tensor w = random_tensor({3, 1}, rng);
    Tensor y = random_tensor({5, 1}, rng);

    Tape tape;
    ParamBinder binder(tape);
    Var wv = binder.bind(w);
    Var loss = tape.mse_loss(tape.matmul(tape.leaf(x), wv), y);
    tape.backward(loss);

    // closed form: 2 x^T (x w - y) / n
    Tensor residual = matmul(x, w);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= y[i];
    Tensor expected = matmul(transposed(x), residual);
    for (double& v : expected.values()) v *= 2.0 / 5.0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(wv.grad()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward without grad reset accumulates") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {1, 2, 3}), true);
    Var loss = tape.sum(x);
    tape.backward(loss);
    tape.backward(loss);
    for (double g : x.grad().values()) CHECK(g == 2.0);

    tape.zero_grad();
    tape.backward(loss);
    for (double g : x.grad().values()) CHECK(g == 1.0);
}

TEST_CASE("tape creation order is a topological order") {
    Rng rng(41);
    Tape tape;
    Var a = tape.leaf(random_tensor({3, 3}, rng), true);
    Var b = tape.leaf(random_tensor({3, 3}, rng), true);
    Var c = tape.matmul(tape.add(a, b), tape.transpose2d(tape.mul(a, b)));
    tape.backward(tape.mse_loss(c, random_tensor({3, 3}, rng)));
    for (std::size_t id = 0; id < tape.node_count(); ++id) {
        const Node& n = tape.node(id);
        CHECK(n.grad.same_shape(n.value));
        for (std::size_t parent : n.parents) CHECK(parent < id);
    }
}

TEST_CASE("forward evaluation is deterministic") {
    Rng rng(23);
    Tensor a = random_tensor({7, 9}, rng);
    Tensor b = random_tensor({9, 4}, rng);
    Tape t1, t2;
    const Tensor& r1 = t1.matmul(t1.leaf(a), t1.leaf(b)).value();
    const Tensor& r2 = t2.matmul(t2.leaf(a), t2.leaf(b)).value();
    for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("structure ops preserve the value multiset") {
    Rng rng(29);
    Tensor a = random_tensor({4, 6}, rng);
    Tape tape;
    auto sorted_of = [](const Tensor& t) {
        std::vector<double> v(t.values().begin(), t.values().end());
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto base = sorted_of(a);
    CHECK(sorted_of(tape.transpose2d(tape.leaf(a)).value()) == base);
    CHECK(sorted_of(tape.reshape(tape.leaf(a), {6, 4}).value()) == base);

    Tensor b = random_tensor({4, 2}, rng);
    auto joined = sorted_of(tape.concat(tape.leaf(a), tape.leaf(b)).value());
    auto expected = sorted_of(a);
    for (double v : b.values()) expected.push_back(v);
    std::sort(expected.begin(), expected.end());
    CHECK(joined == expected);
}

TEST_CASE("upsample nearest inverts pooling shapes and has exact gradients") {
    Rng rng(31);
    Tensor in = random_tensor({1, 2, 3, 3}, rng);
    auto res = check_gradients([&](Tape& tape, ParamBinder& binder) {
        return tape.sum(tape.upsample_nearest2d(binder.bind(in), 6, 7));
    });
    CHECK(res.max_rel_err < 1e-8);

    Tape tape;
    const Tensor& up = tape.upsample_nearest2d(tape.leaf(in), 6, 6).value();
    CHECK(up(0, 0, 0, 0) == in(0, 0, 0, 0));
    CHECK(up(0, 0, 5, 5) == in(0, 0, 2, 2));
}

TEST_CASE("cross entropy matches hand values and finite differences") {
    Tape tape;
    Var logits = tape.leaf(Tensor({2, 2}));  // uniform logits
    std::vector<int> labels{0, 1};
    CHECK(tape.cross_entropy_loss(logits, labels).value().item() == doctest::Approx(std::log(2.0)));

    Rng rng(37);
    Tensor raw = random_tensor({4, 2}, rng);
    const std::vector<int> ys{0, 0, 1, 1};
    auto res = check_gradients(
        [&](Tape& t, ParamBinder& binder) { return t.cross_entropy_loss(binder.bind(raw), ys); }, 1e-5);
    CHECK(res.max_rel_err < 1e-6);
}
