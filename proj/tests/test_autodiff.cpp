#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "infotok/gradcheck.hpp"
#include "infotok/graph.hpp"
#include "infotok/oracles.hpp"
#include "infotok/rng.hpp"

#include <cmath>
#include <iostream>

using namespace infotok;

TEST_CASE("forward evaluates simple graphs") {
    SUBCASE("x squared") {
        ad::Graph g;
        ad::NodeId x = g.input({1}, "x");
        ad::NodeId y = g.multiply(x, x);
        g.forward({ad::Tensor::scalar(3.0)});
        CHECK(g.scalar_value(y) == doctest::Approx(9.0).epsilon(1e-14));
    }
    SUBCASE("logsumexp of [0, 0]") {
        ad::Graph g;
        ad::NodeId x = g.input({2});
        ad::NodeId y = g.logsumexp(x);
        g.forward({ad::Tensor({2}, {0.0, 0.0})});
        CHECK(g.scalar_value(y) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("matmul against the identity") {
        ad::Graph g;
        ad::NodeId a = g.input({2, 2});
        ad::NodeId b = g.input({2, 2});
        ad::NodeId y = g.matmul(a, b);
        g.forward({ad::Tensor({2, 2}, {1, 2, 3, 4}), ad::Tensor({2, 2}, {1, 0, 0, 1})});
        const ad::Tensor& out = g.value(y);
        CHECK(out[0] == 1.0);
        CHECK(out[1] == 2.0);
        CHECK(out[2] == 3.0);
        CHECK(out[3] == 4.0);
    }
}

TEST_CASE("build-time shape errors identify the offending node") {
    ad::Graph g;
    ad::NodeId a = g.input({2, 3}, "a");
    ad::NodeId b = g.input({3, 2}, "b");
    CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("shape mismatch"), std::invalid_argument);
    CHECK_THROWS_AS(g.matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS(g.softmax_cross_entropy(a, {0, 1, 0}), std::invalid_argument); // 2 rows
    CHECK_THROWS_AS(g.softmax_cross_entropy(a, {0, 5}), std::invalid_argument);    // class range
}

TEST_CASE("non-finite intermediates are rejected with the node identified") {
    ad::Graph g;
    ad::NodeId x = g.input({1}, "x");
    ad::NodeId y = g.log(x);
    (void)y;
    try {
        g.forward({ad::Tensor::scalar(-1.0)});
        FAIL("expected EvalError");
    } catch (const ad::EvalError& e) {
        CHECK(e.node() == y);
        CHECK(std::string(e.what()).find("log") != std::string::npos);
    }
}

TEST_CASE("forward is pure") {
    ad::Graph g;
    ad::NodeId x = g.input({4});
    ad::NodeId y = g.logsumexp(g.tanh(g.exp(x)));
    ad::Tensor point({4}, {0.3, -1.2, 0.7, 1.9});
    g.forward({point});
    const double first = g.scalar_value(y);
    g.forward({point});
    CHECK(g.scalar_value(y) == first); // bit-identical
}

TEST_CASE("backward matches hand-derived gradients") {
    SUBCASE("x squared at 3") {
        ad::Graph g;
        ad::NodeId x = g.input({1});
        ad::NodeId y = g.multiply(x, x);
        g.forward({ad::Tensor::scalar(3.0)});
        const auto grads = g.backward(y, ad::Tensor::scalar(1.0));
        CHECK(grads[0].grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
    }
    SUBCASE("logsumexp at [0, 0] is the softmax of zeros") {
        ad::Graph g;
        ad::NodeId x = g.input({2});
        ad::NodeId y = g.logsumexp(x);
        g.forward({ad::Tensor({2}, {0.0, 0.0})});
        const auto grads = g.backward(y, ad::Tensor::scalar(1.0));
        CHECK(grads[0].grad()[0] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(grads[0].grad()[1] == doctest::Approx(0.5).epsilon(1e-14));
    }
    SUBCASE("mean spreads 1/n") {
        ad::Graph g;
        ad::NodeId x = g.input({5});
        ad::NodeId y = g.mean(x);
        g.forward({ad::Tensor({5}, {1, 2, 3, 4, 5})});
        const auto grads = g.backward(y, ad::Tensor::scalar(1.0));
        for (double v : grads[0].grad()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
    }
}

TEST_CASE("backward preconditions") {
    ad::Graph g;
    ad::NodeId x = g.input({2});
    ad::NodeId y = g.sum(x);
    CHECK_THROWS_AS(g.backward(y, ad::Tensor::scalar(1.0)), std::logic_error);
    g.forward({ad::Tensor({2}, {1.0, 2.0})});
    CHECK_THROWS_AS(g.backward(y, ad::Tensor({2}, {1.0, 1.0})), std::invalid_argument);
}

TEST_CASE("grad_check on small graphs") {
    SUBCASE("smooth polynomial") {
        ad::Graph g;
        ad::NodeId x = g.input({1});
        g.multiply(x, x);
        const auto report = ad::grad_check(g, {ad::Tensor::scalar(3.0)}, 1e-5, 1e-6);
        CHECK(report.passed);
        CHECK(report.max_rel_error < 1e-6);
    }
    SUBCASE("cosine similarity of random 8-vectors") {
        rng::Stream stream(5, rng::Role::oracle);
        ad::Graph g;
        ad::NodeId a = g.input({8});
        ad::NodeId b = g.input({8});
        g.cosine_similarity(a, b);
        ad::Tensor pa({8}), pb({8});
        for (std::size_t i = 0; i < 8; ++i) {
            pa[i] = stream.normal();
            pb[i] = stream.normal();
        }
        const auto report = ad::grad_check(g, {pa, pb}, 1e-5, 1e-5);
        CHECK(report.passed);
    }
    SUBCASE("non-scalar output rejected") {
        ad::Graph g;
        ad::NodeId x = g.input({3});
        ad::NodeId y = g.exp(x);
        CHECK_THROWS_AS(ad::grad_check(g, y, {ad::Tensor({3}, {0, 0, 0})}, 1e-5, 1e-5),
                        std::invalid_argument);
    }
    SUBCASE("eps out of range rejected") {
        ad::Graph g;
        ad::NodeId x = g.input({1});
        g.sum(x);
        CHECK_THROWS_AS(ad::grad_check(g, {ad::Tensor::scalar(1.0)}, 0.0, 1e-5),
                        std::invalid_argument);
        CHECK_THROWS_AS(ad::grad_check(g, {ad::Tensor::scalar(1.0)}, 0.1, 1e-5),
                        std::invalid_argument);
    }
}

TEST_CASE("every primitive passes finite-difference checks") {
    const auto suite = oracles::gradcheck_suite();
    for (const auto& line : suite.lines) {
        INFO(line);
        CHECK(line.find("FAIL") == std::string::npos);
    }
    CHECK(suite.passed);
}

TEST_CASE("gradient of a sum of graphs is the sum of the gradients") {
    rng::Stream stream(17, rng::Role::oracle);
    ad::Tensor point({6});
    for (std::size_t i = 0; i < 6; ++i) point[i] = stream.uniform(-2.0, 2.0);

    // f(x) = sum(tanh(x) * c1), h(x) = logsumexp(x * c2); both built alone and
    // as one combined graph computing f + h.
    ad::Tensor c1({6}), c2({6});
    for (std::size_t i = 0; i < 6; ++i) {
        c1[i] = stream.uniform(-1.0, 1.0);
        c2[i] = stream.uniform(-1.0, 1.0);
    }

    ad::Graph gf;
    {
        ad::NodeId x = gf.input({6});
        gf.sum(gf.multiply(gf.tanh(x), gf.constant(c1)));
        gf.forward({point});
    }
    const auto grad_f = gf.backward(gf.last_node(), ad::Tensor::scalar(1.0));

    ad::Graph gh;
    {
        ad::NodeId x = gh.input({6});
        gh.logsumexp(gh.multiply(x, gh.constant(c2)));
        gh.forward({point});
    }
    const auto grad_h = gh.backward(gh.last_node(), ad::Tensor::scalar(1.0));

    ad::Graph gc;
    {
        ad::NodeId x = gc.input({6});
        ad::NodeId f = gc.sum(gc.multiply(gc.tanh(x), gc.constant(c1)));
        ad::NodeId h = gc.logsumexp(gc.multiply(x, gc.constant(c2)));
        gc.add(f, h);
        gc.forward({point});
    }
    const auto grad_c = gc.backward(gc.last_node(), ad::Tensor::scalar(1.0));

    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(grad_c[0].grad()[i] ==
              doctest::Approx(grad_f[0].grad()[i] + grad_h[0].grad()[i]).epsilon(1e-12));
    }
}
