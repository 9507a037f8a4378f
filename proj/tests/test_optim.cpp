#include "earlyrec/error.hpp"
#include "earlyrec/optim.hpp"

#include <doctest.h>

using namespace earlyrec;

namespace {

ParamList view(std::vector<double>& v, bool decay = true) { return {{"p", v, decay}}; }

} // namespace

TEST_CASE("zero gradient, zero decay leaves parameters unchanged") {
    std::vector<double> theta{1.0, -2.0};
    std::vector<double> g{0.0, 0.0};
    OptimizerState st;
    sgd_update(view(theta), view(g), st, {0.1, 0.9, 0.0});
    CHECK(theta == std::vector<double>{1.0, -2.0});
}

TEST_CASE("weight decay step: theta 1, wd 0.1, lr 0.1 gives v = 0.1, theta = 0.99") {
    std::vector<double> theta{1.0};
    std::vector<double> g{0.0};
    OptimizerState st;
    sgd_update(view(theta), view(g), st, {0.1, 0.9, 0.1});
    CHECK(st.velocity[0][0] == doctest::Approx(0.1));
    CHECK(theta[0] == doctest::Approx(0.99));
}

TEST_CASE("biases are not decayed") {
    std::vector<double> theta{1.0};
    std::vector<double> g{0.0};
    OptimizerState st;
    sgd_update(view(theta, false), view(g), st, {0.1, 0.9, 0.1});
    CHECK(theta[0] == 1.0);
}

TEST_CASE("momentum: second-step displacement is lr * g * (1 + mu)") {
    const double lr = 0.05, mu = 0.9, grad = 0.3;
    std::vector<double> theta{2.0};
    std::vector<double> g{grad};
    OptimizerState st;
    sgd_update(view(theta), view(g), st, {lr, mu, 0.0});
    const double after_one = theta[0];
    CHECK(2.0 - after_one == doctest::Approx(lr * grad));
    sgd_update(view(theta), view(g), st, {lr, mu, 0.0});
    CHECK(after_one - theta[0] == doctest::Approx(lr * grad * (1.0 + mu)));
}

TEST_CASE("property: unrolled momentum matches a scalar oracle") {
    const double lr = 0.01, mu = 0.9, wd = 0.001;
    std::vector<double> theta{0.7, -0.3, 1.1};
    std::vector<double> ref = theta, vel(3, 0.0);
    OptimizerState st;
    for (int step = 0; step < 50; ++step) {
        std::vector<double> g{0.1 * step, -0.2, 0.05 * (step % 3)};
        for (std::size_t i = 0; i < 3; ++i) {
            const double gi = g[i] + wd * ref[i];
            vel[i] = mu * vel[i] + gi;
            ref[i] -= lr * vel[i];
        }
        sgd_update(view(theta), view(g), st, {lr, mu, wd});
    }
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(theta[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }
}

TEST_CASE("shape mismatches are rejected") {
    std::vector<double> theta{1.0, 2.0};
    std::vector<double> g{1.0};
    OptimizerState st;
    CHECK_THROWS_AS(sgd_update(view(theta), view(g), st, {}), InvalidInput);
    std::vector<double> g2{1.0, 1.0};
    ParamList two{{"a", theta, true}, {"b", g2, true}};
    CHECK_THROWS_AS(sgd_update(two, view(g2), st, {}), InvalidInput);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((SgdConfig{-1.0, 0.9, 0.0}.validate()), InvalidInput);
    CHECK_THROWS_AS((SgdConfig{0.1, 1.0, 0.0}.validate()), InvalidInput);
    CHECK_THROWS_AS((SgdConfig{0.1, 0.9, -0.1}.validate()), InvalidInput);
}
