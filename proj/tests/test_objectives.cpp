#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "domo/objectives.hpp"
#include "domo/rng.hpp"

using namespace domo;
using objectives::ClientObjective;
using objectives::Kind;
using objectives::Sample;

namespace {

// Independent oracle: central finite differences of the loss.
Vec fd_grad(const objectives::GradOracle& obj, const Vec& x, std::span<const int> batch, double h) {
    Vec g(x.size());
    Vec xp = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        xp[j] = x[j] + h;
        const double fp = obj.loss(xp, batch);
        xp[j] = x[j] - h;
        const double fm = obj.loss(xp, batch);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double rel_err(const Vec& a, const Vec& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        num += (a[j] - b[j]) * (a[j] - b[j]);
        den += b[j] * b[j];
    }
    return std::sqrt(num) / std::max(1e-30, std::sqrt(den));
}

std::vector<int> all_indices(int n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

Vec random_vec(RngStream& rng, int d, double scale = 1.0) {
    Vec x(d);
    for (double& v : x) v = scale * rng.normal();
    return x;
}

ClientObjective random_logistic(RngStream& rng, int classes, int feat, int n) {
    std::vector<Sample> samples(n);
    for (int i = 0; i < n; ++i) {
        samples[i].features = random_vec(rng, feat);
        samples[i].target = static_cast<double>(rng.below(classes));
    }
    return ClientObjective::logistic(std::move(samples), classes);
}

ClientObjective random_mlp2(RngStream& rng, int classes, int feat, int hidden, int n) {
    std::vector<Sample> samples(n);
    for (int i = 0; i < n; ++i) {
        samples[i].features = random_vec(rng, feat);
        samples[i].target = static_cast<double>(rng.below(classes));
    }
    return ClientObjective::mlp2(std::move(samples), {feat, hidden, classes});
}

ClientObjective random_least_squares(RngStream& rng, int d, int n, double reg = 0.0) {
    std::vector<Sample> samples(n);
    for (int i = 0; i < n; ++i) {
        samples[i].features = random_vec(rng, d);
        samples[i].target = rng.normal();
    }
    return ClientObjective::least_squares(std::move(samples), reg);
}

}  // namespace

TEST_CASE("1-d quadratic gradient is analytic") {
    ClientObjective obj = ClientObjective::quadratic({Sample{{1.0}, 1.0}});
    Vec x{0.0};
    const auto batch = all_indices(1);
    Vec g = objectives::stochastic_grad(obj, x, batch);
    CHECK(g.size() == 1);
    CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("full batch equals full_grad exactly") {
    RngStream rng(11, StreamKind::Synthetic);
    ClientObjective obj = random_least_squares(rng, 4, 9);
    Vec x = random_vec(rng, 4);
    const auto batch = all_indices(9);
    Vec a = objectives::stochastic_grad(obj, x, batch);
    Vec b = objectives::full_grad(obj, x);
    for (int j = 0; j < 4; ++j) CHECK(a[j] == b[j]);
}

TEST_CASE("logistic gradient matches central finite differences at 1e-6") {
    RngStream rng(12, StreamKind::Synthetic);
    ClientObjective obj = random_logistic(rng, 3, 4, 3);
    Vec x(obj.dim(), 0.0);
    const auto batch = all_indices(3);
    Vec g = objectives::stochastic_grad(obj, x, batch);
    Vec fd = fd_grad(obj, x, batch, 1e-6);
    CHECK(rel_err(g, fd) <= 1e-6);
}

TEST_CASE("mean of singleton stochastic gradients equals full gradient") {
    RngStream rng(13, StreamKind::Synthetic);
    ClientObjective obj = random_logistic(rng, 4, 3, 7);
    Vec x = random_vec(rng, obj.dim(), 0.3);
    Vec mean(obj.dim(), 0.0);
    for (int i = 0; i < 7; ++i) {
        const int one[1] = {i};
        vec::add(mean, objectives::stochastic_grad(obj, x, std::span<const int>(one, 1)));
    }
    vec::scale(mean, 1.0 / 7.0);
    Vec full = objectives::full_grad(obj, x);
    CHECK(rel_err(mean, full) <= 1e-12);
}

TEST_CASE("least-squares full gradient is A x - b") {
    RngStream rng(14, StreamKind::Synthetic);
    const int d = 5, n = 12;
    ClientObjective obj = random_least_squares(rng, d, n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (const auto& s : obj.samples()) {
        Eigen::Map<const Eigen::VectorXd> a(s.features.data(), d);
        A += a * a.transpose() / n;
        b += s.target * a / n;
    }
    Vec x = random_vec(rng, d);
    Eigen::Map<const Eigen::VectorXd> xe(x.data(), d);
    Eigen::VectorXd expect = A * xe - b;
    Vec g = objectives::full_grad(obj, x);
    for (int j = 0; j < d; ++j) CHECK(g[j] == doctest::Approx(expect(j)).epsilon(1e-12));
}

TEST_CASE("mlp2 gradient matches central finite differences at 1e-5") {
    RngStream rng(15, StreamKind::Synthetic);
    ClientObjective obj = random_mlp2(rng, 3, 4, 5, 6);
    Vec x = random_vec(rng, obj.dim(), 0.4);
    const auto batch = all_indices(6);
    Vec g = objectives::stochastic_grad(obj, x, batch);
    Vec fd = fd_grad(obj, x, batch, 1e-6);
    CHECK(rel_err(g, fd) <= 1e-5);
}

TEST_CASE("gradient check across kinds at 10 random points") {
    RngStream rng(16, StreamKind::Synthetic);
    ClientObjective quad = random_least_squares(rng, 4, 8, 0.01);
    ClientObjective logi = random_logistic(rng, 3, 4, 9);
    ClientObjective mlp = random_mlp2(rng, 3, 3, 4, 5);
    for (int trial = 0; trial < 10; ++trial) {
        Vec xq = random_vec(rng, quad.dim());
        Vec gq = quad.full_grad(xq);
        Vec fq = fd_grad(quad, xq, all_indices(8), 1e-4);
        CHECK(rel_err(gq, fq) <= 1e-10);

        Vec xl = random_vec(rng, logi.dim(), 0.5);
        CHECK(rel_err(logi.full_grad(xl), fd_grad(logi, xl, all_indices(9), 1e-6)) <= 1e-5);

        Vec xm = random_vec(rng, mlp.dim(), 0.5);
        CHECK(rel_err(mlp.full_grad(xm), fd_grad(mlp, xm, all_indices(5), 1e-6)) <= 1e-5);
    }
}

TEST_CASE("smoothness holds over 100 random pairs on quadratic problems") {
    RngStream rng(17, StreamKind::Synthetic);
    std::vector<ClientObjective> clients;
    for (int k = 0; k < 3; ++k) clients.push_back(random_least_squares(rng, 6, 10));
    objectives::ConstantsOptions opts;
    opts.eval_points.push_back(Vec(6, 0.0));
    opts.batch_size = 1;
    const auto cons = objectives::constants(clients, opts);
    for (int trial = 0; trial < 100; ++trial) {
        Vec x = random_vec(rng, 6, 2.0);
        Vec y = random_vec(rng, 6, 2.0);
        Vec gx = objectives::global_grad(clients, x);
        Vec gy = objectives::global_grad(clients, y);
        const double dg = std::sqrt(vec::squared_distance(gx, gy));
        const double dx = std::sqrt(vec::squared_distance(x, y));
        CHECK(dg <= (cons.L + 1e-8) * dx);
    }
}

TEST_CASE("unbiasedness: enumerated batches of size 2 average to the full gradient") {
    RngStream rng(18, StreamKind::Synthetic);
    ClientObjective obj = random_logistic(rng, 3, 3, 3);
    Vec x = random_vec(rng, obj.dim(), 0.2);
    // uniform with replacement = uniform over ordered tuples
    Vec mean(obj.dim(), 0.0);
    int count = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const int batch[2] = {i, j};
            vec::add(mean, obj.gradient(x, std::span<const int>(batch, 2)));
            ++count;
        }
    vec::scale(mean, 1.0 / count);
    CHECK(rel_err(mean, obj.full_grad(x)) <= 1e-12);
}

TEST_CASE("constants on the two-client mirrored quadratic") {
    // f1 = (x-1)^2/2, f2 = (x+1)^2/2; global f(x) = x^2/2 + 1/2 under the
    // mean-over-clients objective, minimised at 0 with value 1/2.
    std::vector<ClientObjective> clients;
    clients.push_back(ClientObjective::quadratic({Sample{{1.0}, 1.0}}));
    clients.push_back(ClientObjective::quadratic({Sample{{-1.0}, 1.0}}));
    objectives::ConstantsOptions opts;
    opts.eval_points = {Vec{0.0}, Vec{2.0}, Vec{-3.0}};
    opts.batch_size = 1;
    const auto cons = objectives::constants(clients, opts);
    CHECK(cons.L == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(cons.f_star.has_value());
    CHECK(*cons.f_star == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cons.G2 == doctest::Approx(1.0).epsilon(1e-12));  // gradient gap is +-1 at every x
    CHECK(cons.exact);
}

TEST_CASE("single-sample client has zero gradient variance") {
    std::vector<ClientObjective> clients;
    clients.push_back(ClientObjective::quadratic({Sample{{0.5, -0.25}, 1.0}}));
    objectives::ConstantsOptions opts;
    opts.eval_points = {Vec{1.0, 1.0}};
    opts.batch_size = 4;
    CHECK(objectives::constants(clients, opts).sigma2 == 0.0);
}

TEST_CASE("power iteration matches the dense eigensolver on a random 8x8 ensemble") {
    RngStream rng(19, StreamKind::Synthetic);
    const int d = 8;
    std::vector<ClientObjective> clients;
    for (int k = 0; k < 4; ++k) clients.push_back(random_least_squares(rng, d, 8));

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
    for (const auto& c : clients) {
        for (const auto& s : c.samples()) {
            Eigen::Map<const Eigen::VectorXd> a(s.features.data(), d);
            H += a * a.transpose() / (c.sample_count() * static_cast<double>(clients.size()));
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const double l_oracle = es.eigenvalues().maxCoeff();

    objectives::ConstantsOptions opts;
    opts.eval_points = {Vec(d, 0.0)};
    const auto cons = objectives::constants(clients, opts);
    CHECK(std::abs(cons.L - l_oracle) <= 1e-8 * l_oracle);
    CHECK(cons.exact);
}

TEST_CASE("f_star lower-bounds the objective at random points") {
    RngStream rng(20, StreamKind::Synthetic);
    std::vector<ClientObjective> clients;
    for (int k = 0; k < 3; ++k) clients.push_back(random_least_squares(rng, 5, 9, 0.05));
    objectives::ConstantsOptions opts;
    opts.eval_points = {Vec(5, 0.0)};
    const auto cons = objectives::constants(clients, opts);
    REQUIRE(cons.f_star.has_value());
    for (int trial = 0; trial < 50; ++trial) {
        Vec x = random_vec(rng, 5, 3.0);
        CHECK(objectives::global_loss(clients, x) >= *cons.f_star - 1e-10);
    }
}

TEST_CASE("error contracts: bad batches, empty problems, mixed kinds") {
    ClientObjective obj = ClientObjective::quadratic({Sample{{1.0}, 1.0}});
    Vec x{0.0};
    const int bad[1] = {5};
    CHECK_THROWS_AS(obj.gradient(x, std::span<const int>(bad, 1)), std::out_of_range);
    CHECK_THROWS(obj.gradient(x, std::span<const int>{}));
    CHECK_THROWS_AS(ClientObjective::quadratic({}), std::invalid_argument);

    std::vector<ClientObjective> mixed;
    mixed.push_back(ClientObjective::quadratic({Sample{{1.0}, 1.0}}));
    mixed.push_back(ClientObjective::least_squares({Sample{{1.0}, 1.0}}));
    objectives::ConstantsOptions opts;
    opts.eval_points = {Vec{0.0}};
    CHECK_THROWS_AS(objectives::constants(mixed, opts), std::invalid_argument);
}
