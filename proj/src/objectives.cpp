#include "domo/objectives.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "domo/rng.hpp"

namespace domo::objectives {

std::string kind_name(Kind k) {
    switch (k) {
        case Kind::Quadratic: return "quadratic";
        case Kind::LeastSquares: return "least-squares";
        case Kind::Logistic: return "logistic";
        case Kind::Mlp2: return "mlp2";
    }
    return "?";
}

Kind kind_from_name(const std::string& name) {
    if (name == "quadratic") return Kind::Quadratic;
    if (name == "least-squares" || name == "least_squares") return Kind::LeastSquares;
    if (name == "logistic") return Kind::Logistic;
    if (name == "mlp2") return Kind::Mlp2;
    throw std::invalid_argument("unknown objective kind: " + name);
}

double GradOracle::full_loss(const Vec& x) const {
    std::vector<int> all(sample_count());
    std::iota(all.begin(), all.end(), 0);
    return loss(x, all);
}

Vec GradOracle::full_grad(const Vec& x) const {
    std::vector<int> all(sample_count());
    std::iota(all.begin(), all.end(), 0);
    return gradient(x, all);
}

ClientObjective::ClientObjective(Kind kind, std::vector<Sample> samples, double regularization,
                                 int num_classes, std::optional<Mlp2Shape> shape)
    : kind_(kind), samples_(std::move(samples)), reg_(regularization),
      num_classes_(num_classes), shape_(shape) {
    if (samples_.empty()) throw std::invalid_argument("ClientObjective: needs at least one sample");
    if (reg_ < 0.0) throw std::invalid_argument("ClientObjective: negative regularization");
    const int feat = static_cast<int>(samples_.front().features.size());
    for (const auto& s : samples_) {
        if (static_cast<int>(s.features.size()) != feat)
            throw std::invalid_argument("ClientObjective: inconsistent feature dimension");
    }
    switch (kind_) {
        case Kind::Quadratic:
        case Kind::LeastSquares:
            dim_ = feat;
            break;
        case Kind::Logistic:
            if (num_classes_ < 2) throw std::invalid_argument("logistic: needs >= 2 classes");
            dim_ = num_classes_ * feat;
            break;
        case Kind::Mlp2:
            if (!shape_) throw std::invalid_argument("mlp2: shape required");
            if (shape_->inputs != feat) throw std::invalid_argument("mlp2: shape.inputs != feature dim");
            if (shape_->hidden < 1 || shape_->classes < 2)
                throw std::invalid_argument("mlp2: invalid shape");
            num_classes_ = shape_->classes;
            dim_ = shape_->dim();
            break;
    }
    if (kind_ == Kind::Logistic || kind_ == Kind::Mlp2) {
        for (const auto& s : samples_) {
            const double t = s.target;
            if (t != std::floor(t) || t < 0 || t >= num_classes_)
                throw std::invalid_argument("classification sample target out of range");
        }
    }
}

ClientObjective ClientObjective::quadratic(std::vector<Sample> centers, double regularization) {
    return ClientObjective(Kind::Quadratic, std::move(centers), regularization);
}

ClientObjective ClientObjective::least_squares(std::vector<Sample> samples, double regularization) {
    return ClientObjective(Kind::LeastSquares, std::move(samples), regularization);
}

ClientObjective ClientObjective::logistic(std::vector<Sample> samples, int num_classes,
                                          double regularization) {
    return ClientObjective(Kind::Logistic, std::move(samples), regularization, num_classes);
}

ClientObjective ClientObjective::mlp2(std::vector<Sample> samples, Mlp2Shape shape,
                                      double regularization) {
    return ClientObjective(Kind::Mlp2, std::move(samples), regularization, 0, shape);
}

namespace {

void check_batch(std::span<const int> batch, int n, const char* where) {
    if (batch.empty()) throw std::invalid_argument(std::string(where) + ": empty batch");
    for (int idx : batch)
        if (idx < 0 || idx >= n)
            throw std::out_of_range(std::string(where) + ": sample index " + std::to_string(idx) +
                                    " out of range [0, " + std::to_string(n) + ")");
}

// Softmax probabilities from logits, numerically shifted.
void softmax_inplace(std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : logits) v /= z;
}

struct Mlp2Offsets {
    int w1, b1, w2, b2;
};

Mlp2Offsets mlp2_offsets(const Mlp2Shape& s) {
    // Packing order of the flat parameter vector: W1 (hidden x inputs,
    // row-major), b1 (hidden), W2 (classes x hidden, row-major), b2 (classes).
    Mlp2Offsets o;
    o.w1 = 0;
    o.b1 = o.w1 + s.hidden * s.inputs;
    o.w2 = o.b1 + s.hidden;
    o.b2 = o.w2 + s.classes * s.hidden;
    return o;
}

}  // namespace

double ClientObjective::loss(const Vec& x, std::span<const int> batch) const {
    if (static_cast<int>(x.size()) != dim_)
        throw std::invalid_argument("ClientObjective::loss: wrong parameter dimension");
    check_batch(batch, sample_count(), "ClientObjective::loss");
    double acc = 0.0;
    switch (kind_) {
        case Kind::Quadratic: {
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                acc += 0.5 * s.target * vec::squared_distance(x, s.features);
            }
            break;
        }
        case Kind::LeastSquares: {
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                const double r = vec::dot(x, s.features) - s.target;
                acc += 0.5 * r * r;
            }
            break;
        }
        case Kind::Logistic: {
            const int m = static_cast<int>(samples_.front().features.size());
            std::vector<double> logits(num_classes_);
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                for (int c = 0; c < num_classes_; ++c) {
                    double v = 0.0;
                    for (int j = 0; j < m; ++j) v += x[c * m + j] * s.features[j];
                    logits[c] = v;
                }
                const double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0.0;
                for (double v : logits) z += std::exp(v - mx);
                acc += -(logits[static_cast<int>(s.target)] - mx - std::log(z));
            }
            break;
        }
        case Kind::Mlp2: {
            const Mlp2Shape& sh = *shape_;
            const Mlp2Offsets o = mlp2_offsets(sh);
            std::vector<double> hid(sh.hidden), logits(sh.classes);
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                for (int h = 0; h < sh.hidden; ++h) {
                    double v = x[o.b1 + h];
                    for (int j = 0; j < sh.inputs; ++j) v += x[o.w1 + h * sh.inputs + j] * s.features[j];
                    hid[h] = std::tanh(v);
                }
                for (int c = 0; c < sh.classes; ++c) {
                    double v = x[o.b2 + c];
                    for (int h = 0; h < sh.hidden; ++h) v += x[o.w2 + c * sh.hidden + h] * hid[h];
                    logits[c] = v;
                }
                const double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0.0;
                for (double v : logits) z += std::exp(v - mx);
                acc += -(logits[static_cast<int>(s.target)] - mx - std::log(z));
            }
            break;
        }
    }
    double out = acc / static_cast<double>(batch.size());
    if (reg_ > 0.0) out += 0.5 * reg_ * vec::squared_norm(x);
    if (!std::isfinite(out)) throw std::runtime_error("ClientObjective::loss: non-finite value");
    return out;
}

Vec ClientObjective::gradient(const Vec& x, std::span<const int> batch) const {
    if (static_cast<int>(x.size()) != dim_)
        throw std::invalid_argument("ClientObjective::gradient: wrong parameter dimension");
    check_batch(batch, sample_count(), "ClientObjective::gradient");
    Vec g(dim_, 0.0);
    switch (kind_) {
        case Kind::Quadratic: {
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                for (int j = 0; j < dim_; ++j) g[j] += s.target * (x[j] - s.features[j]);
            }
            break;
        }
        case Kind::LeastSquares: {
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                const double r = vec::dot(x, s.features) - s.target;
                for (int j = 0; j < dim_; ++j) g[j] += r * s.features[j];
            }
            break;
        }
        case Kind::Logistic: {
            const int m = static_cast<int>(samples_.front().features.size());
            std::vector<double> p(num_classes_);
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                for (int c = 0; c < num_classes_; ++c) {
                    double v = 0.0;
                    for (int j = 0; j < m; ++j) v += x[c * m + j] * s.features[j];
                    p[c] = v;
                }
                softmax_inplace(p);
                p[static_cast<int>(s.target)] -= 1.0;
                for (int c = 0; c < num_classes_; ++c)
                    for (int j = 0; j < m; ++j) g[c * m + j] += p[c] * s.features[j];
            }
            break;
        }
        case Kind::Mlp2: {
            const Mlp2Shape& sh = *shape_;
            const Mlp2Offsets o = mlp2_offsets(sh);
            std::vector<double> hid(sh.hidden), p(sh.classes), delta1(sh.hidden);
            for (int idx : batch) {
                const Sample& s = samples_[idx];
                for (int h = 0; h < sh.hidden; ++h) {
                    double v = x[o.b1 + h];
                    for (int j = 0; j < sh.inputs; ++j) v += x[o.w1 + h * sh.inputs + j] * s.features[j];
                    hid[h] = std::tanh(v);
                }
                for (int c = 0; c < sh.classes; ++c) {
                    double v = x[o.b2 + c];
                    for (int h = 0; h < sh.hidden; ++h) v += x[o.w2 + c * sh.hidden + h] * hid[h];
                    p[c] = v;
                }
                softmax_inplace(p);
                p[static_cast<int>(s.target)] -= 1.0;
                for (int c = 0; c < sh.classes; ++c) {
                    for (int h = 0; h < sh.hidden; ++h) g[o.w2 + c * sh.hidden + h] += p[c] * hid[h];
                    g[o.b2 + c] += p[c];
                }
                for (int h = 0; h < sh.hidden; ++h) {
                    double v = 0.0;
                    for (int c = 0; c < sh.classes; ++c) v += x[o.w2 + c * sh.hidden + h] * p[c];
                    delta1[h] = v * (1.0 - hid[h] * hid[h]);
                }
                for (int h = 0; h < sh.hidden; ++h) {
                    for (int j = 0; j < sh.inputs; ++j)
                        g[o.w1 + h * sh.inputs + j] += delta1[h] * s.features[j];
                    g[o.b1 + h] += delta1[h];
                }
            }
            break;
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (int j = 0; j < dim_; ++j) g[j] = g[j] * inv + reg_ * x[j];
    if (!vec::all_finite(g)) throw std::runtime_error("ClientObjective::gradient: non-finite value");
    return g;
}

Vec ClientObjective::sample_gradient(const Vec& x, int index) const {
    const int one[1] = {index};
    return gradient(x, std::span<const int>(one, 1));
}

Vec stochastic_grad(const ClientObjective& obj, const Vec& x, std::span<const int> batch) {
    return obj.gradient(x, batch);
}

Vec full_grad(const ClientObjective& obj, const Vec& x) { return obj.full_grad(x); }

double global_loss(std::span<const ClientObjective> clients, const Vec& x) {
    if (clients.empty()) throw std::invalid_argument("global_loss: no clients");
    double acc = 0.0;
    for (const auto& c : clients) acc += c.full_loss(x);
    return acc / static_cast<double>(clients.size());
}

Vec global_grad(std::span<const ClientObjective> clients, const Vec& x) {
    if (clients.empty()) throw std::invalid_argument("global_grad: no clients");
    Vec g(x.size(), 0.0);
    for (const auto& c : clients) vec::add(g, c.full_grad(x));
    vec::scale(g, 1.0 / static_cast<double>(clients.size()));
    return g;
}

namespace {

// Exact global Hessian-vector product, defined for the two quadratic kinds.
Vec hessian_apply(std::span<const ClientObjective> clients, const Vec& v) {
    Vec out(v.size(), 0.0);
    for (const auto& c : clients) {
        Vec part(v.size(), 0.0);
        if (c.kind() == Kind::Quadratic) {
            double wbar = 0.0;
            for (const auto& s : c.samples()) wbar += s.target;
            wbar /= static_cast<double>(c.sample_count());
            for (std::size_t j = 0; j < v.size(); ++j) part[j] = wbar * v[j];
        } else {  // LeastSquares
            for (const auto& s : c.samples()) {
                const double av = vec::dot(s.features, v);
                for (std::size_t j = 0; j < v.size(); ++j) part[j] += av * s.features[j];
            }
            vec::scale(part, 1.0 / static_cast<double>(c.sample_count()));
        }
        vec::axpy(c.regularization(), v, part);
        vec::add(out, part);
    }
    vec::scale(out, 1.0 / static_cast<double>(clients.size()));
    return out;
}

double power_iteration(std::span<const ClientObjective> clients, int d, int cap, double tol) {
    RngStream rng(0x706f776572ULL);  // fixed start vector, independent of caller seeds
    Vec v(d);
    for (int j = 0; j < d; ++j) v[j] = rng.normal();
    double nv = vec::norm(v);
    if (nv == 0.0) v[0] = 1.0, nv = 1.0;
    vec::scale(v, 1.0 / nv);

    double lambda = 0.0;
    for (int it = 0; it < cap; ++it) {
        Vec hv = hessian_apply(clients, v);
        const double next = vec::dot(v, hv);
        const double hn = vec::norm(hv);
        if (hn == 0.0) return 0.0;  // zero operator
        vec::scale(hv, 1.0 / hn);
        v = std::move(hv);
        if (it > 0 && std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) return next;
        lambda = next;
    }
    throw std::runtime_error("constants: power iteration did not converge within cap");
}

// Dense global normal equations; exact minimiser for quadratic kinds.
std::optional<double> exact_optimum(std::span<const ClientObjective> clients, int d) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (const auto& c : clients) {
        const double inv_n = 1.0 / static_cast<double>(c.sample_count());
        if (c.kind() == Kind::Quadratic) {
            double wbar = 0.0;
            for (const auto& s : c.samples()) {
                wbar += s.target;
                for (int j = 0; j < d; ++j) b(j) += s.target * s.features[j] * inv_n;
            }
            H.diagonal().array() += wbar * inv_n;
        } else {
            for (const auto& s : c.samples()) {
                Eigen::Map<const Eigen::VectorXd> a(s.features.data(), d);
                H.noalias() += inv_n * a * a.transpose();
                b += inv_n * s.target * a;
            }
        }
        H.diagonal().array() += c.regularization();
    }
    const double K = static_cast<double>(clients.size());
    H /= K;
    b /= K;
    Eigen::LDLT<Eigen::MatrixXd> solver(H);
    if (solver.info() != Eigen::Success) return std::nullopt;
    Eigen::VectorXd xs = solver.solve(b);
    if ((H * xs - b).norm() > 1e-8 * std::max(1.0, b.norm())) return std::nullopt;  // rank-deficient
    Vec x_star(xs.data(), xs.data() + d);
    double f = 0.0;
    for (const auto& c : clients) f += c.full_loss(x_star);
    return f / K;
}

}  // namespace

ProblemConstants constants(std::span<const ClientObjective> clients, const ConstantsOptions& opts) {
    if (clients.empty()) throw std::invalid_argument("constants: empty problem");
    if (opts.eval_points.empty()) throw std::invalid_argument("constants: empty evaluation set");
    if (opts.batch_size < 1) throw std::invalid_argument("constants: batch_size must be >= 1");
    const Kind kind = clients.front().kind();
    const int d = clients.front().dim();
    for (const auto& c : clients) {
        if (c.kind() != kind) throw std::invalid_argument("constants: mixed objective kinds");
        if (c.dim() != d) throw std::invalid_argument("constants: mixed dimensions");
    }
    for (const auto& x : opts.eval_points)
        if (static_cast<int>(x.size()) != d)
            throw std::invalid_argument("constants: evaluation point of wrong dimension");

    ProblemConstants out;
    const bool quadratic_kind = (kind == Kind::Quadratic || kind == Kind::LeastSquares);

    if (quadratic_kind) {
        out.L = power_iteration(clients, d, opts.power_iter_cap, opts.power_tol);
        out.f_star = exact_optimum(clients, d);
        out.exact = true;
    } else {
        // Empirical smoothness over evaluation-point pairs; flagged as estimate.
        double L = 0.0;
        const std::size_t n = opts.eval_points.size();
        std::vector<Vec> grads(n);
        for (std::size_t i = 0; i < n; ++i) grads[i] = global_grad(clients, opts.eval_points[i]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = std::sqrt(
                    vec::squared_distance(opts.eval_points[i], opts.eval_points[j]));
                if (dx < 1e-12) continue;
                const double dg = std::sqrt(vec::squared_distance(grads[i], grads[j]));
                L = std::max(L, dg / dx);
            }
        }
        out.L = L;
        out.exact = false;
    }

    // sigma2: max over (point, client) of single-sample gradient variance,
    // divided by the batch size (uniform with-replacement sampling).
    // G2: max over points of the across-client full-gradient spread.
    double max_var = 0.0, max_g2 = 0.0;
    for (const auto& x : opts.eval_points) {
        Vec gbar(d, 0.0);
        std::vector<Vec> fg(clients.size());
        for (std::size_t k = 0; k < clients.size(); ++k) {
            fg[k] = clients[k].full_grad(x);
            vec::add(gbar, fg[k]);
        }
        vec::scale(gbar, 1.0 / static_cast<double>(clients.size()));
        double g2 = 0.0;
        for (std::size_t k = 0; k < clients.size(); ++k)
            g2 += vec::squared_distance(fg[k], gbar);
        g2 /= static_cast<double>(clients.size());
        max_g2 = std::max(max_g2, g2);

        for (std::size_t k = 0; k < clients.size(); ++k) {
            const auto& c = clients[k];
            double var = 0.0;
            for (int i = 0; i < c.sample_count(); ++i)
                var += vec::squared_distance(c.sample_gradient(x, i), fg[k]);
            var /= static_cast<double>(c.sample_count());
            max_var = std::max(max_var, var);
        }
    }
    out.sigma2 = max_var / static_cast<double>(opts.batch_size);
    out.G2 = max_g2;
    return out;
}

}  // namespace domo::objectives
