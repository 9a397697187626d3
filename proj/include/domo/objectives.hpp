#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domo/vec.hpp"

namespace domo::objectives {

// One labelled example. `target` is the class index for logistic/mlp2, the
// regression target for least-squares and the per-sample weight for the
// quadratic kind (whose feature vector is the sample's center).
struct Sample {
    Vec features;
    double target = 0.0;
};

enum class Kind { Quadratic, LeastSquares, Logistic, Mlp2 };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& name);

struct Mlp2Shape {
    int inputs = 0;
    int hidden = 0;
    int classes = 0;
    int dim() const { return hidden * inputs + hidden + classes * hidden + classes; }
};

// Interface the round state machine drives. Kept abstract so tests can plug
// in constant-gradient and replayed-gradient oracles.
class GradOracle {
public:
    virtual ~GradOracle() = default;
    virtual int dim() const = 0;
    virtual int sample_count() const = 0;
    // Mean loss / gradient over the given sample indices, regularisation included.
    virtual double loss(const Vec& x, std::span<const int> batch) const = 0;
    virtual Vec gradient(const Vec& x, std::span<const int> batch) const = 0;

    double full_loss(const Vec& x) const;
    Vec full_grad(const Vec& x) const;
};

// Finite-sum objective of one client: mean of per-sample losses plus an
// explicit L2 term (coefficient `regularization`, default 0).
class ClientObjective final : public GradOracle {
public:
    ClientObjective(Kind kind, std::vector<Sample> samples, double regularization = 0.0,
                    int num_classes = 0, std::optional<Mlp2Shape> shape = std::nullopt);

    static ClientObjective quadratic(std::vector<Sample> centers, double regularization = 0.0);
    static ClientObjective least_squares(std::vector<Sample> samples, double regularization = 0.0);
    static ClientObjective logistic(std::vector<Sample> samples, int num_classes,
                                    double regularization = 0.0);
    static ClientObjective mlp2(std::vector<Sample> samples, Mlp2Shape shape,
                                double regularization = 0.0);

    Kind kind() const { return kind_; }
    int dim() const override { return dim_; }
    int sample_count() const override { return static_cast<int>(samples_.size()); }
    int num_classes() const { return num_classes_; }
    double regularization() const { return reg_; }
    const std::vector<Sample>& samples() const { return samples_; }
    const std::optional<Mlp2Shape>& mlp2_shape() const { return shape_; }

    double loss(const Vec& x, std::span<const int> batch) const override;
    Vec gradient(const Vec& x, std::span<const int> batch) const override;

    // Gradient of a single sample (regularisation included), used by the
    // exact variance computation in constants().
    Vec sample_gradient(const Vec& x, int index) const;

private:
    Kind kind_;
    std::vector<Sample> samples_;
    double reg_;
    int dim_;
    int num_classes_;
    std::optional<Mlp2Shape> shape_;
};

// Spec-facing free functions.
Vec stochastic_grad(const ClientObjective& obj, const Vec& x, std::span<const int> batch);
Vec full_grad(const ClientObjective& obj, const Vec& x);

double global_loss(std::span<const ClientObjective> clients, const Vec& x);
Vec global_grad(std::span<const ClientObjective> clients, const Vec& x);

// Analysis constants. For quadratic/least-squares problems L and f_star are
// exact (power iteration on the global Hessian, normal equations); sigma2 and
// G2 are exact at the supplied evaluation points. For logistic/mlp2 L is an
// empirical estimate over the evaluation set and f_star is absent.
struct ProblemConstants {
    double L = 0.0;
    double sigma2 = 0.0;
    double G2 = 0.0;
    std::optional<double> f_star;
    bool exact = false;
};

struct ConstantsOptions {
    std::vector<Vec> eval_points;  // required, nonempty
    int batch_size = 32;
    int power_iter_cap = 100000;
    double power_tol = 1e-10;
};

ProblemConstants constants(std::span<const ClientObjective> clients, const ConstantsOptions& opts);

}  // namespace domo::objectives
