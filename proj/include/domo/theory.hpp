#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domo/objectives.hpp"
#include "domo/trace.hpp"

namespace domo::theory {

struct CheckStatus {
    bool applicable = false;
    std::string reason;  // set when not applicable; never a silent pass
};

// Auxiliary sequences rebuilt from a trace. y_hat accumulates the momentum
// sums from x_0; z is the momentum-corrected sequence indexed continuously by
// the global step t = r*P + p, so z[t] at t = r*P is both z_{r-1,P} and
// z_{r,0}.
struct ZReconstruction {
    int R = 0, P = 0, K = 0, d = 0;
    std::vector<double> y_hat;  // (T+1) x d
    std::vector<double> z;      // (T+1) x d

    std::span<const double> z_at(int t) const { return {&z[std::size_t(t) * d], std::size_t(d)}; }
    std::span<const double> y_hat_at(int t) const {
        return {&y_hat[std::size_t(t) * d], std::size_t(d)};
    }
};

ZReconstruction reconstruct_z(const fedopt::Trace& trace);

// Per-step update check of the reconstructed z sequence against
// -(alpha*eta / ((1-mu_l)(1-mu_s)K)) * sum_k g. Under the reset boundary the
// first step of each round carries an exact correction term
// +coeff*mu_l*sum_k m^{(k)}_{r-1,P}: averaging preserves the buffer sum across
// the boundary while resetting does not, so the uncorrected update rule
// cannot hold there (max_residual_uncorrected reports how far off it is).
struct Lemma1Result {
    CheckStatus status;
    double max_residual = 0.0;              // exact rule, reset correction applied
    double max_residual_uncorrected = 0.0;  // literal rule at every step
    double boundary_correction_max = 0.0;   // largest correction norm applied
    double max_grad_norm = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};
Lemma1Result check_lemma1(const fedopt::Trace& trace, double tol_scale = 1e-10);

// Round-boundary consistency: the cumulative route to z_{r,P} against the
// server-state route to z_{r+1,0} (x_{r+1}, m_{r+1} recombined).
double stitching_max_gap(const fedopt::Trace& trace);

// Measured z - x_bar against the closed form with the appendix coefficient
// mu_l*alpha*eta / ((1-mu_l)(1-mu_s)K). For fusion-free runs the closed form
// keeps the extra -(mu_s/(1-mu_s))*alpha*eta*P*m_r term.
struct Lemma2Result {
    CheckStatus status;
    double max_residual = 0.0;
    double tolerance = 1e-10;
    bool pass = false;
};
Lemma2Result check_lemma2_closed_form(const fedopt::Trace& trace, double tolerance = 1e-10);

// h-profile factors of the inconsistency bound:
// sum_p h(p)^2 mu_l^p / (1 - mu_l^P), with h(p) = A*(1+mu_l-mu_l^p)/(1-mu_l)-1
// for the momentum-fusion profile (A = alpha/(1-mu_s)) and the constant
// h = mu_l/(1-mu_l) for plain local momentum.
double h_profile_fusion(double A, double mu_l, int P);
double h_profile_constant(double mu_l, int P);
// sum_t ||(1/K) sum_k g_t||^2 over the whole trace
double grad_mean_sq_sum(const fedopt::Trace& trace);

struct InconsistencyResult {
    CheckStatus status;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    double slack = 0.0;                 // rhs / lhs
    double h1_simplification_gap = 0.0; // raw vs simplified h1 over all p
};
InconsistencyResult check_inconsistency_bound(const fedopt::Trace& trace);

struct DivergenceBoundResult {
    CheckStatus status;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    double slack = 0.0;
    int ensemble_size = 0;
};
DivergenceBoundResult check_divergence_bound(std::span<const fedopt::Trace> traces,
                                             const objectives::ProblemConstants& constants);

struct Theorem1Result {
    CheckStatus status;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    double slack = 0.0;
    int ensemble_size = 0;
    bool pre_alpha = false, pre_beta = false, pre_steps = false, pre_eta = false;
};
Theorem1Result check_theorem1(std::span<const fedopt::Trace> traces,
                              std::span<const objectives::ClientObjective> clients,
                              const objectives::ProblemConstants& constants);

// Total floats moved over R rounds; buffer-averaging methods pay double in
// each direction.
std::uint64_t comm_cost(const std::string& method, int d, int R, int K,
                        std::optional<int> S = std::nullopt);

struct TheoryReport {
    std::string method;
    int R = 0, P = 0, K = 0, d = 0;
    int ensemble_size = 0;
    Lemma1Result lemma1;
    double stitching_gap = 0.0;
    bool stitching_pass = false;
    Lemma2Result lemma2;
    InconsistencyResult inconsistency;
    DivergenceBoundResult divergence;
    Theorem1Result theorem1;
    std::optional<objectives::ProblemConstants> constants;
    std::uint64_t comm_total = 0;

    nlohmann::json to_json() const;
    bool all_applicable_pass() const;  // for verify --strict
};

// Runs every per-trace check on each trace (keeping the worst outcome) and
// the ensemble checks across the whole set. Constants/objectives may be
// absent, in which case the two bound checks report not-applicable.
TheoryReport verify_traces(std::span<const fedopt::Trace> traces,
                           std::span<const objectives::ClientObjective> clients,
                           const std::optional<objectives::ProblemConstants>& constants,
                           double lemma1_tol_scale = 1e-10, double stitching_tol = 1e-12);

}  // namespace domo::theory
