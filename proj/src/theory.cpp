#include "domo/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "domo/method.hpp"

namespace domo::theory {

using fedopt::Boundary;
using fedopt::Fusion;
using fedopt::Trace;

namespace {

constexpr double kInfSlack = -1.0;  // sentinel: lhs == 0, bound holds with infinite slack

double slack_of(double lhs, double rhs) { return lhs > 0.0 ? rhs / lhs : kInfSlack; }

bool beta_matched(const fedopt::MethodConfig& cfg) {
    const double target = cfg.mu_s * cfg.alpha / (1.0 - cfg.mu_s);
    return std::abs(cfg.beta - target) <= 1e-9 * std::max(1.0, std::abs(target));
}

// sum_k of a local array slice into out
void sum_clients(const Trace& t, int r, int p, bool momentum, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int k = 0; k < t.K; ++k) {
        auto s = momentum ? t.m_at(r, k, p) : t.x_at(r, k, p);
        for (int j = 0; j < t.d; ++j) out[j] += s[j];
    }
}

}  // namespace

ZReconstruction reconstruct_z(const Trace& t) {
    t.check_shape();
    ZReconstruction out;
    out.R = t.R;
    out.P = t.P;
    out.K = t.K;
    out.d = t.d;
    const int T = t.R * t.P;
    const int d = t.d;
    out.y_hat.assign(std::size_t(T + 1) * d, 0.0);
    out.z.assign(std::size_t(T + 1) * d, 0.0);

    const double coeff = t.cfg.alpha * t.cfg.eta / ((1.0 - t.cfg.mu_s) * t.K);

    auto x0 = t.x_server_at(0);
    std::copy(x0.begin(), x0.end(), out.y_hat.begin());
    std::vector<double> msum(d);
    for (int tt = 0; tt < T; ++tt) {
        const int r = tt / t.P;
        const int p = tt % t.P;
        sum_clients(t, r, p + 1, true, msum);
        const double* prev = &out.y_hat[std::size_t(tt) * d];
        double* next = &out.y_hat[std::size_t(tt + 1) * d];
        for (int j = 0; j < d; ++j) next[j] = prev[j] - coeff * msum[j];
    }

    std::copy_n(out.y_hat.data(), d, out.z.data());
    const double inv = 1.0 / (1.0 - t.cfg.mu_l);
    for (int tt = 1; tt <= T; ++tt) {
        const double* yh = &out.y_hat[std::size_t(tt) * d];
        const double* yp = &out.y_hat[std::size_t(tt - 1) * d];
        double* z = &out.z[std::size_t(tt) * d];
        for (int j = 0; j < d; ++j) z[j] = (yh[j] - t.cfg.mu_l * yp[j]) * inv;
    }
    return out;
}

Lemma1Result check_lemma1(const Trace& t, double tol_scale) {
    Lemma1Result res;
    if (t.cfg.fusion != Fusion::None && !beta_matched(t.cfg)) {
        res.status.reason = "momentum fusion active with beta != mu_s*alpha/(1-mu_s)";
        return res;
    }
    res.status.applicable = true;

    const ZReconstruction zr = reconstruct_z(t);
    const int T = t.R * t.P;
    const int d = t.d;
    const double step_coeff =
        t.cfg.alpha * t.cfg.eta / ((1.0 - t.cfg.mu_l) * (1.0 - t.cfg.mu_s) * t.K);

    std::vector<double> gsum(d), mprev(d);
    for (int tt = 0; tt < T; ++tt) {
        const int r = tt / t.P;
        const int p = tt % t.P;
        std::fill(gsum.begin(), gsum.end(), 0.0);
        for (int k = 0; k < t.K; ++k) {
            auto g = t.g_at(r, k, p);
            res.max_grad_norm = std::max(res.max_grad_norm, std::sqrt(vec::squared_norm(g)));
            for (int j = 0; j < d; ++j) gsum[j] += g[j];
        }

        const bool corrected_step = (t.cfg.boundary == Boundary::Reset && p == 0 && r >= 1);
        if (corrected_step) sum_clients(t, r - 1, t.P, true, mprev);

        const double* z0 = &zr.z[std::size_t(tt) * d];
        const double* z1 = &zr.z[std::size_t(tt + 1) * d];
        double exact_sq = 0.0, literal_sq = 0.0, corr_sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double literal = (z1[j] - z0[j]) + step_coeff * gsum[j];
            double exact = literal;
            if (corrected_step) {
                const double corr = step_coeff * t.cfg.mu_l * mprev[j];
                exact -= corr;
                corr_sq += corr * corr;
            }
            exact_sq += exact * exact;
            literal_sq += literal * literal;
        }
        res.max_residual = std::max(res.max_residual, std::sqrt(exact_sq));
        res.max_residual_uncorrected = std::max(res.max_residual_uncorrected, std::sqrt(literal_sq));
        res.boundary_correction_max = std::max(res.boundary_correction_max, std::sqrt(corr_sq));
    }
    res.tolerance = tol_scale * (1.0 + res.max_grad_norm);
    res.pass = res.max_residual <= res.tolerance;
    return res;
}

double stitching_max_gap(const Trace& t) {
    const ZReconstruction zr = reconstruct_z(t);
    const int d = t.d;
    const double mu_factor = t.cfg.mu_s / (1.0 - t.cfg.mu_s);
    const double c_z = t.cfg.mu_l * t.cfg.alpha * t.cfg.eta /
                       ((1.0 - t.cfg.mu_l) * (1.0 - t.cfg.mu_s) * t.K);
    std::vector<double> msum(d);
    double max_gap = 0.0;
    for (int r = 0; r < t.R; ++r) {
        sum_clients(t, r, t.P, true, msum);
        auto xs = t.x_server_at(r + 1);
        auto ms = t.m_server_at(r + 1);
        const double* zA = &zr.z[std::size_t(r + 1) * t.P * d];
        double gap = 0.0;
        for (int j = 0; j < d; ++j) {
            const double y = xs[j] - mu_factor * t.cfg.alpha * t.cfg.eta * t.P * ms[j];
            const double zB = y - c_z * msum[j];
            const double diff = zA[j] - zB;
            gap += diff * diff;
        }
        max_gap = std::max(max_gap, std::sqrt(gap));
    }
    return max_gap;
}

Lemma2Result check_lemma2_closed_form(const Trace& t, double tolerance) {
    Lemma2Result res;
    res.tolerance = tolerance;
    if (t.cfg.fusion != Fusion::None && !beta_matched(t.cfg)) {
        res.status.reason = "momentum fusion active with beta != mu_s*alpha/(1-mu_s)";
        return res;
    }
    res.status.applicable = true;

    const ZReconstruction zr = reconstruct_z(t);
    const int d = t.d;
    const double A = t.cfg.alpha / (1.0 - t.cfg.mu_s);
    const double c_z = t.cfg.mu_l * t.cfg.alpha * t.cfg.eta /
                       ((1.0 - t.cfg.mu_l) * (1.0 - t.cfg.mu_s) * t.K);
    const double mr_base = -(t.cfg.mu_s / (1.0 - t.cfg.mu_s)) * t.cfg.alpha * t.cfg.eta * t.P;

    std::vector<double> prefix(d), M(d), resid(d), msum(d);
    for (int r = 0; r < t.R; ++r) {
        std::fill(prefix.begin(), prefix.end(), 0.0);
        auto mr = t.m_server_at(r);
        for (int p = 0; p < t.P; ++p) {
            if (p == 0) {
                if (r == 0)
                    std::fill(M.begin(), M.end(), 0.0);
                else
                    sum_clients(t, r - 1, t.P, true, M);
            } else {
                sum_clients(t, r, p, true, M);
            }
            double disp = 0.0;
            if (t.cfg.fusion == Fusion::Pre) disp = t.cfg.eta * t.cfg.beta * t.P;
            if (t.cfg.fusion == Fusion::Intra) disp = t.cfg.eta * t.cfg.beta * p;
            const double mr_factor = mr_base + disp;

            const double* z = &zr.z[(std::size_t(r) * t.P + p) * d];
            auto xbar = t.x_bar_at(r, p);
            for (int j = 0; j < d; ++j) {
                const double closed = mr_factor * mr[j] +
                                      (1.0 - A) * (t.cfg.eta / t.K) * prefix[j] - c_z * M[j];
                resid[j] = (z[j] - xbar[j]) - closed;
            }
            res.max_residual = std::max(res.max_residual, std::sqrt(vec::squared_norm(resid)));

            sum_clients(t, r, p + 1, true, msum);
            for (int j = 0; j < d; ++j) prefix[j] += msum[j];
        }
    }
    res.pass = res.max_residual <= res.tolerance;
    return res;
}

double h_profile_fusion(double A, double mu_l, int P) {
    double acc = 0.0;
    const double denom = 1.0 - std::pow(mu_l, P);
    for (int p = 0; p < P; ++p) {
        const double h = A * (1.0 + mu_l - std::pow(mu_l, p)) / (1.0 - mu_l) - 1.0;
        acc += h * h * std::pow(mu_l, p);
    }
    return denom > 0.0 ? acc / denom : acc;  // mu_l == 0 leaves only p = 0
}

double h_profile_constant(double mu_l, int P) {
    const double h = mu_l / (1.0 - mu_l);
    double acc = 0.0;
    const double denom = 1.0 - std::pow(mu_l, P);
    for (int p = 0; p < P; ++p) acc += h * h * std::pow(mu_l, p);
    return denom > 0.0 ? acc / denom : acc;
}

double grad_mean_sq_sum(const Trace& t) {
    const int d = t.d;
    std::vector<double> gsum(d);
    double acc = 0.0;
    for (int r = 0; r < t.R; ++r)
        for (int p = 0; p < t.P; ++p) {
            std::fill(gsum.begin(), gsum.end(), 0.0);
            for (int k = 0; k < t.K; ++k) {
                auto g = t.g_at(r, k, p);
                for (int j = 0; j < d; ++j) gsum[j] += g[j];
            }
            for (int j = 0; j < d; ++j) {
                const double v = gsum[j] / t.K;
                acc += v * v;
            }
        }
    return acc;
}

namespace {

double h1_raw(double A, double mu_l, int p) {
    // unsimplified: (mu_l/(1-mu_l))*A - (1-A) * sum_{p'=0}^{p-1} mu_l^{p'+1-p}
    double s = 0.0;
    for (int pp = 0; pp < p; ++pp) s += std::pow(mu_l, pp + 1 - p);
    return mu_l / (1.0 - mu_l) * A - (1.0 - A) * s;
}

double h1_simplified(double A, double mu_l, int p) {
    return A * (1.0 + mu_l - std::pow(mu_l, p)) / (1.0 - mu_l) -
           (1.0 - std::pow(mu_l, p)) / (1.0 - mu_l);
}

}  // namespace

InconsistencyResult check_inconsistency_bound(const Trace& t) {
    InconsistencyResult res;
    const double alpha_floor = (1.0 - t.cfg.mu_s) * (1.0 - t.cfg.mu_l);
    if (t.cfg.alpha < alpha_floor - 1e-12) {
        res.status.reason = "alpha < (1-mu_s)(1-mu_l)";
        return res;
    }
    const bool domo_form = t.cfg.fusion == Fusion::Pre && beta_matched(t.cfg);
    const bool local_form = t.cfg.fusion == Fusion::None && t.cfg.mu_s == 0.0;
    if (!domo_form && !local_form) {
        res.status.reason = "bound derived only for momentum fusion with matched beta or for "
                            "fusion-free runs without server momentum";
        return res;
    }
    res.status.applicable = true;

    const ZReconstruction zr = reconstruct_z(t);
    double lhs = 0.0;
    for (int r = 0; r < t.R; ++r)
        for (int p = 0; p < t.P; ++p) {
            const double* z = &zr.z[(std::size_t(r) * t.P + p) * t.d];
            auto xbar = t.x_bar_at(r, p);
            lhs += vec::squared_distance(std::span<const double>(z, std::size_t(t.d)), xbar);
        }

    const double A = t.cfg.alpha / (1.0 - t.cfg.mu_s);
    // alpha = 1 - mu_s collapses the fusion profile to the constant one
    const bool constant_h = local_form || std::abs(A - 1.0) <= 1e-12;
    const double profile = constant_h ? h_profile_constant(t.cfg.mu_l, t.P)
                                      : h_profile_fusion(A, t.cfg.mu_l, t.P);
    const double rhs =
        t.cfg.eta * t.cfg.eta / (1.0 - t.cfg.mu_l) * profile * grad_mean_sq_sum(t);

    res.lhs = lhs;
    res.rhs = rhs;
    // absolute slop covers fp dust in the exactly-degenerate 0 <= 0 cases
    res.holds = lhs <= rhs * (1.0 + 1e-12) + 1e-20;
    res.slack = slack_of(lhs, rhs);
    if (t.cfg.mu_l > 1e-12) {
        for (int p = 0; p < t.P; ++p)
            res.h1_simplification_gap =
                std::max(res.h1_simplification_gap,
                         std::abs(h1_raw(A, t.cfg.mu_l, p) - h1_simplified(A, t.cfg.mu_l, p)));
    }
    return res;
}

namespace {

void require_uniform_ensemble(std::span<const Trace> traces) {
    if (traces.empty()) throw std::invalid_argument("theory: empty trace ensemble");
    const Trace& a = traces.front();
    for (const Trace& t : traces) {
        if (t.R != a.R || t.P != a.P || t.K != a.K || t.d != a.d)
            throw std::invalid_argument("theory: ensemble traces disagree on dimensions");
        if (t.cfg.mu_l != a.cfg.mu_l || t.cfg.mu_s != a.cfg.mu_s || t.cfg.eta != a.cfg.eta ||
            t.cfg.alpha != a.cfg.alpha || t.cfg.beta != a.cfg.beta)
            throw std::invalid_argument("theory: ensemble traces disagree on configuration");
    }
}

}  // namespace

DivergenceBoundResult check_divergence_bound(std::span<const Trace> traces,
                                             const objectives::ProblemConstants& constants) {
    DivergenceBoundResult res;
    require_uniform_ensemble(traces);
    const Trace& t0 = traces.front();
    res.ensemble_size = static_cast<int>(traces.size());

    const double mu_l = t0.cfg.mu_l, eta = t0.cfg.eta;
    if (constants.L > 0.0 && t0.P > (1.0 - mu_l) / (6.0 * eta * constants.L) * (1.0 + 1e-12)) {
        res.status.reason = "P > (1-mu_l)/(6*eta*L)";
        return res;
    }
    res.status.applicable = true;

    double lhs = 0.0;
    for (const Trace& t : traces) {
        double acc = 0.0;
        for (int r = 0; r < t.R; ++r)
            for (int p = 0; p < t.P; ++p) {
                auto xbar = t.x_bar_at(r, p);
                for (int k = 0; k < t.K; ++k) acc += vec::squared_distance(t.x_at(r, k, p), xbar);
            }
        lhs += acc / (static_cast<double>(t.K) * t.R * t.P);
    }
    lhs /= static_cast<double>(traces.size());

    const double om = 1.0 - mu_l;
    const double rhs = 3.0 * eta * eta * t0.P * constants.sigma2 / (om * om) +
                       9.0 * eta * eta * t0.P * t0.P * constants.G2 / (om * om);
    res.lhs = lhs;
    res.rhs = rhs;
    res.holds = lhs <= rhs * (1.0 + 1e-12);
    res.slack = slack_of(lhs, rhs);
    return res;
}

Theorem1Result check_theorem1(std::span<const Trace> traces,
                              std::span<const objectives::ClientObjective> clients,
                              const objectives::ProblemConstants& constants) {
    Theorem1Result res;
    require_uniform_ensemble(traces);
    const Trace& t0 = traces.front();
    res.ensemble_size = static_cast<int>(traces.size());
    const auto& cfg = t0.cfg;
    const double mu_l = cfg.mu_l, mu_s = cfg.mu_s, eta = cfg.eta;
    const double L = constants.L;

    res.pre_alpha = std::abs(cfg.alpha - (1.0 - mu_s)) <= 1e-12;
    res.pre_beta = (cfg.fusion == Fusion::Pre && std::abs(cfg.beta - mu_s) <= 1e-12) ||
                   (mu_s == 0.0 && cfg.fusion == Fusion::None);
    res.pre_steps = L <= 0.0 || t0.P <= (1.0 - mu_l) / (6.0 * eta * L) * (1.0 + 1e-12);
    const double om = 1.0 - mu_l;
    res.pre_eta = 1.0 - 2.0 * eta * L -
                      4.0 * mu_l * mu_l * eta * eta * L * L / (om * om * om * om) >=
                  -1e-12;

    if (!constants.f_star) {
        res.status.reason = "exact optimal value unavailable";
        return res;
    }
    if (!res.pre_alpha || !res.pre_beta || !res.pre_steps || !res.pre_eta) {
        std::string why;
        if (!res.pre_alpha) why += "alpha != 1-mu_s; ";
        if (!res.pre_beta) why += "beta != mu_s; ";
        if (!res.pre_steps) why += "P too large for eta*L; ";
        if (!res.pre_eta) why += "step-size condition violated; ";
        res.status.reason = why;
        return res;
    }
    res.status.applicable = true;

    double lhs = 0.0;
    double f0 = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const Trace& t = traces[i];
        if (i == 0) {
            Vec x0(t.x_server_at(0).begin(), t.x_server_at(0).end());
            f0 = objectives::global_loss(clients, x0);
        }
        for (int r = 0; r < t.R; ++r)
            for (int p = 0; p < t.P; ++p) {
                auto xb = t.x_bar_at(r, p);
                Vec x(xb.begin(), xb.end());
                lhs += vec::squared_norm(objectives::global_grad(clients, x));
            }
    }
    lhs /= static_cast<double>(traces.size()) * t0.R * t0.P;

    const double T = static_cast<double>(t0.R) * t0.P;
    const double K = static_cast<double>(t0.K);
    const double rhs =
        2.0 * om * (f0 - *constants.f_star) / (eta * T) +
        9.0 * eta * eta * L * L * t0.P * t0.P * constants.G2 / (om * om) +
        eta * L * constants.sigma2 / om *
            (1.0 / K + 3.0 * eta * L * t0.P / (2.0 * om) +
             2.0 * mu_l * mu_l * eta * L / (om * om * om * om * K));
    res.lhs = lhs;
    res.rhs = rhs;
    res.holds = lhs <= rhs * (1.0 + 1e-12);
    res.slack = slack_of(lhs, rhs);
    return res;
}

std::uint64_t comm_cost(const std::string& method, int d, int R, int K, std::optional<int> S) {
    const fedopt::MethodConfig cfg = fedopt::method_from_name(method);
    const std::uint64_t per_round_per_client =
        2ULL * static_cast<std::uint64_t>(d) * (cfg.doubles_comm() ? 2 : 1);
    return per_round_per_client * static_cast<std::uint64_t>(R) *
           static_cast<std::uint64_t>(S.value_or(K));
}

namespace {

nlohmann::json status_json(const CheckStatus& s) {
    return {{"applicable", s.applicable}, {"reason", s.reason}};
}

}  // namespace

nlohmann::json TheoryReport::to_json() const {
    nlohmann::json j;
    j["schema"] = "domo-theory-report-v1";
    j["method"] = method;
    j["dims"] = {{"R", R}, {"P", P}, {"K", K}, {"d", d}};
    j["ensemble_size"] = ensemble_size;
    j["lemma1"] = status_json(lemma1.status);
    j["lemma1"]["max_residual"] = lemma1.max_residual;
    j["lemma1"]["max_residual_uncorrected"] = lemma1.max_residual_uncorrected;
    j["lemma1"]["boundary_correction_max"] = lemma1.boundary_correction_max;
    j["lemma1"]["max_grad_norm"] = lemma1.max_grad_norm;
    j["lemma1"]["tolerance"] = lemma1.tolerance;
    j["lemma1"]["pass"] = lemma1.pass;
    j["stitching"] = {{"max_gap", stitching_gap}, {"pass", stitching_pass}};
    j["lemma2_closed_form"] = status_json(lemma2.status);
    j["lemma2_closed_form"]["max_residual"] = lemma2.max_residual;
    j["lemma2_closed_form"]["tolerance"] = lemma2.tolerance;
    j["lemma2_closed_form"]["pass"] = lemma2.pass;
    j["inconsistency"] = status_json(inconsistency.status);
    j["inconsistency"]["lhs"] = inconsistency.lhs;
    j["inconsistency"]["rhs"] = inconsistency.rhs;
    j["inconsistency"]["holds"] = inconsistency.holds;
    j["inconsistency"]["slack"] = inconsistency.slack;
    j["inconsistency"]["h1_simplification_gap"] = inconsistency.h1_simplification_gap;
    j["divergence_bound"] = status_json(divergence.status);
    j["divergence_bound"]["lhs"] = divergence.lhs;
    j["divergence_bound"]["rhs"] = divergence.rhs;
    j["divergence_bound"]["holds"] = divergence.holds;
    j["divergence_bound"]["slack"] = divergence.slack;
    j["divergence_bound"]["ensemble_size"] = divergence.ensemble_size;
    j["theorem1"] = status_json(theorem1.status);
    j["theorem1"]["lhs"] = theorem1.lhs;
    j["theorem1"]["rhs"] = theorem1.rhs;
    j["theorem1"]["holds"] = theorem1.holds;
    j["theorem1"]["slack"] = theorem1.slack;
    j["theorem1"]["preconditions"] = {{"alpha", theorem1.pre_alpha},
                                      {"beta", theorem1.pre_beta},
                                      {"local_steps", theorem1.pre_steps},
                                      {"eta", theorem1.pre_eta}};
    if (constants) {
        j["constants"] = {{"L", constants->L},
                          {"sigma2", constants->sigma2},
                          {"G2", constants->G2},
                          {"exact", constants->exact}};
        if (constants->f_star)
            j["constants"]["f_star"] = *constants->f_star;
        else
            j["constants"]["f_star"] = nullptr;
    } else {
        j["constants"] = nullptr;
    }
    j["comm_floats_total"] = comm_total;
    return j;
}

bool TheoryReport::all_applicable_pass() const {
    if (lemma1.status.applicable && !lemma1.pass) return false;
    if (!stitching_pass) return false;
    if (lemma2.status.applicable && !lemma2.pass) return false;
    if (inconsistency.status.applicable && !inconsistency.holds) return false;
    if (divergence.status.applicable && !divergence.holds) return false;
    if (theorem1.status.applicable && !theorem1.holds) return false;
    return true;
}

TheoryReport verify_traces(std::span<const Trace> traces,
                           std::span<const objectives::ClientObjective> clients,
                           const std::optional<objectives::ProblemConstants>& constants,
                           double lemma1_tol_scale, double stitching_tol) {
    if (traces.empty()) throw std::invalid_argument("verify_traces: no traces");
    TheoryReport rep;
    const Trace& t0 = traces.front();
    rep.method = t0.method;
    rep.R = t0.R;
    rep.P = t0.P;
    rep.K = t0.K;
    rep.d = t0.d;
    rep.ensemble_size = static_cast<int>(traces.size());
    rep.stitching_pass = true;

    for (const Trace& t : traces) {
        Lemma1Result l1 = check_lemma1(t, lemma1_tol_scale);
        if (l1.status.applicable) {
            if (!rep.lemma1.status.applicable) rep.lemma1 = l1;
            rep.lemma1.status.applicable = true;
            rep.lemma1.max_residual = std::max(rep.lemma1.max_residual, l1.max_residual);
            rep.lemma1.max_residual_uncorrected =
                std::max(rep.lemma1.max_residual_uncorrected, l1.max_residual_uncorrected);
            rep.lemma1.boundary_correction_max =
                std::max(rep.lemma1.boundary_correction_max, l1.boundary_correction_max);
            rep.lemma1.max_grad_norm = std::max(rep.lemma1.max_grad_norm, l1.max_grad_norm);
            rep.lemma1.tolerance = lemma1_tol_scale * (1.0 + rep.lemma1.max_grad_norm);
            rep.lemma1.pass = rep.lemma1.max_residual <= rep.lemma1.tolerance;
        } else if (!rep.lemma1.status.applicable && rep.lemma1.status.reason.empty()) {
            rep.lemma1.status.reason = l1.status.reason;
        }

        rep.stitching_gap = std::max(rep.stitching_gap, stitching_max_gap(t));
        rep.stitching_pass = rep.stitching_gap <= stitching_tol;

        Lemma2Result l2 = check_lemma2_closed_form(t);
        if (l2.status.applicable) {
            rep.lemma2.status.applicable = true;
            rep.lemma2.max_residual = std::max(rep.lemma2.max_residual, l2.max_residual);
            rep.lemma2.tolerance = l2.tolerance;
            rep.lemma2.pass = rep.lemma2.max_residual <= rep.lemma2.tolerance;
        } else if (!rep.lemma2.status.applicable && rep.lemma2.status.reason.empty()) {
            rep.lemma2.status.reason = l2.status.reason;
        }

        InconsistencyResult inc = check_inconsistency_bound(t);
        if (inc.status.applicable) {
            const bool first = !rep.inconsistency.status.applicable;
            const bool worse = first || (inc.slack != kInfSlack &&
                                         (rep.inconsistency.slack == kInfSlack ||
                                          inc.slack < rep.inconsistency.slack));
            if (worse) {
                const double gap = rep.inconsistency.h1_simplification_gap;
                rep.inconsistency = inc;
                rep.inconsistency.h1_simplification_gap =
                    std::max(gap, inc.h1_simplification_gap);
            }
            rep.inconsistency.status.applicable = true;
            if (!inc.holds) rep.inconsistency.holds = false;
        } else if (!rep.inconsistency.status.applicable &&
                   rep.inconsistency.status.reason.empty()) {
            rep.inconsistency.status.reason = inc.status.reason;
        }
    }

    if (constants) {
        rep.constants = constants;
        try {
            rep.divergence = check_divergence_bound(traces, *constants);
        } catch (const std::invalid_argument& e) {
            rep.divergence.status.reason = e.what();
        }
        if (!clients.empty()) {
            try {
                rep.theorem1 = check_theorem1(traces, clients, *constants);
            } catch (const std::invalid_argument& e) {
                rep.theorem1.status.reason = e.what();
            }
        } else {
            rep.theorem1.status.reason = "objectives unavailable";
        }
    } else {
        rep.divergence.status.reason = "constants unavailable";
        rep.theorem1.status.reason = "constants unavailable";
    }

    if (fedopt::known_method(t0.method))
        rep.comm_total = comm_cost(t0.method, t0.d, t0.R, t0.K,
                                   t0.cfg.participation);
    return rep;
}

}  // namespace domo::theory
