#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "domo/method.hpp"
#include "domo/vec.hpp"

namespace domo::fedopt {

// Full per-step record of one run. Local arrays are flattened in
// (round, client, step, coordinate) order so each client writes one
// contiguous slice; x_local(r, 0, k) is the value after pre-momentum fusion,
// i.e. the point at which the first gradient of the round is evaluated, and
// step index P holds the end-of-round state. m_local(r, 0, k) is the buffer
// after the boundary rule was applied. Recorded only for full participation.
struct Trace {
    int R = 0, P = 0, K = 0, d = 0;
    std::uint64_t seed = 0;
    std::string method;
    MethodConfig cfg;

    std::vector<double> x_server;  // (R+1) x d, x_0..x_R
    std::vector<double> m_server;  // (R+1) x d, m_0..m_R
    std::vector<double> x_local;   // R x K x (P+1) x d
    std::vector<double> m_local;   // R x K x (P+1) x d
    std::vector<double> g_local;   // R x K x P x d
    std::vector<double> x_bar;     // R x P x d, mean of x_local over clients

    void allocate();

    std::span<const double> x_server_at(int r) const { return {&x_server[std::size_t(r) * d], std::size_t(d)}; }
    std::span<const double> m_server_at(int r) const { return {&m_server[std::size_t(r) * d], std::size_t(d)}; }
    std::span<const double> x_at(int r, int k, int p) const { return {&x_local[local_index(r, k, p)], std::size_t(d)}; }
    std::span<const double> m_at(int r, int k, int p) const { return {&m_local[local_index(r, k, p)], std::size_t(d)}; }
    std::span<const double> g_at(int r, int k, int p) const {
        return {&g_local[((std::size_t(r) * K + k) * P + p) * d], std::size_t(d)};
    }
    std::span<const double> x_bar_at(int r, int p) const {
        return {&x_bar[(std::size_t(r) * P + p) * d], std::size_t(d)};
    }

    std::span<double> client_x_slice(int r, int k) { return {&x_local[local_index(r, k, 0)], std::size_t(P + 1) * d}; }
    std::span<double> client_m_slice(int r, int k) { return {&m_local[local_index(r, k, 0)], std::size_t(P + 1) * d}; }
    std::span<double> client_g_slice(int r, int k) {
        return {&g_local[((std::size_t(r) * K + k) * P) * d], std::size_t(P) * d};
    }

    std::size_t local_index(int r, int k, int p) const {
        return ((std::size_t(r) * K + k) * (P + 1) + p) * d;
    }

    // Array sizes against the declared dimensions. Throws on violation.
    void check_shape() const;

    // Full consistency of the stored record (shape, x_bar recomputation,
    // local momentum recursion). Throws on violation.
    void validate(double tol = 1e-12) const;
};

// Binary layout: fixed header followed by the six arrays as little-endian
// IEEE-754 doubles, in declaration order. A JSON sidecar `<path>.json`
// mirrors the header for tooling.
void save_trace(const Trace& trace, const std::string& path);
Trace load_trace(const std::string& path);

}  // namespace domo::fedopt
