#include "domo/trace.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace domo::fedopt {

namespace {

constexpr char kMagic[8] = {'D', 'O', 'M', 'O', 'T', 'R', 'C', '1'};

static_assert(sizeof(double) == 8, "trace format assumes 64-bit IEEE doubles");

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_array(std::ofstream& out, const std::vector<double>& a) {
    write_pod<std::uint64_t>(out, a.size());
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * 8));
}

void read_array(std::ifstream& in, std::vector<double>& a, std::size_t expected) {
    std::uint64_t n = 0;
    read_pod(in, n);
    if (n != expected) throw std::runtime_error("load_trace: array size mismatch");
    a.resize(n);
    in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * 8));
}

}  // namespace

void Trace::allocate() {
    const std::size_t dd = d;
    x_server.assign(std::size_t(R + 1) * dd, 0.0);
    m_server.assign(std::size_t(R + 1) * dd, 0.0);
    x_local.assign(std::size_t(R) * K * (P + 1) * dd, 0.0);
    m_local.assign(std::size_t(R) * K * (P + 1) * dd, 0.0);
    g_local.assign(std::size_t(R) * K * P * dd, 0.0);
    x_bar.assign(std::size_t(R) * P * dd, 0.0);
}

void Trace::check_shape() const {
    if (R < 1 || P < 1 || K < 1 || d < 1) throw std::runtime_error("Trace: empty dimensions");
    const std::size_t dd = d;
    if (x_server.size() != std::size_t(R + 1) * dd || m_server.size() != std::size_t(R + 1) * dd ||
        x_local.size() != std::size_t(R) * K * (P + 1) * dd ||
        m_local.size() != std::size_t(R) * K * (P + 1) * dd ||
        g_local.size() != std::size_t(R) * K * P * dd || x_bar.size() != std::size_t(R) * P * dd)
        throw std::runtime_error("Trace: array sizes inconsistent with dimensions");
}

void Trace::validate(double tol) const {
    check_shape();

    // x_bar must be the arithmetic mean of the client models.
    for (int r = 0; r < R; ++r) {
        for (int p = 0; p < P; ++p) {
            auto stored = x_bar_at(r, p);
            for (int j = 0; j < d; ++j) {
                double mean = 0.0;
                for (int k = 0; k < K; ++k) mean += x_at(r, k, p)[j];
                mean /= K;
                if (std::abs(mean - stored[j]) > 1e-14 * (1.0 + std::abs(stored[j])))
                    throw std::runtime_error("Trace: x_bar does not match client mean");
            }
        }
    }
    // Local momentum recursion must hold at every interior step.
    for (int r = 0; r < R; ++r)
        for (int k = 0; k < K; ++k)
            for (int p = 0; p < P; ++p) {
                auto m0 = m_at(r, k, p);
                auto m1 = m_at(r, k, p + 1);
                auto g = g_at(r, k, p);
                for (int j = 0; j < d; ++j) {
                    const double expect = cfg.mu_l * m0[j] + g[j];
                    if (std::abs(m1[j] - expect) > tol * (1.0 + std::abs(expect)))
                        throw std::runtime_error("Trace: local momentum recursion violated");
                }
            }
}

void save_trace(const Trace& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_trace: cannot open " + path);
    out.write(kMagic, 8);
    write_pod<std::uint32_t>(out, 1);  // version
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cfg.boundary));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cfg.fusion));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cfg.participation.value_or(0)));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.R));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.P));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.K));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.d));
    write_pod<std::uint64_t>(out, t.seed);
    write_pod<double>(out, t.cfg.mu_s);
    write_pod<double>(out, t.cfg.mu_l);
    write_pod<double>(out, t.cfg.alpha);
    write_pod<double>(out, t.cfg.beta);
    write_pod<double>(out, t.cfg.eta);
    write_pod<std::uint64_t>(out, t.method.size());
    out.write(t.method.data(), static_cast<std::streamsize>(t.method.size()));
    write_array(out, t.x_server);
    write_array(out, t.m_server);
    write_array(out, t.x_local);
    write_array(out, t.m_local);
    write_array(out, t.g_local);
    write_array(out, t.x_bar);
    if (!out) throw std::runtime_error("save_trace: write failed for " + path);

    nlohmann::json side;
    side["schema"] = "domo-trace-v1";
    side["method"] = t.method;
    side["R"] = t.R;
    side["P"] = t.P;
    side["K"] = t.K;
    side["d"] = t.d;
    side["seed"] = t.seed;
    side["mu_s"] = t.cfg.mu_s;
    side["mu_l"] = t.cfg.mu_l;
    side["alpha"] = t.cfg.alpha;
    side["beta"] = t.cfg.beta;
    side["eta"] = t.cfg.eta;
    side["boundary"] = boundary_name(t.cfg.boundary);
    side["fusion"] = fusion_name(t.cfg.fusion);
    std::ofstream js(path + ".json");
    if (!js) throw std::runtime_error("save_trace: cannot open sidecar for " + path);
    js << side.dump(2) << "\n";
}

Trace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_trace: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_trace: bad magic in " + path);
    std::uint32_t version = 0, boundary = 0, fusion = 0, participation = 0;
    read_pod(in, version);
    if (version != 1) throw std::runtime_error("load_trace: unsupported version");
    read_pod(in, boundary);
    read_pod(in, fusion);
    read_pod(in, participation);
    std::uint64_t R, P, K, d;
    Trace t;
    read_pod(in, R);
    read_pod(in, P);
    read_pod(in, K);
    read_pod(in, d);
    read_pod(in, t.seed);
    t.R = static_cast<int>(R);
    t.P = static_cast<int>(P);
    t.K = static_cast<int>(K);
    t.d = static_cast<int>(d);
    read_pod(in, t.cfg.mu_s);
    read_pod(in, t.cfg.mu_l);
    read_pod(in, t.cfg.alpha);
    read_pod(in, t.cfg.beta);
    read_pod(in, t.cfg.eta);
    t.cfg.boundary = static_cast<Boundary>(boundary);
    t.cfg.fusion = static_cast<Fusion>(fusion);
    t.cfg.local_steps = t.P;
    if (participation > 0) t.cfg.participation = static_cast<int>(participation);
    std::uint64_t name_len = 0;
    read_pod(in, name_len);
    t.method.resize(name_len);
    in.read(t.method.data(), static_cast<std::streamsize>(name_len));

    const std::size_t dd = t.d;
    read_array(in, t.x_server, std::size_t(t.R + 1) * dd);
    read_array(in, t.m_server, std::size_t(t.R + 1) * dd);
    read_array(in, t.x_local, std::size_t(t.R) * t.K * (t.P + 1) * dd);
    read_array(in, t.m_local, std::size_t(t.R) * t.K * (t.P + 1) * dd);
    read_array(in, t.g_local, std::size_t(t.R) * t.K * t.P * dd);
    read_array(in, t.x_bar, std::size_t(t.R) * t.P * dd);
    if (!in) throw std::runtime_error("load_trace: truncated file " + path);
    return t;
}

}  // namespace domo::fedopt
