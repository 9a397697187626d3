#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace domo::fedopt {

// What happens to the local momentum buffer at a round boundary.
enum class Boundary { Reset, Average };

// How the server momentum buffer is injected into local training:
// Pre applies -eta*beta*P*m_r once before the first local step, Intra
// applies -eta*beta*m_r after every local step.
enum class Fusion { None, Pre, Intra };

std::string boundary_name(Boundary b);
std::string fusion_name(Fusion f);
Boundary boundary_from_name(const std::string& name);
Fusion fusion_from_name(const std::string& name);

// One tuple selects any of the eight methods.
struct MethodConfig {
    double mu_s = 0.0;   // server momentum constant, [0, 1)
    double mu_l = 0.0;   // local momentum constant, [0, 1)
    Boundary boundary = Boundary::Reset;
    Fusion fusion = Fusion::None;
    double alpha = 1.0;  // server learning rate
    double beta = 0.0;   // momentum fusion constant
    double eta = 0.05;   // local learning rate
    int local_steps = 1; // P
    std::optional<int> participation;  // S; absent means all K clients

    void validate(int num_clients) const;
    // Extra buffer exchange at the boundary doubles the per-round traffic.
    bool doubles_comm() const { return boundary == Boundary::Average && mu_l > 0.0; }
};

// fedavg, fedavgsm, fedavglm, fedavglm-z, fedavgslm, fedavgslm-z, domo, domo-s.
// Unset momentum constants are filled from the defaults mu_s=0.9, mu_l=0.6,
// alpha=1.0, beta=0.9.
MethodConfig method_from_name(const std::string& name);

bool known_method(const std::string& name);

}  // namespace domo::fedopt
