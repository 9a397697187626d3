#include "domo/method.hpp"

namespace domo::fedopt {

std::string boundary_name(Boundary b) { return b == Boundary::Reset ? "reset" : "average"; }
std::string fusion_name(Fusion f) {
    switch (f) {
        case Fusion::None: return "none";
        case Fusion::Pre: return "pre";
        case Fusion::Intra: return "intra";
    }
    return "?";
}

Boundary boundary_from_name(const std::string& name) {
    if (name == "reset") return Boundary::Reset;
    if (name == "average") return Boundary::Average;
    throw std::invalid_argument("unknown boundary rule: " + name);
}

Fusion fusion_from_name(const std::string& name) {
    if (name == "none") return Fusion::None;
    if (name == "pre") return Fusion::Pre;
    if (name == "intra") return Fusion::Intra;
    throw std::invalid_argument("unknown fusion mode: " + name);
}

void MethodConfig::validate(int num_clients) const {
    if (mu_s < 0.0 || mu_s >= 1.0) throw std::invalid_argument("MethodConfig: mu_s outside [0, 1)");
    if (mu_l < 0.0 || mu_l >= 1.0) throw std::invalid_argument("MethodConfig: mu_l outside [0, 1)");
    if (alpha <= 0.0) throw std::invalid_argument("MethodConfig: alpha must be positive");
    if (beta < 0.0) throw std::invalid_argument("MethodConfig: beta must be nonnegative");
    if (eta <= 0.0) throw std::invalid_argument("MethodConfig: eta must be positive");
    if (local_steps < 1) throw std::invalid_argument("MethodConfig: local_steps must be >= 1");
    if (fusion != Fusion::None && mu_s == 0.0)
        throw std::invalid_argument("MethodConfig: momentum fusion needs mu_s > 0");
    if (participation) {
        if (*participation < 1 || *participation > num_clients)
            throw std::invalid_argument("MethodConfig: participation outside [1, K]");
        if (boundary == Boundary::Average && *participation < num_clients)
            throw std::invalid_argument(
                "MethodConfig: boundary=average undefined under partial participation");
    }
}

namespace {
constexpr double kDefaultMuS = 0.9;
constexpr double kDefaultMuL = 0.6;
constexpr double kDefaultBeta = 0.9;
}  // namespace

MethodConfig method_from_name(const std::string& name) {
    MethodConfig c;
    c.alpha = 1.0;
    if (name == "fedavg") {
        // all momentum machinery off
    } else if (name == "fedavgsm") {
        c.mu_s = kDefaultMuS;
    } else if (name == "fedavglm") {
        c.mu_l = kDefaultMuL;
        c.boundary = Boundary::Average;
    } else if (name == "fedavglm-z") {
        c.mu_l = kDefaultMuL;
    } else if (name == "fedavgslm") {
        c.mu_s = kDefaultMuS;
        c.mu_l = kDefaultMuL;
        c.boundary = Boundary::Average;
    } else if (name == "fedavgslm-z") {
        c.mu_s = kDefaultMuS;
        c.mu_l = kDefaultMuL;
    } else if (name == "domo") {
        c.mu_s = kDefaultMuS;
        c.mu_l = kDefaultMuL;
        c.fusion = Fusion::Pre;
        c.beta = kDefaultBeta;
    } else if (name == "domo-s") {
        c.mu_s = kDefaultMuS;
        c.mu_l = kDefaultMuL;
        c.fusion = Fusion::Intra;
        c.beta = kDefaultBeta;
    } else {
        throw std::invalid_argument("unknown method: " + name);
    }
    return c;
}

bool known_method(const std::string& name) {
    try {
        method_from_name(name);
        return true;
    } catch (const std::invalid_argument&) {
        return false;
    }
}

}  // namespace domo::fedopt
