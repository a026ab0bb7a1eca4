#pragma once

// Outcome of a very-weak (distributional) sign test against a bump family.

#include "conelab/types.hpp"

#include <cstddef>
#include <string>

namespace conelab {

enum class Sign { harmonic, sub, super };

inline std::string to_string(Sign s) {
    switch (s) {
        case Sign::harmonic: return "harmonic";
        case Sign::sub: return "sub";
        case Sign::super: return "super";
    }
    return {};
}

inline Sign parse_sign(const std::string& s) {
    if (s == "harmonic") return Sign::harmonic;
    if (s == "sub") return Sign::sub;
    if (s == "super") return Sign::super;
    throw InvalidArgument("unknown sign '" + s + "' (expected harmonic, sub or super)");
}

struct Witness {
    Point center;
    double radius = 0.0;
    double pairing = 0.0;  ///< int u Laplacian(phi)
    double score = 0.0;    ///< pairing / (|u|_{L1(supp phi)} |phi|_E)
};

struct Certificate {
    Sign requested = Sign::harmonic;
    bool verdict = false;   ///< requested sign holds on every family member
    bool harmonic = false;
    bool sub = false;
    bool super = false;
    double tol = 0.0;
    std::size_t family_size = 0;
    double max_score = 0.0;  ///< largest score over the family
    double min_score = 0.0;  ///< smallest score over the family
    Witness worst;           ///< member farthest from satisfying the requested sign
};

}  // namespace conelab
