// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace asopt {

enum class TierTag { Hot, Host, Cold };

inline const char* to_string(TierTag t) {
    switch (t) {
        case TierTag::Hot: return "Hot";
        case TierTag::Host: return "Host";
        default: return "Cold";
    }
}

/// Roles a stored tensor can play inside one preconditioner block.
enum class TensorRole : std::uint8_t {
    FactorL = 0,
    FactorR = 1,
    InvFactorL = 2,
    InvFactorR = 3,
    BasisL = 4,
    BasisR = 5,
    RotatedM = 6,
    RotatedV = 7,
};

inline const char* to_string(TensorRole r) {
    switch (r) {
        case TensorRole::FactorL: return "factor_l";
        case TensorRole::FactorR: return "factor_r";
        case TensorRole::InvFactorL: return "inv_l";
        case TensorRole::InvFactorR: return "inv_r";
        case TensorRole::BasisL: return "basis_l";
        case TensorRole::BasisR: return "basis_r";
        case TensorRole::RotatedM: return "rotated_m";
        default: return "rotated_v";
    }
}

struct TierKey {
    std::string block_id;
    TensorRole role;

    bool operator==(const TierKey&) const = default;
    std::string display() const { return block_id + "/" + to_string(role); }
};

struct TierKeyHash {
    size_t operator()(const TierKey& k) const {
        return std::hash<std::string>{}(k.block_id) * 1000003u +
               static_cast<size_t>(k.role);
    }
};

}  // namespace asopt
