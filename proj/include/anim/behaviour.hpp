#pragma once

#include <string>
#include <string_view>

#include "anim/errors.hpp"

namespace anim {

enum class Behaviour { point, wave };
enum class Arm { left, right };

// Objective-signal encodings: point=1, wave=2; left=0, right=1.
inline double behaviour_code(Behaviour b) { return b == Behaviour::point ? 1.0 : 2.0; }
inline double arm_code(Arm a) { return a == Arm::left ? 0.0 : 1.0; }

inline std::string to_string(Behaviour b) { return b == Behaviour::point ? "point" : "wave"; }
inline std::string to_string(Arm a) { return a == Arm::left ? "left" : "right"; }

inline Behaviour behaviour_from_string(std::string_view s) {
    if (s == "point") return Behaviour::point;
    if (s == "wave") return Behaviour::wave;
    throw ValidationError("unknown behaviour: " + std::string(s));
}

inline Arm arm_from_string(std::string_view s) {
    if (s == "left") return Arm::left;
    if (s == "right") return Arm::right;
    throw ValidationError("unknown arm: " + std::string(s));
}

} // namespace anim
