#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "cardio/error.hpp"

namespace cardio {

enum class DiseaseClass : std::uint8_t { NOR = 0, MINF = 1, DCM = 2, HCM = 3, ARV = 4 };

inline constexpr std::size_t kDiseaseClassCount = 5;
inline constexpr std::array<DiseaseClass, kDiseaseClassCount> kDiseaseClasses = {
    DiseaseClass::NOR, DiseaseClass::MINF, DiseaseClass::DCM, DiseaseClass::HCM, DiseaseClass::ARV};

constexpr std::size_t index(DiseaseClass c) { return static_cast<std::size_t>(c); }

constexpr std::string_view to_string(DiseaseClass c) {
    switch (c) {
        case DiseaseClass::NOR: return "NOR";
        case DiseaseClass::MINF: return "MINF";
        case DiseaseClass::DCM: return "DCM";
        case DiseaseClass::HCM: return "HCM";
        case DiseaseClass::ARV: return "ARV";
    }
    return "?";
}

/// Accepts the dataset spelling "RV" as an alias of ARV.
inline std::optional<DiseaseClass> parse_disease(std::string_view s) {
    if (s == "NOR") return DiseaseClass::NOR;
    if (s == "MINF") return DiseaseClass::MINF;
    if (s == "DCM") return DiseaseClass::DCM;
    if (s == "HCM") return DiseaseClass::HCM;
    if (s == "ARV" || s == "RV") return DiseaseClass::ARV;
    return std::nullopt;
}

inline DiseaseClass disease_from_string(std::string_view s) {
    auto c = parse_disease(s);
    if (!c) fail(Errc::UnknownClass, "unknown disease group '" + std::string(s) + "'");
    return *c;
}

inline DiseaseClass disease_from_index(std::size_t i) {
    require(i < kDiseaseClassCount, Errc::InvalidArgument, "disease index out of range");
    return static_cast<DiseaseClass>(i);
}

}  // namespace cardio
