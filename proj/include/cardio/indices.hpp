#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/ingest.hpp"
#include "cardio/volume.hpp"

namespace cardio {

/// Myocardial tissue density in g/mL.
inline constexpr double kMyocardialDensity = 1.05;

/// Volume of one structure in mL: voxel count times voxel size, mm^3 / 1000.
inline double structure_volume(const LabelVolume& v, TissueClass c) {
    require(c != TissueClass::Background, Errc::InvalidArgument, "background is not a cardiac structure");
    return static_cast<double>(v.count(c)) * v.spacing().voxel_mm3() / 1000.0;
}

/// Ejection fraction in percent. A negative value (ES larger than ED) is returned as is.
inline double ejection_fraction(double v_ed, double v_es) {
    require(std::isfinite(v_ed) && v_ed > 0.0, Errc::InvalidArgument, "ejection fraction needs ED volume > 0");
    return (v_ed - v_es) / v_ed * 100.0;
}

inline double myocardial_mass(double v_myo_ml) {
    require(std::isfinite(v_myo_ml) && v_myo_ml >= 0.0, Errc::InvalidArgument, "myocardial volume must be >= 0");
    return v_myo_ml * kMyocardialDensity;
}

/// Mosteller body surface area in m^2 from height (cm) and weight (kg).
inline double body_surface_area(double height_cm, double weight_kg) {
    require(std::isfinite(height_cm) && height_cm > 0.0 && std::isfinite(weight_kg) && weight_kg > 0.0,
            Errc::InvalidArgument, "height and weight must be positive");
    return std::sqrt(height_cm * weight_kg / 3600.0);
}

struct PhaseVolumes {
    double lv = 0.0;
    double rv = 0.0;
    double myo = 0.0;
};

struct ClinicalIndices {
    PhaseVolumes ed;
    PhaseVolumes es;
    double lv_ef = 0.0;
    double rv_ef = 0.0;
    double myo_mass = 0.0;
    double bsa = 0.0;
    std::vector<std::string> warnings;

    [[nodiscard]] const PhaseVolumes& at(CardiacPhase p) const { return p == CardiacPhase::ED ? ed : es; }
};

inline PhaseVolumes phase_volumes(const LabelVolume& v) {
    return {structure_volume(v, TissueClass::LV), structure_volume(v, TissueClass::RV),
            structure_volume(v, TissueClass::Myocardium)};
}

/// All clinical indices of a case. `mass_phase` selects the myocardial volume used for mass.
inline ClinicalIndices compute_indices(const CaseRecord& c, CardiacPhase mass_phase = CardiacPhase::ED) {
    ClinicalIndices out;
    out.ed = phase_volumes(c.ed);
    out.es = phase_volumes(c.es);
    out.lv_ef = ejection_fraction(out.ed.lv, out.es.lv);
    out.rv_ef = ejection_fraction(out.ed.rv, out.es.rv);
    out.myo_mass = myocardial_mass(out.at(mass_phase).myo);
    out.bsa = body_surface_area(c.metadata.height_cm, c.metadata.weight_kg);
    if (out.lv_ef < 0.0) out.warnings.push_back("negative LV ejection fraction");
    if (out.rv_ef < 0.0) out.warnings.push_back("negative RV ejection fraction");
    return out;
}

}  // namespace cardio
