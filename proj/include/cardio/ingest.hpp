#pragma once

// Case loading: "Key: value" metadata files and the per-case directory layout
//
//   <id>/Info.cfg
//   <id>/<id>_frameNN_pred.nii   predicted labels for the ED and ES frames
//   <id>/<id>_frameNN_gt.nii     optional reference labels
//
// NN is the frame index from Info.cfg, zero-padded to two digits.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "cardio/disease.hpp"
#include "cardio/error.hpp"
#include "cardio/nifti.hpp"
#include "cardio/volume.hpp"

namespace cardio {

struct CaseMetadata {
    std::string case_id;
    double height_cm = 0.0;
    double weight_kg = 0.0;
    int ed_frame = 0;
    int es_frame = 0;
    std::optional<DiseaseClass> group;

    bool operator==(const CaseMetadata&) const = default;
};

struct CaseRecord {
    CaseMetadata metadata;
    LabelVolume ed;
    LabelVolume es;
    std::optional<LabelVolume> ed_truth;
    std::optional<LabelVolume> es_truth;

    [[nodiscard]] const LabelVolume& volume(CardiacPhase p) const { return p == CardiacPhase::ED ? ed : es; }
    [[nodiscard]] const std::optional<LabelVolume>& truth(CardiacPhase p) const {
        return p == CardiacPhase::ED ? ed_truth : es_truth;
    }

    bool operator==(const CaseRecord&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || text.empty())
        fail(Errc::Parse, "cannot parse " + std::string(key) + " value '" + std::string(text) + "'");
    return value;
}

}  // namespace detail

/// Parse an Info.cfg-style metadata file. Unknown keys are ignored.
inline CaseMetadata read_case_metadata(std::string_view text, std::string case_id = {}) {
    std::optional<double> height, weight;
    std::optional<int> ed, es;
    std::optional<DiseaseClass> group;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty() || line.front() == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) fail(Errc::Parse, "expected 'Key: value', got '" + std::string(line) + "'");
        const auto key = detail::trim(line.substr(0, colon));
        const auto value = detail::trim(line.substr(colon + 1));
        if (key == "ED") ed = detail::parse_number<int>(key, value);
        else if (key == "ES") es = detail::parse_number<int>(key, value);
        else if (key == "Height") height = detail::parse_number<double>(key, value);
        else if (key == "Weight") weight = detail::parse_number<double>(key, value);
        else if (key == "Group") group = disease_from_string(value);
    }

    require(ed.has_value(), Errc::MissingField, "metadata lacks ED");
    require(es.has_value(), Errc::MissingField, "metadata lacks ES");
    require(height.has_value(), Errc::MissingField, "metadata lacks Height");
    require(weight.has_value(), Errc::MissingField, "metadata lacks Weight");
    require(*height > 0.0 && std::isfinite(*height), Errc::InvalidArgument, "Height must be positive");
    require(*weight > 0.0 && std::isfinite(*weight), Errc::InvalidArgument, "Weight must be positive");
    require(*ed != *es, Errc::InvalidArgument, "ED and ES frames must differ");
    require(*ed >= 0 && *es >= 0, Errc::InvalidArgument, "frame indices must be non-negative");
    return {std::move(case_id), *height, *weight, *ed, *es, group};
}

inline std::string write_case_metadata(const CaseMetadata& m) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << "ED: " << m.ed_frame << "\nES: " << m.es_frame << "\n";
    if (m.group) out << "Group: " << to_string(*m.group) << "\n";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, m.height_cm);
    out << "Height: " << std::string_view(buf, r.ptr - buf) << "\n";
    r = std::to_chars(buf, buf + sizeof buf, m.weight_kg);
    out << "Weight: " << std::string_view(buf, r.ptr - buf) << "\n";
    return out.str();
}

inline std::string frame_file_name(const std::string& case_id, int frame, std::string_view suffix) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", frame);
    return case_id + "_frame" + buf + "_" + std::string(suffix) + ".nii";
}

inline std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = nifti::read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

namespace detail {

inline void check_same_grid(const LabelVolume& a, const LabelVolume& b, const std::string& what) {
    require(a.dims() == b.dims(), Errc::InconsistentCase, what + ": dims differ");
    const auto& sa = a.spacing();
    const auto& sb = b.spacing();
    // Spacing travels through float32 in the file format.
    auto close = [](double x, double y) { return std::abs(x - y) <= 1e-6 * std::max(1.0, std::abs(x)); };
    require(close(sa.dx, sb.dx) && close(sa.dy, sb.dy) && close(sa.dz, sb.dz), Errc::InconsistentCase,
            what + ": spacing differs");
}

}  // namespace detail

inline void check_case_consistency(const CaseRecord& c) {
    detail::check_same_grid(c.ed, c.es, "ED vs ES");
    if (c.ed_truth) detail::check_same_grid(c.ed, *c.ed_truth, "ED prediction vs truth");
    if (c.es_truth) detail::check_same_grid(c.es, *c.es_truth, "ES prediction vs truth");
}

/// Load `<dir>/Info.cfg` and the ED/ES volumes. The case id is the directory name.
inline CaseRecord load_case(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    require(fs::is_directory(dir), Errc::NotFound, "case directory " + dir.string() + " not found");
    const std::string id = dir.filename().string();
    CaseRecord rec;
    rec.metadata = read_case_metadata(read_text_file(dir / "Info.cfg"), id);

    auto load = [&](int frame, std::string_view suffix) {
        return nifti::read_volume(nifti::read_file(dir / frame_file_name(id, frame, suffix)));
    };
    auto load_optional = [&](int frame) -> std::optional<LabelVolume> {
        if (!fs::exists(dir / frame_file_name(id, frame, "gt"))) return std::nullopt;
        return load(frame, "gt");
    };
    rec.ed = load(rec.metadata.ed_frame, "pred");
    rec.es = load(rec.metadata.es_frame, "pred");
    rec.ed_truth = load_optional(rec.metadata.ed_frame);
    rec.es_truth = load_optional(rec.metadata.es_frame);
    check_case_consistency(rec);
    return rec;
}

/// Write a case in the layout `load_case` reads; creates `<root>/<case_id>/`.
inline std::filesystem::path write_case(const std::filesystem::path& root, const CaseRecord& c) {
    namespace fs = std::filesystem;
    const auto& m = c.metadata;
    require(!m.case_id.empty(), Errc::InvalidArgument, "case id must not be empty");
    const fs::path dir = root / m.case_id;
    fs::create_directories(dir);
    const auto text = write_case_metadata(m);
    nifti::write_file(dir / "Info.cfg",
                      std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    nifti::write_file(dir / frame_file_name(m.case_id, m.ed_frame, "pred"), nifti::write_volume(c.ed));
    nifti::write_file(dir / frame_file_name(m.case_id, m.es_frame, "pred"), nifti::write_volume(c.es));
    if (c.ed_truth)
        nifti::write_file(dir / frame_file_name(m.case_id, m.ed_frame, "gt"), nifti::write_volume(*c.ed_truth));
    if (c.es_truth)
        nifti::write_file(dir / frame_file_name(m.case_id, m.es_frame, "gt"), nifti::write_volume(*c.es_truth));
    return dir;
}

}  // namespace cardio
