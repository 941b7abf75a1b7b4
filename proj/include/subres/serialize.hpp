#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "subres/cocycle.hpp"
#include "subres/grading.hpp"
#include "subres/lyapunov_frame.hpp"
#include "subres/normalform.hpp"
#include "subres/polymap.hpp"
#include "subres/verify.hpp"

namespace subres {

using Json = nlohmann::ordered_json;

Json to_json(const GradedSpace& space);
GradedSpace grading_from_json(const Json& j);

/// {"source_grading", "target_grading", "order", "terms": [{target_index, multi_index, coefficient}]}.
/// Zero coefficients are omitted. On input a single "grading" key may
/// stand for both gradings.
Json to_json(const PolyMap& map);
PolyMap polymap_from_json(const Json& j);

/// {"length", "periodic", "grading", "maps": [...]}.
Json to_json(const OrbitCocycle& cocycle);
OrbitCocycle cocycle_from_json(const Json& j);

Json to_json(const Spectrum& spectrum);
Json to_json(const SubResStructure& structure);
Json to_json(const LyapunovFrame& frame);
Json to_json(const DegreeDiagnostics& diag);

Json to_json(const NormalFormResult& result);
/// Reads H, P, order and degree bound back; diagnostics are kept as given.
NormalFormResult result_from_json(const Json& j);

Json to_json(const ResidualReport& report);
Json to_json(const OracleReport& report);
Json to_json(const GaugeReport& report);
Json to_json(const CentralizerReport& report);
Json to_json(const ChartReport& report);

/// Text written as a temporary sibling and renamed into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Canonical text form (two-space indent, trailing newline).
std::string dump(const Json& j);

} // namespace subres
