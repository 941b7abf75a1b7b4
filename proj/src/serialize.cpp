#include "subres/serialize.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "subres/errors.hpp"

namespace subres {

namespace {

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// NaN and infinities have no JSON literal; keep them as strings.
Json number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

double read_number(const Json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        throw ValidationError("not a number: " + s);
    }
    return j.get<double>();
}

} // namespace

Json to_json(const GradedSpace& space) {
    return Json(space.block_dims());
}

GradedSpace grading_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) {
        throw ValidationError("grading must be a non-empty list of block dimensions");
    }
    return GradedSpace(j.get<std::vector<int>>());
}

Json to_json(const PolyMap& map) {
    Json out;
    out["source_grading"] = to_json(map.source());
    out["target_grading"] = to_json(map.target());
    out["order"] = map.order();
    Json terms = Json::array();
    const MonomialBasis& basis = map.basis();
    for (int r = 0; r < map.target().dim(); ++r) {
        for (std::size_t k = 0; k < basis.size(); ++k) {
            const double c = map.coefficients()(r, static_cast<Eigen::Index>(k));
            if (c == 0.0) {
                continue;
            }
            const auto e = basis.exponents(k);
            Json term;
            term["target_index"] = r;
            term["multi_index"] = std::vector<int>(e.begin(), e.end());
            term["coefficient"] = number(c);
            terms.push_back(std::move(term));
        }
    }
    out["terms"] = std::move(terms);
    return out;
}

PolyMap polymap_from_json(const Json& j) {
    if (!j.is_object()) {
        throw ValidationError("polynomial map must be an object");
    }
    GradedSpace source;
    GradedSpace target;
    if (j.contains("grading")) {
        source = target = grading_from_json(j.at("grading"));
    } else {
        source = grading_from_json(j.at("source_grading"));
        target = grading_from_json(j.at("target_grading"));
    }
    int order = j.value("order", -1);
    const Json& terms = j.at("terms");
    if (order < 0) {
        order = 1;
        for (const auto& t : terms) {
            int deg = 0;
            for (int e : t.at("multi_index").get<std::vector<int>>()) {
                deg += e;
            }
            order = std::max(order, deg);
        }
    }
    PolyMap map(source, target, order);
    for (const auto& t : terms) {
        const int r = t.at("target_index").get<int>();
        const auto alpha = t.at("multi_index").get<std::vector<int>>();
        if (r < 0 || r >= target.dim()) {
            throw ValidationError("term target_index out of range");
        }
        if (static_cast<int>(alpha.size()) != source.dim()) {
            throw DimensionMismatch("term multi_index has the wrong length");
        }
        for (int e : alpha) {
            if (e < 0) {
                throw ValidationError("negative exponent in multi_index");
            }
        }
        if (map.basis().index_of(alpha) < 0) {
            throw ValidationError("term degree exceeds the stated order");
        }
        map.set_coeff(r, alpha, map.coeff(r, alpha) + read_number(t.at("coefficient")));
    }
    return map;
}

Json to_json(const OrbitCocycle& cocycle) {
    Json out;
    out["length"] = cocycle.length();
    out["periodic"] = cocycle.periodic();
    out["grading"] = to_json(cocycle.space());
    Json maps = Json::array();
    for (const auto& f : cocycle.maps()) {
        maps.push_back(to_json(f));
    }
    out["maps"] = std::move(maps);
    return out;
}

OrbitCocycle cocycle_from_json(const Json& j) {
    if (!j.is_object()) {
        throw ValidationError("cocycle must be an object");
    }
    const GradedSpace space = grading_from_json(j.at("grading"));
    std::vector<PolyMap> maps;
    for (const auto& m : j.at("maps")) {
        Json copy = m;
        if (!copy.contains("grading") && !copy.contains("source_grading")) {
            copy["grading"] = to_json(space);
        }
        maps.push_back(polymap_from_json(copy));
    }
    if (j.contains("length") && j.at("length").get<int>() != static_cast<int>(maps.size())) {
        throw ValidationError("cocycle length does not match the number of maps");
    }
    return OrbitCocycle(space, std::move(maps), j.value("periodic", true));
}

Json to_json(const Spectrum& spectrum) {
    Json out;
    out["exponents"] = spectrum.exponents();
    out["multiplicities"] = spectrum.multiplicities();
    out["epsilon"] = spectrum.epsilon();
    out["resonance_tol"] = spectrum.resonance_tol();
    out["degree_bound"] = spectrum.degree_bound();
    out["lambda"] = spectrum.lambda();
    return out;
}

Json to_json(const SubResStructure& structure) {
    Json out;
    out["degree_bound"] = structure.degree_bound();
    out["lambda"] = structure.lambda();
    Json degrees = Json::array();
    for (int n = 1; n <= structure.degree_bound(); ++n) {
        Json types = Json::array();
        for (const auto& t : structure.types(n)) {
            // Blocks are reported 1-based.
            types.push_back(Json{{"block", t.block + 1}, {"s", t.s}});
        }
        degrees.push_back(Json{{"degree", n}, {"types", std::move(types)}});
    }
    out["admissible"] = std::move(degrees);
    return out;
}

Json to_json(const LyapunovFrame& frame) {
    Json out;
    out["k_epsilon"] = number(frame.k_epsilon);
    out["horizon_forward"] = frame.horizon_forward;
    out["horizon_backward"] = frame.horizon_backward;
    out["tail_bound"] = number(frame.tail_bound);
    out["block_offsets"] = frame.block_offsets;
    out["basis"] = matrix_to_json(frame.basis);
    out["gram"] = matrix_to_json(frame.gram);
    return out;
}

Json to_json(const DegreeDiagnostics& diag) {
    Json out;
    out["degree"] = diag.degree;
    out["series_terms"] = diag.series_terms;
    out["final_term_norm"] = number(diag.final_term_norm);
    out["final_term_lyapunov_norm"] = number(diag.final_term_lyapunov_norm);
    out["tail_bound"] = number(diag.tail_bound);
    out["period_ratio"] = number(diag.period_ratio);
    out["full_space"] = diag.full_space;
    return out;
}

Json to_json(const NormalFormResult& result) {
    Json out;
    out["order"] = result.order;
    out["degree_bound"] = result.degree_bound;
    Json points = Json::array();
    for (std::size_t k = 0; k < result.H.size(); ++k) {
        Json p;
        p["point"] = k;
        p["H"] = to_json(result.H[k]);
        p["P"] = to_json(result.P[k]);
        if (k < result.conjugacy_defect.size()) {
            p["conjugacy_defect"] = number(result.conjugacy_defect[k]);
        }
        points.push_back(std::move(p));
    }
    out["points"] = std::move(points);
    Json diags = Json::array();
    for (const auto& d : result.diagnostics) {
        diags.push_back(to_json(d));
    }
    out["diagnostics"] = std::move(diags);
    return out;
}

NormalFormResult result_from_json(const Json& j) {
    NormalFormResult result;
    result.order = j.at("order").get<int>();
    result.degree_bound = j.at("degree_bound").get<int>();
    for (const auto& p : j.at("points")) {
        result.H.push_back(polymap_from_json(p.at("H")));
        result.P.push_back(polymap_from_json(p.at("P")));
        if (p.contains("conjugacy_defect")) {
            result.conjugacy_defect.push_back(read_number(p.at("conjugacy_defect")));
        }
    }
    for (const auto& d : j.value("diagnostics", Json::array())) {
        DegreeDiagnostics diag;
        diag.degree = d.at("degree").get<int>();
        diag.series_terms = d.at("series_terms").get<int>();
        diag.final_term_norm = read_number(d.at("final_term_norm"));
        diag.final_term_lyapunov_norm = read_number(d.at("final_term_lyapunov_norm"));
        diag.tail_bound = read_number(d.at("tail_bound"));
        diag.period_ratio = read_number(d.at("period_ratio"));
        diag.full_space = d.at("full_space").get<bool>();
        result.diagnostics.push_back(diag);
    }
    return result;
}

Json to_json(const ResidualReport& report) {
    Json out;
    Json rows = Json::array();
    for (std::size_t i = 0; i < report.radii.size(); ++i) {
        rows.push_back(Json{{"radius", report.radii[i]},
                            {"max_residual", number(report.max_residual[i])},
                            {"slope_cumulative", number(report.slope_cumulative[i])}});
    }
    out["rows"] = std::move(rows);
    out["slope"] = number(report.slope);
    out["exact"] = report.exact;
    out["pass"] = report.pass;
    return out;
}

Json to_json(const OracleReport& report) {
    Json out;
    Json per = Json::array();
    for (std::size_t i = 0; i < report.per_degree.size(); ++i) {
        per.push_back(Json{{"degree", static_cast<int>(i) + 2}, {"max_difference", number(report.per_degree[i])}});
    }
    out["per_degree"] = std::move(per);
    out["max_difference"] = number(report.max_difference);
    out["pass"] = report.pass;
    return out;
}

Json to_json(const GaugeReport& report) {
    Json out;
    out["degree_bound"] = report.degree_bound;
    out["n_part_violation"] = number(report.n_part_violation);
    out["high_degree"] = number(report.high_degree);
    out["identity_deviation"] = number(report.identity_deviation);
    Json g = Json::array();
    for (const auto& m : report.G) {
        g.push_back(to_json(m));
    }
    out["G"] = std::move(g);
    out["pass"] = report.pass;
    return out;
}

Json to_json(const CentralizerReport& report) {
    Json out;
    out["commutation_residual"] = number(report.commutation_residual);
    out["n_part_violation"] = number(report.n_part_violation);
    out["high_degree"] = number(report.high_degree);
    out["linear_mismatch"] = number(report.linear_mismatch);
    out["flag_violation"] = number(report.flag_violation);
    out["iterate_mismatch"] = number(report.iterate_mismatch);
    out["pass"] = report.pass;
    return out;
}

Json to_json(const ChartReport& report) {
    Json out;
    out["window"] = report.window;
    out["high_degree"] = number(report.high_degree);
    out["n_part_violation"] = number(report.n_part_violation);
    out["transition"] = to_json(report.transition);
    out["pass"] = report.pass;
    return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string dump(const Json& j) {
    return j.dump(2) + "\n";
}

} // namespace subres
