#include "pwadeepc/system_io.hpp"

#include "pwadeepc/error.hpp"

#include <fstream>
#include <sstream>

namespace pwadeepc {

namespace {

const Json& field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::Io, std::string("missing JSON field '") + key + "'");
  return *it;
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", to_row_major(m)}};
}

Matrix matrix_from_json(const Json& j) {
  try {
    return from_row_major(field(j, "data").get<std::vector<double>>(),
                          field(j, "rows").get<Index>(), field(j, "cols").get<Index>());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Io, e.what());
  }
}

Json vector_to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
  try {
    auto d = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(d.data(), static_cast<Index>(d.size()));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Io, e.what());
  }
}

Json polyhedron_to_json(const Polyhedron& p) {
  Json j{{"coefficients", matrix_to_json(p.coefficients)}};
  if (!p.strict.empty()) j["strict"] = p.strict;
  return j;
}

Polyhedron polyhedron_from_json(const Json& j) {
  std::vector<bool> strict;
  if (j.contains("strict")) strict = j["strict"].get<std::vector<bool>>();
  return Polyhedron(matrix_from_json(field(j, "coefficients")), std::move(strict));
}

Json system_to_json(const PwaStateSpace& sys) {
  Json modes = Json::array(), part = Json::array();
  for (const auto& m : sys.modes()) {
    modes.push_back({{"A", matrix_to_json(m.A)},
                     {"B", matrix_to_json(m.B)},
                     {"C", matrix_to_json(m.C)},
                     {"D", matrix_to_json(m.D)},
                     {"f", vector_to_json(m.f)},
                     {"g", vector_to_json(m.g)}});
  }
  for (const auto& p : sys.partition()) part.push_back(polyhedron_to_json(p));
  return Json{{"type", "pwa_state_space"}, {"nx", sys.nx()}, {"nu", sys.nu()},
              {"ny", sys.ny()},           {"modes", modes}, {"partition", part}};
}

PwaStateSpace system_from_json(const Json& j) {
  if (field(j, "type") != "pwa_state_space") throw Error(ErrorCode::Io, "not a pwa_state_space");
  std::vector<AffineMode> modes;
  for (const auto& jm : field(j, "modes")) {
    AffineMode m;
    m.A = matrix_from_json(field(jm, "A"));
    m.B = matrix_from_json(field(jm, "B"));
    m.C = matrix_from_json(field(jm, "C"));
    if (jm.contains("D")) m.D = matrix_from_json(jm["D"]);
    if (jm.contains("f")) m.f = vector_from_json(jm["f"]);
    if (jm.contains("g")) m.g = vector_from_json(jm["g"]);
    modes.push_back(std::move(m));
  }
  std::vector<Polyhedron> part;
  for (const auto& jp : field(j, "partition")) part.push_back(polyhedron_from_json(jp));
  PwaStateSpace sys(std::move(modes), std::move(part));
  if (field(j, "nx").get<Index>() != sys.nx() || field(j, "nu").get<Index>() != sys.nu() ||
      field(j, "ny").get<Index>() != sys.ny()) {
    throw Error(ErrorCode::DimensionMismatch, "declared dims disagree with mode matrices");
  }
  return sys;
}

Json pwarx_to_json(const PwarxModel& model) {
  Json modes = Json::array(), part = Json::array();
  for (int i = 0; i < model.mode_count(); ++i) {
    const auto& m = model.mode(i);
    Json a = Json::array(), b = Json::array();
    for (const auto& x : m.a) a.push_back(matrix_to_json(x));
    for (const auto& x : m.b) b.push_back(matrix_to_json(x));
    modes.push_back({{"a", a}, {"b", b}, {"c", vector_to_json(m.c)}});
  }
  for (const auto& p : model.partition()) part.push_back(polyhedron_to_json(p));
  return Json{{"type", "pwarx"},   {"ny", model.ny()},  {"nu", model.nu()},
              {"lag", model.lag()}, {"modes", modes}, {"partition", part}};
}

PwarxModel pwarx_from_json(const Json& j) {
  if (field(j, "type") != "pwarx") throw Error(ErrorCode::Io, "not a pwarx model");
  std::vector<ArxCoefficients> modes;
  for (const auto& jm : field(j, "modes")) {
    ArxCoefficients m;
    for (const auto& x : field(jm, "a")) m.a.push_back(matrix_from_json(x));
    for (const auto& x : field(jm, "b")) m.b.push_back(matrix_from_json(x));
    if (jm.contains("c")) m.c = vector_from_json(jm["c"]);
    modes.push_back(std::move(m));
  }
  std::vector<Polyhedron> part;
  for (const auto& jp : field(j, "partition")) part.push_back(polyhedron_from_json(jp));
  return PwarxModel(field(j, "ny").get<Index>(), field(j, "nu").get<Index>(),
                    field(j, "lag").get<int>(), std::move(modes), std::move(part));
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Io, path + ": " + e.what());
  }
}

}  // namespace pwadeepc
