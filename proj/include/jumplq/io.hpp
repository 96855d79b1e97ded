#pragma once

#include "jumplq/model.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace jumplq {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Reading

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& where, const std::string& what) {
  throw Error(Errc::ParseError, where + ": " + what);
}

inline double read_number(const Json& j, const std::string& where) {
  if (!j.is_number()) parse_fail(where, "expected a number");
  return j.get<double>();
}

/// Row-major array of arrays; a bare number reads as 1×1.
inline Mat read_matrix(const Json& j, const std::string& where) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) parse_fail(where, "expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) parse_fail(where, "expected rows to be arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      parse_fail(where, "row " + std::to_string(r) + " has inconsistent length");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = read_number(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

/// Flat array; a bare number reads as length 1.
inline Vec read_vector(const Json& j, const std::string& where) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) parse_fail(where, "expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = read_number(j[k], where);
  return v;
}

inline std::vector<Vec> read_vectors(const Json& obj, const std::string& key, const std::string& where) {
  std::vector<Vec> out;
  if (!obj.contains(key)) return out;
  const auto& arr = obj.at(key);
  if (!arr.is_array()) parse_fail(where + "." + key, "expected one vector per regime");
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(read_vector(arr[i], where + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

inline const Json& regimes_of(const Json& doc) {
  if (!doc.is_object()) parse_fail("problem", "expected a JSON object");
  if (!doc.contains("regimes") || !doc.at("regimes").is_array() || doc.at("regimes").empty())
    parse_fail("problem", "missing non-empty \"regimes\" array");
  return doc.at("regimes");
}

inline std::vector<Mat> collect(const Json& regimes, const std::string& key, bool required) {
  std::vector<Mat> out;
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    const auto& r = regimes[i];
    const std::string where = "regimes[" + std::to_string(i) + "]." + key;
    if (!r.contains(key)) {
      if (required) parse_fail(where, "missing");
      if (!out.empty()) parse_fail(where, "given for some regimes but not all");
      continue;
    }
    if (out.size() != i) parse_fail(where, "given for some regimes but not all");
    out.push_back(read_matrix(r.at(key), where));
  }
  return out;
}

inline Mat read_generator(const Json& doc) {
  if (!doc.contains("generator")) parse_fail("problem", "missing \"generator\"");
  return read_matrix(doc.at("generator"), "generator");
}

inline void check_declared(const Json& doc, const char* key, Eigen::Index actual) {
  if (!doc.contains(key)) return;
  const auto& v = doc.at(key);
  if (!v.is_number_integer()) parse_fail(key, "expected an integer");
  if (v.get<Eigen::Index>() != actual)
    throw Error(Errc::DimensionMismatch, std::string(key) + " = " + std::to_string(v.get<Eigen::Index>()) +
                                             " does not match the data (" + std::to_string(actual) + ")");
}

}  // namespace detail

inline bool is_game_document(const Json& doc) {
  return doc.is_object() && (doc.contains("m1") || doc.contains("m2"));
}

inline LqProblemInput parse_lq_input(const Json& doc) {
  const auto& regs = detail::regimes_of(doc);
  LqProblemInput in;
  in.generator = detail::read_generator(doc);
  in.A = detail::collect(regs, "A", true);
  in.B = detail::collect(regs, "B", true);
  in.Q = detail::collect(regs, "Q", true);
  in.S = detail::collect(regs, "S", false);
  in.R = detail::collect(regs, "R", true);
  if (doc.contains("inhomog")) {
    const auto& s = doc.at("inhomog");
    if (!s.is_object()) detail::parse_fail("inhomog", "expected an object");
    LqSignalInput sig;
    sig.kappa = s.contains("kappa") ? detail::read_number(s.at("kappa"), "inhomog.kappa") : 1.0;
    sig.b = detail::read_vectors(s, "b", "inhomog");
    sig.q = detail::read_vectors(s, "q", "inhomog");
    sig.rho = detail::read_vectors(s, "rho", "inhomog");
    in.inhomog = std::move(sig);
  }
  return in;
}

inline GameProblemInput parse_game_input(const Json& doc) {
  const auto& regs = detail::regimes_of(doc);
  GameProblemInput in;
  in.generator = detail::read_generator(doc);
  in.A = detail::collect(regs, "A", true);
  in.B[0] = detail::collect(regs, "B1", true);
  in.B[1] = detail::collect(regs, "B2", true);
  for (int k = 0; k < 2; ++k) {
    const std::string p = "_" + std::to_string(k + 1);
    auto& c = in.cost[k];
    c.Q = detail::collect(regs, "Q" + std::to_string(k + 1), true);
    c.S[0] = detail::collect(regs, "S1" + p, false);
    c.S[1] = detail::collect(regs, "S2" + p, false);
    c.R11 = detail::collect(regs, "R11" + p, k == 0);
    c.R12 = detail::collect(regs, "R12" + p, false);
    c.R21 = detail::collect(regs, "R21" + p, false);
    c.R22 = detail::collect(regs, "R22" + p, k == 1);
  }
  // Cross blocks R_ll^k (l != k) may be omitted; they default to zero.
  const auto d = regs.size();
  if (in.cost[0].R22.empty() && !in.B[1].empty())
    in.cost[0].R22.assign(d, Mat::Zero(in.B[1].front().cols(), in.B[1].front().cols()));
  if (in.cost[1].R11.empty() && !in.B[0].empty())
    in.cost[1].R11.assign(d, Mat::Zero(in.B[0].front().cols(), in.B[0].front().cols()));

  if (doc.contains("inhomog")) {
    const auto& s = doc.at("inhomog");
    if (!s.is_object()) detail::parse_fail("inhomog", "expected an object");
    GameSignalInput sig;
    sig.kappa = s.contains("kappa") ? detail::read_number(s.at("kappa"), "inhomog.kappa") : 1.0;
    sig.b = detail::read_vectors(s, "b", "inhomog");
    for (int k = 0; k < 2; ++k) {
      sig.q[k] = detail::read_vectors(s, "q" + std::to_string(k + 1), "inhomog");
      for (int l = 0; l < 2; ++l)
        sig.rho[k][l] = detail::read_vectors(s, "rho" + std::to_string(l + 1) + "_" + std::to_string(k + 1), "inhomog");
    }
    in.inhomog = std::move(sig);
  }
  return in;
}

inline MjlsLqProblem parse_lq_problem(const Json& doc, const ValidationOptions& opts = {}) {
  auto p = validate_lq_problem(parse_lq_input(doc), opts);
  detail::check_declared(doc, "n", p.n);
  detail::check_declared(doc, "m", p.m);
  return p;
}

inline MjlsGameProblem parse_game_problem(const Json& doc, const ValidationOptions& opts = {}) {
  auto p = validate_game_problem(parse_game_input(doc), opts);
  detail::check_declared(doc, "n", p.n);
  detail::check_declared(doc, "m1", p.m[0]);
  detail::check_declared(doc, "m2", p.m[1]);
  return p;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Writing

inline Json to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Vec& v) {
  Json arr = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(v(k));
  return arr;
}

template <typename T>
Json to_json(const RegimeFamily<T>& f) {
  Json arr = Json::array();
  for (const auto& e : f) arr.push_back(to_json(e));
  return arr;
}

inline Json to_json(const std::vector<double>& xs) {
  Json arr = Json::array();
  for (double x : xs) arr.push_back(x);
  return arr;
}

inline Json to_json(const MjlsLqProblem& p) {
  Json doc;
  doc["n"] = p.n;
  doc["m"] = p.m;
  doc["generator"] = to_json(p.gen.matrix());
  Json regs = Json::array();
  for (std::size_t i = 0; i < p.regimes(); ++i) {
    Json r;
    r["A"] = to_json(p.A[i]);
    r["B"] = to_json(p.B[i]);
    r["Q"] = to_json(p.Q[i]);
    r["S"] = to_json(p.S[i]);
    r["R"] = to_json(p.R[i]);
    regs.push_back(std::move(r));
  }
  doc["regimes"] = std::move(regs);
  if (p.inhomog) {
    Json s;
    s["kappa"] = p.inhomog->kappa;
    s["b"] = to_json(p.inhomog->b);
    s["q"] = to_json(p.inhomog->q);
    s["rho"] = to_json(p.inhomog->rho);
    doc["inhomog"] = std::move(s);
  }
  return doc;
}

inline Json to_json(const MjlsGameProblem& p) {
  Json doc;
  doc["n"] = p.n;
  doc["m1"] = p.m[0];
  doc["m2"] = p.m[1];
  doc["generator"] = to_json(p.gen.matrix());
  Json regs = Json::array();
  for (std::size_t i = 0; i < p.regimes(); ++i) {
    Json r;
    r["A"] = to_json(p.A[i]);
    r["B1"] = to_json(p.B[0][i]);
    r["B2"] = to_json(p.B[1][i]);
    for (int k = 0; k < 2; ++k) {
      const std::string s = "_" + std::to_string(k + 1);
      const auto& c = p.cost[k];
      r["Q" + std::to_string(k + 1)] = to_json(c.Q[i]);
      r["S1" + s] = to_json(c.S[0][i]);
      r["S2" + s] = to_json(c.S[1][i]);
      r["R11" + s] = to_json(c.Rb[0][0][i]);
      r["R12" + s] = to_json(c.Rb[0][1][i]);
      r["R21" + s] = to_json(c.Rb[1][0][i]);
      r["R22" + s] = to_json(c.Rb[1][1][i]);
    }
    regs.push_back(std::move(r));
  }
  doc["regimes"] = std::move(regs);
  if (p.inhomog) {
    Json s;
    s["kappa"] = p.inhomog->kappa;
    s["b"] = to_json(p.inhomog->b);
    for (int k = 0; k < 2; ++k) {
      s["q" + std::to_string(k + 1)] = to_json(p.inhomog->q[k]);
      for (int l = 0; l < 2; ++l)
        s["rho" + std::to_string(l + 1) + "_" + std::to_string(k + 1)] = to_json(p.inhomog->rho[k][l]);
    }
    doc["inhomog"] = std::move(s);
  }
  return doc;
}

/// %.17g for every float, so reports round-trip and compare byte for byte.
inline std::string format_double(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "null" : (x > 0 ? "\"inf\"" : "\"-inf\"");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace detail {

inline void dump_into(std::string& out, const Json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad + Json(it.key()).dump() + (indent > 0 ? ": " : ":");
        dump_into(out, it.value(), indent, depth + 1);
      }
      out += nl + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::none_of(j.begin(), j.end(), [](const Json& e) { return e.is_structured(); });
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",";
        if (!flat) out += nl + pad;
        first = false;
        dump_into(out, e, indent, depth + 1);
      }
      if (!flat) out += nl + close;
      out += "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

inline std::string dump_json(const Json& j, int indent = 2) {
  std::string out;
  detail::dump_into(out, j, indent, 0);
  return out;
}

}  // namespace jumplq
