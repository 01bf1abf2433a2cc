#include "mvlme/io.hpp"

#include "mvlme/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace mvlme {

using Json = nlohmann::ordered_json;

namespace {

template <typename... Parts>
std::string cat(Parts&&... parts) {
  std::string out;
  (out += ... += std::string(parts));
  return out;
}

// Splits one CSV record; double quotes may wrap fields and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool is_empty_cell(const std::string& s) { return s.empty() || s == "NA"; }

}  // namespace

// ---------------------------------------------------------------------------
// Data CSV

std::vector<std::string> CsvSchema::covariate_columns() const {
  std::vector<std::string> out = covariates;
  for (const auto& [name, levels] : categorical)
    for (std::size_t l = 1; l < levels.size(); ++l) out.push_back(name + ":" + levels[l]);
  return out;
}

LongitudinalDataset parse_long_csv(std::string_view text, const CsvSchema& schema) {
  const std::vector<std::string> lines = split_lines(text);
  if (lines.empty()) throw ValidationError("data file is empty");
  std::vector<std::string> header = split_csv_line(lines[0]);
  for (auto& h : header) h = trim(h);

  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(cat("missing required column '", name, "'"));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column("id");
  const std::size_t time_col = column("time");
  std::vector<std::size_t> outcome_cols;
  for (const auto& o : schema.outcomes) outcome_cols.push_back(column(o));
  std::vector<std::size_t> covariate_cols;
  for (const auto& c : schema.covariates) covariate_cols.push_back(column(c));
  std::vector<std::size_t> categorical_cols;
  for (const auto& [name, levels] : schema.categorical) {
    if (levels.size() < 2) throw ValidationError(cat("categorical covariate '", name, "' needs at least 2 levels"));
    categorical_cols.push_back(column(name));
  }
  std::optional<std::size_t> group_col;
  if (!schema.group_column.empty()) group_col = column(schema.group_column);

  const std::size_t K = schema.outcomes.size();
  const std::size_t P = schema.covariate_columns().size();

  struct Row {
    std::string id;
    double time;
    std::vector<double> outcomes;
    std::vector<double> covariates;
    std::string group;
    std::size_t line;
  };
  std::vector<Row> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (trim(lines[li]).empty()) continue;
    std::vector<std::string> f = split_csv_line(lines[li]);
    if (f.size() != header.size())
      throw ValidationError(cat("line ", std::to_string(line_no), ": expected ", std::to_string(header.size()),
                                " fields, found ", std::to_string(f.size())));
    for (auto& cell : f) cell = trim(cell);
    Row r;
    r.line = line_no;
    r.id = f[id_col];
    if (r.id.empty()) throw ValidationError(cat("line ", std::to_string(line_no), ": empty id"));
    const auto t = parse_double(f[time_col]);
    if (!t) throw ValidationError(cat("line ", std::to_string(line_no), ": non-numeric time '", f[time_col], "'"));
    r.time = *t;
    bool any = false;
    for (std::size_t k = 0; k < K; ++k) {
      const std::string& cell = f[outcome_cols[k]];
      if (is_empty_cell(cell)) {
        r.outcomes.push_back(kMissing);
        continue;
      }
      const auto v = parse_double(cell);
      if (!v)
        throw ValidationError(cat("line ", std::to_string(line_no), ": non-numeric value '", cell, "' in column '",
                                  schema.outcomes[k], "'"));
      r.outcomes.push_back(*v);
      any = true;
    }
    if (!any) throw ValidationError(cat("line ", std::to_string(line_no), ": every outcome is missing"));
    for (std::size_t p = 0; p < covariate_cols.size(); ++p) {
      const std::string& cell = f[covariate_cols[p]];
      const auto v = parse_double(cell);
      if (!v)
        throw ValidationError(cat("line ", std::to_string(line_no), ": non-numeric value '", cell, "' in column '",
                                  schema.covariates[p], "'"));
      r.covariates.push_back(*v);
    }
    for (std::size_t c = 0; c < categorical_cols.size(); ++c) {
      const auto& [name, levels] = schema.categorical[c];
      const std::string& cell = f[categorical_cols[c]];
      const auto it = std::find(levels.begin(), levels.end(), cell);
      if (it == levels.end())
        throw ValidationError(cat("line ", std::to_string(line_no), ": unknown level '", cell, "' of '", name, "'"));
      for (std::size_t l = 1; l < levels.size(); ++l) r.covariates.push_back(it == levels.begin() + l ? 1.0 : 0.0);
    }
    if (group_col) {
      r.group = f[*group_col];
      if (r.group.empty()) throw ValidationError(cat("line ", std::to_string(line_no), ": empty group label"));
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError("data file has no rows");

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.id != b.id ? a.id < b.id : a.time < b.time;
  });

  LongitudinalDataset data;
  data.outcome_names = schema.outcomes;
  data.covariate_names = schema.covariate_columns();
  data.group_column = schema.group_column;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].id == rows[i].id) ++j;
    SubjectRecord s;
    s.id = rows[i].id;
    s.group = rows[i].group;
    const auto n = static_cast<Eigen::Index>(j - i);
    s.outcomes.resize(n, static_cast<Eigen::Index>(K));
    s.covariates.resize(n, static_cast<Eigen::Index>(P));
    for (std::size_t r = i; r < j; ++r) {
      const Row& row = rows[r];
      if (r > i && row.time == rows[r - 1].time)
        throw ValidationError(cat("line ", std::to_string(row.line), ": duplicate (id, time) = (", row.id, ", ",
                                  format_number(row.time), "), first seen on line ",
                                  std::to_string(rows[r - 1].line)));
      if (row.group != s.group)
        throw ValidationError(cat("line ", std::to_string(row.line), ": subject ", row.id,
                                  " changes group within its history"));
      const auto e = static_cast<Eigen::Index>(r - i);
      s.times.push_back(row.time);
      for (std::size_t k = 0; k < K; ++k) s.outcomes(e, static_cast<Eigen::Index>(k)) = row.outcomes[k];
      for (std::size_t p = 0; p < P; ++p) s.covariates(e, static_cast<Eigen::Index>(p)) = row.covariates[p];
    }
    data.subjects.push_back(std::move(s));
    i = j;
  }
  return data;
}

LongitudinalDataset load_long_csv(const fs::path& path, const CsvSchema& schema) {
  try {
    return parse_long_csv(read_text(path), schema);
  } catch (const ValidationError& e) {
    throw ValidationError(cat(path.string(), ": ", e.what()));
  }
}

std::string format_long_csv(const LongitudinalDataset& data) {
  std::string out = "id,time";
  for (const auto& o : data.outcome_names) out += "," + csv_field(o);
  for (const auto& c : data.covariate_names) out += "," + csv_field(c);
  if (!data.group_column.empty()) out += "," + csv_field(data.group_column);
  out += "\n";
  for (const SubjectRecord& s : data.subjects) {
    for (Eigen::Index e = 0; e < s.n_encounters(); ++e) {
      out += csv_field(s.id) + "," + format_number(s.times[static_cast<std::size_t>(e)]);
      for (Eigen::Index k = 0; k < s.outcomes.cols(); ++k) {
        out += ",";
        if (!is_missing(s.outcomes(e, k))) out += format_number(s.outcomes(e, k));
      }
      for (Eigen::Index p = 0; p < s.covariates.cols(); ++p) out += "," + format_number(s.covariates(e, p));
      if (!data.group_column.empty()) out += "," + csv_field(s.group);
      out += "\n";
    }
  }
  return out;
}

void write_long_csv(const LongitudinalDataset& data, const fs::path& path) { write_text(path, format_long_csv(data)); }

// ---------------------------------------------------------------------------
// Configuration

namespace {

bool is_structural_term(const std::string& t) { return t == "intercept" || t == "time" || t == "ns"; }

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(cat(where, " must be an object"));
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError(cat("unknown key '", key, "' in ", where));
  }
}

template <typename T>
T get_as(const Json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(cat(where, ".", key, " has the wrong type"));
  }
}

template <typename T>
void read_opt(const Json& obj, const char* key, T& target, const std::string& where) {
  if (obj.contains(key)) target = get_as<T>(obj, key, where);
}

std::vector<std::string> expand_terms(const std::vector<std::string>& terms, const CsvSchema& schema) {
  std::vector<std::string> out;
  for (const std::string& t : terms) {
    const auto it = std::find_if(schema.categorical.begin(), schema.categorical.end(),
                                 [&](const auto& c) { return c.first == t; });
    if (it == schema.categorical.end()) {
      out.push_back(t);
      continue;
    }
    for (std::size_t l = 1; l < it->second.size(); ++l) out.push_back(t + ":" + it->second[l]);
  }
  return out;
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "one_over_t") return Normalization::one_over_t;
  if (s == "one_over_window") return Normalization::one_over_window;
  throw ValidationError("unknown normalize_by '" + s + "'");
}

std::string to_string(Normalization n) { return n == Normalization::one_over_t ? "one_over_t" : "one_over_window"; }

void parse_mcmc(const Json& j, McmcConfig& m, const std::string& where) {
  check_keys(j, {"n_chains", "n_iter", "burn_in", "thin", "adapt", "seed"}, where);
  read_opt(j, "n_chains", m.n_chains, where);
  read_opt(j, "n_iter", m.n_iter, where);
  read_opt(j, "burn_in", m.burn_in, where);
  read_opt(j, "thin", m.thin, where);
  read_opt(j, "adapt", m.adapt, where);
  read_opt(j, "seed", m.seed, where);
}

Json mcmc_json(const McmcConfig& m) {
  return Json{{"n_chains", m.n_chains}, {"n_iter", m.n_iter}, {"burn_in", m.burn_in},
              {"thin", m.thin},         {"adapt", m.adapt},   {"seed", m.seed}};
}

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(cat("malformed JSON: ", e.what()));
  }
}

}  // namespace

RunConfig parse_config_text(std::string_view text) {
  const Json root = parse_json(text);
  check_keys(root, {"outcomes", "association", "re_cross_outcome_correlation", "time_scale", "admissible_time",
                    "priors", "mcmc", "data", "report"},
             "config");
  RunConfig rc;

  if (root.contains("data")) {
    const Json& d = root["data"];
    check_keys(d, {"covariates", "categorical", "group_column"}, "data");
    read_opt(d, "covariates", rc.schema.covariates, "data");
    read_opt(d, "group_column", rc.schema.group_column, "data");
    if (d.contains("categorical")) {
      const Json& c = d["categorical"];
      if (!c.is_object()) throw ValidationError("data.categorical must map names to level lists");
      for (const auto& [name, levels] : c.items()) {
        auto lv = get_as<std::vector<std::string>>(c, name.c_str(), "data.categorical");
        if (lv.size() < 2) throw ValidationError(cat("categorical covariate '", name, "' needs at least 2 levels"));
        if (std::set<std::string>(lv.begin(), lv.end()).size() != lv.size())
          throw ValidationError(cat("categorical covariate '", name, "' repeats a level"));
        rc.schema.categorical.emplace_back(name, std::move(lv));
      }
    }
  }

  if (!root.contains("outcomes") || !root["outcomes"].is_array() || root["outcomes"].empty())
    throw ValidationError("config.outcomes must be a non-empty list");
  for (const Json& o : root["outcomes"]) {
    check_keys(o, {"name", "fixed", "random", "spline_df"}, "outcome");
    if (!o.contains("name")) throw ValidationError("outcome without a name");
    OutcomeModel m;
    m.name = get_as<std::string>(o, "name", "outcome");
    const std::string where = "outcome " + m.name;
    if (!o.contains("fixed")) throw ValidationError(where + " has no fixed terms");
    m.fixed = expand_terms(get_as<std::vector<std::string>>(o, "fixed", where), rc.schema);
    if (o.contains("random")) m.random = expand_terms(get_as<std::vector<std::string>>(o, "random", where), rc.schema);
    read_opt(o, "spline_df", m.spline_df, where);
    rc.spec.outcomes.push_back(std::move(m));
    rc.schema.outcomes.push_back(rc.spec.outcomes.back().name);
  }

  const auto indicators = rc.schema.covariate_columns();
  if (!root.contains("data") || !root["data"].contains("covariates")) {
    std::vector<std::string> found;
    for (const OutcomeModel& m : rc.spec.outcomes)
      for (const std::string& t : m.fixed)
        if (!is_structural_term(t) && std::find(indicators.begin(), indicators.end(), t) == indicators.end() &&
            std::find(found.begin(), found.end(), t) == found.end())
          found.push_back(t);
    rc.schema.covariates = found;
  }
  const auto columns = rc.schema.covariate_columns();
  for (const OutcomeModel& m : rc.spec.outcomes)
    for (const std::string& t : m.fixed)
      if (!is_structural_term(t) && std::find(columns.begin(), columns.end(), t) == columns.end())
        throw ValidationError(cat("outcome ", m.name, ": term '", t, "' is not a declared covariate"));

  AssociationStructure& a = rc.spec.association;
  if (root.contains("association")) {
    const Json& j = root["association"];
    check_keys(j, {"kind", "window_d", "normalize_by", "source", "target"}, "association");
    if (j.contains("kind")) a.kind = association_kind_from_string(get_as<std::string>(j, "kind", "association"));
    if (j.contains("window_d") && !j["window_d"].is_null()) {
      const double d = get_as<double>(j, "window_d", "association");
      if (!(d > 0.0)) throw ValidationError("association.window_d must be > 0");
      a.window_d = d;
    }
    if (j.contains("normalize_by"))
      a.normalize_by = normalization_from_string(get_as<std::string>(j, "normalize_by", "association"));
    if (!a.active() && (j.contains("source") || j.contains("target") || a.window_d || j.contains("normalize_by")))
      throw ValidationError("association without a kind cannot set source, target, window_d or normalize_by");
    if (a.kind != AssociationKind::auc && (a.window_d || j.contains("normalize_by")))
      throw ValidationError("window_d and normalize_by apply only to kind = auc");
    if (a.active()) {
      if (!j.contains("source") || !j.contains("target"))
        throw ValidationError("association needs source and target outcomes");
      const auto src = get_as<std::string>(j, "source", "association");
      const auto tgt = get_as<std::string>(j, "target", "association");
      a.source_outcome = rc.spec.outcome_index(src);
      a.target_outcome = rc.spec.outcome_index(tgt);
      if (a.source_outcome < 0) throw ValidationError("association source '" + src + "' is not an outcome");
      if (a.target_outcome < 0) throw ValidationError("association target '" + tgt + "' is not an outcome");
    }
  }

  rc.spec.re_cross_outcome_correlation = !a.active();
  read_opt(root, "re_cross_outcome_correlation", rc.spec.re_cross_outcome_correlation, "config");
  read_opt(root, "time_scale", rc.spec.time_scale, "config");
  if (root.contains("admissible_time")) {
    const auto r = get_as<std::vector<double>>(root, "admissible_time", "config");
    if (r.size() != 2) throw ValidationError("config.admissible_time must be [lo, hi]");
    rc.spec.admissible_time = {r[0], r[1]};
  }

  if (root.contains("priors")) {
    const Json& p = root["priors"];
    PriorConfig& pc = rc.spec.priors;
    check_keys(p, {"beta_prior_variance", "alpha_prior_variance", "error_precision_shape", "error_precision_rate",
                   "wishart_df_offset", "scale_hyper_shape", "scale_hyper_rate", "scale_hyper_multiplier"},
               "priors");
    read_opt(p, "beta_prior_variance", pc.beta_prior_variance, "priors");
    read_opt(p, "alpha_prior_variance", pc.alpha_prior_variance, "priors");
    read_opt(p, "error_precision_shape", pc.error_precision_shape, "priors");
    read_opt(p, "error_precision_rate", pc.error_precision_rate, "priors");
    read_opt(p, "wishart_df_offset", pc.wishart_df_offset, "priors");
    read_opt(p, "scale_hyper_shape", pc.scale_hyper_shape, "priors");
    read_opt(p, "scale_hyper_rate", pc.scale_hyper_rate, "priors");
    read_opt(p, "scale_hyper_multiplier", pc.scale_hyper_multiplier, "priors");
  }
  if (root.contains("mcmc")) parse_mcmc(root["mcmc"], rc.spec.mcmc, "mcmc");

  if (root.contains("report")) {
    const Json& r = root["report"];
    check_keys(r, {"scale", "min_n"}, "report");
    read_opt(r, "scale", rc.report_scale, "report");
    read_opt(r, "min_n", rc.min_n, "report");
  }
  if (!std::isfinite(rc.report_scale) || rc.report_scale == 0.0)
    throw ValidationError("report.scale must be finite and non-zero");
  if (rc.min_n < 1) throw ValidationError("report.min_n must be >= 1");

  rc.spec.validate();
  return rc;
}

RunConfig parse_config(const fs::path& path) {
  try {
    return parse_config_text(read_text(path));
  } catch (const ValidationError& e) {
    throw ValidationError(cat(path.string(), ": ", e.what()));
  }
}

std::string serialize_config(const RunConfig& rc) {
  const ModelSpec& s = rc.spec;
  Json root;
  Json outcomes = Json::array();
  for (const OutcomeModel& m : s.outcomes)
    outcomes.push_back(Json{{"name", m.name}, {"fixed", m.fixed}, {"random", m.random}, {"spline_df", m.spline_df}});
  root["outcomes"] = outcomes;

  Json assoc = Json::object();
  if (s.association.active()) {
    assoc["kind"] = to_string(s.association.kind);
    assoc["source"] = s.outcomes.at(static_cast<std::size_t>(s.association.source_outcome)).name;
    assoc["target"] = s.outcomes.at(static_cast<std::size_t>(s.association.target_outcome)).name;
    if (s.association.kind == AssociationKind::auc) {
      if (s.association.window_d) assoc["window_d"] = *s.association.window_d;
      assoc["normalize_by"] = to_string(s.association.normalize_by);
    }
  }
  root["association"] = assoc;
  root["re_cross_outcome_correlation"] = s.re_cross_outcome_correlation;
  root["time_scale"] = s.time_scale;
  root["admissible_time"] = {s.admissible_time.first, s.admissible_time.second};
  const PriorConfig& p = s.priors;
  root["priors"] = Json{{"beta_prior_variance", p.beta_prior_variance},
                        {"alpha_prior_variance", p.alpha_prior_variance},
                        {"error_precision_shape", p.error_precision_shape},
                        {"error_precision_rate", p.error_precision_rate},
                        {"wishart_df_offset", p.wishart_df_offset},
                        {"scale_hyper_shape", p.scale_hyper_shape},
                        {"scale_hyper_rate", p.scale_hyper_rate},
                        {"scale_hyper_multiplier", p.scale_hyper_multiplier}};
  root["mcmc"] = mcmc_json(s.mcmc);
  Json data;
  data["covariates"] = rc.schema.covariates;
  Json cats = Json::object();
  for (const auto& [name, levels] : rc.schema.categorical) cats[name] = levels;
  data["categorical"] = cats;
  if (!rc.schema.group_column.empty()) data["group_column"] = rc.schema.group_column;
  root["data"] = data;
  root["report"] = Json{{"scale", rc.report_scale}, {"min_n", rc.min_n}};
  return root.dump(2) + "\n";
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& config) { return fnv1a_hex(serialize_config(config)); }

FittedStructure fitted_structure_from_label(const std::string& label) {
  if (label == "RE" || label == "re" || label == "re_only") return {Connection::re_only, AssociationKind::value};
  const auto amp = label.find('&');
  if (amp != std::string::npos) {
    const std::string tail = label.substr(amp + 1);
    if (tail != "RE" && tail != "re") throw ValidationError("unknown fitted structure '" + label + "'");
    const auto kind = association_kind_from_string(label.substr(0, amp));
    if (kind == AssociationKind::none_shared_re_only) throw ValidationError("unknown fitted structure '" + label + "'");
    return {Connection::assoc_and_re, kind};
  }
  const auto kind = association_kind_from_string(label);
  if (kind == AssociationKind::none_shared_re_only) throw ValidationError("unknown fitted structure '" + label + "'");
  return {Connection::assoc_only, kind};
}

SimulationConfig default_simulation_config() {
  SimulationConfig cfg;
  for (AssociationKind k : {AssociationKind::value, AssociationKind::slope, AssociationKind::auc}) {
    SimulationScenario sc;
    sc.name = "true_" + to_string(k);
    sc.true_kind = k;
    cfg.scenarios.push_back(sc);
  }
  for (AssociationKind k : {AssociationKind::value, AssociationKind::slope, AssociationKind::auc})
    cfg.structures.push_back({Connection::assoc_only, k});
  cfg.structures.push_back({Connection::re_only, AssociationKind::value});
  for (AssociationKind k : {AssociationKind::value, AssociationKind::slope, AssociationKind::auc})
    cfg.structures.push_back({Connection::assoc_and_re, k});
  return cfg;
}

SimulationConfig parse_simulation_config_text(std::string_view text) {
  const Json root = parse_json(text);
  check_keys(root, {"scenarios", "structures", "replicates", "mcmc"}, "simulation config");
  SimulationConfig cfg = default_simulation_config();
  read_opt(root, "replicates", cfg.replicates, "simulation config");
  if (cfg.replicates < 1) throw ValidationError("replicates must be >= 1");
  if (root.contains("mcmc")) parse_mcmc(root["mcmc"], cfg.mcmc, "mcmc");
  if (root.contains("structures")) {
    cfg.structures.clear();
    for (const auto& label : get_as<std::vector<std::string>>(root, "structures", "simulation config"))
      cfg.structures.push_back(fitted_structure_from_label(label));
    if (cfg.structures.empty()) throw ValidationError("structures must not be empty");
  }
  if (root.contains("scenarios")) {
    cfg.scenarios.clear();
    if (!root["scenarios"].is_array()) throw ValidationError("scenarios must be a list");
    std::set<std::string> names;
    for (const Json& j : root["scenarios"]) {
      check_keys(j,
                 {"name", "true_kind", "window_d", "normalize_by", "n_subjects", "min_encounters", "max_encounters",
                  "time_lo", "time_hi", "time_scale", "covariate_probability", "beta1", "beta2", "sigma1", "sigma2",
                  "alpha", "D", "seed"},
                 "scenario");
      SimulationScenario sc;
      read_opt(j, "name", sc.name, "scenario");
      const std::string where = "scenario " + sc.name;
      if (!names.insert(sc.name).second) throw ValidationError("duplicate scenario name '" + sc.name + "'");
      if (j.contains("true_kind")) sc.true_kind = association_kind_from_string(get_as<std::string>(j, "true_kind", where));
      if (j.contains("window_d") && !j["window_d"].is_null()) sc.window_d = get_as<double>(j, "window_d", where);
      if (j.contains("normalize_by"))
        sc.normalize_by = normalization_from_string(get_as<std::string>(j, "normalize_by", where));
      read_opt(j, "n_subjects", sc.n_subjects, where);
      read_opt(j, "min_encounters", sc.min_encounters, where);
      read_opt(j, "max_encounters", sc.max_encounters, where);
      read_opt(j, "time_lo", sc.time_lo, where);
      read_opt(j, "time_hi", sc.time_hi, where);
      read_opt(j, "time_scale", sc.time_scale, where);
      read_opt(j, "covariate_probability", sc.covariate_probability, where);
      read_opt(j, "sigma1", sc.sigma1, where);
      read_opt(j, "sigma2", sc.sigma2, where);
      read_opt(j, "alpha", sc.alpha, where);
      read_opt(j, "seed", sc.seed, where);
      if (j.contains("beta1")) {
        const auto v = get_as<std::vector<double>>(j, "beta1", where);
        if (v.size() != 3) throw ValidationError(where + ": beta1 needs 3 values");
        sc.beta1 = Eigen::Vector3d(v[0], v[1], v[2]);
      }
      if (j.contains("beta2")) {
        const auto v = get_as<std::vector<double>>(j, "beta2", where);
        if (v.size() != 2) throw ValidationError(where + ": beta2 needs 2 values");
        sc.beta2 = Eigen::Vector2d(v[0], v[1]);
      }
      if (j.contains("D")) {
        const Json& dj = j["D"];
        if (dj.is_array() && dj.size() == 4 && dj[0].is_number()) {
          const auto v = get_as<std::vector<double>>(j, "D", where);
          sc.D = Eigen::Vector4d(v[0], v[1], v[2], v[3]).asDiagonal();
        } else {
          const auto m = get_as<std::vector<std::vector<double>>>(j, "D", where);
          if (m.size() != 4) throw ValidationError(where + ": D must be 4 variances or a 4x4 matrix");
          for (int r = 0; r < 4; ++r) {
            if (m[static_cast<std::size_t>(r)].size() != 4)
              throw ValidationError(where + ": D must be 4 variances or a 4x4 matrix");
            for (int c = 0; c < 4; ++c) sc.D(r, c) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
          }
        }
      }
      sc.validate();
      cfg.scenarios.push_back(sc);
    }
    if (cfg.scenarios.empty()) throw ValidationError("scenarios must not be empty");
  }
  cfg.mcmc.validate();
  return cfg;
}

SimulationConfig parse_simulation_config(const fs::path& path) {
  try {
    return parse_simulation_config_text(read_text(path));
  } catch (const ValidationError& e) {
    throw ValidationError(cat(path.string(), ": ", e.what()));
  }
}

// ---------------------------------------------------------------------------
// Chains

namespace {

std::string chain_csv(const ChainDraws& c) {
  std::string out;
  for (std::size_t j = 0; j < c.names.size(); ++j) out += (j ? "," : "") + csv_field(c.names[j]);
  out += "\n";
  for (Eigen::Index r = 0; r < c.draws.rows(); ++r) {
    for (Eigen::Index j = 0; j < c.draws.cols(); ++j) {
      if (j) out += ",";
      out += format_number(c.draws(r, j));
    }
    out += "\n";
  }
  return out;
}

}  // namespace

void write_chains(const std::vector<ChainDraws>& chains, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(cat("cannot create ", dir.string(), ": ", ec.message()));
  for (const ChainDraws& c : chains) {
    const std::string stem = "chain_" + std::to_string(c.chain_index);
    const std::string csv = chain_csv(c);
    write_text(dir / (stem + ".csv"), csv);
    Json side{{"chain_index", c.chain_index},
              {"seed", c.seed},
              {"config_hash", c.config_hash},
              {"draws_hash", fnv1a_hex(csv)},
              {"retained", c.draws.rows()},
              {"parameters", c.draws.cols()},
              {"jitter_events", c.jitter_events},
              {"mcmc", mcmc_json(c.config)}};
    write_text(dir / (stem + ".json"), side.dump(2) + "\n");
  }
}

LoadedChains read_chains(const fs::path& dir, const std::optional<std::string>& expected_config_hash) {
  if (!fs::is_directory(dir)) throw ValidationError(cat("chain directory ", dir.string(), " does not exist"));
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("chain_", 0) != 0 || entry.path().extension() != ".csv") continue;
    const std::string idx = name.substr(6, name.size() - 10);
    if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos) continue;
    files.emplace_back(std::stoi(idx), entry.path());
  }
  if (files.empty()) throw ValidationError(cat("no chain_<k>.csv files in ", dir.string()));
  std::sort(files.begin(), files.end());

  LoadedChains out;
  for (const auto& [index, path] : files) {
    const std::string text = read_text(path);
    const std::vector<std::string> lines = split_lines(text);
    ChainDraws c;
    c.chain_index = index;
    c.names = split_csv_line(lines.at(0));
    std::vector<std::vector<double>> rows;
    for (std::size_t li = 1; li < lines.size(); ++li) {
      if (lines[li].empty()) continue;
      const auto f = split_csv_line(lines[li]);
      if (f.size() != c.names.size())
        throw ValidationError(cat(path.string(), ": line ", std::to_string(li + 1), " has ", std::to_string(f.size()),
                                  " fields, header has ", std::to_string(c.names.size())));
      std::vector<double> row;
      for (const auto& cell : f) {
        const auto v = parse_double(cell);
        if (!v) throw ValidationError(cat(path.string(), ": line ", std::to_string(li + 1), ": bad value '", cell, "'"));
        row.push_back(*v);
      }
      rows.push_back(std::move(row));
    }
    c.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(c.names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < rows[r].size(); ++j)
        c.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];

    fs::path side_path = path;
    side_path.replace_extension(".json");
    if (!fs::exists(side_path)) {
      out.warnings.push_back(cat(path.filename().string(), ": sidecar manifest missing"));
    } else {
      try {
        const Json side = Json::parse(read_text(side_path));
        c.seed = side.value("seed", std::uint64_t{0});
        c.config_hash = side.value("config_hash", std::string{});
        c.jitter_events = side.value("jitter_events", std::size_t{0});
        if (side.contains("mcmc")) parse_mcmc(side["mcmc"], c.config, "sidecar mcmc");
        const std::string recorded = side.value("draws_hash", std::string{});
        if (recorded != fnv1a_hex(text))
          out.warnings.push_back(cat(path.filename().string(), ": draws hash mismatch (sidecar ", recorded, ")"));
        if (expected_config_hash && c.config_hash != *expected_config_hash)
          out.warnings.push_back(cat(path.filename().string(), ": config hash ", c.config_hash, " differs from ",
                                     *expected_config_hash));
      } catch (const std::exception& e) {
        out.warnings.push_back(cat(side_path.filename().string(), ": unreadable sidecar: ", e.what()));
      }
    }
    out.chains.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_summary_csv(const PosteriorSummary& summary) {
  std::string out(kSummaryHeader);
  out += "\n";
  for (const ParameterSummary& p : summary.parameters) {
    out += csv_field(p.name);
    for (double v : {p.mean, p.sd, p.q025, p.q975, p.rhat, p.ess, p.bayes_p}) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

std::string format_bias_table_csv(const BiasTable& table) {
  std::string out(kBiasTableHeader);
  out += "\n";
  for (const BiasCell& c : table.cells) {
    out += csv_field(c.scenario) + "," + to_string(c.true_kind) + "," + csv_field(c.structure) + "," +
           csv_field(c.parameter) + "," + format_number(c.truth) + "," + std::to_string(c.replicates_ok) + "," +
           std::to_string(c.replicates_failed) + "," + format_number(c.mean_estimate) + "," + format_number(c.bias) +
           "," + format_number(c.mean_abs_error) + "," + format_number(c.coverage) + "\n";
  }
  return out;
}

std::string format_replicate_csv(const std::vector<ReplicateRecord>& replicates) {
  std::string out(kReplicateHeader);
  out += "\n";
  for (const ReplicateRecord& r : replicates) {
    const std::string lead =
        csv_field(r.scenario) + "," + std::to_string(r.replicate) + "," + csv_field(r.fit.structure.label()) + ",";
    if (!r.fit.ok) {
      out += lead + "failed,,,,,,,,," + csv_field(r.fit.error) + "\n";
      continue;
    }
    for (const ParameterSummary& p : r.fit.summary.parameters) {
      out += lead + "ok," + csv_field(p.name);
      for (double v : {p.mean, p.sd, p.q025, p.q975, p.rhat, p.ess, p.bayes_p}) out += "," + format_number(v);
      out += ",\n";
    }
  }
  return out;
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(cat("cannot open ", path.string(), " for writing"));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(cat("write to ", path.string(), " failed"));
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError(cat("cannot open ", path.string()));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string sanitize_component(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '_' || c == '-';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

}  // namespace mvlme
