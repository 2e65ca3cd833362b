#include "moe/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace moe {

using nlohmann::ordered_json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// CSV

Index Table::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<Index>(it - header.begin());
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field, std::size_t line_no, std::size_t col) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
    throw IoError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                  ": '" + std::string(field) + "' is not a number");
  return v;
}

}  // namespace

Table parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Table table;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view);
    if (table.header.empty()) {
      for (auto f : fields) {
        const std::string name(trim(f));
        if (name.empty()) throw IoError("empty column name in CSV header");
        if (std::find(table.header.begin(), table.header.end(), name) != table.header.end())
          throw IoError("duplicate column '" + name + "' in CSV header");
        table.header.push_back(name);
      }
      continue;
    }
    if (fields.size() != table.header.size())
      throw IoError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                    " fields, header has " + std::to_string(table.header.size()));
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_number(fields[j], line_no, j);
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw IoError("CSV has no header row");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

Table read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j) out += ',';
    out += table.header[j];
  }
  out += '\n';
  for (Index i = 0; i < table.values.rows(); ++i) {
    for (Index j = 0; j < table.values.cols(); ++j) {
      if (j) out += ',';
      out += format_number(table.values(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  write_text(path, to_csv(table));
}

Dataset dataset_from_table(const Table& table, const std::string& response,
                           std::vector<std::string> covariates, Family family, int num_classes,
                           std::vector<std::string>* used_covariates) {
  const Index ycol = table.column(response);
  if (ycol < 0) throw IoError("response column '" + response + "' not found in CSV");
  if (covariates.empty()) {
    for (const auto& name : table.header)
      if (name != response && name != "z_true") covariates.push_back(name);
  }
  Dataset data;
  data.kind = response_kind(family);
  data.x.resize(table.values.rows(), static_cast<Index>(covariates.size()));
  for (std::size_t j = 0; j < covariates.size(); ++j) {
    const Index c = table.column(covariates[j]);
    if (c < 0) throw IoError("covariate column '" + covariates[j] + "' not found in CSV");
    data.x.col(static_cast<Index>(j)) = table.values.col(c);
  }
  data.y = table.values.col(ycol);
  if (family == Family::Multinomial) {
    data.num_classes = num_classes > 0
                           ? num_classes
                           : (data.n() > 0 ? static_cast<int>(data.y.maxCoeff()) : 0);
  }
  data.validate();
  if (used_covariates) *used_covariates = std::move(covariates);
  return data;
}

Table dataset_table(const Dataset& data, const std::vector<int>* z_true) {
  Table t;
  for (Index j = 0; j < data.p(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back("y");
  if (z_true) t.header.push_back("z_true");
  t.values.resize(data.n(), static_cast<Index>(t.header.size()));
  t.values.leftCols(data.p()) = data.x;
  t.values.col(data.p()) = data.y;
  if (z_true)
    for (Index i = 0; i < data.n(); ++i) t.values(i, data.p() + 1) = (*z_true)[i] + 1;
  return t;
}

// ---------------------------------------------------------------------------
// Model JSON

namespace {

ordered_json vector_json(const Eigen::Ref<const VectorXd>& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

VectorXd vector_from(const ordered_json& arr, Index expected, const std::string& what) {
  if (!arr.is_array() || static_cast<Index>(arr.size()) != expected)
    throw IoError(what + " must be an array of " + std::to_string(expected) + " numbers");
  VectorXd v(expected);
  for (Index i = 0; i < expected; ++i) {
    if (!arr[i].is_number()) throw IoError(what + " must contain numbers");
    v(i) = arr[i].get<double>();
  }
  return v;
}

template <typename T>
T field(const ordered_json& doc, const char* key) {
  if (!doc.contains(key)) throw IoError(std::string("model file lacks '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(std::string("model field '") + key + "' has the wrong type");
  }
}

const ordered_json& member(const ordered_json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key))
    throw IoError(std::string("model file lacks '") + key + "'");
  return doc.at(key);
}

}  // namespace

ordered_json model_to_json(const ModelFile& model) {
  const MoeParams& theta = model.params;
  theta.validate();
  ordered_json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["family"] = std::string(to_string(theta.family));
  doc["g"] = theta.g();
  doc["p"] = theta.p;
  if (theta.family == Family::Multinomial) doc["K"] = theta.num_classes;
  doc["expert_design"] = theta.design.to_string();
  doc["covariates"] = model.covariates;
  doc["response"] = model.response;
  ordered_json gating = ordered_json::array();
  for (Index z = 0; z < theta.gating.rows(); ++z) gating.push_back(vector_json(theta.gating.row(z)));
  doc["gating"] = gating;
  ordered_json experts = ordered_json::array();
  for (const auto& e : theta.experts) {
    ordered_json ej;
    if (theta.family == Family::Multinomial) {
      ordered_json classes = ordered_json::array();
      for (Index l = 0; l < e.coef.cols(); ++l) classes.push_back(vector_json(e.coef.col(l)));
      ej["classes"] = classes;
    } else {
      ej["coefficients"] = vector_json(e.coef.col(0));
      if (theta.family == Family::Gaussian) ej["variance"] = e.variance;
    }
    experts.push_back(ej);
  }
  doc["experts"] = experts;
  if (model.fit) {
    const FitMeta& f = *model.fit;
    doc["fit"] = {{"log_ql", f.log_ql},       {"dim", f.dim},
                  {"bic", f.bic},             {"n", f.n},
                  {"cycles", f.cycles},       {"seed", f.seed},
                  {"converged", f.converged}, {"degenerate", f.degenerate}};
  }
  if (model.covariance) {
    const MatrixXd& c = *model.covariance;
    if (c.rows() != parameter_count(theta) || c.cols() != c.rows())
      throw InvalidArgument("covariance matrix does not match the parameter count");
    ordered_json rows = ordered_json::array();
    for (Index i = 0; i < c.rows(); ++i) rows.push_back(vector_json(c.row(i)));
    doc["covariance"] = {{"parameters", parameter_names(theta)}, {"matrix", rows}};
  }
  return doc;
}

ModelFile model_from_json(const ordered_json& doc) {
  if (!doc.is_object()) throw IoError("model file is not a JSON object");
  const int version = field<int>(doc, "schema_version");
  if (version != kModelSchemaVersion)
    throw IoError("unsupported model schema_version " + std::to_string(version) + " (expected " +
                  std::to_string(kModelSchemaVersion) + ")");
  ModelFile model;
  MoeParams& theta = model.params;
  try {
    theta.family = parse_family(field<std::string>(doc, "family"));
  } catch (const InvalidArgument& e) {
    throw IoError(e.what());
  }
  const int g = field<int>(doc, "g");
  theta.p = field<int>(doc, "p");
  if (g < 1 || theta.p < 0) throw IoError("model has invalid g or p");
  theta.num_classes = theta.family == Family::Multinomial ? field<int>(doc, "K") : 0;
  try {
    theta.design = ExpertDesign::parse(field<std::string>(doc, "expert_design"));
  } catch (const InvalidArgument& e) {
    throw IoError(e.what());
  }
  model.covariates = field<std::vector<std::string>>(doc, "covariates");
  model.response = field<std::string>(doc, "response");
  if (static_cast<int>(model.covariates.size()) != theta.p)
    throw IoError("model lists " + std::to_string(model.covariates.size()) +
                  " covariates but p = " + std::to_string(theta.p));

  const ordered_json& gating = member(doc, "gating");
  if (!gating.is_array() || static_cast<int>(gating.size()) != g)
    throw IoError("gating must have g rows");
  theta.gating.resize(g, theta.p + 1);
  for (int z = 0; z < g; ++z)
    theta.gating.row(z) = vector_from(gating[z], theta.p + 1, "gating row").transpose();

  const ordered_json& experts = member(doc, "experts");
  if (!experts.is_array() || static_cast<int>(experts.size()) != g)
    throw IoError("experts must have g entries");
  const Index rows = theta.design.width(theta.p) + 1;
  for (const auto& ej : experts) {
    ExpertParams e;
    if (theta.family == Family::Multinomial) {
      const ordered_json& classes = member(ej, "classes");
      if (!classes.is_array() || static_cast<int>(classes.size()) != theta.num_classes)
        throw IoError("multinomial expert must list K classes");
      e.coef.resize(rows, theta.num_classes);
      for (int l = 0; l < theta.num_classes; ++l)
        e.coef.col(l) = vector_from(classes[l], rows, "class coefficients");
    } else {
      e.coef = vector_from(member(ej, "coefficients"), rows, "expert coefficients");
      if (theta.family == Family::Gaussian) e.variance = field<double>(ej, "variance");
    }
    theta.experts.push_back(std::move(e));
  }
  try {
    theta.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid model: ") + e.what());
  }

  if (doc.contains("fit")) {
    const ordered_json& f = member(doc, "fit");
    FitMeta meta;
    meta.log_ql = field<double>(f, "log_ql");
    meta.dim = field<int>(f, "dim");
    meta.bic = field<double>(f, "bic");
    meta.n = field<Index>(f, "n");
    meta.cycles = field<int>(f, "cycles");
    meta.seed = field<std::uint64_t>(f, "seed");
    meta.converged = field<bool>(f, "converged");
    meta.degenerate = field<bool>(f, "degenerate");
    model.fit = meta;
  }
  if (doc.contains("covariance")) {
    const ordered_json& c = doc.at("covariance");
    const auto names = field<std::vector<std::string>>(c, "parameters");
    if (names != parameter_names(theta))
      throw IoError("covariance parameter manifest does not match the model layout");
    const Index dim = static_cast<Index>(names.size());
    const ordered_json& m = member(c, "matrix");
    if (!m.is_array() || static_cast<Index>(m.size()) != dim)
      throw IoError("covariance matrix has the wrong number of rows");
    MatrixXd cov(dim, dim);
    for (Index i = 0; i < dim; ++i) cov.row(i) = vector_from(m[i], dim, "covariance row").transpose();
    model.covariance = cov;
  }
  return model;
}

std::string dump_model(const ModelFile& model) { return model_to_json(model).dump(2) + "\n"; }

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  write_text(path, dump_model(model));
}

ModelFile load_model(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse model file " + path.string() + ": " + e.what());
  }
  return model_from_json(doc);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace moe
