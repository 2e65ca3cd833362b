#pragma once

// CSV datasets and JSON model files.
//
// CSV: mandatory header row, comma separator, '.' decimal point, no quoting.
// Categorical responses are written as integers 1..K.
//
// Model JSON (schema_version 1):
//   family, g, p, K (multinomial only), expert_design ("raw" | "poly:<d>"),
//   covariates, response,
//   gating:  g rows of (intercept, slopes...), the last row all zeros,
//   experts: per component {"coefficients": [...], "variance": v} (Gaussian),
//            {"coefficients": [...]} (logistic, Poisson) or
//            {"classes": [[...], ..., [0, ...]]} (multinomial, K rows),
//   fit (optional):  log_ql, dim, bic, n, cycles, seed, converged, degenerate,
//   covariance (optional): {"parameters": [...], "matrix": [[...]]} in the
//            free-parameter order of `parameter_names`.

#include "moe/error.hpp"
#include "moe/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace moe {

class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kModelSchemaVersion = 1;

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

struct Table {
  std::vector<std::string> header;
  MatrixXd values;

  /// Column index or -1.
  Index column(const std::string& name) const;
};

Table parse_csv(const std::string& text);
Table read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const Table& table);
std::string to_csv(const Table& table);

/// Builds a dataset from named columns. Empty `covariates` means every column
/// except the response and `z_true`. For multinomial data `num_classes` = 0
/// means K = max(y).
Dataset dataset_from_table(const Table& table, const std::string& response,
                           std::vector<std::string> covariates, Family family,
                           int num_classes = 0, std::vector<std::string>* used_covariates = nullptr);

/// Header x1..xp,y[,z_true]; z_true is written 1-based.
Table dataset_table(const Dataset& data, const std::vector<int>* z_true = nullptr);

struct FitMeta {
  double log_ql = 0.0;
  int dim = 0;
  double bic = 0.0;
  Index n = 0;
  int cycles = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  bool degenerate = false;
};

struct ModelFile {
  MoeParams params;
  std::vector<std::string> covariates;
  std::string response = "y";
  std::optional<FitMeta> fit;
  std::optional<MatrixXd> covariance;
};

nlohmann::ordered_json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::ordered_json& doc);

std::string dump_model(const ModelFile& model);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace moe
