#pragma once

#include "qlnet/data.hpp"
#include "qlnet/landscape.hpp"
#include "qlnet/model.hpp"
#include "qlnet/optimize.hpp"
#include "qlnet/oracle.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace qlnet {

using json = nlohmann::json;

/// {"rows", "cols", "data"} with data in row-major order.
json matrix_to_json(const Eigen::Ref<const Matrix>& m);
Matrix matrix_from_json(const json& j);

/// Checkpoint: {"variant", "seed", "dims", "layers": [{Q, W, alpha}] } for
/// QL models, {"variant": "poly", "degree", "Q", "lambda"} for poly layers.
json model_to_json(const AnyModel& model, std::uint64_t seed = 0);
AnyModel model_from_json(const json& j);

json oracle_to_json(const OracleSolution& sol);
json point_class_to_json(const PointClass& pc);
json trace_point_to_json(const TracePoint& p);

/// One JSON object per trace point, newline separated.
void write_trace_jsonl(const std::filesystem::path& path, const TrainTrace& trace);

/// Header x0..x{d-1},y0..y{M-1}; one row per sample. Vector samples only.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
/// Reads the CSV layout above; columns named y* are targets.
Dataset read_dataset_csv(const std::filesystem::path& path);

json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const json& j);

}  // namespace qlnet
