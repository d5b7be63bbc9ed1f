#include "qlnet/serialize.hpp"

#include <fstream>
#include <sstream>
#include <type_traits>

namespace qlnet {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

json layer_to_json(const QLLayer& l) {
  return {{"Q", matrix_to_json(l.Q)}, {"W", matrix_to_json(l.W)}, {"alpha", std::vector<double>(l.alpha.begin(), l.alpha.end())}};
}

QLLayer layer_from_json(const json& j) {
  const auto a = j.at("alpha").get<std::vector<double>>();
  return QLLayer(matrix_from_json(j.at("Q")), matrix_from_json(j.at("W")),
                 Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size())));
}

}  // namespace

json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw FormatError("matrix JSON: data length does not match rows x cols");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("matrix JSON: ") + e.what());
  }
}

json model_to_json(const AnyModel& model, std::uint64_t seed) {
  return std::visit(
      [&](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, QLLayer>) {
          return {{"variant", "single"}, {"seed", seed},
                  {"dims", {m.input_dim(), m.width(), m.output_dim()}}, {"layers", {layer_to_json(m)}}};
        } else if constexpr (std::is_same_v<T, DeepQLNet>) {
          const auto s = m.schedule();
          json layers = json::array();
          for (const auto& l : m.layers) layers.push_back(layer_to_json(l));
          return {{"variant", "deep"}, {"seed", seed}, {"dims", {{"h", s.h}, {"m", s.m}}}, {"layers", layers}};
        } else {
          return {{"variant", "poly"}, {"seed", seed}, {"degree", m.degree},
                  {"dims", {m.input_dim(), m.width()}}, {"Q", matrix_to_json(m.Q)},
                  {"lambda", std::vector<double>(m.lambda.begin(), m.lambda.end())}};
        }
      },
      model);
}

AnyModel model_from_json(const json& j) {
  try {
    const auto variant = j.at("variant").get<std::string>();
    if (variant == "single") return layer_from_json(j.at("layers").at(0));
    if (variant == "deep") {
      std::vector<QLLayer> layers;
      for (const auto& l : j.at("layers")) layers.push_back(layer_from_json(l));
      return DeepQLNet(std::move(layers));
    }
    if (variant == "poly") {
      const auto l = j.at("lambda").get<std::vector<double>>();
      return PolyLayer(j.at("degree").get<int>(), matrix_from_json(j.at("Q")),
                       Eigen::Map<const Vector>(l.data(), static_cast<Eigen::Index>(l.size())));
    }
    throw FormatError("model JSON: unknown variant '" + variant + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
}

json oracle_to_json(const OracleSolution& sol) {
  json A = json::array();
  for (const auto& a : sol.A) A.push_back(matrix_to_json(a));
  return {{"degree", sol.degree},
          {"include_norm", sol.include_norm},
          {"input_dim", sol.input_dim},
          {"A", A},
          {"alpha_star", std::vector<double>(sol.alpha_star.begin(), sol.alpha_star.end())},
          {"coefficients", matrix_to_json(sol.coefficients)},
          {"loss_star", sol.loss_star},
          {"residual_norm", sol.residual_norm},
          {"rank", sol.rank},
          {"rank_deficient", sol.rank_deficient}};
}

json point_class_to_json(const PointClass& pc) {
  json j = {{"tag", to_string(pc.tag)}, {"grad_norm", pc.grad_norm}, {"loss", pc.loss},
            {"loss_star", pc.loss_star}, {"s_min", pc.s_min},         {"s_max", pc.s_max},
            {"rank_Q", pc.rank_Q}};
  if (pc.direction) {
    j["direction"] = matrix_to_json(*pc.direction);
    j["curvature_value"] = pc.curvature_value;
  }
  return j;
}

json trace_point_to_json(const TracePoint& p) {
  return {{"epoch", p.epoch}, {"loss", p.loss}, {"grad_norm", p.grad_norm}, {"penalty", p.penalty},
          {"objective", p.objective}};
}

void write_trace_jsonl(const std::filesystem::path& path, const TrainTrace& trace) {
  auto out = open_out(path);
  for (const auto& p : trace.points) out << trace_point_to_json(p).dump() << '\n';
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  if (data.is_lifted()) throw FormatError("CSV export supports vector samples only");
  auto out = open_out(path);
  const auto d = data.input_dim();
  const auto M = data.output_dim();
  for (Eigen::Index i = 0; i < d; ++i) out << (i ? "," : "") << 'x' << i;
  for (Eigen::Index m = 0; m < M; ++m) out << ",y" << m;
  out << '\n';
  out.precision(17);
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    for (Eigen::Index i = 0; i < d; ++i) out << (i ? "," : "") << data.inputs()(n, i);
    for (Eigen::Index m = 0; m < M; ++m) out << ',' << data.targets()(n, m);
    out << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
  std::vector<bool> is_target;
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) is_target.push_back(!name.empty() && name.front() == 'y');
  }
  std::vector<std::vector<double>> xs, ys;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> x, y;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= is_target.size()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": too many columns");
      double v;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      (is_target[c] ? y : x).push_back(v);
      ++c;
    }
    if (c != is_target.size()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }
  if (xs.empty()) throw FormatError(path.string() + ": no data rows");
  Matrix X(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs[0].size()));
  Matrix Y(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(ys[0].size()));
  for (std::size_t n = 0; n < xs.size(); ++n) {
    for (std::size_t i = 0; i < xs[n].size(); ++i) X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = xs[n][i];
    for (std::size_t m = 0; m < ys[n].size(); ++m) Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = ys[n][m];
  }
  return Dataset(std::move(X), std::move(Y), DatasetMeta{"csv:" + path.filename().string(), 0, std::nullopt});
}

json dataset_to_json(const Dataset& data) {
  if (data.is_lifted()) throw FormatError("JSON export supports vector samples only");
  json j = {{"generator", data.meta().generator}, {"seed", data.meta().seed},
            {"inputs", matrix_to_json(data.inputs())}, {"targets", matrix_to_json(data.targets())}};
  if (data.meta().planted_A) j["planted_A"] = matrix_to_json(*data.meta().planted_A);
  return j;
}

Dataset dataset_from_json(const json& j) {
  try {
    DatasetMeta meta{j.value("generator", std::string("json")), j.value("seed", std::uint64_t{0}), std::nullopt};
    if (j.contains("planted_A")) meta.planted_A = matrix_from_json(j.at("planted_A"));
    return Dataset(matrix_from_json(j.at("inputs")), matrix_from_json(j.at("targets")), std::move(meta));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset JSON: ") + e.what());
  }
}

}  // namespace qlnet
