#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "voxpipe/error.hpp"
#include "voxpipe/models.hpp"

namespace voxpipe::models {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "voxpipe-model";

// JSON has no NaN or infinity; those travel as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j, std::string_view where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw FormatError("model field '" + std::string(where) + "' holds a non-number");
}

template <typename Vec>
json numbers(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

Eigen::VectorXd vector_from(const json& j, std::string_view where, Eigen::Index expected = -1) {
  if (!j.is_array()) throw FormatError("model field '" + std::string(where) + "' must be an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected) {
    throw FormatError("model field '" + std::string(where) + "' has " + std::to_string(j.size()) +
                      " entries, expected " + std::to_string(expected));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from(j[i], where);
  return v;
}

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("model file lacks '") + key + "'");
  return *it;
}

std::vector<std::string> strings_from(const json& j, const char* where) {
  if (!j.is_array()) throw FormatError(std::string("model field '") + where + "' must be an array");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw FormatError(std::string("model field '") + where + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

std::string model_to_text(const TrainedModel& model) {
  json j;
  j["format"] = kFormatName;
  j["version"] = kModelFormatVersion;
  j["kind"] = std::string(to_string(model.kind));
  j["head"] = std::string(to_string(model.head));
  j["feature_labels"] = model.feature_labels;
  j["class_names"] = model.class_names;
  j["standardizer"] = {{"mean", numbers(model.standardizer.mean)}, {"scale", numbers(model.standardizer.scale)}};
  j["target"] = {{"mean", number(model.target_mean)}, {"scale", number(model.target_scale)}};
  json layers = json::array();
  for (const auto& l : model.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(number(l.weights(r, c)));
    }
    layers.push_back({{"rows", l.weights.rows()}, {"cols", l.weights.cols()}, {"weights", w}, {"bias", numbers(l.bias)}});
  }
  j["layers"] = layers;
  json hist = json::array();
  for (double v : model.loss_history) hist.push_back(number(v));
  j["loss_history"] = hist;
  return j.dump(1) + "\n";
}

TrainedModel model_from_text(std::string_view text, std::string_view source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(source) + ": not a model file: " + e.what());
  }
  try {
    if (!j.is_object()) throw FormatError("top level must be an object");
    const json& fmt = field(j, "format");
    if (!fmt.is_string() || fmt.get<std::string>() != kFormatName) throw FormatError("unrecognized format tag");
    const json& ver = field(j, "version");
    if (!ver.is_number_integer() || ver.get<int>() != kModelFormatVersion) {
      throw FormatError("unsupported model version " + ver.dump() + ", expected " +
                        std::to_string(kModelFormatVersion));
    }
    TrainedModel m;
    m.kind = parse_model_kind(field(j, "kind").get<std::string>());
    m.head = parse_head(field(j, "head").get<std::string>());
    m.feature_labels = strings_from(field(j, "feature_labels"), "feature_labels");
    m.class_names = strings_from(field(j, "class_names"), "class_names");
    const auto d = static_cast<Eigen::Index>(m.feature_labels.size());
    const json& st = field(j, "standardizer");
    m.standardizer.mean = vector_from(field(st, "mean"), "standardizer.mean", d);
    m.standardizer.scale = vector_from(field(st, "scale"), "standardizer.scale", d);
    const json& tg = field(j, "target");
    m.target_mean = number_from(field(tg, "mean"), "target.mean");
    m.target_scale = number_from(field(tg, "scale"), "target.scale");
    const json& layers = field(j, "layers");
    if (!layers.is_array() || layers.empty()) throw FormatError("model has no layers");
    Eigen::Index in = d;
    for (const auto& lj : layers) {
      const auto rows = field(lj, "rows").get<Eigen::Index>();
      const auto cols = field(lj, "cols").get<Eigen::Index>();
      if (rows < 1 || cols != in) {
        throw FormatError("layer shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " does not follow input width " + std::to_string(in));
      }
      const Eigen::VectorXd flat = vector_from(field(lj, "weights"), "weights", rows * cols);
      DenseLayer layer;
      layer.weights =
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), rows, cols);
      layer.bias = vector_from(field(lj, "bias"), "bias", rows);
      m.layers.push_back(std::move(layer));
      in = rows;
    }
    if (m.kind != ModelKind::kMlp && m.layers.size() != 1) throw FormatError("linear model must have one layer");
    const json& hist = field(j, "loss_history");
    const Eigen::VectorXd h = vector_from(hist, "loss_history");
    m.loss_history.assign(h.data(), h.data() + h.size());
    return m;
  } catch (const FormatError& e) {
    throw FormatError(std::string(source) + ": " + e.what());
  } catch (const ParameterError& e) {
    throw FormatError(std::string(source) + ": " + e.what());
  } catch (const json::exception& e) {
    throw FormatError(std::string(source) + ": malformed model field: " + e.what());
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << model_to_text(model);
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_text(ss.str(), path.string());
}

}  // namespace voxpipe::models
