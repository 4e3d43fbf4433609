#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resfgb/boosting.hpp"

// Model files are JSON with a fixed key order and every floating-point value
// printed with 17 significant digits, so identical models serialize to
// identical bytes and every value round-trips exactly.

namespace resfgb {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void append_f64(std::string& out, double v) {
  if (!std::isfinite(v)) throw std::runtime_error("model contains a non-finite value");
  out += fmt17(v);
}

inline void append_f64_array(std::string& out, const double* p, std::size_t n) {
  out += '[';
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += ',';
    append_f64(out, p[i]);
  }
  out += ']';
}

inline void append_matrix(std::string& out, const Matrix& m) {
  out += "{\"rows\":" + std::to_string(m.rows()) +
         ",\"cols\":" + std::to_string(m.cols()) + ",\"data\":[";
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      if (i + j > 0) out += ',';
      append_f64(out, m(i, j));
    }
  out += "]}";
}

inline void append_vector(std::string& out, const Vector& v) {
  append_f64_array(out, v.data(), static_cast<std::size_t>(v.size()));
}

inline const char* mode_name(TrainMode m) {
  return m == TrainMode::standard ? "standard" : "sample-split";
}

inline void append_config(std::string& out, const TrainConfig& cfg) {
  out += "{\"layers\":" + std::to_string(cfg.layers) +
         ",\"t0\":" + std::to_string(cfg.t0) + ",\"eta\":";
  append_f64(out, cfg.eta);
  out += ",\"eta2\":";
  if (cfg.eta2)
    append_f64(out, *cfg.eta2);
  else
    out += "null";
  out += ",\"lambda\":";
  append_f64(out, cfg.lambda);
  out += ",\"loss\":\"" + std::string(loss_name(cfg.loss)) + "\"";
  out += ",\"embed\":{\"hidden\":[";
  for (std::size_t i = 0; i < cfg.embed.hidden.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(cfg.embed.hidden[i]);
  }
  out += "],\"epochs\":" + std::to_string(cfg.embed.epochs) +
         ",\"batch\":" + std::to_string(cfg.embed.batch) + ",\"lr\":";
  append_f64(out, cfg.embed.lr);
  out += ",\"momentum\":";
  append_f64(out, cfg.embed.momentum);
  out += ",\"project\":";
  out += cfg.embed.project_unit_ball ? "true" : "false";
  out += "},\"solver\":{\"tol\":";
  append_f64(out, cfg.solver.tol);
  out += ",\"max_epochs\":" + std::to_string(cfg.solver.max_epochs) + ",\"step\":";
  append_f64(out, cfg.solver.step);
  out += ",\"power_iters\":" + std::to_string(cfg.solver.power_iters);
  out += "},\"valid_fraction\":";
  append_f64(out, cfg.valid_fraction);
  out += ",\"patience\":" + std::to_string(cfg.patience) +
         ",\"seed\":" + std::to_string(cfg.seed) + ",\"mode\":\"" +
         mode_name(cfg.mode) + "\",\"standardize\":";
  out += cfg.standardize ? "true" : "false";
  out += '}';
}

inline void append_embedding(std::string& out, const Embedding& e) {
  out += "{\"dims\":[" + std::to_string(e.in_dim());
  for (const auto& w : e.w) out += ',' + std::to_string(w.rows());
  out += "],\"project\":";
  out += e.project_unit_ball ? "true" : "false";
  out += ",\"weights\":[";
  for (std::size_t l = 0; l < e.w.size(); ++l) {
    if (l > 0) out += ',';
    out += '[';
    const Matrix& m = e.w[l];
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        if (i + j > 0) out += ',';
        append_f64(out, m(i, j));
      }
    out += ']';
  }
  out += "],\"biases\":[";
  for (std::size_t l = 0; l < e.b.size(); ++l) {
    if (l > 0) out += ',';
    append_vector(out, e.b[l]);
  }
  out += "]}";
}

}  // namespace detail

inline std::string serialize_model(const ResFGBModel& model) {
  std::string out;
  out.reserve(1 << 16);
  out += "{\"format_version\":" + std::to_string(kModelFormatVersion);
  out += ",\"metadata\":{\"loss\":\"" + std::string(loss_name(model.kind)) +
         "\",\"lambda\":";
  detail::append_f64(out, model.lambda);
  out += ",\"c\":" + std::to_string(model.c) + ",\"label_map\":[";
  for (std::size_t i = 0; i < model.label_map.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(model.label_map[i]);
  }
  out += "],\"seed\":" + std::to_string(model.config.seed) +
         ",\"selected_round\":" + std::to_string(model.selected_round) +
         ",\"best_valid_acc\":";
  if (std::isnan(model.best_valid_acc))
    out += "null";
  else
    detail::append_f64(out, model.best_valid_acc);
  out += ",\"config\":";
  detail::append_config(out, model.config);
  out += "},\"standardizer\":";
  if (model.standardizer) {
    out += "{\"mean\":";
    detail::append_vector(out, model.standardizer->mean);
    out += ",\"scale\":";
    detail::append_vector(out, model.standardizer->scale);
    out += '}';
  } else {
    out += "null";
  }
  out += ",\"layers\":[";
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (i > 0) out += ',';
    out += "{\"eta\":";
    detail::append_f64(out, model.layers[i].eta);
    out += ",\"a\":";
    detail::append_matrix(out, model.layers[i].a);
    out += ",\"embedding\":";
    detail::append_embedding(out, model.layers[i].embed);
    out += '}';
  }
  out += "],\"linear\":";
  detail::append_matrix(out, model.w);
  out += "}\n";
  return out;
}

namespace detail {

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 ||
      data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw std::runtime_error("matrix shape mismatch in model file");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (int i = 0; i < rows; ++i)
    for (int j2 = 0; j2 < cols; ++j2) m(i, j2) = data[k++].get<double>();
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

inline LossKind loss_from_name(const std::string& name) {
  if (name == "logistic") return LossKind::logistic;
  if (name == "smooth-hinge") return LossKind::smooth_hinge;
  throw std::runtime_error("unknown loss name: " + name);
}

inline TrainMode mode_from_name(const std::string& name) {
  if (name == "standard") return TrainMode::standard;
  if (name == "sample-split") return TrainMode::sample_split;
  throw std::runtime_error("unknown mode name: " + name);
}

inline Embedding embedding_from_json(const nlohmann::json& j) {
  Embedding e;
  e.project_unit_ball = j.at("project").get<bool>();
  const auto& dims = j.at("dims");
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (dims.size() < 2 || weights.size() != dims.size() - 1 ||
      biases.size() != weights.size())
    throw std::runtime_error("embedding shape mismatch in model file");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l].get<int>();
    const int out = dims[l + 1].get<int>();
    const auto& wl = weights[l];
    if (in < 1 || out < 1 ||
        wl.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out))
      throw std::runtime_error("embedding shape mismatch in model file");
    Matrix m(out, in);
    std::size_t k = 0;
    for (int i = 0; i < out; ++i)
      for (int j2 = 0; j2 < in; ++j2) m(i, j2) = wl[k++].get<double>();
    e.w.push_back(std::move(m));
    Vector b = vector_from_json(biases[l]);
    if (b.size() != out)
      throw std::runtime_error("embedding shape mismatch in model file");
    e.b.push_back(std::move(b));
  }
  return e;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.layers = j.at("layers").get<int>();
  cfg.t0 = j.at("t0").get<int>();
  cfg.eta = j.at("eta").get<double>();
  if (!j.at("eta2").is_null()) cfg.eta2 = j.at("eta2").get<double>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.loss = loss_from_name(j.at("loss").get<std::string>());
  const auto& je = j.at("embed");
  cfg.embed.hidden.clear();
  for (const auto& h : je.at("hidden")) cfg.embed.hidden.push_back(h.get<int>());
  cfg.embed.epochs = je.at("epochs").get<int>();
  cfg.embed.batch = je.at("batch").get<int>();
  cfg.embed.lr = je.at("lr").get<double>();
  cfg.embed.momentum = je.at("momentum").get<double>();
  cfg.embed.project_unit_ball = je.at("project").get<bool>();
  const auto& js = j.at("solver");
  cfg.solver.tol = js.at("tol").get<double>();
  cfg.solver.max_epochs = js.at("max_epochs").get<int>();
  cfg.solver.step = js.at("step").get<double>();
  cfg.solver.power_iters = js.at("power_iters").get<int>();
  cfg.valid_fraction = j.at("valid_fraction").get<double>();
  cfg.patience = j.at("patience").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.mode = mode_from_name(j.at("mode").get<std::string>());
  cfg.standardize = j.at("standardize").get<bool>();
  return cfg;
}

}  // namespace detail

inline ResFGBModel deserialize_model(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw std::runtime_error("unsupported model format version " +
                               std::to_string(version));
    ResFGBModel model;
    const auto& meta = j.at("metadata");
    model.kind = detail::loss_from_name(meta.at("loss").get<std::string>());
    model.lambda = meta.at("lambda").get<double>();
    model.c = meta.at("c").get<int>();
    for (const auto& l : meta.at("label_map"))
      model.label_map.push_back(l.get<long long>());
    model.selected_round = meta.at("selected_round").get<int>();
    model.best_valid_acc = meta.at("best_valid_acc").is_null()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : meta.at("best_valid_acc").get<double>();
    model.config = detail::config_from_json(meta.at("config"));
    if (!j.at("standardizer").is_null()) {
      Standardizer s;
      s.mean = detail::vector_from_json(j.at("standardizer").at("mean"));
      s.scale = detail::vector_from_json(j.at("standardizer").at("scale"));
      if (s.mean.size() != s.scale.size())
        throw std::runtime_error("standardizer shape mismatch in model file");
      model.standardizer = std::move(s);
    }
    for (const auto& jl : j.at("layers")) {
      ResidualLayer layer;
      layer.eta = jl.at("eta").get<double>();
      layer.a = detail::matrix_from_json(jl.at("a"));
      layer.embed = detail::embedding_from_json(jl.at("embedding"));
      if (layer.embed.in_dim() != layer.a.rows() ||
          layer.embed.out_dim() != layer.a.cols())
        throw std::runtime_error("layer shape mismatch in model file");
      model.layers.push_back(std::move(layer));
    }
    model.w = detail::matrix_from_json(j.at("linear"));
    if (model.w.cols() != model.c ||
        model.label_map.size() != static_cast<std::size_t>(model.c))
      throw std::runtime_error("head shape mismatch in model file");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model parse error: ") + e.what());
  }
}

inline void save_model(const ResFGBModel& model, const std::string& path) {
  std::string text = serialize_model(model);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline ResFGBModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace resfgb
