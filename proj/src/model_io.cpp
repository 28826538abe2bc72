#include <stdexcept>

#include "json.hpp"
#include "kanlab/models.hpp"

namespace kanlab::models {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "kanlab-model";
constexpr int kVersion = 1;

json header(const char* kind, const std::vector<int>& shape) {
  return json{{"format", kFormat}, {"version", kVersion}, {"kind", kind}, {"shape", shape}};
}

json parse_checked(const std::string& text, const char* kind) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model file: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kFormat)
    throw std::invalid_argument("model file: not a kanlab-model document");
  if (doc.value("version", 0) != kVersion)
    throw std::invalid_argument("model file: unsupported version");
  if (kind && doc.value("kind", "") != kind)
    throw std::invalid_argument(std::string("model file: expected kind '") + kind + "'");
  return doc;
}

}  // namespace

std::string to_json(const KanNetwork& net) {
  validate(net);
  json doc = header("kan", net.shape);
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json acts = json::array();
    for (int o = 0; o < layer.out; ++o)
      for (int i = 0; i < layer.in; ++i) {
        const auto& act = layer.at(o, i);
        const auto& g = act.grid;
        acts.push_back({{"in", i},
                        {"out", o},
                        {"grid",
                         {{"a", g.a()},
                          {"b", g.b()},
                          {"intervals", g.intervals()},
                          {"degree", g.degree()},
                          {"knots", g.knots()}}},
                        {"coefficients", act.coefficients},
                        {"w_b", act.w_b}});
      }
    layers.push_back({{"activations", std::move(acts)}});
  }
  doc["layers"] = std::move(layers);
  return doc.dump(1);
}

std::string to_json(const MlpNetwork& net) {
  validate(net);
  json doc = header("mlp", net.shape);
  doc["power"] = net.power;
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json rows = json::array();
    for (int o = 0; o < layer.out; ++o)
      rows.push_back(std::vector<double>(layer.weight.begin() + static_cast<std::ptrdiff_t>(o) * layer.in,
                                         layer.weight.begin() + static_cast<std::ptrdiff_t>(o + 1) * layer.in));
    layers.push_back({{"weight", std::move(rows)}, {"bias", layer.bias}});
  }
  doc["layers"] = std::move(layers);
  return doc.dump(1);
}

std::string model_kind(const std::string& text) {
  return parse_checked(text, nullptr).value("kind", "");
}

KanNetwork kan_from_json(const std::string& text) {
  const json doc = parse_checked(text, "kan");
  try {
    KanNetwork net;
    net.shape = doc.at("shape").get<std::vector<int>>();
    const auto& layers = doc.at("layers");
    if (layers.size() + 1 != net.shape.size())
      throw std::invalid_argument("model file: layer count does not match shape");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      KanLayer layer{net.shape[l], net.shape[l + 1], {}};
      const auto& acts = layers[l].at("activations");
      if (acts.size() != static_cast<std::size_t>(layer.in) * layer.out)
        throw std::invalid_argument("model file: wrong activation count in layer " + std::to_string(l));
      layer.acts.reserve(acts.size());
      for (std::size_t a = 0; a < acts.size(); ++a) {
        const auto& j = acts[a];
        const int o = j.at("out").get<int>(), i = j.at("in").get<int>();
        if (static_cast<std::size_t>(o) * layer.in + i != a)
          throw std::invalid_argument("model file: activations out of order in layer " + std::to_string(l));
        const auto& g = j.at("grid");
        splines::Grid grid(g.at("a").get<double>(), g.at("b").get<double>(),
                           g.at("intervals").get<int>(), g.at("degree").get<int>());
        if (g.at("knots").get<std::vector<double>>() != grid.knots())
          throw std::invalid_argument("model file: stored knots do not match the grid parameters");
        layer.acts.push_back({grid, j.at("coefficients").get<std::vector<double>>(),
                              j.at("w_b").get<double>()});
      }
      net.layers.push_back(std::move(layer));
    }
    validate(net);
    return net;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model file: ") + e.what());
  }
}

MlpNetwork mlp_from_json(const std::string& text) {
  const json doc = parse_checked(text, "mlp");
  try {
    MlpNetwork net;
    net.shape = doc.at("shape").get<std::vector<int>>();
    net.power = doc.at("power").get<int>();
    const auto& layers = doc.at("layers");
    if (layers.size() + 1 != net.shape.size())
      throw std::invalid_argument("model file: layer count does not match shape");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      MlpLayer layer{net.shape[l], net.shape[l + 1], {}, {}};
      for (const auto& row : layers[l].at("weight")) {
        const auto r = row.get<std::vector<double>>();
        layer.weight.insert(layer.weight.end(), r.begin(), r.end());
      }
      layer.bias = layers[l].at("bias").get<std::vector<double>>();
      net.layers.push_back(std::move(layer));
    }
    validate(net);
    return net;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model file: ") + e.what());
  }
}

}  // namespace kanlab::models
