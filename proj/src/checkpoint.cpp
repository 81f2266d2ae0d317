#include "mnode/checkpoint.hpp"

#include "mnode/error.hpp"

#include <fstream>

namespace mnode {

nlohmann::json params_to_json(const ParamStore& params) {
  nlohmann::json list = nlohmann::json::array();
  const TensorDict& values = params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Mat& t = values[i];
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(t.size()));
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
    list.push_back({{"name", values.names()[i]}, {"shape", {t.rows(), t.cols()}}, {"data", data}});
  }
  return {{"format", "mnode-checkpoint"}, {"version", 1}, {"adam_step", params.step()},
          {"params", list}};
}

ParamStore params_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "mnode-checkpoint" || doc.value("version", 0) != 1)
    throw FormatError("not an mnode-checkpoint v1 document", 0);
  ParamStore params;
  for (const auto& entry : doc.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Index>(data.size()))
      throw FormatError("checkpoint tensor '" + name + "' has inconsistent shape", 0);
    Mat t(shape[0], shape[1]);
    std::size_t k = 0;
    for (Index r = 0; r < shape[0]; ++r)
      for (Index c = 0; c < shape[1]; ++c) t(r, c) = data[k++];
    params.add(name, std::move(t));
  }
  params.set_step(doc.value("adam_step", std::int64_t{0}));
  return params;
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << params_to_json(params).dump() << '\n';
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint JSON: ") + e.what(), e.byte);
  }
  return params_from_json(doc);
}

}  // namespace mnode
