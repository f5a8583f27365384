// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/nn/weights_io.hpp"

#include <fstream>
#include <map>

#include "stackdedup/binary_io.hpp"

namespace stackdedup::nn {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'D', 'W'};

WeightHeader read_header(io::BinaryReader& in) {
  char magic[4];
  in.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic))
    throw ArtifactError(in.what() + ": not a weight file");
  const std::uint32_t version = in.u32();
  if (version != kWeightFormatVersion)
    throw ArtifactError(in.what() + ": unsupported weight format version " +
                        std::to_string(version));
  WeightHeader header;
  try {
    const auto j = nlohmann::json::parse(in.string());
    header.version = version;
    header.model_kind = j.at("model_kind").get<std::string>();
    header.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(in.what() + ": bad header: " + e.what());
  }
  return header;
}

}  // namespace

template <class Real>
void save_weights(const std::filesystem::path& path, const WeightHeader& header,
                  const ParameterList<Real>& params) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw ArtifactError("cannot write " + path.string());
  io::BinaryWriter out(file);
  out.bytes(kMagic, 4);
  out.u32(kWeightFormatVersion);
  nlohmann::json j;
  j["version"] = kWeightFormatVersion;
  j["model_kind"] = header.model_kind;
  j["hyperparameters"] = header.hyperparameters;
  out.string(j.dump());
  out.u32(static_cast<std::uint32_t>(params.size()));
  std::vector<float> buffer;
  for (const auto* p : params) {
    out.string(p->name);
    out.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) out.u64(d);
    buffer.assign(p->value.data().begin(), p->value.data().end());
    out.f32s(buffer);
  }
  if (!out.ok()) throw ArtifactError("failed writing " + path.string());
}

WeightHeader read_weight_header(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ArtifactError("cannot open " + path.string());
  io::BinaryReader in(file, path.string());
  return read_header(in);
}

template <class Real>
WeightHeader load_weights(const std::filesystem::path& path,
                          const std::string& expected_kind,
                          const ParameterList<Real>& params) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ArtifactError("cannot open " + path.string());
  io::BinaryReader in(file, path.string());
  WeightHeader header = read_header(in);
  if (header.model_kind != expected_kind)
    throw ArtifactError(path.string() + ": model kind '" + header.model_kind +
                        "', expected '" + expected_kind + "'");

  std::map<std::string, Parameter<Real>*> by_name;
  for (auto* p : params) by_name[p->name] = p;

  const std::uint32_t count = in.u32();
  std::size_t seen = 0;
  std::vector<float> buffer;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.string(4096);
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw ArtifactError(path.string() + ": bad tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    buffer.resize(shape_size(shape));
    in.f32s(buffer);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ArtifactError(path.string() + ": unexpected tensor '" + name + "'");
    if (it->second->value.shape() != shape)
      throw ArtifactError(path.string() + ": tensor '" + name + "' has shape " +
                          shape_string(shape) + ", model expects " +
                          shape_string(it->second->value.shape()));
    std::copy(buffer.begin(), buffer.end(), it->second->value.raw());
    ++seen;
  }
  if (seen != params.size())
    throw ArtifactError(path.string() + ": missing tensors (" +
                        std::to_string(seen) + " of " +
                        std::to_string(params.size()) + ")");
  return header;
}

template void save_weights<float>(const std::filesystem::path&,
                                  const WeightHeader&,
                                  const ParameterList<float>&);
template void save_weights<double>(const std::filesystem::path&,
                                   const WeightHeader&,
                                   const ParameterList<double>&);
template WeightHeader load_weights<float>(const std::filesystem::path&,
                                          const std::string&,
                                          const ParameterList<float>&);
template WeightHeader load_weights<double>(const std::filesystem::path&,
                                           const std::string&,
                                           const ParameterList<double>&);

}  // namespace stackdedup::nn
