#include <cstring>
#include <fstream>
#include <json.hpp>
#include <string>

#include "texsr/error.hpp"
#include "texsr/io.hpp"
#include "texsr/model.hpp"

namespace texsr {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'T', 'X', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::truncated_payload, "checkpoint header cut short");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

const char* activation_name(Activation a) { return a == Activation::rectifier ? "rectifier" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "rectifier") return Activation::rectifier;
  if (s == "identity") return Activation::identity;
  throw Error(Errc::malformed_header, "unknown activation '" + s + "'");
}

json architecture(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"in", l.in_channels},
                      {"out", l.out_channels},
                      {"kernel", l.kernel},
                      {"activation", activation_name(l.activation)}});
  }
  return {{"layers", layers},
          {"concat_after", net.concat_after ? json(*net.concat_after) : json(nullptr)},
          {"concat_channels", net.concat_channels},
          {"residual", net.residual}};
}

Network network_from(const json& arch) {
  Network net;
  for (const auto& l : arch.at("layers")) {
    net.layers.emplace_back(l.at("in").get<int>(), l.at("out").get<int>(), l.at("kernel").get<int>(),
                            parse_activation(l.at("activation").get<std::string>()));
  }
  if (!arch.at("concat_after").is_null()) net.concat_after = arch.at("concat_after").get<int>();
  net.concat_channels = arch.at("concat_channels").get<int>();
  net.residual = arch.at("residual").get<bool>();
  net.validate();
  return net;
}

void read_into(std::istream& is, std::vector<double>& dst, const std::string& name) {
  Tensor t = read_tensor(is);
  if (t.values.size() != dst.size()) {
    throw Error(Errc::shape_mismatch, "tensor " + name + " holds " + std::to_string(t.values.size()) +
                                          " values, expected " + std::to_string(dst.size()));
  }
  dst = std::move(t.values);
}

Tensor flat(const std::vector<double>& v) {
  return Tensor{{static_cast<std::uint32_t>(v.size())}, v};
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.net.validate();
  const auto& net = ckpt.net;
  if (ckpt.adam.m.size() != 2 * net.layers.size() || ckpt.adam.v.size() != ckpt.adam.m.size()) {
    throw Error(Errc::shape_mismatch, "optimizer state does not match the network");
  }
  json tensors = json::array();
  for (std::size_t n = 0; n < net.layers.size(); ++n) {
    tensors.push_back("layer" + std::to_string(n) + ".weight");
    tensors.push_back("layer" + std::to_string(n) + ".bias");
  }
  for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) tensors.push_back("adam.m." + std::to_string(i));
  for (std::size_t i = 0; i < ckpt.adam.v.size(); ++i) tensors.push_back("adam.v." + std::to_string(i));

  const json manifest = {
      {"format", "texsr-checkpoint"},
      {"step", ckpt.step},
      {"architecture", architecture(net)},
      {"adam",
       {{"lr", ckpt.adam.lr}, {"beta1", ckpt.adam.beta1}, {"beta2", ckpt.adam.beta2}, {"eps", ckpt.adam.eps},
        {"t", ckpt.adam.t}}},
      {"tensors", tensors},
      {"metadata", json::parse(ckpt.metadata)},
  };
  const std::string text = manifest.dump(1);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_failure, "cannot write " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& l : net.layers) {
    write_tensor(os, Tensor{{static_cast<std::uint32_t>(l.out_channels), static_cast<std::uint32_t>(l.in_channels),
                             static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.kernel)},
                            l.weight},
                 TensorPrecision::f64);
    write_tensor(os, flat(l.bias), TensorPrecision::f64);
  }
  for (const auto& m : ckpt.adam.m) write_tensor(os, flat(m), TensorPrecision::f64);
  for (const auto& v : ckpt.adam.v) write_tensor(os, flat(v), TensorPrecision::f64);
  if (!os.flush()) throw Error(Errc::io_failure, "write to " + path.string() + " failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io_failure, "cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) throw Error(Errc::truncated_payload, "checkpoint header cut short");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(Errc::malformed_header, path.string() + " is not a checkpoint");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw Error(Errc::version_mismatch, "checkpoint version " + std::to_string(version) + ", reader supports " +
                                            std::to_string(kVersion));
  }
  const std::uint32_t length = get_u32(is);
  std::string text(length, '\0');
  if (!is.read(text.data(), length)) throw Error(Errc::truncated_payload, "checkpoint manifest cut short");

  json manifest;
  Checkpoint ckpt;
  try {
    manifest = json::parse(text);
    ckpt.net = network_from(manifest.at("architecture"));
    ckpt.step = manifest.at("step").get<std::uint64_t>();
    const auto& a = manifest.at("adam");
    ckpt.adam = make_adam(ckpt.net, a.at("lr").get<double>());
    ckpt.adam.beta1 = a.at("beta1").get<double>();
    ckpt.adam.beta2 = a.at("beta2").get<double>();
    ckpt.adam.eps = a.at("eps").get<double>();
    ckpt.adam.t = a.at("t").get<std::uint64_t>();
    ckpt.metadata = manifest.at("metadata").dump();
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, std::string("checkpoint manifest: ") + e.what());
  }

  for (std::size_t n = 0; n < ckpt.net.layers.size(); ++n) {
    auto& l = ckpt.net.layers[n];
    read_into(is, l.weight, "layer" + std::to_string(n) + ".weight");
    read_into(is, l.bias, "layer" + std::to_string(n) + ".bias");
  }
  for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) read_into(is, ckpt.adam.m[i], "adam.m." + std::to_string(i));
  for (std::size_t i = 0; i < ckpt.adam.v.size(); ++i) read_into(is, ckpt.adam.v[i], "adam.v." + std::to_string(i));
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Network& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  const auto& got = ckpt.net;
  bool same = got.layers.size() == expected.layers.size() && got.concat_after == expected.concat_after &&
              got.concat_channels == expected.concat_channels && got.residual == expected.residual;
  for (std::size_t n = 0; same && n < got.layers.size(); ++n) {
    const auto& a = got.layers[n];
    const auto& b = expected.layers[n];
    same = a.in_channels == b.in_channels && a.out_channels == b.out_channels && a.kernel == b.kernel &&
           a.activation == b.activation;
  }
  if (!same) {
    throw Error(Errc::shape_mismatch, path.string() + " holds " + architecture(got).dump() + ", expected " +
                                          architecture(expected).dump());
  }
  return ckpt;
}

} // namespace texsr
