#include "desta/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "desta/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace desta {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'S', 'T', 'A', 'C', 'K', 'P', '1'};

json config_to_json(const AdapterConfig& c) {
  return json{{"n_queries", c.n_queries},
              {"n_blocks", c.n_blocks},
              {"d_model", c.d_model},
              {"d_enc", c.d_enc},
              {"d_llm", c.d_llm},
              {"n_enc_layers", c.n_enc_layers},
              {"n_heads", c.n_heads},
              {"ffn_mult", c.ffn_mult},
              {"use_input_map", c.use_input_map},
              {"use_output_proj", c.use_output_proj}};
}

AdapterConfig config_from_json(const json& j) {
  AdapterConfig c;
  c.n_queries = j.at("n_queries").get<size_t>();
  c.n_blocks = j.at("n_blocks").get<size_t>();
  c.d_model = j.at("d_model").get<size_t>();
  c.d_enc = j.at("d_enc").get<size_t>();
  c.d_llm = j.at("d_llm").get<size_t>();
  c.n_enc_layers = j.at("n_enc_layers").get<size_t>();
  c.n_heads = j.at("n_heads").get<size_t>();
  c.ffn_mult = j.at("ffn_mult").get<size_t>();
  c.use_input_map = j.value("use_input_map", true);
  c.use_output_proj = j.value("use_output_proj", true);
  return c;
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("truncated checkpoint");
  return v;
}

void write_tensor(std::ofstream& out, const std::string& name,
                  const std::vector<size_t>& shape, const double* data,
                  size_t n) {
  write_pod<uint32_t>(out, uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_pod<uint32_t>(out, uint32_t(shape.size()));
  for (size_t d : shape) write_pod<uint64_t>(out, uint64_t(d));
  out.write(reinterpret_cast<const char*>(data), std::streamsize(n * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const AdapterConfig& config,
                     const AdapterParams& params,
                     const std::map<std::string, std::vector<double>>& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);

  std::string header = config_to_json(config).dump();
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, uint32_t(header.size()));
  out.write(header.data(), std::streamsize(header.size()));

  auto refs = tensor_refs(const_cast<AdapterParams&>(params));
  write_pod<uint32_t>(out, uint32_t(refs.size() + extra.size()));
  for (const auto& r : refs) write_tensor(out, r.name, r.shape, r.data, r.size);
  for (const auto& [name, data] : extra)
    write_tensor(out, name, {data.size()}, data.data(), data.size());
  if (!out) throw ValidationError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a checkpoint file: " + path);

  uint32_t header_len = read_pod<uint32_t>(in);
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw ValidationError("truncated checkpoint header");

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(json::parse(header));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad checkpoint header: ") + e.what());
  }
  ckpt.params = make_adapter_params(ckpt.config);

  auto refs = tensor_refs(ckpt.params);
  std::map<std::string, TensorRef*> by_name;
  for (auto& r : refs) by_name[r.name] = &r;

  uint32_t n_tensors = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    uint32_t name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t ndims = read_pod<uint32_t>(in);
    size_t count = 1;
    for (uint32_t d = 0; d < ndims; ++d) count *= size_t(read_pod<uint64_t>(in));

    auto it = by_name.find(name);
    if (it != by_name.end()) {
      if (it->second->size != count)
        throw ValidationError("checkpoint tensor " + name + " has " +
                              std::to_string(count) + " values, expected " +
                              std::to_string(it->second->size));
      in.read(reinterpret_cast<char*>(it->second->data),
              std::streamsize(count * sizeof(double)));
    } else {
      std::vector<double> data(count);
      in.read(reinterpret_cast<char*>(data.data()),
              std::streamsize(count * sizeof(double)));
      ckpt.extra.emplace(name, std::move(data));
    }
    if (!in) throw ValidationError("truncated checkpoint tensor: " + name);
  }
  return ckpt;
}

}  // namespace desta
