#include "nilel/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "nilel/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace nilel {

namespace {

constexpr char kMagic[8] = {'N', 'I', 'L', 'E', 'L', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint truncated");
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError("checkpoint truncated");
  return s;
}

}  // namespace

void checkpoint_write(const std::filesystem::path& path,
                      const nlohmann::json& header,
                      const std::vector<ParamRef>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string hdr = header.dump();
  write_pod<std::uint64_t>(out, hdr.size());
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const ParamRef& t : tensors) {
    write_string(out, t.name);
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols));
    // Tensors live column-major in memory; the file is row-major.
    for (long r = 0; r < t.rows; ++r) {
      for (long c = 0; c < t.cols; ++c) {
        write_pod<double>(out, t.value[c * t.rows + r]);
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

LoadedCheckpoint checkpoint_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not a checkpoint file");
  }
  LoadedCheckpoint ckpt;
  const auto hdr_len = read_pod<std::uint64_t>(in);
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (!in) throw ParseError("checkpoint truncated");
  try {
    ckpt.header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    LoadedTensor t;
    t.rows = static_cast<long>(read_pod<std::uint64_t>(in));
    t.cols = static_cast<long>(read_pod<std::uint64_t>(in));
    t.values.resize(static_cast<std::size_t>(t.rows * t.cols));
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint truncated in tensor " + name);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

void fill_params(const LoadedCheckpoint& ckpt,
                 const std::vector<ParamRef>& refs) {
  for (const ParamRef& ref : refs) {
    auto it = ckpt.tensors.find(ref.name);
    if (it == ckpt.tensors.end()) {
      throw ParseError("checkpoint is missing tensor " + ref.name);
    }
    const LoadedTensor& t = it->second;
    if (t.rows != ref.rows || t.cols != ref.cols) {
      throw ParseError("tensor " + ref.name + " has shape " +
                       std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                       ", expected " + std::to_string(ref.rows) + "x" +
                       std::to_string(ref.cols));
    }
    for (long r = 0; r < ref.rows; ++r) {
      for (long c = 0; c < ref.cols; ++c) {
        ref.value[c * ref.rows + r] =
            t.values[static_cast<std::size_t>(r * ref.cols + c)];
      }
    }
  }
}

nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return nlohmann::json{{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
                        {"layers", c.layers},         {"heads", c.heads},
                        {"ffn_dim", c.ffn_dim},       {"max_len", c.max_len},
                        {"seed", c.seed}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_encoder(const EncoderModel& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = "encoder";
  header["config"] = encoder_config_to_json(model.config);
  // param_refs wants a mutable model; values are only read here.
  auto& m = const_cast<EncoderModel&>(model);
  checkpoint_write(path, header, param_refs(m, nullptr));
}

EncoderModel load_encoder(const std::filesystem::path& path) {
  const LoadedCheckpoint ckpt = checkpoint_read(path);
  if (ckpt.header.value("kind", "") != "encoder") {
    throw ParseError(path.string() + " is not an encoder checkpoint");
  }
  EncoderModel model = init_encoder(encoder_config_from_json(ckpt.header.at("config")));
  fill_params(ckpt, param_refs(model, nullptr));
  return model;
}

}  // namespace nilel
