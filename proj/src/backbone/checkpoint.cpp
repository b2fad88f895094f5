#include "souf/backbone/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace souf::backbone {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'O', 'U', 'F', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw LoadError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const VisionTransformer& model,
                     double source_val_acc, const nlohmann::json& meta) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["encoder"] = model.config().to_json();
  header["source_val_acc"] = source_val_acc;
  header["classifier_frozen"] = model.classifier_frozen();
  header["meta"] = meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const Param* p : model.parameters())
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), std::streamsize(text.size()));
  std::uint64_t checksum = fnv1a(std::string_view{});
  for (const Param* p : model.parameters()) {
    const auto bytes = std::as_bytes(std::span(p->value.data(), std::size_t(p->value.size())));
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    checksum = fnv1a(bytes, checksum);
  }
  write_pod<std::uint64_t>(out, checksum);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, kernels::Exec exec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("checkpoint not found: " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw LoadError("not a checkpoint archive: " + path.string());
  const auto len = read_pod<std::uint32_t>(in, "header length");
  if (len > (1U << 24)) throw LoadError("checkpoint header length implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw LoadError("checkpoint truncated in header");

  nlohmann::json header;
  EncoderConfig cfg;
  try {
    header = nlohmann::json::parse(text);
    if (!header.contains("version")) throw LoadError("checkpoint header has no version field");
    if (header.at("version").get<int>() != kCheckpointVersion)
      throw LoadError("unsupported checkpoint version " + header.at("version").dump());
    cfg = EncoderConfig::from_json(header.at("encoder"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid encoder config in checkpoint: ") + e.what());
  }

  Checkpoint ck;
  ck.model = VisionTransformer(cfg, 0, exec);
  ck.source_val_acc = header.value("source_val_acc", 0.0);
  ck.meta = header.value("meta", nlohmann::json::object());
  const auto& tensors = header.at("tensors");
  auto params = ck.model.parameters();
  if (tensors.size() != params.size()) throw LoadError("checkpoint tensor count mismatch");
  std::uint64_t checksum = fnv1a(std::string_view{});
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    const auto& t = tensors[k];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<Eigen::Index>() != p.value.rows() ||
        t.at("cols").get<Eigen::Index>() != p.value.cols())
      throw LoadError("checkpoint tensor '" + t.at("name").get<std::string>() +
                      "' does not match the encoder layout");
    const auto nbytes = std::streamsize(sizeof(float) * std::size_t(p.value.size()));
    if (!in.read(reinterpret_cast<char*>(p.value.data()), nbytes))
      throw LoadError("checkpoint truncated in tensor " + p.name);
    checksum = fnv1a(std::as_bytes(std::span(p.value.data(), std::size_t(p.value.size()))), checksum);
  }
  if (read_pod<std::uint64_t>(in, "checksum") != checksum)
    throw LoadError("checkpoint payload checksum mismatch");
  if (header.value("classifier_frozen", false)) ck.model.freeze_classifier();
  return ck;
}

double source_init(VisionTransformer& model, const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path, model.exec());
  if (!(ck.model.config() == model.config()))
    throw LoadError("checkpoint encoder config differs from the model");
  model = std::move(ck.model);
  return ck.source_val_acc;
}

}  // namespace souf::backbone
