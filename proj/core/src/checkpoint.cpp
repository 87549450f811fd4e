#include "mfd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json_io.hpp"

namespace mfd {

namespace {

constexpr char kMagic[8] = {'M', 'F', 'D', 'C', 'K', 'P', 'T', '1'};

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is, const std::string& path) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw CheckpointError("truncated checkpoint " + path);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const VitModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));

  const std::string cfg = detail::vit_config_to_json(model.config()).dump();
  write_u32(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  const auto params = model.named_parameters();
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) {
      const int64_t dim = t.dim(i);
      os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

VitModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);

  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path + " is not a model checkpoint");
  }

  const uint32_t cfg_len = read_u32(is, path);
  std::string cfg_str(cfg_len, '\0');
  if (!is.read(cfg_str.data(), cfg_len)) throw CheckpointError("truncated checkpoint " + path);
  VitConfig cfg;
  try {
    cfg = detail::vit_config_from_json(detail::json::parse(cfg_str), path);
  } catch (const detail::json::exception& e) {
    throw CheckpointError(path + ": bad embedded config: " + e.what());
  }

  VitModel model(cfg);
  auto params = model.named_parameters();
  const uint32_t count = read_u32(is, path);
  if (count != params.size()) {
    throw CheckpointError(path + ": expected " + std::to_string(params.size()) +
                          " tensors, found " + std::to_string(count));
  }
  for (auto& [name, t] : params) {
    const uint32_t name_len = read_u32(is, path);
    std::string stored(name_len, '\0');
    if (!is.read(stored.data(), name_len)) throw CheckpointError("truncated checkpoint " + path);
    if (stored != name) {
      throw CheckpointError(path + ": tensor \"" + stored + "\" where \"" + name +
                            "\" was expected");
    }
    const uint32_t rank = read_u32(is, path);
    Shape shape(rank);
    for (auto& dim : shape) {
      if (!is.read(reinterpret_cast<char*>(&dim), sizeof(dim))) {
        throw CheckpointError("truncated checkpoint " + path);
      }
    }
    if (shape != t.shape()) {
      throw CheckpointError(path + ": tensor \"" + name + "\" has shape " +
                            shape_str(shape) + ", expected " + shape_str(t.shape()));
    }
    Tensor dst = t;
    if (!is.read(reinterpret_cast<char*>(dst.mutable_data().data()),
                 static_cast<std::streamsize>(dst.numel() * sizeof(double)))) {
      throw CheckpointError("truncated checkpoint " + path);
    }
    if (!all_finite(dst.data())) {
      throw NumericError(path + ": non-finite values in tensor \"" + name + "\"");
    }
  }
  return model;
}

VitModel load_checkpoint(const std::string& path, const VitConfig& expected) {
  VitModel model = load_checkpoint(path);
  if (!model.config().same_architecture(expected)) {
    throw ConfigError("checkpoint " + path + " architecture does not match the " +
                      "configured model");
  }
  return model;
}

}  // namespace mfd
