#include "btmpg/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace btmpg {

namespace {

constexpr char kMagic[9] = "BTMPGPB1";

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_param_blob(const std::string& path,
                     const std::vector<const ad::ParamSet*>& sets) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, 8);
  std::uint64_t count = 0;
  for (const auto* s : sets) count += s->count();
  write_u64(os, count);
  for (const auto* s : sets) {
    for (const auto& up : s->all()) {
      write_u32(os, static_cast<std::uint32_t>(up->name.size()));
      os.write(up->name.data(), up->name.size());
      write_u32(os, static_cast<std::uint32_t>(up->rows()));
      write_u32(os, static_cast<std::uint32_t>(up->cols()));
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf =
          up->value;
      os.write(reinterpret_cast<const char*>(buf.data()),
               sizeof(double) * buf.size());
    }
  }
  if (!os) throw std::runtime_error("checkpoint: short write to " + path);
}

void load_param_blob(const std::string& path, const std::vector<ad::ParamSet*>& sets) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint64_t count = read_u64(is);
  std::uint64_t expected = 0;
  for (const auto* s : sets) expected += s->count();
  if (count != expected)
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  for (auto* s : sets) {
    for (const auto& up : s->all()) {
      const std::uint32_t name_len = read_u32(is);
      std::string name(name_len, '\0');
      is.read(name.data(), name_len);
      const std::uint32_t rows = read_u32(is);
      const std::uint32_t cols = read_u32(is);
      if (!is) throw std::runtime_error("checkpoint: truncated blob " + path);
      if (name != up->name)
        throw std::runtime_error("checkpoint: expected parameter " + up->name +
                                 ", found " + name);
      if (static_cast<int>(rows) != up->rows() || static_cast<int>(cols) != up->cols())
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(rows,
                                                                                 cols);
      is.read(reinterpret_cast<char*>(buf.data()), sizeof(double) * rows * cols);
      if (!is) throw std::runtime_error("checkpoint: truncated blob " + path);
      up->value = buf;
    }
  }
}

void save_meta_json(const std::string& path, const CheckpointMeta& meta) {
  nlohmann::json j;
  j["config"] = meta.config;
  j["vocab_hash"] = meta.vocab_hash;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  j["final"] = meta.final_epoch;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os << j.dump(2) << '\n';
}

CheckpointMeta load_meta_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad JSON in " + path + ": " + e.what());
  }
  CheckpointMeta meta;
  if (j.contains("config"))
    meta.config = j["config"].get<std::map<std::string, std::string>>();
  meta.vocab_hash = j.value("vocab_hash", "");
  meta.epoch = j.value("epoch", 0);
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.final_epoch = j.value("final", false);
  return meta;
}

}  // namespace btmpg
