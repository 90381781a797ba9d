#include "hhkg/checkpoint.hpp"

#include <fstream>
#include <set>

#include "hhkg/binary_io.hpp"
#include "hhkg/ingest.hpp"

namespace hhkg {

namespace {
constexpr std::uint32_t kVersion = 1;
}

template <typename T>
Checkpoint make_checkpoint(const ParameterStore<T>& store, const std::string& config_echo) {
  Checkpoint c;
  c.config_echo = config_echo;
  for (const auto& p : store.all()) c.tensors.emplace_back(p.name, p.value.template cast<double>());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  binary::write_magic(out, "HHKC");
  binary::write_u32(out, kVersion);
  binary::write_string(out, ckpt.config_echo);
  binary::write_u64(out, ckpt.tensors.size());
  for (const auto& [name, m] : ckpt.tensors) {
    binary::write_string(out, name);
    write_matrix_binary(out, m);
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string source = path.string();
  binary::expect_magic(in, "HHKC", source);
  const auto version = binary::read_u32(in, "checkpoint version");
  if (version != kVersion) throw DataError(source + ": unsupported checkpoint version");
  Checkpoint c;
  c.config_echo = binary::read_string(in, "config echo");
  const auto count = binary::read_u64(in, "tensor count");
  if (count > 1'000'000) throw DataError(source + ": implausible tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = binary::read_string(in, "tensor name");
    c.tensors.emplace_back(std::move(name), read_matrix_binary(in, source));
  }
  return c;
}

template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, ParameterStore<T>& store) {
  std::set<std::string> seen;
  for (const auto& [name, m] : ckpt.tensors) {
    Parameter<T>* p = store.find(name);
    if (!p) throw DataError("checkpoint tensor '" + name + "' has no matching parameter");
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + std::to_string(m.rows()) +
                      "x" + std::to_string(m.cols()) + ", model expects " +
                      std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    }
    p->value = m.template cast<T>();
    seen.insert(name);
  }
  for (const auto& p : store.all()) {
    if (!seen.count(p.name)) throw DataError("checkpoint is missing tensor '" + p.name + "'");
  }
}

template Checkpoint make_checkpoint<float>(const ParameterStore<float>&, const std::string&);
template Checkpoint make_checkpoint<double>(const ParameterStore<double>&, const std::string&);
template void apply_checkpoint<float>(const Checkpoint&, ParameterStore<float>&);
template void apply_checkpoint<double>(const Checkpoint&, ParameterStore<double>&);

}  // namespace hhkg
