#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hhkg/parameter.hpp"

namespace hhkg {

// "HHKC", u32 version, echo string (u64 length + bytes), u64 tensor count,
// then per tensor: name string and an HHKF matrix block (f64 entries).
struct Checkpoint {
  std::string config_echo;
  std::vector<std::pair<std::string, Matrix<double>>> tensors;
};

template <typename T>
Checkpoint make_checkpoint(const ParameterStore<T>& store, const std::string& config_echo);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every tensor into the store. Missing, extra or mis-shaped tensors
// are a DataError naming the tensor.
template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, ParameterStore<T>& store);

}  // namespace hhkg
