#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rgc/diffcore/params.hpp"
#include "rgc/diffcore/tensor.hpp"

namespace rgc::diffcore {

/// Binary layout (all integers little-endian u64, payload little-endian f64):
///
///   "RGCKPT1\0"
///   repeated until EOF:
///     name_len, name bytes, rank, extents[rank], payload[prod(extents)]
///
/// Text metadata (architecture descriptors, provenance) is stored as entries
/// whose name starts with '#' and whose tensor is empty (rank 1, extent 0).
struct CheckpointEntry {
  std::string name;
  Tensor tensor;
};

inline constexpr std::string_view kCheckpointMagic{"RGCKPT1\0", 8};

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

CheckpointEntry text_entry(const std::string& text);
bool is_text_entry(const CheckpointEntry& e);
/// Text of the first '#'-entry starting with `prefix` (e.g. "#arch "), or "".
std::string find_text_entry(const std::vector<CheckpointEntry>& entries, std::string_view prefix);

/// Parameters in store order, preceded by the given text entries.
std::vector<CheckpointEntry> params_to_entries(const ParamStore& params,
                                               const std::vector<std::string>& text = {});
/// Copies tensors into same-named parameters. Every parameter must be present
/// with a matching shape.
void load_params(const std::vector<CheckpointEntry>& entries, ParamStore& params);
/// Total element count of all non-text tensors.
std::size_t tensor_element_count(const std::vector<CheckpointEntry>& entries);

}  // namespace rgc::diffcore
