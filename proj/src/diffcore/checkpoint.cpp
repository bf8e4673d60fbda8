#include "rgc/diffcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rgc/common/error.hpp"

namespace rgc::diffcore {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  bool at_end() const { return pos == bytes.size(); }
  void need(std::size_t n) const {
    require(bytes.size() - pos >= n, ErrorKind::kIo, "truncated checkpoint at byte " + std::to_string(pos));
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::string out(kCheckpointMagic);
  for (const auto& e : entries) {
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.tensor.rank());
    for (std::size_t d : e.tensor.shape()) put_u64(out, d);
    out.append(reinterpret_cast<const char*>(e.tensor.raw()), e.tensor.numel() * sizeof(double));
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes) {
  Reader in{bytes};
  require(in.take(kCheckpointMagic.size()) == kCheckpointMagic, ErrorKind::kIo, "bad checkpoint magic");
  std::vector<CheckpointEntry> entries;
  while (!in.at_end()) {
    CheckpointEntry e;
    const std::uint64_t name_len = in.u64();
    e.name = std::string(in.take(name_len));
    const std::uint64_t rank = in.u64();
    require(rank <= 8, ErrorKind::kIo, "implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    const std::size_t n = shape_numel(shape);
    require(n <= (bytes.size() - in.pos) / sizeof(double), ErrorKind::kIo,
            "truncated payload for entry '" + e.name + "'");
    std::vector<double> data(n);
    auto payload = in.take(n * sizeof(double));
    std::memcpy(data.data(), payload.data(), payload.size());
    e.tensor = Tensor(std::move(shape), std::move(data));
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_checkpoint(entries);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

CheckpointEntry text_entry(const std::string& text) {
  return CheckpointEntry{text.starts_with('#') ? text : "#" + text, Tensor({0})};
}

bool is_text_entry(const CheckpointEntry& e) { return e.name.starts_with('#') && e.tensor.numel() == 0; }

std::string find_text_entry(const std::vector<CheckpointEntry>& entries, std::string_view prefix) {
  for (const auto& e : entries)
    if (is_text_entry(e) && e.name.starts_with(prefix)) return e.name;
  return {};
}

std::vector<CheckpointEntry> params_to_entries(const ParamStore& params, const std::vector<std::string>& text) {
  std::vector<CheckpointEntry> entries;
  for (const auto& t : text) entries.push_back(text_entry(t));
  for (const auto& p : params) entries.push_back({p.name, p.value});
  return entries;
}

void load_params(const std::vector<CheckpointEntry>& entries, ParamStore& params) {
  for (auto& p : params) {
    const CheckpointEntry* found = nullptr;
    for (const auto& e : entries)
      if (e.name == p.name) found = &e;
    require(found != nullptr, ErrorKind::kIo, "checkpoint lacks parameter '" + p.name + "'");
    require(found->tensor.shape() == p.value.shape(), ErrorKind::kDimension,
            "checkpoint tensor '" + p.name + "' has shape " + shape_string(found->tensor.shape()) +
                ", model expects " + shape_string(p.value.shape()));
    p.value = found->tensor;
    p.grad = Tensor::zeros_like(p.value);
  }
}

std::size_t tensor_element_count(const std::vector<CheckpointEntry>& entries) {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (!is_text_entry(e)) n += e.tensor.numel();
  return n;
}

}  // namespace rgc::diffcore
