#include "uiattr/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace uiattr::nn {
namespace {

constexpr char kMagic[8] = {'U', 'I', 'A', 'T', 'T', 'R', 'N', 'N'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : b_(b) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const unsigned char> bytes(std::uint64_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const std::string& spec_text,
                                             std::span<Tensor* const> tensors) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, spec_text.size());
  out.insert(out.end(), spec_text.begin(), spec_text.end());
  put_u64(out, tensors.size());
  for (const Tensor* t : tensors) {
    put_u64(out, t->size());
    for (double v : t->values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a model checkpoint (bad magic)");
  }
  const std::uint64_t stored = [&] {
    Reader tail(bytes.subspan(bytes.size() - 8));
    return tail.u64();
  }();
  if (fnv1a64(bytes.first(bytes.size() - 8)) != stored) throw CheckpointError("checkpoint checksum mismatch");
  Reader r(bytes.first(bytes.size() - 8));
  r.bytes(sizeof(kMagic));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  auto spec = r.bytes(r.u64());
  ck.spec_text.assign(spec.begin(), spec.end());
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t n = r.u64();
    if (n > (bytes.size() - r.pos()) / 8) throw CheckpointError("checkpoint truncated");
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(r.u64());
    ck.tensors.push_back(std::move(values));
  }
  if (r.pos() != bytes.size() - 8) throw CheckpointError("trailing bytes in checkpoint");
  return ck;
}

void assign_state(const Checkpoint& ck, std::span<Tensor* const> dst) {
  if (ck.tensors.size() != dst.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ck.tensors.size()) +
                          " tensors, model expects " + std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (ck.tensors[i].size() != dst[i]->size()) {
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " has " +
                            std::to_string(ck.tensors[i].size()) + " values, model expects " +
                            std::to_string(dst[i]->size()));
    }
    std::copy(ck.tensors[i].begin(), ck.tensors[i].end(), dst[i]->data());
  }
}

void save_network(Network& net, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint("network\n" + net.spec().to_text(), net.state()));
}

Network load_network(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Checkpoint ck = decode_checkpoint(bytes);
  const std::string prefix = "network\n";
  if (ck.spec_text.rfind(prefix, 0) != 0) throw CheckpointError("checkpoint is not a plain network");
  Network net;
  try {
    net = Network(ArchitectureSpec::parse(ck.spec_text.substr(prefix.size())));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint architecture: ") + e.what());
  }
  assign_state(ck, net.state());
  return net;
}

void save_siamese(SiameseNetwork& net, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(net.spec_text(), net.state()));
}

SiameseNetwork load_siamese(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Checkpoint ck = decode_checkpoint(bytes);
  const std::string& s = ck.spec_text;
  const std::string enc_tag = "siamese\n[encoder]\n";
  const std::string cls_tag = "[classifier]\n";
  const auto mid = s.find(cls_tag);
  if (s.rfind(enc_tag, 0) != 0 || mid == std::string::npos) {
    throw CheckpointError("checkpoint is not a siamese network");
  }
  SiameseNetwork net;
  try {
    net = SiameseNetwork(Network(ArchitectureSpec::parse(s.substr(enc_tag.size(), mid - enc_tag.size()))),
                         Network(ArchitectureSpec::parse(s.substr(mid + cls_tag.size()))));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint architecture: ") + e.what());
  }
  assign_state(ck, net.state());
  return net;
}

}  // namespace uiattr::nn
