#include "vea/train/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace vea::train {

namespace {

constexpr char kMagic[4] = {'V', 'E', 'A', 'C'};
constexpr std::uint8_t kF32 = 0x0D;  // IDX code for float32
const std::string kVelocityPrefix = "optim.velocity.";
const std::string kMetaPrefix = "checkpoint.";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::Truncated, std::string("truncated payload reading ") + what +
                                                                " at byte " + std::to_string(pos_));
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

// Metadata lines are appended to the stored configuration text.
std::string with_meta(const Checkpoint& c) {
  std::string text = c.config_text;
  if (!text.empty() && text.back() != '\n') text += '\n';
  text += kMetaPrefix + "epochs_completed = " + std::to_string(c.epochs_completed) + "\n";
  text += kMetaPrefix + "seed = " + std::to_string(c.seed) + "\n";
  text += kMetaPrefix + "steps = " + std::to_string(c.steps) + "\n";
  return text;
}

void split_meta(const std::string& text, Checkpoint& c) {
  std::istringstream in(text);
  std::string line;
  std::string config;
  while (std::getline(in, line)) {
    if (line.rfind(kMetaPrefix, 0) != 0) {
      config += line + "\n";
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(CheckpointErrorKind::Malformed, "bad metadata line: " + line);
    std::string key = line.substr(kMetaPrefix.size(), eq - kMetaPrefix.size());
    key.erase(key.find_last_not_of(' ') + 1);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "epochs_completed") c.epochs_completed = std::stoi(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "steps") c.steps = std::stoull(value);
      else throw CheckpointError(CheckpointErrorKind::Malformed, "unknown metadata key " + key);
    } catch (const std::logic_error&) {
      throw CheckpointError(CheckpointErrorKind::Malformed, "bad metadata value: " + line);
    }
  }
  c.config_text = config;
}

}  // namespace

std::string to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::Io: return "io";
    case CheckpointErrorKind::BadMagic: return "bad magic";
    case CheckpointErrorKind::UnsupportedVersion: return "unsupported version";
    case CheckpointErrorKind::Truncated: return "truncated payload";
    case CheckpointErrorKind::Malformed: return "malformed";
    case CheckpointErrorKind::ShapeMismatch: return "shape mismatch";
    case CheckpointErrorKind::MissingTensor: return "missing tensor";
  }
  return "?";
}

CheckpointError::CheckpointError(CheckpointErrorKind kind, const std::string& detail)
    : std::runtime_error("checkpoint " + to_string(kind) + ": " + detail), kind_(kind) {}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint make_checkpoint(nn::Module& model, const Sgd* optimizer, std::string config_text, int epochs_completed,
                           std::uint64_t seed, std::size_t steps) {
  Checkpoint c{std::move(config_text), epochs_completed, seed, steps, {}};
  for (const auto& p : model.named_parameters()) c.tensors.emplace_back(p.name, p.param->value);
  if (optimizer) {
    for (const auto& [name, v] : optimizer->velocities()) c.tensors.emplace_back(kVelocityPrefix + name, v);
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  const std::string text = with_meta(ckpt);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : ckpt.tensors) {
    if (t.rank() > 255) throw std::invalid_argument("tensor " + name + " has too many dimensions");
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(kF32);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::BadMagic, "file does not start with VEAC");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::UnsupportedVersion,
                          "version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  const std::uint32_t text_len = r.u32("config length");
  const auto* text = reinterpret_cast<const char*>(r.take(text_len, "config text"));
  split_meta(std::string(text, text_len), c);
  while (!r.done()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    const auto* name_ptr = reinterpret_cast<const char*>(r.take(name_len, "tensor name"));
    std::string name(name_ptr, name_len);
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != kF32) {
      throw CheckpointError(CheckpointErrorKind::Malformed, name + " has dtype " + std::to_string(dtype));
    }
    const std::uint8_t ndims = r.u8("rank");
    Shape shape;
    std::size_t count = 1;
    for (std::uint8_t d = 0; d < ndims; ++d) {
      shape.push_back(r.u32("dimension"));
      if (shape.back() == 0) throw CheckpointError(CheckpointErrorKind::Malformed, name + " has a zero dimension");
      count *= shape.back();
    }
    if (count > (bytes.size() - r.pos()) / 4) {
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            "truncated payload in " + name + " at byte " + std::to_string(r.pos()));
    }
    std::vector<float> values(count);
    for (auto& v : values) {
      const std::uint32_t bits = r.u32("tensor data");
      std::memcpy(&v, &bits, 4);
    }
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot write " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore(const Checkpoint& ckpt, nn::Module& model, Sgd* optimizer) {
  const auto params = model.named_parameters();
  // validate everything before touching the model
  for (const auto& p : params) {
    const Tensor* t = ckpt.find(p.name);
    if (!t) throw CheckpointError(CheckpointErrorKind::MissingTensor, p.name);
    if (t->shape() != p.param->value.shape()) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch, p.name + ": checkpoint " + shape_to_string(t->shape()) +
                                                                    ", model " + shape_to_string(p.param->value.shape()));
    }
  }
  for (const auto& [name, t] : ckpt.tensors) {
    const bool velocity = name.rfind(kVelocityPrefix, 0) == 0;
    const std::string target = velocity ? name.substr(kVelocityPrefix.size()) : name;
    const nn::NamedParam* match = nullptr;
    for (const auto& p : params) {
      if (p.name == target) match = &p;
    }
    if (!match) throw CheckpointError(CheckpointErrorKind::Malformed, "unexpected tensor " + name);
    if (velocity && t.shape() != match->param->value.shape()) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch, name + ": checkpoint " + shape_to_string(t.shape()) +
                                                                    ", model " + shape_to_string(match->param->value.shape()));
    }
  }
  for (const auto& p : params) p.param->value = *ckpt.find(p.name);
  if (optimizer) {
    optimizer->velocities().clear();
    for (const auto& [name, t] : ckpt.tensors) {
      if (name.rfind(kVelocityPrefix, 0) == 0) optimizer->velocities().emplace(name.substr(kVelocityPrefix.size()), t);
    }
  }
}

}  // namespace vea::train
