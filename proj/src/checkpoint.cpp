#include "mcdrop/checkpoint.hpp"

#include "mcdrop/text.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

namespace mcdrop {
namespace {

constexpr std::string_view kMagic = "mcdrop-checkpoint 1";
constexpr std::string_view kEndHeader = "end-header";

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw CheckpointError("checkpoint: dangling escape in config");
    if (s[i] == 'n') out += '\n';
    else if (s[i] == '\\') out += '\\';
    else throw CheckpointError("checkpoint: unknown escape in config");
  }
  return out;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::uint64_t le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("checkpoint: offset " + std::to_string(pos_) + ": truncated parameter data");
    }
  }
  const std::string& bytes_;
  std::size_t pos_;
};

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

template <typename T>
T number(const std::string& s, const std::string& what) {
  T v{};
  if (!parse_number(s, v)) throw CheckpointError("checkpoint: bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  validate(ckpt.spec);
  const ModelSpec& spec = ckpt.spec;
  std::string out;
  out += kMagic;
  out += "\nvariant ";
  out += to_string(spec.variant);
  out += "\nbackbone ";
  out += to_string(spec.backbone);
  out += "\nclasses " + std::to_string(spec.classes) + "\ninput_shape";
  for (Index d : spec.input_shape) out += " " + std::to_string(d);
  out += "\n";
  for (const auto& l : spec.layers) {
    out += "layer ";
    out += to_string(l.kind);
    out += " " + std::to_string(l.in) + " " + std::to_string(l.out) + " " + format_double(l.rate) + " " +
           (l.conv ? "1" : "0") + " " + (l.name.empty() ? "-" : l.name) + "\n";
  }
  out += "init_seed " + std::to_string(ckpt.params.seed) + "\n";
  out += "seed " + std::to_string(ckpt.meta.seed) + "\n";
  out += "epochs " + std::to_string(ckpt.meta.epochs) + "\n";
  out += "final_loss " + format_double(ckpt.meta.final_loss) + "\n";
  out += "config " + escape(ckpt.meta.config) + "\n";
  out += "params " + std::to_string(ckpt.params.tensors.size()) + "\n";
  out += kEndHeader;
  out += "\n";

  for (const auto& [name, t] : ckpt.params.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(t[i]));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Checkpoint ckpt;
  ModelSpec& spec = ckpt.spec;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t param_count = 0;
  bool ended = false;
  while (!ended) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError("checkpoint: header not terminated");
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const std::string where = "checkpoint: header line " + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kMagic) throw CheckpointError(where + ": not an mcdrop checkpoint");
      continue;
    }
    if (line == kEndHeader) {
      ended = true;
      continue;
    }
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    const auto w = words(rest);
    try {
      if (key == "variant") spec.variant = parse_variant(rest);
      else if (key == "backbone") spec.backbone = parse_backbone(rest);
      else if (key == "classes") spec.classes = number<Index>(rest, "class count");
      else if (key == "input_shape") {
        for (const auto& d : w) spec.input_shape.push_back(number<Index>(d, "dimension"));
      } else if (key == "layer") {
        if (w.size() != 6) throw CheckpointError(where + ": layer needs 6 fields");
        LayerSpec l;
        l.kind = parse_layer_kind(w[0]);
        l.in = number<Index>(w[1], "layer input");
        l.out = number<Index>(w[2], "layer output");
        l.rate = number<double>(w[3], "dropout rate");
        l.conv = w[4] == "1";
        if (w[5] != "-") l.name = w[5];
        spec.layers.push_back(std::move(l));
      } else if (key == "init_seed") ckpt.params.seed = number<std::uint64_t>(rest, "seed");
      else if (key == "seed") ckpt.meta.seed = number<std::uint64_t>(rest, "seed");
      else if (key == "epochs") ckpt.meta.epochs = number<Index>(rest, "epoch count");
      else if (key == "final_loss") ckpt.meta.final_loss = number<double>(rest, "final loss");
      else if (key == "config") ckpt.meta.config = unescape(rest);
      else if (key == "params") param_count = number<std::size_t>(rest, "parameter count");
      else throw CheckpointError(where + ": unknown key '" + key + "'");
    } catch (const SpecError& e) {
      throw CheckpointError(where + ": " + e.what());
    }
  }
  try {
    validate(spec);
  } catch (const SpecError& e) {
    throw CheckpointError(std::string("checkpoint: invalid model spec: ") + e.what());
  }

  Reader r(bytes, pos);
  for (std::size_t k = 0; k < param_count; ++k) {
    const auto name = r.text(static_cast<std::size_t>(r.le(4)));
    const auto rank = r.le(4);
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(static_cast<Index>(r.le(8)));
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = std::bit_cast<double>(r.le(8));
    if (!ckpt.params.tensors.emplace(name, std::move(t)).second) {
      throw CheckpointError("checkpoint: duplicate parameter '" + name + "'");
    }
  }
  if (!r.done()) throw CheckpointError("checkpoint: offset " + std::to_string(r.pos()) + ": trailing bytes");

  std::size_t expected = 0;
  for (const auto& layer : spec.layers) {
    for (const auto& [name, shape] : parameter_shapes(layer, spec.classes)) {
      ++expected;
      const auto it = ckpt.params.tensors.find(name);
      if (it == ckpt.params.tensors.end()) throw CheckpointError("checkpoint: missing parameter '" + name + "'");
      if (it->second.shape() != shape) {
        throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + to_string(it->second.shape()) +
                              ", expected " + to_string(shape));
      }
    }
  }
  if (expected != ckpt.params.tensors.size()) throw CheckpointError("checkpoint: unexpected extra parameters");
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error(path.string() + ": cannot rename temporary file into place");
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace mcdrop
