#include "wtpgd/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace wtpgd {

namespace {

constexpr const char* kFormat = "wtpgd-checkpoint-1";

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& text, char sep) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size()) throw Error("malformed size list '" + text + "'");
    out.push_back(v);
  }
  return out;
}

void put_le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error("checkpoint blob is truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& manifest) {
  const auto& arch = model.architecture();
  const auto& d = model.defence();
  const auto& names = model.graph().parameter_names();
  const auto& params = model.parameters();
  auto blob = manifest;
  blob.replace_extension(".bin");

  std::ofstream m(manifest);
  if (!m) throw Error("cannot write checkpoint manifest " + manifest.string());
  m << "format=" << kFormat << '\n';
  m << "architecture=" << arch.name() << '\n';
  m << "layers=" << join(arch.sizes, ',') << '\n';
  m << "defence=" << to_string(d.kind) << '\n';
  m << "noise_scale=" << format_double(d.noise_scale) << '\n';
  m << "kwta_k=" << d.kwta_k << '\n';
  m << "aa_steps=" << d.aa_steps << '\n';
  m << "aa_step_size=" << format_double(d.aa_step_size) << '\n';
  m << "parameters=";
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i > 0) m << ';';
    m << names[i] << ':' << join(params[i].shape(), 'x');
  }
  m << '\n';
  m << "blob=" << blob.filename().string() << '\n';
  if (!m) throw Error("failed writing " + manifest.string());

  std::ofstream b(blob, std::ios::binary);
  if (!b) throw Error("cannot write checkpoint blob " + blob.string());
  for (const auto& p : params) {
    for (double v : p.values()) put_le(b, v);
  }
  if (!b) throw Error("failed writing " + blob.string());
}

Model load_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream m(manifest);
  if (!m) throw Error("cannot open checkpoint manifest " + manifest.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(m, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(manifest.string() + ": malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(manifest.string() + ": missing key '" + key + "'");
    return it->second;
  };
  if (need("format") != kFormat) throw Error(manifest.string() + ": unsupported format '" + need("format") + "'");

  Architecture arch;
  const auto& name = need("architecture");
  if (name == "mlp") {
    arch.family = Family::Mlp;
  } else if (name == "cnn") {
    arch.family = Family::Cnn;
  } else {
    throw Error(manifest.string() + ": unknown architecture '" + name + "'");
  }
  arch.sizes = split_sizes(need("layers"), ',');
  arch.validate();

  DefenceSpec d;
  d.kind = parse_defence_kind(need("defence"));
  d.noise_scale = std::stod(need("noise_scale"));
  d.kwta_k = std::stoull(need("kwta_k"));
  d.aa_steps = std::stoull(need("aa_steps"));
  d.aa_step_size = std::stod(need("aa_step_size"));

  const auto expected_names = arch.parameter_names();
  const auto expected_shapes = arch.parameter_shapes();
  std::vector<std::string> entries;
  {
    std::stringstream ss(need("parameters"));
    std::string e;
    while (std::getline(ss, e, ';')) entries.push_back(e);
  }
  if (entries.size() != expected_shapes.size()) {
    throw Error(manifest.string() + ": expected " + std::to_string(expected_shapes.size()) + " parameter entries");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto colon = entries[i].find(':');
    if (colon == std::string::npos || entries[i].substr(0, colon) != expected_names[i] ||
        split_sizes(entries[i].substr(colon + 1), 'x') != expected_shapes[i]) {
      throw Error(manifest.string() + ": parameter entry '" + entries[i] + "' does not match " + expected_names[i] +
                  ":" + join(expected_shapes[i], 'x'));
    }
  }

  const auto blob = manifest.parent_path() / need("blob");
  std::ifstream b(blob, std::ios::binary);
  if (!b) throw Error("cannot open checkpoint blob " + blob.string());
  std::vector<Tensor> params;
  for (const auto& shape : expected_shapes) {
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = get_le(b);
    params.emplace_back(shape, std::move(values));
  }
  if (b.peek() != std::char_traits<char>::eof()) throw Error(blob.string() + ": trailing bytes after parameters");
  return Model(arch, std::move(params), d);
}

}  // namespace wtpgd
