#include "planval/ad/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace planval::ad {

namespace {

constexpr const char* kMagic = "planval-ckpt v1";

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos)
    throw ConfigError(std::string("checkpoint: ") + what + " must be a non-empty token without whitespace: '" + s + "'");
}

}  // namespace

void Checkpoint::put(const std::string& name, Matrix value) {
  check_token(name, "array name");
  for (auto& [n, v] : arrays) {
    if (n == name) {
      v = std::move(value);
      return;
    }
  }
  arrays.emplace_back(name, std::move(value));
}

void Checkpoint::put_store(const std::string& prefix, const ParamStore& store) {
  for (Index i = 0; i < store.size(); ++i) put(prefix + store.name(i), store.value(i));
  meta[prefix + "step"] = std::to_string(store.step());
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, v] : arrays)
    if (n == name) return true;
  return false;
}

const Matrix& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, v] : arrays)
    if (n == name) return v;
  throw ConfigError("checkpoint: missing array '" + name + "'");
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw ConfigError("checkpoint: missing metadata key '" + key + "'");
  return it->second;
}

void Checkpoint::load_store(const std::string& prefix, ParamStore& store) const {
  for (Index i = 0; i < store.size(); ++i) {
    const Matrix& v = get(prefix + store.name(i));
    if (v.rows() != store.value(i).rows() || v.cols() != store.value(i).cols())
      throw ShapeError("checkpoint: shape mismatch for '" + prefix + store.name(i) + "'");
    store.set_value(i, v);
  }
  if (const auto it = meta.find(prefix + "step"); it != meta.end()) store.set_step(std::stol(it->second));
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  for (const auto& [k, v] : ckpt.meta) {
    check_token(k, "metadata key");
    if (v.find('\n') != std::string::npos) throw ConfigError("checkpoint: metadata value contains a newline");
  }
  out << kMagic << '\n';
  out << "meta " << ckpt.meta.size() << '\n';
  for (const auto& [k, v] : ckpt.meta) out << k << ' ' << v << '\n';
  out << "arrays " << ckpt.arrays.size() << '\n';
  char buf[64];
  for (const auto& [name, m] : ckpt.arrays) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw ConfigError("checkpoint: missing 'planval-ckpt v1' header");
  Checkpoint ckpt;
  std::string word;
  std::size_t n = 0;
  if (!std::getline(in, line)) throw ConfigError("checkpoint: truncated before metadata");
  {
    std::istringstream ls(line);
    if (!(ls >> word >> n) || word != "meta") throw ConfigError("checkpoint: expected 'meta <count>'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ConfigError("checkpoint: truncated metadata");
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ConfigError("checkpoint: malformed metadata line");
    ckpt.meta[line.substr(0, sp)] = line.substr(sp + 1);
  }
  if (!std::getline(in, line)) throw ConfigError("checkpoint: truncated before arrays");
  {
    std::istringstream ls(line);
    if (!(ls >> word >> n) || word != "arrays") throw ConfigError("checkpoint: expected 'arrays <count>'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    Index rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) throw ConfigError("checkpoint: malformed array header");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        std::string tok;
        if (!(in >> tok)) throw ConfigError("checkpoint: truncated array '" + name + "'");
        char* end = nullptr;
        m(r, c) = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') throw ConfigError("checkpoint: bad number in array '" + name + "'");
      }
    }
    ckpt.arrays.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  write_checkpoint(out, ckpt);
  if (!out) throw ConfigError("error while writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace planval::ad
