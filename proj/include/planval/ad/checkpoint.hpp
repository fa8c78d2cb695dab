#pragma once

#include "planval/ad/params.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace planval::ad {

/// Named float64 arrays plus string metadata. Text container with magic `planval-ckpt v1`;
/// array entries are written as hexadecimal floats so reads are bit-exact.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> arrays;

  void put(const std::string& name, Matrix value);
  /// Stores every entry of `store` under `<prefix><entry name>` and the step counter in meta.
  void put_store(const std::string& prefix, const ParamStore& store);

  bool has(const std::string& name) const;
  const Matrix& get(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
  /// Overwrites the values of `store` from `<prefix><entry name>` arrays; shapes must match.
  void load_store(const std::string& prefix, ParamStore& store) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace planval::ad
