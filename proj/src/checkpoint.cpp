#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ultr/model.hpp"

namespace ultr::model {

namespace {

constexpr char kMagic[4] = {'U', 'L', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

std::uint32_t get_u32(std::istream& in) {
  char buf[4];
  if (!in.read(buf, 4)) throw IoError("checkpoint: truncated header");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  char buf[8];
  if (!in.read(buf, 8)) throw IoError("checkpoint: truncated header");
  std::uint64_t v;
  std::memcpy(&v, buf, 8);
  return v;
}

}  // namespace

void save_checkpoint(const MfimModel& model, std::ostream& out) {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const auto& fs = model.features();
  const char flags[4] = {
      static_cast<char>(fs.use_position), static_cast<char>(fs.use_mtype),
      static_cast<char>(fs.use_serph), static_cast<char>(fs.use_slipoff)};
  out.write(flags, 4);
  put_u64(out, model.layers());
  put_u64(out, model.hidden());
  const auto& h = model.header();
  put_u64(out, h.feature_dim);
  put_u64(out, h.mtype_vocab);
  put_u64(out, h.serph_vocab);
  put_u64(out, h.slipoff_vocab);
  put_u64(out, h.max_positions);

  auto tensors = const_cast<MfimModel&>(model).state_tensors();
  for (const auto& t : tensors) {
    put_u64(out, t.size);
    out.write(reinterpret_cast<const char*>(t.data),
              static_cast<std::streamsize>(t.size * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint: write failed");
}

MfimModel load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CompatibilityError("checkpoint: bad magic");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw CompatibilityError("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  char flags[4];
  if (!in.read(flags, 4)) throw IoError("checkpoint: truncated header");
  FeatureSet fs;
  fs.use_position = flags[0] != 0;
  fs.use_mtype = flags[1] != 0;
  fs.use_serph = flags[2] != 0;
  fs.use_slipoff = flags[3] != 0;

  const std::uint64_t layers = get_u64(in);
  const std::uint64_t hidden = get_u64(in);
  data::CorpusHeader header;
  header.feature_dim = get_u64(in);
  header.mtype_vocab = get_u64(in);
  header.serph_vocab = get_u64(in);
  header.slipoff_vocab = get_u64(in);
  header.max_positions = get_u64(in);

  Rng rng(0);  // every tensor is overwritten below
  MfimModel model(fs, header, layers, hidden, rng);
  for (auto& t : model.state_tensors()) {
    const std::uint64_t size = get_u64(in);
    if (size != t.size) {
      throw CompatibilityError("checkpoint: tensor size mismatch for " +
                               std::string(t.name));
    }
    if (!in.read(reinterpret_cast<char*>(t.data),
                 static_cast<std::streamsize>(size * sizeof(double)))) {
      throw IoError("checkpoint: truncated tensor data");
    }
  }
  model.set_mode(nn::Mode::kEval);
  return model;
}

void save_checkpoint_file(const MfimModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(model, out);
}

MfimModel load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace ultr::model
