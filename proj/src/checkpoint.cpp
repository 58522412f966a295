#include "mga/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mga {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr std::array<char, 8> kMagic = {'M', 'G', 'A', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <class T>
  T get(const char* what) {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T), what);
    return v;
  }

  std::string get_string(const char* what) {
    const auto n = get<std::uint64_t>(what);
    if (n > (1u << 24)) fail(std::string("implausible length for ") + what);
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }

  void get_doubles(Tensor& t, const char* what) {
    read(reinterpret_cast<char*>(t.storage().data()), t.size() * sizeof(double), what);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw InvalidInput(source_ + ": checkpoint " + msg);
  }

 private:
  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail(std::string("truncated while reading ") + what);
  }

  std::istream& in_;
  std::string source_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const RunConfig& config, const ParamStore& params,
                      const OptimizerState& optimizer) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, to_text(config));
  put<std::uint64_t>(out, params.size());
  for (std::size_t b = 0; b < params.size(); ++b) {
    const Tensor& t = params.at(b);
    put_string(out, params.name(b));
    put<std::uint64_t>(out, t.shape().size());
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    put_doubles(out, t);
  }
  put<std::uint64_t>(out, optimizer.step);
  for (std::size_t b = 0; b < params.size(); ++b) {
    put_doubles(out, optimizer.first_moment.at(b));
    put_doubles(out, optimizer.second_moment.at(b));
  }
}

void save_checkpoint(const std::string& path, const RunConfig& config, const ParamStore& params,
                     const OptimizerState& optimizer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, config, params, optimizer);
  if (!out) throw InvalidInput("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  Reader r(in, source);
  std::array<char, 8> magic{};
  for (char& c : magic) c = r.get<char>("magic");
  if (magic != kMagic) r.fail("has a bad magic header");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("version " + std::to_string(version) + " is not supported");

  Checkpoint ck;
  ck.config_text = r.get_string("config");
  ck.config = run_config_from(KeyValueConfig::parse_text(ck.config_text, source + " (config)"));
  const auto blocks = r.get<std::uint64_t>("block count");
  for (std::uint64_t b = 0; b < blocks; ++b) {
    std::string name = r.get_string("block name");
    const auto rank = r.get<std::uint64_t>("rank");
    if (rank > 8) r.fail("block '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>("dims");
    Tensor t(shape, 0.0);
    r.get_doubles(t, "block values");
    ck.params.add(std::move(name), std::move(t));
  }
  ck.optimizer = OptimizerState::zeros_like(ck.params, ck.config.adam);
  ck.optimizer.step = r.get<std::uint64_t>("optimizer step");
  for (std::size_t b = 0; b < ck.params.size(); ++b) {
    r.get_doubles(ck.optimizer.first_moment[b], "first moment");
    r.get_doubles(ck.optimizer.second_moment[b], "second moment");
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint " + path);
  return read_checkpoint(in, path);
}

Model restore_model(const Checkpoint& ckpt) {
  Model model(ckpt.config.model);
  ParamStore& dst = model.params();
  if (dst.size() != ckpt.params.size()) {
    throw InvalidInput("checkpoint holds " + std::to_string(ckpt.params.size()) +
                       " blocks but the configured model has " + std::to_string(dst.size()));
  }
  for (std::size_t b = 0; b < dst.size(); ++b) {
    if (dst.name(b) != ckpt.params.name(b)) {
      throw InvalidInput("checkpoint block " + std::to_string(b) + " is '" + ckpt.params.name(b) +
                         "', expected '" + dst.name(b) + "'");
    }
    if (dst.at(b).shape() != ckpt.params.at(b).shape()) {
      throw InvalidInput("checkpoint block '" + dst.name(b) + "' has shape " +
                         shape_string(ckpt.params.at(b).shape()) + ", expected " +
                         shape_string(dst.at(b).shape()));
    }
    dst.at(b) = ckpt.params.at(b);
  }
  return model;
}

}  // namespace mga
