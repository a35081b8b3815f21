#include "capgen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace capgen::ckpt {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'G', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return v;
}

std::int64_t get_i64(std::istream& in, const std::string& what) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return v;
}

std::string get_string(std::istream& in, const std::string& what) {
  const std::uint32_t len = get_u32(in, what + " length");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return s;
}

void put_tensors(std::ostream& out,
                 const std::vector<std::pair<std::string, ag::Tensor>>& tensors) {
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (int e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
}

std::vector<std::pair<std::string, ag::Tensor>> get_tensors(std::istream& in,
                                                            const std::string& section) {
  const std::uint32_t count = get_u32(in, section + " tensor count");
  std::vector<std::pair<std::string, ag::Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, section + " tensor name");
    const std::uint32_t rank = get_u32(in, "rank of tensor " + name);
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank in tensor " + name);
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t e = get_u32(in, "extent of tensor " + name);
      shape.push_back(static_cast<int>(e));
      numel *= e;
    }
    std::vector<double> values(numel);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in)
      throw std::runtime_error("checkpoint: corrupted data section in tensor " + name);
    tensors.emplace_back(name, ag::Tensor(std::move(shape), std::move(values)));
  }
  return tensors;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_string(out, config_to_json_string(ckpt.config));
  put_tensors(out, ckpt.params);
  out.put(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    put_i64(out, ckpt.optimizer->step_count);
    put_tensors(out, ckpt.optimizer->m);
    put_tensors(out, ckpt.optimizer->v);
  }
  put_u64(out, ckpt.rng_state);
  put_string(out, ckpt.phase);
  put_u32(out, static_cast<std::uint32_t>(ckpt.epoch));
  put_i64(out, ckpt.step);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(in, "format version");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) +
                             " needs migration; this build reads version " +
                             std::to_string(kVersion));
  Checkpoint ckpt;
  ckpt.config = config_from_json_string(get_string(in, "config blob"));
  ckpt.params = get_tensors(in, "parameters");
  char has_opt = 0;
  in.read(&has_opt, 1);
  if (!in) throw std::runtime_error("checkpoint: truncated before optimizer flag");
  if (has_opt) {
    OptimizerState opt;
    opt.step_count = get_i64(in, "optimizer step count");
    opt.m = get_tensors(in, "first moments");
    opt.v = get_tensors(in, "second moments");
    ckpt.optimizer = std::move(opt);
  }
  ckpt.rng_state = get_u64(in, "rng state");
  ckpt.phase = get_string(in, "phase");
  ckpt.epoch = static_cast<int>(get_u32(in, "epoch"));
  ckpt.step = get_i64(in, "step");
  return ckpt;
}

namespace {

ag::Tensor deep_copy(const ag::Tensor& t) {
  return ag::Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
}

void copy_into(const std::vector<std::pair<std::string, ag::Tensor>>& src,
               std::vector<std::pair<std::string, ag::Tensor>>& dst,
               const std::string& what) {
  if (src.size() != dst.size())
    throw std::runtime_error("checkpoint: " + what + " count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first)
      throw std::runtime_error("checkpoint: " + what + " name mismatch: expected " +
                               dst[i].first + ", found " + src[i].first);
    if (src[i].second.shape() != dst[i].second.shape())
      throw std::runtime_error("checkpoint: shape mismatch in " + src[i].first);
    auto out = dst[i].second.mutable_data();
    auto inp = src[i].second.data();
    std::copy(inp.begin(), inp.end(), out.begin());
  }
}

}  // namespace

Checkpoint snapshot(model::CaptionModel& model, train::Trainer* trainer,
                    const Config& config, const std::string& phase) {
  Checkpoint ckpt;
  ckpt.config = config;
  for (auto& [name, t] : model.named_parameters()) ckpt.params.emplace_back(name, deep_copy(t));
  ckpt.phase = phase;
  if (trainer != nullptr) {
    OptimizerState opt;
    opt.step_count = trainer->adam().step_count();
    for (auto& [name, t] : trainer->adam().moments1()) opt.m.emplace_back(name, deep_copy(t));
    for (auto& [name, t] : trainer->adam().moments2()) opt.v.emplace_back(name, deep_copy(t));
    ckpt.optimizer = std::move(opt);
    ckpt.rng_state = trainer->rng().state();
    ckpt.epoch = trainer->epoch();
    ckpt.step = trainer->step();
  }
  return ckpt;
}

void restore_model(const Checkpoint& ckpt, model::CaptionModel& model) {
  auto params = model.named_parameters();
  copy_into(ckpt.params, params, "parameter");
}

void restore_trainer(const Checkpoint& ckpt, train::Trainer& trainer) {
  if (!ckpt.optimizer) throw std::runtime_error("checkpoint: no optimizer state to restore");
  copy_into(ckpt.optimizer->m, trainer.adam().moments1(), "first-moment");
  copy_into(ckpt.optimizer->v, trainer.adam().moments2(), "second-moment");
  trainer.adam().set_step_count(ckpt.optimizer->step_count);
  trainer.rng().set_state(ckpt.rng_state);
  trainer.set_progress(ckpt.step, ckpt.epoch);
}

}  // namespace capgen::ckpt
