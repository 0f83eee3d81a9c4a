#include "diffcast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "diffcast/config.hpp"
#include "diffcast/error.hpp"

namespace diffcast {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_ += s; }
  void text(const std::string& s) {
    u64(s.size());
    bytes(s);
  }
  void group(const std::string& name, const Shape& shape, std::span<const double> values) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) u64(d);
    u64(values.size());
    for (double v : values) f64(v);
  }
  void group(const std::string& name, const Tensor& t) { group(name, t.shape(), t.values()); }
  void group(const std::string& name, const std::vector<double>& v) { group(name, {v.size()}, v); }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return bytes(u64()); }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    require(n <= data_.size() - pos_, ErrorKind::Checkpoint, "checkpoint is truncated");
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

struct Group {
  Shape shape;
  std::vector<double> values;
};

void restore(const std::map<std::string, Group>& groups, const std::string& name, Tensor& target) {
  const auto it = groups.find(name);
  require(it != groups.end(), ErrorKind::Checkpoint, "checkpoint is missing group '" + name + "'");
  require(it->second.shape == target.shape(), ErrorKind::Checkpoint,
          "checkpoint group '" + name + "' has shape " + shape_string(it->second.shape) +
              ", expected " + shape_string(target.shape()));
  target = Tensor(it->second.shape, it->second.values);
}

std::vector<double> restore_vector(const std::map<std::string, Group>& groups, const std::string& name) {
  const auto it = groups.find(name);
  require(it != groups.end() && it->second.shape.size() == 1, ErrorKind::Checkpoint,
          "checkpoint is missing vector group '" + name + "'");
  return it->second.values;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Checkpoint ck = checkpoint;  // collect() hands out mutable pointers only
  Writer w;
  w.bytes(std::string(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.text(model_train_json(ck.model.config, ck.train_config));

  const std::vector<double> betas = ck.model.schedule.betas();
  w.u64(betas.size());
  for (double b : betas) w.f64(b);

  w.u64(ck.epochs_run);
  w.u64(ck.best_epoch);
  w.f64(ck.best_validation);
  w.u8(ck.trained ? 1 : 0);
  w.u64(ck.adam.step_count);

  const std::vector<Param*> params = ck.model.parameters();
  const std::vector<Param*> trainable = ck.model.trainable();
  const std::vector<Buffer> buffers = ck.model.buffers();
  const bool has_moments = !ck.adam.first_moment.empty();
  require(!has_moments || (ck.adam.first_moment.size() == trainable.size() &&
                           ck.adam.second_moment.size() == trainable.size()),
          ErrorKind::Checkpoint, "optimizer state does not match the parameter list");

  std::vector<double> epochs, train_loss, valid_mse;
  for (const auto& r : ck.history) {
    epochs.push_back(static_cast<double>(r.epoch));
    train_loss.push_back(r.train_loss);
    valid_mse.push_back(r.valid_mse);
  }

  w.u64(params.size() + buffers.size() + (has_moments ? 2 * trainable.size() : 0) + 4);
  for (const Param* p : params) w.group("param/" + p->name, p->value);
  for (const Buffer& b : buffers) w.group("buffer/" + b.name, *b.value);
  if (has_moments) {
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      w.group("adam.m/" + trainable[i]->name, ck.adam.first_moment[i]);
      w.group("adam.v/" + trainable[i]->name, ck.adam.second_moment[i]);
    }
  }
  w.group("history/epoch", epochs);
  w.group("history/train_loss", train_loss);
  w.group("history/valid_mse", valid_mse);
  w.group("history/ar_loss", ck.ar_losses);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  require(bytes.size() >= 8 && bytes.compare(0, 8, kCheckpointMagic) == 0, ErrorKind::Checkpoint,
          "not a diffcast checkpoint (bad magic)");
  r.bytes(8);
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::Checkpoint,
          "unsupported checkpoint version " + std::to_string(version));

  ModelConfig model_config;
  Checkpoint ck;
  parse_model_train_json(r.text(), model_config, ck.train_config);

  const std::uint64_t K = r.u64();
  require(K == model_config.diffusion_steps, ErrorKind::Checkpoint,
          "schedule length does not match the stored config");
  std::vector<double> betas(K);
  for (auto& b : betas) b = r.f64();

  ck.epochs_run = r.u64();
  ck.best_epoch = r.u64();
  ck.best_validation = r.f64();
  ck.trained = r.u8() != 0;
  const std::uint64_t adam_steps = r.u64();

  std::map<std::string, Group> groups;
  const std::uint64_t count = r.u64();
  for (std::uint64_t g = 0; g < count; ++g) {
    const std::string name = r.bytes(r.u32());
    Group group;
    group.shape.resize(r.u32());
    for (auto& d : group.shape) d = r.u64();
    group.values.resize(r.u64());
    require(group.values.size() == shape_size(group.shape), ErrorKind::Checkpoint,
            "checkpoint group '" + name + "' has inconsistent size");
    for (auto& v : group.values) v = r.f64();
    require(groups.emplace(name, std::move(group)).second, ErrorKind::Checkpoint,
            "duplicate checkpoint group '" + name + "'");
  }
  require(r.done(), ErrorKind::Checkpoint, "trailing bytes after checkpoint");

  ck.model = TimeDiffModel(model_config, 0);
  ck.model.schedule = DiffusionSchedule::from_betas(std::move(betas));
  for (Param* p : ck.model.parameters()) {
    restore(groups, "param/" + p->name, p->value);
    p->grad = Tensor::like(p->value);
  }
  for (const Buffer& b : ck.model.buffers()) restore(groups, "buffer/" + b.name, *b.value);

  ck.adam = AdamState{AdamConfig{ck.train_config.learning_rate, 0.9, 0.999, 1e-8}, {}, {}, adam_steps};
  if (groups.count("adam.m/" + ck.model.trainable().front()->name)) {
    for (Param* p : ck.model.trainable()) {
      Tensor m = Tensor::like(p->value), v = Tensor::like(p->value);
      restore(groups, "adam.m/" + p->name, m);
      restore(groups, "adam.v/" + p->name, v);
      ck.adam.first_moment.push_back(std::move(m));
      ck.adam.second_moment.push_back(std::move(v));
    }
  }

  const std::vector<double> epochs = restore_vector(groups, "history/epoch");
  const std::vector<double> train_loss = restore_vector(groups, "history/train_loss");
  const std::vector<double> valid_mse = restore_vector(groups, "history/valid_mse");
  require(epochs.size() == train_loss.size() && epochs.size() == valid_mse.size(), ErrorKind::Checkpoint,
          "history groups have different lengths");
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    ck.history.push_back({static_cast<std::size_t>(epochs[i]), train_loss[i], valid_mse[i]});
  }
  ck.ar_losses = restore_vector(groups, "history/ar_loss");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open checkpoint " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace diffcast
