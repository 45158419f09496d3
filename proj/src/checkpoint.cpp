#include "cfm/checkpoint.hpp"

#include "cfm/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cfm {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw IoError("checkpoint truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Network& net, const Formulation& form, long step) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);

  w.u32(static_cast<std::uint32_t>(form.kind()));
  w.f64(form.schedule().T);
  w.f64(form.schedule().beta0);
  w.f64(form.schedule().betaT);
  w.f64(form.edm_params().sigma_min);
  w.f64(form.edm_params().sigma_max);

  const NetworkConfig& c = net.config();
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  w.u32(static_cast<std::uint32_t>(c.hidden.size()));
  for (int h : c.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(c.embedding.dim));
  w.f64(c.embedding.base);
  w.f64(c.embedding.scale);
  w.u32(static_cast<std::uint32_t>(c.activation));
  w.u32(c.dual_time ? 1u : 0u);
  w.f64(c.time_origin);
  w.f64(c.time_span);

  w.i64(step);
  w.u32(static_cast<std::uint32_t>(net.parameter_count()));
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    const std::string& name = net.parameter_name(i);
    const Mat& p = net.parameter(i);
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(p.rows()));
    w.u32(static_cast<std::uint32_t>(p.cols()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index col = 0; col < p.cols(); ++col) w.f64(p(r, col));
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader rd(bytes);
  if (rd.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IoError("not a checkpoint (bad magic)");
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));

  const std::uint32_t kind = rd.u32();
  if (kind > static_cast<std::uint32_t>(Kind::EDM)) throw IoError("checkpoint: bad formulation tag");
  DdimSchedule sch;
  sch.T = rd.f64();
  sch.beta0 = rd.f64();
  sch.betaT = rd.f64();
  EdmParams edm;
  edm.sigma_min = rd.f64();
  edm.sigma_max = rd.f64();
  auto make_form = [&]() {
    switch (static_cast<Kind>(kind)) {
      case Kind::UFM: return Formulation::ufm();
      case Kind::X1FM: return Formulation::x1fm();
      case Kind::DDIM: return Formulation::ddim(sch);
      case Kind::EDM: return Formulation::edm(edm);
    }
    return Formulation::ufm();
  };

  NetworkConfig c;
  c.input_dim = static_cast<int>(rd.u32());
  const std::uint32_t layers = rd.u32();
  if (layers > 1024) throw IoError("checkpoint: implausible layer count");
  c.hidden.assign(layers, 0);
  for (auto& h : c.hidden) h = static_cast<int>(rd.u32());
  c.embedding.dim = static_cast<int>(rd.u32());
  c.embedding.base = rd.f64();
  c.embedding.scale = rd.f64();
  const std::uint32_t act = rd.u32();
  if (act > 1) throw IoError("checkpoint: bad activation tag");
  c.activation = static_cast<Activation>(act);
  c.dual_time = rd.u32() != 0;
  c.time_origin = rd.f64();
  c.time_span = rd.f64();

  const long step = static_cast<long>(rd.i64());
  const std::uint32_t count = rd.u32();
  std::vector<std::pair<std::string, Mat>> params;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = rd.u32();
    std::string name = rd.str(len);
    const std::uint32_t rows = rd.u32(), cols = rd.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > bytes.size()) throw IoError("checkpoint: array too large");
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = rd.f64();
    }
    params.emplace_back(std::move(name), std::move(m));
  }
  if (!rd.done()) throw IoError("checkpoint: trailing bytes");
  try {
    return Checkpoint{make_form(), Network(c, std::move(params)), step};
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const Formulation& form, long step) {
  const std::string bytes = serialize_checkpoint(net, form, step);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const IoError& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace cfm
