#include "cfm/config.hpp"

#include "cfm/csv.hpp"
#include "cfm/datasets.hpp"
#include "cfm/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

namespace cfm {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& field, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(field, "expected a number, got '" + v + "'");
  }
  return out;
}

template <class I>
I to_int(const std::string& field, const std::string& v) {
  I out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(field, "expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(field, "expected true or false, got '" + v + "'");
}

std::vector<int> to_widths(const std::string& field, const std::string& v) {
  std::vector<int> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_int<int>(field, trim(item)));
  if (out.empty()) throw ConfigError(field, "expected comma-separated layer widths");
  return out;
}

using Setter = std::function<void(Config&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"formulation.kind", [](Config& c, const std::string&, const std::string& v) { c.kind = parse_kind(v); }},
      {"formulation.ddim_T", [](Config& c, const std::string& f, const std::string& v) { c.ddim.T = to_double(f, v); }},
      {"formulation.ddim_beta0", [](Config& c, const std::string& f, const std::string& v) { c.ddim.beta0 = to_double(f, v); }},
      {"formulation.ddim_betaT", [](Config& c, const std::string& f, const std::string& v) { c.ddim.betaT = to_double(f, v); }},
      {"formulation.edm_sigma_min", [](Config& c, const std::string& f, const std::string& v) { c.edm.sigma_min = to_double(f, v); }},
      {"formulation.edm_sigma_max", [](Config& c, const std::string& f, const std::string& v) { c.edm.sigma_max = to_double(f, v); }},
      {"network.hidden", [](Config& c, const std::string& f, const std::string& v) { c.hidden = to_widths(f, v); }},
      {"network.embed_dim", [](Config& c, const std::string& f, const std::string& v) { c.embedding.dim = to_int<int>(f, v); }},
      {"network.embed_base", [](Config& c, const std::string& f, const std::string& v) { c.embedding.base = to_double(f, v); }},
      {"network.embed_scale", [](Config& c, const std::string& f, const std::string& v) { c.embedding.scale = to_double(f, v); }},
      {"network.activation", [](Config& c, const std::string&, const std::string& v) { c.activation = parse_activation(v); }},
      {"network.dual_time", [](Config& c, const std::string& f, const std::string& v) { c.dual_time = to_bool(f, v); }},
      {"training.lr", [](Config& c, const std::string& f, const std::string& v) { c.lr = to_double(f, v); }},
      {"training.batch_size", [](Config& c, const std::string& f, const std::string& v) { c.batch_size = to_int<int>(f, v); }},
      {"training.steps", [](Config& c, const std::string& f, const std::string& v) { c.steps = to_int<long>(f, v); }},
      {"training.alpha", [](Config& c, const std::string& f, const std::string& v) { c.alpha = to_double(f, v); }},
      {"training.time_distribution", [](Config& c, const std::string&, const std::string& v) { c.time_distribution = parse_time_distribution(v); }},
      {"training.derivative", [](Config& c, const std::string& f, const std::string& v) {
         if (v == "fd") c.derivative = DerivativeMode::FiniteDifference;
         else if (v == "jvp") c.derivative = DerivativeMode::ForwardMode;
         else throw ConfigError(f, "expected fd or jvp, got '" + v + "'");
       }},
      {"training.tangent", [](Config& c, const std::string&, const std::string& v) { c.tangent = parse_tangent(v); }},
      {"training.fd_h", [](Config& c, const std::string& f, const std::string& v) { c.fd_h = to_double(f, v); }},
      {"training.checkpoint_every", [](Config& c, const std::string& f, const std::string& v) { c.checkpoint_every = to_int<long>(f, v); }},
      {"training.log_every", [](Config& c, const std::string& f, const std::string& v) { c.log_every = to_int<long>(f, v); }},
      {"training.init_from", [](Config& c, const std::string&, const std::string& v) { c.init_from = v; }},
      {"dataset.id", [](Config& c, const std::string&, const std::string& v) { c.dataset = v; }},
      {"dataset.n", [](Config& c, const std::string& f, const std::string& v) { c.dataset_n = to_int<long>(f, v); }},
      {"sampler.steps", [](Config& c, const std::string& f, const std::string& v) { c.sample_steps = to_int<int>(f, v); }},
      {"sampler.samples", [](Config& c, const std::string& f, const std::string& v) { c.samples = to_int<long>(f, v); }},
      {"run.seed", [](Config& c, const std::string& f, const std::string& v) { c.seed = to_int<std::uint64_t>(f, v); }},
      {"run.out_dir", [](Config& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

void Config::validate() const {
  if (!kind) throw ConfigError("formulation.kind", "required field is missing");
  formulation();
  network_config().validate();
  train_config().validate();
  dataset_info(dataset);
  if (dataset_n < 1) throw ConfigError("dataset.n", "must be at least 1");
  if (sample_steps < 1) throw ConfigError("sampler.steps", "must be at least 1");
  if (samples < 0) throw ConfigError("sampler.samples", "must be >= 0");
}

Formulation Config::formulation() const {
  if (!kind) throw ConfigError("formulation.kind", "required field is missing");
  switch (*kind) {
    case Kind::DDIM: return Formulation::ddim(ddim);
    case Kind::EDM: return Formulation::edm(edm);
    default: return Formulation::of(*kind);
  }
}

NetworkConfig Config::network_config() const {
  const Formulation form = formulation();
  NetworkConfig n;
  n.input_dim = dataset_info(dataset).dim;
  n.hidden = hidden;
  n.embedding = embedding;
  n.activation = activation;
  n.dual_time = dual_time;
  n.time_origin = form.t0();
  n.time_span = form.t1() - form.t0();
  return n;
}

TrainConfig Config::train_config() const {
  TrainConfig t;
  t.formulation = formulation();
  t.learning_rate = lr;
  t.batch_size = batch_size;
  t.steps = steps;
  t.sampler = TimeSampler{alpha, time_distribution};
  t.derivative = DerivativeConfig{.mode = derivative, .tangent = tangent, .h_fraction = fd_h};
  t.seed = seed;
  t.dataset = dataset;
  t.checkpoint_every = checkpoint_every;
  t.log_every = log_every;
  return t;
}

Config parse_config(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"formulation", "network", "training", "dataset", "sampler", "run"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
        throw ConfigError(section, where + "unknown section");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", where + "expected key = value");
    if (section.empty()) throw ConfigError("", where + "key outside of a section");
    const std::string field = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(field);
    if (it == setters().end()) throw ConfigError(field, where + "unknown key");
    try {
      it->second(c, field, value);
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      if (!e.field().empty() && msg.starts_with(e.field() + ": ")) msg.erase(0, e.field().size() + 2);
      throw ConfigError(field, where + msg);
    }
  }
  return c;
}

std::string serialize_config(const Config& c) {
  std::ostringstream o;
  o << "[formulation]\n";
  if (c.kind) o << "kind = " << kind_name(*c.kind) << "\n";
  o << "ddim_T = " << fmt_double(c.ddim.T) << "\n"
    << "ddim_beta0 = " << fmt_double(c.ddim.beta0) << "\n"
    << "ddim_betaT = " << fmt_double(c.ddim.betaT) << "\n"
    << "edm_sigma_min = " << fmt_double(c.edm.sigma_min) << "\n"
    << "edm_sigma_max = " << fmt_double(c.edm.sigma_max) << "\n\n";
  o << "[network]\nhidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) o << (i ? "," : "") << c.hidden[i];
  o << "\nembed_dim = " << c.embedding.dim << "\n"
    << "embed_base = " << fmt_double(c.embedding.base) << "\n"
    << "embed_scale = " << fmt_double(c.embedding.scale) << "\n"
    << "activation = " << activation_name(c.activation) << "\n"
    << "dual_time = " << (c.dual_time ? "true" : "false") << "\n\n";
  o << "[training]\n"
    << "lr = " << fmt_double(c.lr) << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "steps = " << c.steps << "\n"
    << "alpha = " << fmt_double(c.alpha) << "\n"
    << "time_distribution = " << time_distribution_name(c.time_distribution) << "\n"
    << "derivative = " << (c.derivative == DerivativeMode::FiniteDifference ? "fd" : "jvp") << "\n"
    << "tangent = " << tangent_name(c.tangent) << "\n"
    << "fd_h = " << fmt_double(c.fd_h) << "\n"
    << "checkpoint_every = " << c.checkpoint_every << "\n"
    << "log_every = " << c.log_every << "\n"
    << "init_from = " << c.init_from << "\n\n";
  o << "[dataset]\nid = " << c.dataset << "\nn = " << c.dataset_n << "\n\n";
  o << "[sampler]\nsteps = " << c.sample_steps << "\nsamples = " << c.samples << "\n\n";
  o << "[run]\nseed = " << c.seed << "\nout_dir = " << c.out_dir << "\n";
  return o.str();
}

Config load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

}  // namespace cfm
