#pragma once

#include <charconv>
#include <fstream>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ppsl/encoder.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/prompt.hpp"
#include "ppsl/sampler.hpp"

namespace ppsl {

struct DataConfig {
  std::string graph;
  std::string communities;
  std::size_t known_count = 100;
  std::size_t query_count = 1000;
  SplitMode split = SplitMode::Disjoint;
};

struct SynthConfig {
  std::size_t blocks = 10;
  std::size_t size = 8;
  double p_in = 0.3;
  double p_out = 0.01;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t ego_cap = 2000;
  int fallback_ego_k = 2;
  unsigned threads = 1;
  bool timing = false;
};

struct PipelineConfig {
  DataConfig data;
  SynthConfig synth;
  EncoderConfig encoder;
  AgentConfig agent;
  PromptConfig prompt;
  RunConfig run;

  /// Sets every component seed.
  void set_seed(std::uint64_t s) {
    run.seed = s;
    encoder.seed = s;
    agent.seed = s;
    prompt.seed = s;
  }

  /// Component ego caps follow the run-level knob.
  void sync() {
    encoder.ego_cap = run.ego_cap;
    prompt.ego_cap = run.ego_cap;
  }

  void validate() const {
    encoder.validate();
    agent.validate();
    prompt.validate();
    if (!(synth.p_out >= 0 && synth.p_out < synth.p_in && synth.p_in <= 1))
      throw Error("config: synth needs 0 <= p_out < p_in <= 1");
    if (synth.blocks == 0 || synth.size == 0) throw Error("config: synth blocks and size must be positive");
    if (data.known_count == 0 || data.query_count == 0) throw Error("config: known_count and query_count must be positive");
    if (run.ego_cap == 0 || run.fallback_ego_k < 0 || run.threads == 0) throw Error("config: invalid run settings");
  }
};

namespace detail {

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(SplitMode v) { return v == SplitMode::Disjoint ? "disjoint" : "per_query"; }
template <class T>
  requires std::is_integral_v<T>
std::string format_value(T v) {
  return std::to_string(v);
}

inline void parse_value(const std::string& s, std::string& out) { out = s; }
inline void parse_value(const std::string& s, bool& out) {
  if (s == "true" || s == "1")
    out = true;
  else if (s == "false" || s == "0")
    out = false;
  else
    throw Error("expected true/false, got '" + s + "'");
}
inline void parse_value(const std::string& s, SplitMode& out) {
  if (s == "disjoint")
    out = SplitMode::Disjoint;
  else if (s == "per_query")
    out = SplitMode::PerQuery;
  else
    throw Error("expected disjoint/per_query, got '" + s + "'");
}
inline void parse_value(const std::string& s, double& out) {
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw Error("expected a number, got '" + s + "'");
}
template <class T>
  requires std::is_integral_v<T>
void parse_value(const std::string& s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("expected an integer, got '" + s + "'");
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <class Access>
Field field(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const PipelineConfig& c) { return format_value(access(c)); },
          [access](PipelineConfig& c, const std::string& s) { parse_value(s, access(c)); }};
}

}  // namespace detail

/// Every recognised key, in serialization order.
inline const std::vector<detail::Field>& config_fields() {
  using detail::field;
  static const std::vector<detail::Field> fields = {
      field("data", "graph", [](auto& c) -> auto& { return c.data.graph; }),
      field("data", "communities", [](auto& c) -> auto& { return c.data.communities; }),
      field("data", "known_count", [](auto& c) -> auto& { return c.data.known_count; }),
      field("data", "query_count", [](auto& c) -> auto& { return c.data.query_count; }),
      field("data", "split", [](auto& c) -> auto& { return c.data.split; }),
      field("synth", "blocks", [](auto& c) -> auto& { return c.synth.blocks; }),
      field("synth", "size", [](auto& c) -> auto& { return c.synth.size; }),
      field("synth", "p_in", [](auto& c) -> auto& { return c.synth.p_in; }),
      field("synth", "p_out", [](auto& c) -> auto& { return c.synth.p_out; }),
      field("encoder", "batch", [](auto& c) -> auto& { return c.encoder.batch; }),
      field("encoder", "epochs", [](auto& c) -> auto& { return c.encoder.epochs; }),
      field("encoder", "lr", [](auto& c) -> auto& { return c.encoder.lr; }),
      field("encoder", "hidden", [](auto& c) -> auto& { return c.encoder.hidden; }),
      field("encoder", "dim", [](auto& c) -> auto& { return c.encoder.dim; }),
      field("encoder", "k", [](auto& c) -> auto& { return c.encoder.k; }),
      field("encoder", "tau", [](auto& c) -> auto& { return c.encoder.tau; }),
      field("encoder", "rho", [](auto& c) -> auto& { return c.encoder.rho; }),
      field("encoder", "lambda", [](auto& c) -> auto& { return c.encoder.lambda; }),
      field("encoder", "seed", [](auto& c) -> auto& { return c.encoder.seed; }),
      field("agent", "batch", [](auto& c) -> auto& { return c.agent.batch; }),
      field("agent", "epochs", [](auto& c) -> auto& { return c.agent.epochs; }),
      field("agent", "dim", [](auto& c) -> auto& { return c.agent.dim; }),
      field("agent", "gpn_layers", [](auto& c) -> auto& { return c.agent.gpn_layers; }),
      field("agent", "mlp_layers", [](auto& c) -> auto& { return c.agent.mlp_layers; }),
      field("agent", "lr", [](auto& c) -> auto& { return c.agent.lr; }),
      field("agent", "gamma", [](auto& c) -> auto& { return c.agent.gamma; }),
      field("agent", "seed", [](auto& c) -> auto& { return c.agent.seed; }),
      field("prompt", "epochs", [](auto& c) -> auto& { return c.prompt.epochs; }),
      field("prompt", "lr", [](auto& c) -> auto& { return c.prompt.lr; }),
      field("prompt", "k", [](auto& c) -> auto& { return c.prompt.k; }),
      field("prompt", "m", [](auto& c) -> auto& { return c.prompt.m; }),
      field("prompt", "alpha", [](auto& c) -> auto& { return c.prompt.alpha; }),
      field("prompt", "hidden", [](auto& c) -> auto& { return c.prompt.hidden; }),
      field("prompt", "all_centers", [](auto& c) -> auto& { return c.prompt.all_centers; }),
      field("prompt", "seed", [](auto& c) -> auto& { return c.prompt.seed; }),
      field("run", "seed", [](auto& c) -> auto& { return c.run.seed; }),
      field("run", "ego_cap", [](auto& c) -> auto& { return c.run.ego_cap; }),
      field("run", "fallback_ego_k", [](auto& c) -> auto& { return c.run.fallback_ego_k; }),
      field("run", "threads", [](auto& c) -> auto& { return c.run.threads; }),
      field("run", "timing", [](auto& c) -> auto& { return c.run.timing; }),
  };
  return fields;
}

/// Applies `section.key = value`; unknown keys are errors.
inline void set_config_value(PipelineConfig& cfg, const std::string& section, const std::string& key,
                             const std::string& value) {
  for (const auto& f : config_fields())
    if (f.section == section && f.key == key) {
      try {
        f.set(cfg, value);
      } catch (const Error& e) {
        throw Error("config " + section + "." + key + ": " + e.what());
      }
      return;
    }
  throw Error("config: unknown key '" + section + "." + key + "'");
}

inline PipelineConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  PipelineConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error("config: key '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) set_config_value(cfg, section, key, value.get_value<std::string>());
  }
  cfg.sync();
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  return parse_config(in);
}

inline std::string serialize_config(const PipelineConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : config_fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

/// FNV-1a over the serialized configuration.
inline std::string config_fingerprint(const PipelineConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ppsl
