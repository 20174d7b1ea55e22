#include "isnpg/config.hpp"

#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include <toml.hpp>

#include "isnpg/errors.hpp"
#include "isnpg/model_io.hpp"

namespace isnpg {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  std::string s = os.str();
  // Keep the value a float on reload.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

struct Field {
  std::string section;  // empty for top level
  std::string key;
  std::string doc;
  std::function<void(const toml::node&, ExperimentConfig&, const std::string&)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw LoadError(where + ": " + what);
}

double as_double(const toml::node& n, const std::string& where) {
  if (auto v = n.value<double>()) return *v;
  bad(where, "expected a number");
}

std::int64_t as_int(const toml::node& n, const std::string& where) {
  if (!n.is_integer()) bad(where, "expected an integer");
  return *n.value<std::int64_t>();
}

std::size_t as_count(const toml::node& n, const std::string& where) {
  std::int64_t v = as_int(n, where);
  if (v < 0) bad(where, "must be >= 0");
  return static_cast<std::size_t>(v);
}

bool as_bool(const toml::node& n, const std::string& where) {
  if (!n.is_boolean()) bad(where, "expected true or false");
  return *n.value<bool>();
}

std::string as_string(const toml::node& n, const std::string& where) {
  if (!n.is_string()) bad(where, "expected a string");
  return *n.value<std::string>();
}

template <class Fn>
auto wrap(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const ParameterError& e) {
    bad(where, e.what());
  }
}

#define NUM(sec, name, member, doc)                                                             \
  Field {                                                                                       \
    sec, name, doc, [](const toml::node& n, ExperimentConfig& c, const std::string& w) {        \
      c.member = as_double(n, w);                                                               \
    },                                                                                          \
        [](const ExperimentConfig& c) { return fmt(c.member); }                                 \
  }
#define COUNT(sec, name, member, doc)                                                           \
  Field {                                                                                       \
    sec, name, doc, [](const toml::node& n, ExperimentConfig& c, const std::string& w) {        \
      c.member = as_count(n, w);                                                                \
    },                                                                                          \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                      \
  }
#define INT(sec, name, member, doc)                                                             \
  Field {                                                                                       \
    sec, name, doc, [](const toml::node& n, ExperimentConfig& c, const std::string& w) {        \
      c.member = static_cast<int>(as_int(n, w));                                                \
    },                                                                                          \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                      \
  }
#define BOOL(sec, name, member, doc)                                                            \
  Field {                                                                                       \
    sec, name, doc, [](const toml::node& n, ExperimentConfig& c, const std::string& w) {        \
      c.member = as_bool(n, w);                                                                 \
    },                                                                                          \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }      \
  }
#define STR(sec, name, member, doc)                                                             \
  Field {                                                                                       \
    sec, name, doc, [](const toml::node& n, ExperimentConfig& c, const std::string& w) {        \
      c.member = as_string(n, w);                                                               \
    },                                                                                          \
        [](const ExperimentConfig& c) { return quote(c.member); }                               \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"", "seed", "u64 seed for initial policies, rollouts and sweeps (default 0)",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              std::int64_t v = as_int(n, w);
              c.seed = static_cast<std::uint64_t>(v);
            },
            [](const ExperimentConfig& c) { return std::to_string(static_cast<std::int64_t>(c.seed)); }},

      Field{"env", "id", "matiger | mabc | lbf | coord | custom (default mabc)",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              c.env.id = wrap(w, [&] { return parse_env_id(as_string(n, w)); });
            },
            [](const ExperimentConfig& c) { return quote(to_string(c.env.id)); }},
      NUM("env", "discount", env.discount, "discount factor in (0,1) (default 0.95)"),
      NUM("env", "listen_accuracy", env.listen_accuracy, "tiger: correct hearing probability (default 0.85)"),
      Field{"env", "arrival_probs", "channel: per-node arrival probabilities (default [0.9, 0.1])",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              const auto* arr = n.as_array();
              if (!arr) bad(w, "expected an array of numbers");
              c.env.arrival_probs.clear();
              for (const auto& e : *arr) c.env.arrival_probs.push_back(as_double(e, w));
            },
            [](const ExperimentConfig& c) {
              std::string s = "[";
              for (std::size_t k = 0; k < c.env.arrival_probs.size(); ++k) {
                s += (k ? ", " : "") + fmt(c.env.arrival_probs[k]);
              }
              return s + "]";
            }},
      NUM("env", "collision_accuracy", env.collision_accuracy, "channel: feedback accuracy (default 0.9)"),
      INT("env", "grid_width", env.grid_width, "foraging: grid width (default 4)"),
      INT("env", "grid_height", env.grid_height, "foraging: grid height (default 4)"),
      INT("env", "sight_range", env.sight_range, "foraging: sight range (default 1)"),
      INT("env", "food_count", env.food_count, "foraging: food items, must be 1 (default 1)"),
      BOOL("env", "cooperative_lift", env.cooperative_lift, "foraging: both agents must lift (default false)"),
      NUM("env", "lbf_reward", env.lbf_reward, "foraging: shared reward for collecting (default 1)"),
      COUNT("env", "state_cap", env.state_cap, "foraging: state enumeration cap (default 200000)"),
      INT("env", "episode_horizon", env.episode_horizon, "rollout length for logged trajectories; 0 = env default"),
      STR("env", "model_path", env.model_path, "custom: model JSON path"),

      INT("internal_state", "t_w", t_w, "window length (default 0, reactive)"),
      COUNT("internal_state", "cap", internal_state_cap, "cap on |W| * prod |L_i| (default 1000000)"),

      COUNT("train", "iterations", train.iterations, "T (default 100)"),
      Field{"train", "eta", "\"theorem\" or a positive number (default \"theorem\")",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              if (n.is_string()) {
                if (*n.value<std::string>() != "theorem") bad(w, "expected \"theorem\" or a number");
                c.train.eta_theorem = true;
                c.train.eta = 0.0;
                return;
              }
              c.train.eta = as_double(n, w);
              if (!(c.train.eta > 0.0)) bad(w, "must be > 0");
              c.train.eta_theorem = false;
            },
            [](const ExperimentConfig& c) {
              return c.train.eta_theorem ? std::string("\"theorem\"") : fmt(c.train.eta);
            }},
      Field{"train", "advantage", "exact | monte-carlo (default exact)",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              c.train.source = wrap(w, [&] { return parse_advantage_source(as_string(n, w)); });
            },
            [](const ExperimentConfig& c) { return quote(to_string(c.train.source)); }},
      COUNT("train", "mc_samples", train.mc_samples, "trajectories per iteration (default 20000)"),
      INT("train", "mc_horizon", train.mc_horizon, "rollout length; 0 = smallest H with beta^H <= 1e-3"),
      Field{"train", "mc_visit", "discounted-every | first (default discounted-every)",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              std::string s = as_string(n, w);
              if (s == "discounted-every") {
                c.train.mc_visit = McVisit::discounted_every;
              } else if (s == "first") {
                c.train.mc_visit = McVisit::first;
              } else {
                bad(w, "expected discounted-every or first");
              }
            },
            [](const ExperimentConfig& c) {
              return quote(c.train.mc_visit == McVisit::first ? "first" : "discounted-every");
            }},
      Field{"train", "init", "uniform | random (default uniform)",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              std::string s = as_string(n, w);
              if (s == "uniform") {
                c.train.init = InitMode::uniform;
              } else if (s == "random") {
                c.train.init = InitMode::random;
              } else {
                bad(w, "expected uniform or random");
              }
            },
            [](const ExperimentConfig& c) {
              return quote(c.train.init == InitMode::random ? "random" : "uniform");
            }},
      NUM("train", "init_scale", train.init_scale, "random init: theta uniform in [-scale, scale] (default 1)"),
      COUNT("train", "log_every", train.log_every, "record cadence (default 1)"),
      COUNT("train", "gap_every", train.gap_every, "NE-gap cadence, 0 = off (default 10)"),
      COUNT("train", "db_every", train.db_every, "d_b cadence, 0 = off (default 10)"),
      INT("train", "belief_horizon", train.belief_horizon, "history depth for d_b (default 6)"),
      COUNT("train", "belief_cap", train.belief_cap, "belief tree node cap (default 2000000)"),
      COUNT("train", "chain_cap", train.chain_cap, "augmented chain state cap (default 2000000)"),
      BOOL("train", "record_wall_time", train.record_wall_time, "fill the wall_ms column (default false)"),

      Field{"eval", "br_method", "exhaustive | npg-br | auto (default auto)",
            [](const toml::node& n, ExperimentConfig& c, const std::string& w) {
              c.eval.br.method = wrap(w, [&] { return parse_br_method(as_string(n, w)); });
            },
            [](const ExperimentConfig& c) { return quote(to_string(c.eval.br.method)); }},
      COUNT("eval", "br_budget", eval.br.budget, "max deterministic tables for exhaustive (default 4096)"),
      COUNT("eval", "br_iterations", eval.br.npg_iterations, "npg-br iteration budget (default 2000)"),
      NUM("eval", "br_eta", eval.br.npg_eta, "npg-br step size; 0 = 1 (default 0)"),
      NUM("eval", "br_tolerance", eval.br.npg_tolerance, "npg-br stop when max advantage < this (default 1e-4)"),
      STR("eval", "policy", eval.policy, "policy JSON for the eval command"),
      COUNT("eval", "lemma_instances", eval.lemma_instances, "random instances per lemma check (default 50)"),
      NUM("eval", "lemma_discount", eval.lemma_discount, "discount for lemma sweeps; 0 = env discount"),
      INT("eval", "lemma_horizon", eval.lemma_horizon, "belief depth for lemma sweeps (default 6)"),
      NUM("eval", "lemma_init_scale", eval.lemma_init_scale, "theta scale of random sweep policies (default 2)"),
      COUNT("eval", "theorem_iterations", eval.theorem_iterations, "T of the bound-check run (default 200)"),

      STR("output", "dir", out_dir, "output directory (default out)"),
  };
  return table;
}

#undef NUM
#undef COUNT
#undef INT
#undef BOOL
#undef STR

void validate(const ExperimentConfig& c, const std::string& source) {
  auto fail = [&](const std::string& key, const std::string& what) { bad(source + ": " + key, what); };
  if (!(c.env.discount > 0.0 && c.env.discount < 1.0)) fail("env.discount", "must lie in (0,1)");
  if (c.t_w < 0) fail("internal_state.t_w", "must be >= 0");
  if (c.train.iterations < 1) fail("train.iterations", "must be >= 1");
  if (c.train.mc_horizon < 0) fail("train.mc_horizon", "must be >= 0");
  if (c.train.belief_horizon < 0) fail("train.belief_horizon", "must be >= 0");
  if (c.eval.lemma_horizon < 0) fail("eval.lemma_horizon", "must be >= 0");
  if (c.eval.lemma_discount < 0.0 || c.eval.lemma_discount >= 1.0) fail("eval.lemma_discount", "must lie in [0,1)");
  if (c.eval.br.npg_eta < 0.0) fail("eval.br_eta", "must be >= 0");
  if (c.eval.theorem_iterations < 1) fail("eval.theorem_iterations", "must be >= 1");
  if (c.env.id == EnvId::custom && c.env.model_path.empty()) fail("env.model_path", "required for custom");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  toml::table doc;
  try {
    doc = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw LoadError(os.str());
  }
  ExperimentConfig cfg;
  const auto& table = fields();
  auto find = [&](const std::string& section, const std::string& key) -> const Field* {
    for (const auto& f : table) {
      if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
  };
  auto section_known = [&](const std::string& s) {
    for (const auto& f : table) {
      if (f.section == s) return true;
    }
    return false;
  };
  for (const auto& [k, node] : doc) {
    const std::string key(k.str());
    if (const auto* sub = node.as_table()) {
      if (!section_known(key)) bad(source, "unknown section [" + key + "]");
      for (const auto& [k2, leaf] : *sub) {
        const std::string name(k2.str());
        const Field* f = find(key, name);
        if (!f) bad(source, "unknown key '" + name + "' in [" + key + "]");
        f->read(leaf, cfg, source + ": " + key + "." + name);
      }
      continue;
    }
    const Field* f = find("", key);
    if (!f) bad(source, "unknown top-level key '" + key + "'");
    f->read(node, cfg, source + ": " + key);
  }
  cfg.train.seed = cfg.seed;
  cfg.train.br = cfg.eval.br;
  validate(cfg, source);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw LoadError(e.what());
  }
  return parse_config(text, path);
}

std::string config_to_toml(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string section = "\x01";
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      if (!section.empty()) os << "\n[" << section << "]\n";
    }
    os << f.key << " = " << f.write(c) << "\n";
  }
  return os.str();
}

std::string config_reference() {
  std::ostringstream os;
  std::string section = "\x01";
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      os << (section.empty() ? "top level" : "[" + section + "]") << "\n";
    }
    os << "  " << f.key << ": " << f.doc << "\n";
  }
  return os.str();
}

std::string toml_library_version() {
  return std::to_string(TOML_LIB_MAJOR) + "." + std::to_string(TOML_LIB_MINOR) + "." + std::to_string(TOML_LIB_PATCH);
}

}  // namespace isnpg
