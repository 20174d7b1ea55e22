#include "isnpg/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "isnpg/errors.hpp"

namespace isnpg {

using nlohmann::json;

namespace {

constexpr double kLoadTolerance = 1e-9;

json row_to_json(const DistTable& t, std::size_t row) {
  if (t.width() <= kDenseRowLimit) return t.dense_row(row);
  json out;
  out["idx"] = std::vector<int>(t.indices(row).begin(), t.indices(row).end());
  out["p"] = std::vector<double>(t.probs(row).begin(), t.probs(row).end());
  return out;
}

// Table with rows indexed by (x, u) as nested arrays [x][u].
json table_to_json(const DistTable& t, std::size_t nx, std::size_t nu) {
  json out = json::array();
  for (std::size_t x = 0; x < nx; ++x) {
    json per_u = json::array();
    for (std::size_t u = 0; u < nu; ++u) per_u.push_back(row_to_json(t, x * nu + u));
    out.push_back(std::move(per_u));
  }
  return out;
}

json matrix_to_json(const std::vector<double>& flat, std::size_t nx, std::size_t nu) {
  json out = json::array();
  for (std::size_t x = 0; x < nx; ++x) {
    out.push_back(std::vector<double>(flat.begin() + x * nu, flat.begin() + (x + 1) * nu));
  }
  return out;
}

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
  throw LoadError(field + ": " + msg);
}

const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) fail(key, "missing");
  return doc.at(key);
}

std::vector<std::string> string_list(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) fail(field, "expected a nonempty array of names");
  std::vector<std::string> out;
  for (const auto& s : j) {
    if (!s.is_string()) fail(field, "expected strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(field, "non-finite value");
  return v;
}

int integer(const json& j, const std::string& field) {
  if (!j.is_number_integer()) fail(field, "expected an integer");
  return j.get<int>();
}

void read_row(const json& j, DistTable& t, const std::string& field) {
  std::vector<int> idx;
  std::vector<double> p;
  if (j.is_array()) {
    if (j.size() != t.width()) {
      fail(field, "dense row has " + std::to_string(j.size()) + " entries, expected " +
                      std::to_string(t.width()));
    }
    std::vector<double> dense;
    for (std::size_t k = 0; k < j.size(); ++k) dense.push_back(number(j[k], field));
    for (std::size_t k = 0; k < dense.size(); ++k) {
      if (dense[k] < 0.0) fail(field, "negative probability");
    }
    t.push_dense_row(dense);
  } else if (j.is_object()) {
    const json& ji = require(j, "idx");
    const json& jp = require(j, "p");
    if (!ji.is_array() || !jp.is_array() || ji.size() != jp.size()) {
      fail(field, "sparse row needs equal-length idx and p arrays");
    }
    for (std::size_t k = 0; k < ji.size(); ++k) {
      int c = integer(ji[k], field);
      if (c < 0 || static_cast<std::size_t>(c) >= t.width()) fail(field, "index out of range");
      double v = number(jp[k], field);
      if (v < 0.0) fail(field, "negative probability");
      idx.push_back(c);
      p.push_back(v);
    }
    t.push_row(idx, p);
  } else {
    fail(field, "expected a dense array or {idx, p}");
  }
  double s = t.row_sum(t.rows() - 1);
  if (std::abs(s - 1.0) > kLoadTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "row sums to " << s;
    fail(field, os.str());
  }
}

DistTable read_table(const json& j, std::size_t nx, std::size_t nu, std::size_t width,
                     const std::string& field) {
  if (!j.is_array() || j.size() != nx) fail(field, "expected " + std::to_string(nx) + " state entries");
  DistTable t(width);
  for (std::size_t x = 0; x < nx; ++x) {
    const json& per_u = j[x];
    if (!per_u.is_array() || per_u.size() != nu) {
      fail(field + "[" + std::to_string(x) + "]", "expected " + std::to_string(nu) + " joint-action rows");
    }
    for (std::size_t u = 0; u < nu; ++u) {
      read_row(per_u[u], t, field + "[" + std::to_string(x) + "][" + std::to_string(u) + "]");
    }
  }
  return t;
}

std::vector<double> read_matrix(const json& j, std::size_t nx, std::size_t nu,
                                const std::string& field) {
  if (!j.is_array() || j.size() != nx) fail(field, "expected " + std::to_string(nx) + " state entries");
  std::vector<double> out;
  out.reserve(nx * nu);
  for (std::size_t x = 0; x < nx; ++x) {
    if (!j[x].is_array() || j[x].size() != nu) {
      fail(field + "[" + std::to_string(x) + "]", "expected " + std::to_string(nu) + " entries");
    }
    for (std::size_t u = 0; u < nu; ++u) {
      out.push_back(number(j[x][u], field + "[" + std::to_string(x) + "][" + std::to_string(u) + "]"));
    }
  }
  return out;
}

std::vector<int> int_list(const json& j, const std::string& field) {
  if (!j.is_array()) fail(field, "expected an integer array");
  std::vector<int> out;
  for (const auto& v : j) out.push_back(integer(v, field));
  return out;
}

json compressor_to_json(const CompressorTables& c) {
  json out;
  out["num_shared"] = c.num_shared;
  out["initial_shared"] = c.initial_shared;
  out["shared_update"] = c.shared_update;
  out["num_local"] = c.num_local;
  out["initial_local"] = c.initial_local;
  out["local_update"] = c.local_update;
  return out;
}

CompressorTables compressor_from_json(const json& j) {
  CompressorTables c;
  c.num_shared = integer(require(j, "num_shared"), "compressor.num_shared");
  c.initial_shared = integer(require(j, "initial_shared"), "compressor.initial_shared");
  c.shared_update = int_list(require(j, "shared_update"), "compressor.shared_update");
  c.num_local = int_list(require(j, "num_local"), "compressor.num_local");
  c.initial_local = int_list(require(j, "initial_local"), "compressor.initial_local");
  const json& lu = require(j, "local_update");
  if (!lu.is_array()) fail("compressor.local_update", "expected per-agent arrays");
  for (std::size_t i = 0; i < lu.size(); ++i) {
    c.local_update.push_back(int_list(lu[i], "compressor.local_update[" + std::to_string(i) + "]"));
  }
  return c;
}

}  // namespace

json model_to_json(const TabularPomg& m) {
  const std::size_t nx = m.state_names.size();
  const std::size_t nu = m.num_joint_actions();
  json doc;
  doc["name"] = m.name;
  doc["n_agents"] = m.n_agents();
  doc["states"] = m.state_names;
  doc["observations"] = m.observation_names;
  doc["actions"] = m.action_names;
  doc["discount"] = m.discount;
  doc["initial_state_dist"] = m.initial_state_dist;
  doc["transition"] = table_to_json(m.transition, nx, nu);
  json obs = json::array();
  for (const auto& t : m.observation_kernel) obs.push_back(table_to_json(t, nx, nu));
  doc["observation_kernel"] = std::move(obs);
  json init = json::array();
  for (const auto& t : m.initial_observation) {
    json rows = json::array();
    for (std::size_t x = 0; x < nx; ++x) rows.push_back(row_to_json(t, x));
    init.push_back(std::move(rows));
  }
  doc["initial_observation_kernel"] = std::move(init);
  json rew = json::array();
  for (const auto& r : m.reward) rew.push_back(matrix_to_json(r, nx, nu));
  doc["reward"] = std::move(rew);
  doc["potential"] = matrix_to_json(m.potential, nx, nu);
  if (m.compressor) doc["compressor"] = compressor_to_json(*m.compressor);
  return doc;
}

TabularPomg model_from_json(const json& doc) {
  if (!doc.is_object()) fail("<root>", "expected a JSON object");
  TabularPomg m;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) fail("name", "expected a string");
    m.name = doc["name"].get<std::string>();
  }
  const int n = integer(require(doc, "n_agents"), "n_agents");
  if (n < 1) fail("n_agents", "must be >= 1");
  m.state_names = string_list(require(doc, "states"), "states");
  const json& jo = require(doc, "observations");
  const json& ja = require(doc, "actions");
  if (!jo.is_array() || static_cast<int>(jo.size()) != n) fail("observations", "expected one list per agent");
  if (!ja.is_array() || static_cast<int>(ja.size()) != n) fail("actions", "expected one list per agent");
  for (int i = 0; i < n; ++i) {
    m.observation_names.push_back(string_list(jo[i], "observations[" + std::to_string(i) + "]"));
    m.action_names.push_back(string_list(ja[i], "actions[" + std::to_string(i) + "]"));
  }
  m.discount = number(require(doc, "discount"), "discount");
  if (!(m.discount > 0.0 && m.discount < 1.0)) fail("discount", "must lie strictly inside (0,1)");
  m.finalize();

  const std::size_t nx = m.state_names.size();
  const std::size_t nu = m.num_joint_actions();

  const json& jmu = require(doc, "initial_state_dist");
  if (!jmu.is_array() || jmu.size() != nx) fail("initial_state_dist", "expected one entry per state");
  double mass = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    double p = number(jmu[x], "initial_state_dist");
    if (p < 0.0) fail("initial_state_dist", "negative probability");
    m.initial_state_dist.push_back(p);
    mass += p;
  }
  if (std::abs(mass - 1.0) > kLoadTolerance) fail("initial_state_dist", "does not sum to 1");

  m.transition = read_table(require(doc, "transition"), nx, nu, nx, "transition");
  const json& jk = require(doc, "observation_kernel");
  if (!jk.is_array() || static_cast<int>(jk.size()) != n) fail("observation_kernel", "expected one table per agent");
  for (int i = 0; i < n; ++i) {
    m.observation_kernel.push_back(read_table(jk[i], nx, nu, m.num_observations(i),
                                              "observation_kernel[" + std::to_string(i) + "]"));
  }
  if (doc.contains("initial_observation_kernel")) {
    const json& ji = doc["initial_observation_kernel"];
    if (!ji.is_array() || static_cast<int>(ji.size()) != n) {
      fail("initial_observation_kernel", "expected one table per agent");
    }
    for (int i = 0; i < n; ++i) {
      const std::string field = "initial_observation_kernel[" + std::to_string(i) + "]";
      if (!ji[i].is_array() || ji[i].size() != nx) fail(field, "expected one row per state");
      DistTable t(m.num_observations(i));
      for (std::size_t x = 0; x < nx; ++x) read_row(ji[i][x], t, field + "[" + std::to_string(x) + "]");
      m.initial_observation.push_back(std::move(t));
    }
  } else {
    // Without an explicit kernel the first observation uses joint action 0.
    for (int i = 0; i < n; ++i) {
      DistTable t(m.num_observations(i));
      for (std::size_t x = 0; x < nx; ++x) {
        auto row = m.row(static_cast<int>(x), 0);
        t.push_row(m.observation_kernel[i].indices(row), m.observation_kernel[i].probs(row));
      }
      m.initial_observation.push_back(std::move(t));
    }
  }

  const json& jr = require(doc, "reward");
  if (!jr.is_array() || static_cast<int>(jr.size()) != n) fail("reward", "expected one table per agent");
  for (int i = 0; i < n; ++i) {
    m.reward.push_back(read_matrix(jr[i], nx, nu, "reward[" + std::to_string(i) + "]"));
  }
  m.potential = read_matrix(require(doc, "potential"), nx, nu, "potential");
  if (doc.contains("compressor")) m.compressor = compressor_from_json(doc["compressor"]);
  m.finalize();
  return m;
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void save_model(const TabularPomg& model, const std::string& path) {
  write_text_file(path, dump_json(model_to_json(model)));
}

TabularPomg load_model(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw LoadError(path + ": " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace isnpg
