#include "isnpg/envs.hpp"

#include <array>
#include <cmath>
#include <cstdlib>

#include "isnpg/errors.hpp"
#include "isnpg/model_io.hpp"

namespace isnpg {

EnvId parse_env_id(const std::string& s) {
  if (s == "matiger") return EnvId::matiger;
  if (s == "mabc") return EnvId::mabc;
  if (s == "lbf") return EnvId::lbf;
  if (s == "coord") return EnvId::coord;
  if (s == "custom") return EnvId::custom;
  throw ParameterError("unknown environment id '" + s + "'");
}

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::matiger: return "matiger";
    case EnvId::mabc: return "mabc";
    case EnvId::lbf: return "lbf";
    case EnvId::coord: return "coord";
    case EnvId::custom: return "custom";
  }
  return "?";
}

int default_episode_horizon(const EnvParams& params) {
  if (params.episode_horizon > 0) return params.episode_horizon;
  switch (params.id) {
    case EnvId::matiger:
    case EnvId::mabc: return 10;
    default: return 50;
  }
}

namespace {

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError(std::string(what) + " must lie in [0,1]");
  }
}

void check_discount(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("discount must lie in (0,1)");
}

// Fills r_i = phi = team reward for every agent.
void set_common_reward(TabularPomg& m, std::vector<double> team) {
  m.potential = team;
  m.reward.assign(m.n_agents(), team);
}

}  // namespace

TabularPomg build_matiger(const EnvParams& params) {
  const double acc = params.listen_accuracy;
  if (!(acc > 0.5 && acc <= 1.0)) throw ParameterError("listen accuracy must lie in (0.5, 1]");
  check_discount(params.discount);

  enum { kOpenLeft = 0, kOpenRight = 1, kListen = 2 };
  TabularPomg m;
  m.name = "matiger";
  m.state_names = {"tiger-left", "tiger-right"};
  m.action_names.assign(2, {"open-left", "open-right", "listen"});
  m.observation_names.assign(2, {"hear-left", "hear-right"});
  m.discount = params.discount;
  m.initial_state_dist = {0.5, 0.5};
  m.finalize();

  const auto& ja = m.joint_actions();
  const std::size_t nu = ja.size();
  m.transition = DistTable(2);
  m.observation_kernel.assign(2, DistTable(2));
  m.initial_observation.assign(2, DistTable(2));
  std::vector<double> team(2 * nu, 0.0);
  const std::array<double, 2> uniform{0.5, 0.5};

  for (int x = 0; x < 2; ++x) {
    for (std::size_t u = 0; u < nu; ++u) {
      auto acts = ja.decode(u);
      double r = 0.0;
      bool opened = false;
      for (int a : acts) {
        if (a == kListen) {
          r -= 1.0;
        } else {
          opened = true;
          // Door a hides the tiger when a == x.
          r += (a == x) ? -100.0 : 10.0;
        }
      }
      team[m.row(x, u)] = r;
      if (opened) {
        m.transition.push_dense_row(uniform);
      } else {
        m.transition.push_point(x);
      }
    }
  }
  // Observation rows are indexed by the post-transition state.
  for (int i = 0; i < 2; ++i) {
    for (int xn = 0; xn < 2; ++xn) {
      for (std::size_t u = 0; u < nu; ++u) {
        auto acts = ja.decode(u);
        bool all_listen = acts[0] == kListen && acts[1] == kListen;
        if (all_listen) {
          std::array<double, 2> p{};
          p[xn] = acc;
          p[1 - xn] = 1.0 - acc;
          m.observation_kernel[i].push_dense_row(p);
        } else {
          m.observation_kernel[i].push_dense_row(uniform);
        }
      }
      m.initial_observation[i].push_dense_row(uniform);
    }
  }
  set_common_reward(m, std::move(team));
  m.finalize();
  return m;
}

TabularPomg build_mabc(const EnvParams& params) {
  if (params.arrival_probs.size() != 2) throw ParameterError("mabc needs two arrival probabilities");
  for (double p : params.arrival_probs) check_prob(p, "arrival probability");
  check_prob(params.collision_accuracy, "collision-observation accuracy");
  check_discount(params.discount);
  const double acc = params.collision_accuracy;

  enum { kTransmit = 0, kIdle = 1 };
  enum { kCollision = 0, kNoCollision = 1 };
  TabularPomg m;
  m.name = "mabc";
  // Bit k of the state set means node k holds a message (node 0 high bit).
  m.state_names = {"empty-empty", "empty-full", "full-empty", "full-full"};
  m.action_names.assign(2, {"transmit", "idle"});
  m.observation_names.assign(2, {"collision", "no-collision"});
  m.discount = params.discount;
  m.initial_state_dist = {0.0, 0.0, 0.0, 1.0};
  m.finalize();

  const auto& ja = m.joint_actions();
  const std::size_t nu = ja.size();
  m.transition = DistTable(4);
  m.observation_kernel.assign(2, DistTable(2));
  m.initial_observation.assign(2, DistTable(2));
  std::vector<double> team(4 * nu, 0.0);

  auto full = [](int x, int node) { return ((x >> (1 - node)) & 1) != 0; };
  for (int x = 0; x < 4; ++x) {
    for (std::size_t u = 0; u < nu; ++u) {
      auto acts = ja.decode(u);
      int senders = (acts[0] == kTransmit) + (acts[1] == kTransmit);
      std::array<bool, 2> buf{full(x, 0), full(x, 1)};
      double r = 0.0;
      if (senders == 1) {
        int node = acts[0] == kTransmit ? 0 : 1;
        if (buf[node]) {
          r = 1.0;
          buf[node] = false;
        }
      }
      team[m.row(x, u)] = r;
      // Empty buffers refill independently.
      std::array<double, 4> next{};
      for (int b0 = 0; b0 < 2; ++b0) {
        for (int b1 = 0; b1 < 2; ++b1) {
          double p = 1.0;
          std::array<int, 2> nb{b0, b1};
          for (int node = 0; node < 2; ++node) {
            if (buf[node]) {
              p *= nb[node] ? 1.0 : 0.0;
            } else {
              double a = params.arrival_probs[node];
              p *= nb[node] ? a : 1.0 - a;
            }
          }
          next[b0 * 2 + b1] = p;
        }
      }
      m.transition.push_dense_row(next);
    }
  }
  for (int i = 0; i < 2; ++i) {
    for (int xn = 0; xn < 4; ++xn) {
      for (std::size_t u = 0; u < nu; ++u) {
        auto acts = ja.decode(u);
        bool collided = acts[0] == kTransmit && acts[1] == kTransmit;
        std::array<double, 2> p{};
        p[collided ? kCollision : kNoCollision] = acc;
        p[collided ? kNoCollision : kCollision] = 1.0 - acc;
        m.observation_kernel[i].push_dense_row(p);
      }
      std::array<double, 2> p0{1.0 - acc, acc};
      m.initial_observation[i].push_dense_row(p0);
    }
  }
  set_common_reward(m, std::move(team));
  m.finalize();
  return m;
}

namespace {

enum LbfAction { kUp = 0, kDown, kLeft, kRight, kLift, kNoop };
enum Direction { kNone = 0, kNorth, kSouth, kEast, kWest, kHere };
constexpr std::array<const char*, 6> kDirNames{"none", "N", "S", "E", "W", "here"};

int direction(int from, int to, int width, int range) {
  int dr = to / width - from / width;
  int dc = to % width - from % width;
  if (std::max(std::abs(dr), std::abs(dc)) > range) return kNone;
  if (dr == 0 && dc == 0) return kHere;
  if (std::abs(dr) >= std::abs(dc)) return dr < 0 ? kNorth : kSouth;
  return dc > 0 ? kEast : kWest;
}

}  // namespace

TabularPomg build_lbf(const EnvParams& params) {
  const int w = params.grid_width, h = params.grid_height;
  if (w < 2 || h < 2) throw ParameterError("grid dimensions must be >= 2");
  if (params.sight_range < 0) throw ParameterError("sight range must be >= 0");
  if (params.food_count != 1) throw ParameterError("level-based foraging supports exactly one food item");
  check_discount(params.discount);
  const int cells = w * h;
  const std::size_t count = static_cast<std::size_t>(cells) * (cells - 1) * (cells - 2) + 1;
  if (count > params.state_cap) {
    throw ParameterError("grid " + std::to_string(w) + "x" + std::to_string(h) + " needs " +
                         std::to_string(count) + " states, over the enumeration cap " +
                         std::to_string(params.state_cap));
  }

  TabularPomg m;
  m.name = "lbf";
  std::vector<int> code(static_cast<std::size_t>(cells) * cells * cells, -1);
  auto key = [cells](int a, int b, int f) { return (a * cells + b) * cells + f; };
  struct Cfg {
    int a, b, f;
  };
  std::vector<Cfg> cfgs;
  for (int a = 0; a < cells; ++a)
    for (int b = 0; b < cells; ++b)
      for (int f = 0; f < cells; ++f) {
        if (a == b || f == a || f == b) continue;
        code[key(a, b, f)] = static_cast<int>(cfgs.size());
        cfgs.push_back({a, b, f});
        m.state_names.push_back("a0@" + std::to_string(a) + "|a1@" + std::to_string(b) +
                                "|food@" + std::to_string(f));
      }
  const int done = static_cast<int>(cfgs.size());
  m.state_names.push_back("done");
  const int nx = done + 1;

  const int ny = cells * 36 + 1;
  std::vector<std::string> obs_names;
  obs_names.reserve(ny);
  for (int c = 0; c < cells; ++c)
    for (int fd = 0; fd < 6; ++fd)
      for (int od = 0; od < 6; ++od)
        obs_names.push_back("c" + std::to_string(c) + "|food:" + kDirNames[fd] +
                            "|other:" + kDirNames[od]);
  obs_names.push_back("done");
  m.observation_names.assign(2, obs_names);
  m.action_names.assign(2, {"up", "down", "left", "right", "lift", "noop"});
  m.discount = params.discount;
  m.initial_state_dist.assign(nx, 1.0 / done);
  m.initial_state_dist[done] = 0.0;
  m.finalize();

  const auto& ja = m.joint_actions();
  const std::size_t nu = ja.size();
  m.transition = DistTable(nx);
  std::vector<double> team(static_cast<std::size_t>(nx) * nu, 0.0);

  auto observe = [&](int x, int agent) {
    if (x == done) return ny - 1;
    const Cfg& c = cfgs[x];
    int self = agent == 0 ? c.a : c.b;
    int other = agent == 0 ? c.b : c.a;
    int fd = direction(self, c.f, w, params.sight_range);
    int od = direction(self, other, w, params.sight_range);
    return (self * 6 + fd) * 6 + od;
  };
  auto adjacent = [w](int p, int q) {
    int dr = std::abs(p / w - q / w), dc = std::abs(p % w - q % w);
    return dr + dc == 1;
  };
  auto step = [&](int p, int a) {
    int r = p / w, c = p % w;
    switch (a) {
      case kUp: r -= 1; break;
      case kDown: r += 1; break;
      case kLeft: c -= 1; break;
      case kRight: c += 1; break;
      default: break;
    }
    if (r < 0 || r >= h || c < 0 || c >= w) return p;
    return r * w + c;
  };

  for (int x = 0; x < nx; ++x) {
    for (std::size_t u = 0; u < nu; ++u) {
      if (x == done) {
        m.transition.push_point(done);
        continue;
      }
      auto acts = ja.decode(u);
      const Cfg& c = cfgs[x];
      std::array<int, 2> pos{c.a, c.b};
      std::array<bool, 2> lifting{acts[0] == kLift && adjacent(c.a, c.f),
                                  acts[1] == kLift && adjacent(c.b, c.f)};
      bool collected = params.cooperative_lift ? (lifting[0] && lifting[1])
                                               : (lifting[0] || lifting[1]);
      if (collected) {
        team[m.row(x, u)] = params.lbf_reward;
        m.transition.push_point(done);
        continue;
      }
      std::array<int, 2> prop{step(pos[0], acts[0]), step(pos[1], acts[1])};
      for (int k = 0; k < 2; ++k)
        if (prop[k] == c.f) prop[k] = pos[k];
      if (prop[0] == prop[1]) prop = pos;
      // Moves into an occupied cell fail; resolve until stable.
      for (int it = 0; it < 3; ++it) {
        for (int k = 0; k < 2; ++k)
          if (prop[k] == prop[1 - k] || (prop[k] == pos[1 - k] && prop[1 - k] == pos[1 - k]))
            prop[k] = pos[k];
        if (prop[0] == pos[1] && prop[1] == pos[0]) prop = pos;
      }
      m.transition.push_point(code[key(prop[0], prop[1], c.f)]);
    }
  }
  m.observation_kernel.assign(2, DistTable(ny));
  m.initial_observation.assign(2, DistTable(ny));
  for (int i = 0; i < 2; ++i) {
    for (int xn = 0; xn < nx; ++xn) {
      int y = observe(xn, i);
      for (std::size_t u = 0; u < nu; ++u) m.observation_kernel[i].push_point(y);
      m.initial_observation[i].push_point(y);
    }
  }
  set_common_reward(m, std::move(team));
  m.finalize();
  return m;
}

TabularPomg build_coordination(const EnvParams& params) {
  check_discount(params.discount);
  TabularPomg m;
  m.name = "coord";
  m.state_names = {"s0", "s1"};
  m.action_names.assign(2, {"a0", "a1"});
  m.observation_names.assign(2, {"s0", "s1"});
  m.discount = params.discount;
  m.initial_state_dist = {0.5, 0.5};
  m.finalize();

  // Matching on action 0 pays more in s0, matching on action 1 in s1; the
  // matched action steers the next state.
  const std::array<std::array<double, 4>, 2> pay{{{1.0, 0.0, 0.0, 0.4}, {0.2, 0.0, 0.0, 0.8}}};
  const auto& ja = m.joint_actions();
  m.transition = DistTable(2);
  m.observation_kernel.assign(2, DistTable(2));
  m.initial_observation.assign(2, DistTable(2));
  std::vector<double> team(2 * ja.size(), 0.0);
  for (int x = 0; x < 2; ++x) {
    for (std::size_t u = 0; u < ja.size(); ++u) {
      auto a = ja.decode(u);
      team[m.row(x, u)] = pay[x][u];
      std::array<double, 2> next{0.5, 0.5};
      if (a[0] == a[1]) {
        next[a[0]] = 0.9;
        next[1 - a[0]] = 0.1;
      }
      m.transition.push_dense_row(next);
    }
  }
  for (int i = 0; i < 2; ++i) {
    for (int xn = 0; xn < 2; ++xn) {
      for (std::size_t u = 0; u < ja.size(); ++u) m.observation_kernel[i].push_point(xn);
      m.initial_observation[i].push_point(xn);
    }
  }
  set_common_reward(m, std::move(team));
  m.finalize();
  return m;
}

TabularPomg build_env(const EnvParams& params) {
  switch (params.id) {
    case EnvId::matiger: return build_matiger(params);
    case EnvId::mabc: return build_mabc(params);
    case EnvId::lbf: return build_lbf(params);
    case EnvId::coord: return build_coordination(params);
    case EnvId::custom:
      if (params.model_path.empty()) throw ParameterError("custom environment needs model_path");
      return load_model(params.model_path);
  }
  throw ParameterError("unknown environment");
}

}  // namespace isnpg
