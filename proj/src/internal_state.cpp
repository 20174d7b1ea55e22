#include "isnpg/internal_state.hpp"

#include <limits>
#include <sstream>

#include "isnpg/errors.hpp"

namespace isnpg {

namespace {

std::size_t checked_pow(std::size_t base, int exp, std::size_t cap, const char* what) {
  std::size_t out = 1;
  for (int k = 0; k < exp; ++k) {
    if (out > cap / base) {
      throw SizeError(std::string(what) + " exceeds the enumeration cap " + std::to_string(cap),
                      std::numeric_limits<std::uint64_t>::max());
    }
    out *= base;
  }
  return out;
}

}  // namespace

InternalStateSpec InternalStateSpec::window(const TabularPomg& model, int t_w, std::size_t cap) {
  if (t_w < 0) throw ParameterError("t_w must be >= 0");
  InternalStateSpec s;
  s.window_length_ = t_w;
  const int n = model.n_agents();
  for (int i = 0; i < n; ++i) {
    s.num_obs_.push_back(model.num_observations(i));
    s.num_act_.push_back(model.num_actions(i));
  }
  // Exact size as a double first so the error can report it.
  long double joint = 1.0L;
  for (int i = 0; i < n; ++i) {
    long double slot_w = static_cast<long double>(s.num_obs_[i]) + 1.0L;
    long double slot_l = static_cast<long double>(s.num_obs_[i]) * s.num_act_[i] + 1.0L;
    for (int k = 0; k < t_w; ++k) joint *= slot_w * slot_l;
  }
  if (joint > static_cast<long double>(cap)) {
    long double clamp = std::numeric_limits<std::uint64_t>::max();
    auto required = static_cast<std::uint64_t>(joint < clamp ? joint : clamp);
    std::ostringstream os;
    os << "window t_w=" << t_w << " needs |W|*prod|L_i| = " << required
       << " internal states, over the cap " << cap;
    throw SizeError(os.str(), required);
  }

  s.shared_block_.resize(n);
  s.shared_stride_.resize(n);
  s.num_local_.resize(n);
  s.initial_local_.assign(n, 0);
  s.local_top_.resize(n);
  for (int i = 0; i < n; ++i) {
    s.shared_block_[i] = checked_pow(s.num_obs_[i] + 1, t_w, cap, "shared window");
    std::size_t q = static_cast<std::size_t>(s.num_obs_[i]) * s.num_act_[i] + 1;
    s.num_local_[i] = checked_pow(q, t_w, cap, "local window");
    s.local_top_[i] = t_w > 0 ? s.num_local_[i] / q : 1;
  }
  s.num_shared_ = 1;
  for (int i = n; i-- > 0;) {
    s.shared_stride_[i] = s.num_shared_;
    s.num_shared_ *= s.shared_block_[i];
  }
  // All-padding windows are digit 0 everywhere.
  s.initial_shared_ = 0;
  return s;
}

InternalStateSpec InternalStateSpec::from_tables(const TabularPomg& model,
                                                 const CompressorTables& t) {
  InternalStateSpec s;
  const int n = model.n_agents();
  for (int i = 0; i < n; ++i) {
    s.num_obs_.push_back(model.num_observations(i));
    s.num_act_.push_back(model.num_actions(i));
  }
  s.obs_radix_ = MixedRadix(s.num_obs_);
  s.act_radix_ = MixedRadix(s.num_act_);
  s.joint_obs_ = s.obs_radix_.size();
  s.joint_act_ = s.act_radix_.size();
  if (t.num_shared < 1) throw ParameterError("compressor.num_shared must be >= 1");
  s.num_shared_ = static_cast<std::size_t>(t.num_shared);
  if (t.initial_shared < 0 || t.initial_shared >= t.num_shared) {
    throw ParameterError("compressor.initial_shared out of range");
  }
  s.initial_shared_ = static_cast<std::size_t>(t.initial_shared);
  if (t.shared_update.size() != s.num_shared_ * s.joint_obs_ * s.joint_act_) {
    throw ParameterError("compressor.shared_update must have |W|*|Z|*|U| entries");
  }
  for (int v : t.shared_update) {
    if (v < 0 || v >= t.num_shared) throw ParameterError("compressor.shared_update entry out of range");
  }
  s.shared_table_ = t.shared_update;
  if (static_cast<int>(t.num_local.size()) != n || static_cast<int>(t.initial_local.size()) != n ||
      static_cast<int>(t.local_update.size()) != n) {
    throw ParameterError("compressor local tables need one entry per agent");
  }
  for (int i = 0; i < n; ++i) {
    if (t.num_local[i] < 1) throw ParameterError("compressor.num_local must be >= 1");
    s.num_local_.push_back(static_cast<std::size_t>(t.num_local[i]));
    if (t.initial_local[i] < 0 || t.initial_local[i] >= t.num_local[i]) {
      throw ParameterError("compressor.initial_local out of range");
    }
    s.initial_local_.push_back(static_cast<std::size_t>(t.initial_local[i]));
    std::size_t want = s.num_local_[i] * s.num_obs_[i] * s.num_act_[i] * s.num_obs_[i];
    if (t.local_update[i].size() != want) {
      throw ParameterError("compressor.local_update[" + std::to_string(i) + "] must have |L|*|Y|*|U|*|Z| entries");
    }
    for (int v : t.local_update[i]) {
      if (v < 0 || v >= t.num_local[i]) throw ParameterError("compressor.local_update entry out of range");
    }
    s.local_table_.push_back(t.local_update[i]);
  }
  return s;
}

std::size_t InternalStateSpec::update_shared(std::size_t w, std::span<const int> z,
                                             std::span<const int> u) const {
  const int n = n_agents();
  if (w >= num_shared_ || static_cast<int>(z.size()) != n || static_cast<int>(u.size()) != n) {
    throw ContractError("update_shared: argument out of range");
  }
  for (int i = 0; i < n; ++i) {
    if (z[i] < 0 || z[i] >= num_obs_[i] || u[i] < 0 || u[i] >= num_act_[i]) {
      throw ContractError("update_shared: message or action out of range");
    }
  }
  if (!is_window()) {
    std::size_t zi = obs_radix_.encode(z);
    std::size_t ui = act_radix_.encode(u);
    return static_cast<std::size_t>(shared_table_[(w * joint_obs_ + zi) * joint_act_ + ui]);
  }
  if (window_length_ == 0) return 0;
  std::size_t out = 0;
  for (int i = 0; i < n; ++i) {
    std::size_t block = (w / shared_stride_[i]) % shared_block_[i];
    std::size_t radix = static_cast<std::size_t>(num_obs_[i]) + 1;
    std::size_t shifted = (block % (shared_block_[i] / radix)) * radix + static_cast<std::size_t>(z[i]) + 1;
    out += shifted * shared_stride_[i];
  }
  return out;
}

std::size_t InternalStateSpec::update_local(int i, std::size_t l, int y, int u, int z) const {
  if (i < 0 || i >= n_agents() || l >= num_local_[i] || y < 0 || y >= num_obs_[i] || u < 0 ||
      u >= num_act_[i] || z < 0 || z >= num_obs_[i]) {
    throw ContractError("update_local: argument out of range");
  }
  if (!is_window()) {
    const std::size_t ny = num_obs_[i], na = num_act_[i];
    return static_cast<std::size_t>(local_table_[i][((l * ny + y) * na + u) * ny + z]);
  }
  if (window_length_ == 0) return 0;
  std::size_t q = static_cast<std::size_t>(num_obs_[i]) * num_act_[i] + 1;
  return (l % local_top_[i]) * q + 1 + static_cast<std::size_t>(y) * num_act_[i] + u;
}

InfoPoint InternalStateSpec::info_point(int i, std::size_t index) const {
  if (index >= num_info_points(i)) throw ContractError("info_point: index out of range");
  InfoPoint p;
  p.agent = i;
  p.index = index;
  p.y = static_cast<int>(index % num_obs_[i]);
  std::size_t rest = index / num_obs_[i];
  p.l = rest % num_local_[i];
  p.w = rest / num_local_[i];
  return p;
}

std::vector<InfoPoint> InternalStateSpec::enumerate_info_points(int i) const {
  std::vector<InfoPoint> out;
  out.reserve(num_info_points(i));
  for (std::size_t k = 0; k < num_info_points(i); ++k) out.push_back(info_point(i, k));
  return out;
}

std::vector<int> InternalStateSpec::shared_window(std::size_t w, int agent) const {
  std::vector<int> out;
  if (!is_window()) return out;
  std::size_t block = (w / shared_stride_[agent]) % shared_block_[agent];
  std::size_t radix = static_cast<std::size_t>(num_obs_[agent]) + 1;
  out.assign(window_length_, -1);
  for (int k = window_length_; k-- > 0;) {
    out[k] = static_cast<int>(block % radix) - 1;
    block /= radix;
  }
  return out;
}

std::vector<std::pair<int, int>> InternalStateSpec::local_window(int i, std::size_t l) const {
  std::vector<std::pair<int, int>> out;
  if (!is_window()) return out;
  std::size_t q = static_cast<std::size_t>(num_obs_[i]) * num_act_[i] + 1;
  out.assign(window_length_, {-1, -1});
  for (int k = window_length_; k-- > 0;) {
    std::size_t d = l % q;
    l /= q;
    if (d > 0) out[k] = {static_cast<int>((d - 1) / num_act_[i]), static_cast<int>((d - 1) % num_act_[i])};
  }
  return out;
}

std::string InternalStateSpec::info_label(const TabularPomg& model, int i, std::size_t index) const {
  InfoPoint p = info_point(i, index);
  std::ostringstream os;
  if (is_window()) {
    os << "w=[";
    for (int j = 0; j < n_agents(); ++j) {
      if (j) os << ";";
      bool first = true;
      for (int y : shared_window(p.w, j)) {
        os << (first ? "" : ",") << (y < 0 ? "_" : model.observation_names[j][y]);
        first = false;
      }
    }
    os << "] l=[";
    bool first = true;
    for (auto [y, u] : local_window(i, p.l)) {
      os << (first ? "" : ",");
      if (y < 0) {
        os << "_";
      } else {
        os << model.observation_names[i][y] << "/" << model.action_names[i][u];
      }
      first = false;
    }
    os << "]";
  } else {
    os << "w=" << p.w << " l=" << p.l;
  }
  os << " y=" << model.observation_names[i][p.y];
  return os.str();
}

std::vector<std::string> InternalStateSpec::info_labels(const TabularPomg& model, int i) const {
  std::vector<std::string> out;
  out.reserve(num_info_points(i));
  for (std::size_t k = 0; k < num_info_points(i); ++k) out.push_back(info_label(model, i, k));
  return out;
}

std::string InternalStateSpec::describe() const {
  if (is_window()) return "window(t_w=" + std::to_string(window_length_) + ")";
  return "custom";
}

}  // namespace isnpg
