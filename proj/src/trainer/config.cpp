#include "planval/trainer/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace planval::trainer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config: " + key + " = '" + value + "': " + what);
}

Index parse_index(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "expected an integer");
  return static_cast<Index>(x);
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "expected a number");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "expected true or false");
}

std::vector<Index> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_index(key, trim(item)));
  return out;
}

std::string show(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string show_sizes(const std::vector<Index>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::function<void(TrainerConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainerConfig&)> get;
};

template <typename T>
Field index_field(T TrainerConfig::*m) {
  return {[m](TrainerConfig& c, const std::string& k, const std::string& v) { c.*m = static_cast<T>(parse_index(k, v)); },
          [m](const TrainerConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(double TrainerConfig::*m) {
  return {[m](TrainerConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); },
          [m](const TrainerConfig& c) { return show(c.*m); }};
}

Field bool_field(bool TrainerConfig::*m) {
  return {[m](TrainerConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); },
          [m](const TrainerConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field string_field(std::string TrainerConfig::*m) {
  return {[m](TrainerConfig& c, const std::string&, const std::string& v) { c.*m = v; },
          [m](const TrainerConfig& c) { return c.*m; }};
}

Field sizes_field(std::vector<Index> TrainerConfig::*m) {
  return {[m](TrainerConfig& c, const std::string& k, const std::string& v) { c.*m = parse_sizes(k, v); },
          [m](const TrainerConfig& c) { return show_sizes(c.*m); }};
}

Field schedule_field(double ScheduleConfig::*m) {
  return {[m](TrainerConfig& c, const std::string& k, const std::string& v) { c.schedule.*m = parse_double(k, v); },
          [m](const TrainerConfig& c) { return show(c.schedule.*m); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table{
      {"env", string_field(&TrainerConfig::env)},
      {"variant", string_field(&TrainerConfig::variant)},
      {"k", index_field(&TrainerConfig::k)},
      {"soft", bool_field(&TrainerConfig::soft)},
      {"alpha", double_field(&TrainerConfig::alpha)},
      {"alpha.auto", bool_field(&TrainerConfig::auto_alpha)},
      {"alpha.target_entropy", double_field(&TrainerConfig::target_entropy)},
      {"epochs", index_field(&TrainerConfig::epochs)},
      {"steps_per_epoch", index_field(&TrainerConfig::steps_per_epoch)},
      {"rollouts", index_field(&TrainerConfig::rollouts)},
      {"rollout_every", index_field(&TrainerConfig::rollout_every)},
      {"critic_updates", index_field(&TrainerConfig::critic_updates)},
      {"actor_updates", index_field(&TrainerConfig::actor_updates)},
      {"start_size", index_field(&TrainerConfig::start_size)},
      {"batch_size", index_field(&TrainerConfig::batch_size)},
      {"lr.critic", double_field(&TrainerConfig::lr_critic)},
      {"lr.actor", double_field(&TrainerConfig::lr_actor)},
      {"lr.alpha", double_field(&TrainerConfig::lr_alpha)},
      {"lr.model", double_field(&TrainerConfig::lr_model)},
      {"polyak", double_field(&TrainerConfig::polyak)},
      {"gamma", double_field(&TrainerConfig::gamma)},
      {"real_ratio", double_field(&TrainerConfig::real_ratio)},
      {"twin", bool_field(&TrainerConfig::twin)},
      {"schedule.x", schedule_field(&ScheduleConfig::x)},
      {"schedule.y", schedule_field(&ScheduleConfig::y)},
      {"schedule.a", schedule_field(&ScheduleConfig::a)},
      {"schedule.b", schedule_field(&ScheduleConfig::b)},
      {"hidden", sizes_field(&TrainerConfig::hidden)},
      {"ensemble.members", index_field(&TrainerConfig::ensemble_members)},
      {"ensemble.elites", index_field(&TrainerConfig::ensemble_elites)},
      {"ensemble.hidden", sizes_field(&TrainerConfig::model_hidden)},
      {"model.max_epochs", index_field(&TrainerConfig::model_max_epochs)},
      {"model.batch_size", index_field(&TrainerConfig::model_batch_size)},
      {"model.holdout", double_field(&TrainerConfig::model_holdout)},
      {"model.patience", index_field(&TrainerConfig::model_patience)},
      {"model.max_updates", index_field(&TrainerConfig::model_max_updates)},
      {"model.noise", string_field(&TrainerConfig::model_noise)},
      {"buffer.env", index_field(&TrainerConfig::env_capacity)},
      {"buffer.model", index_field(&TrainerConfig::model_capacity)},
      {"eval.interval", index_field(&TrainerConfig::eval_interval)},
      {"eval.episodes", index_field(&TrainerConfig::eval_episodes)},
      {"mve.horizon", index_field(&TrainerConfig::mve_horizon)},
      {"seed", {[](TrainerConfig& c, const std::string& k, const std::string& v) {
                  const Index s = parse_index(k, v);
                  if (s < 0) bad(k, v, "seed must be non-negative");
                  c.seed = static_cast<std::uint64_t>(s);
                },
                [](const TrainerConfig& c) { return std::to_string(c.seed); }}},
      {"metrics.wall_clock", bool_field(&TrainerConfig::wall_clock)},
      {"stop.return", {[](TrainerConfig& c, const std::string& k, const std::string& v) {
                         if (v == "none") {
                           c.stop_return.reset();
                         } else {
                           c.stop_return = parse_double(k, v);
                         }
                       },
                       [](const TrainerConfig& c) { return c.stop_return ? show(*c.stop_return) : std::string("none"); }}},
      {"output.metrics", string_field(&TrainerConfig::metrics_path)},
      {"output.checkpoint", string_field(&TrainerConfig::checkpoint_path)},
  };
  return table;
}

}  // namespace

void set_option(TrainerConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

void validate(const TrainerConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(std::find(kVariants.begin(), kVariants.end(), c.variant) != kVariants.end(),
       "variant must be one of mppve, sac-mppve, sac-mve, sac-mve-mpi, sac");
  need(c.k >= 1, "k must be >= 1");
  need(c.epochs >= 0, "epochs must be >= 0");
  need(c.steps_per_epoch >= 1 && c.rollouts >= 1 && c.rollout_every >= 1 && c.critic_updates >= 1 &&
           c.actor_updates >= 1 && c.start_size >= 1 && c.batch_size >= 1,
       "counts (steps_per_epoch, rollouts, rollout_every, critic_updates, actor_updates, start_size, batch_size) must be positive");
  need(c.alpha > 0.0, "alpha must be positive");
  need(c.lr_critic > 0 && c.lr_actor > 0 && c.lr_alpha > 0 && c.lr_model > 0, "learning rates must be positive");
  need(c.polyak > 0.0 && c.polyak <= 1.0, "polyak must lie in (0, 1]");
  need(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
  need(c.real_ratio >= 0.0 && c.real_ratio <= 1.0, "real_ratio must lie in [0, 1]");
  need(c.schedule.a < c.schedule.b, "schedule needs a < b");
  need(c.schedule.x <= c.schedule.y, "schedule needs x <= y");
  need(c.schedule.x >= 1.0, "schedule lengths must be >= 1");
  need(c.ensemble_members >= 1 && c.ensemble_elites >= 1 && c.ensemble_elites <= c.ensemble_members,
       "ensemble needs 1 <= elites <= members");
  need(c.model_max_epochs >= 1 && c.model_batch_size >= 1 && c.model_patience >= 1 && c.model_max_updates >= 0,
       "model training counts must be positive");
  need(c.model_holdout > 0.0 && c.model_holdout < 1.0, "model.holdout must lie in (0, 1)");
  need(c.model_noise == "sample" || c.model_noise == "mean", "model.noise must be sample or mean");
  need(c.env_capacity >= c.batch_size && c.model_capacity >= 1, "buffer capacities too small");
  need(c.eval_interval >= 1 && c.eval_episodes >= 1, "eval counts must be positive");
  need(c.mve_horizon >= 0, "mve.horizon must be >= 0");
  for (Index h : c.hidden) need(h >= 1, "hidden sizes must be positive");
  for (Index h : c.model_hidden) need(h >= 1, "ensemble.hidden sizes must be positive");
}

TrainerConfig parse_config(const std::string& text) {
  TrainerConfig config;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_option(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  validate(config);
  return config;
}

TrainerConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const TrainerConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace planval::trainer
