#include "srvp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace srvp {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("config key '" + std::string(key) + "': invalid value '" +
                    std::string(value) + "'");
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(v), &used);
    if (used != v.size()) bad_value(key, v);
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Key {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Ordered registry; iteration order is the canonical output order.
const std::vector<std::pair<std::string, Key>>& registry() {
  static const std::vector<std::pair<std::string, Key>> keys = [] {
    std::vector<std::pair<std::string, Key>> k;
    auto size_key = [&k](std::string name, auto member) {
      k.push_back({name, Key{[name, member](RunConfig& c, std::string_view v) {
                               member(c) = static_cast<std::size_t>(to_uint(name, v));
                             },
                             [member](const RunConfig& c) {
                               return std::to_string(member(c));
                             }}});
    };
    auto u64_key = [&k](std::string name, auto member) {
      k.push_back({name, Key{[name, member](RunConfig& c, std::string_view v) {
                               member(c) = to_uint(name, v);
                             },
                             [member](const RunConfig& c) {
                               return std::to_string(member(c));
                             }}});
    };
    auto real_key = [&k](std::string name, auto member) {
      k.push_back({name, Key{[name, member](RunConfig& c, std::string_view v) {
                               member(c) = to_double(name, v);
                             },
                             [member](const RunConfig& c) {
                               return fmt_double(member(c));
                             }}});
    };
    auto bool_key = [&k](std::string name, auto member) {
      k.push_back({name, Key{[name, member](RunConfig& c, std::string_view v) {
                               member(c) = to_bool(name, v);
                             },
                             [member](const RunConfig& c) {
                               return std::string(member(c) ? "true"
                                                                                    : "false");
                             }}});
    };
    // model
    size_key("L", [](auto& c) -> auto& { return c.model.layers; });
    size_key("M", [](auto& c) -> auto& { return c.model.hidden; });
    size_key("M_prime", [](auto& c) -> auto& { return c.model.reinforced; });
    size_key("kernel", [](auto& c) -> auto& { return c.model.kernel; });
    size_key("extractor_kernel",
             [](auto& c) -> auto& { return c.model.extractor_kernel; });
    bool_key("use_sa", [](auto& c) -> auto& { return c.model.use_sa; });
    bool_key("use_rfa", [](auto& c) -> auto& { return c.model.use_rfa; });
    bool_key("use_cross_attention",
             [](auto& c) -> auto& { return c.model.use_cross_attention; });
    bool_key("baseline", [](auto& c) -> auto& { return c.model.baseline; });
    k.push_back({"temporal_logit_order",
                 Key{[](RunConfig& c, std::string_view v) {
                       if (v == "norm_then_scale") {
                         c.model.temporal_logit_order = TemporalLogitOrder::NormThenScale;
                       } else if (v == "scale_then_norm") {
                         c.model.temporal_logit_order = TemporalLogitOrder::ScaleThenNorm;
                       } else {
                         bad_value("temporal_logit_order", v);
                       }
                     },
                     [](const RunConfig& c) {
                       return std::string(c.model.temporal_logit_order ==
                                                  TemporalLogitOrder::NormThenScale
                                              ? "norm_then_scale"
                                              : "scale_then_norm");
                     }}});
    // data
    size_key("C", [](auto& c) -> auto& { return c.model.channels; });
    size_key("H", [](auto& c) -> auto& { return c.model.height; });
    size_key("W", [](auto& c) -> auto& { return c.model.width; });
    size_key("N", [](auto& c) -> auto& { return c.model.input_len; });
    size_key("P", [](auto& c) -> auto& { return c.model.pred_len; });
    size_key("glyphs", [](auto& c) -> auto& { return c.data.glyphs; });
    size_key("train_sequences",
             [](auto& c) -> auto& { return c.data.train_sequences; });
    size_key("test_sequences",
             [](auto& c) -> auto& { return c.data.test_sequences; });
    u64_key("seed", [](auto& c) -> auto& { return c.data.seed; });
    real_key("min_speed", [](auto& c) -> auto& { return c.data.min_speed; });
    real_key("max_speed", [](auto& c) -> auto& { return c.data.max_speed; });
    // training
    real_key("lr_max", [](auto& c) -> auto& { return c.train.lr_max; });
    real_key("lr_min", [](auto& c) -> auto& { return c.train.lr_min; });
    size_key("epochs", [](auto& c) -> auto& { return c.train.epochs; });
    size_key("batch", [](auto& c) -> auto& { return c.train.batch; });
    real_key("clip", [](auto& c) -> auto& { return c.train.clip; });
    u64_key("train_seed", [](auto& c) -> auto& { return c.train.seed; });
    size_key("threads", [](auto& c) -> auto& { return c.train.threads; });
    bool_key("teacher_forcing", [](auto& c) -> auto& { return c.train.teacher_forcing; });
    real_key("val_fraction", [](auto& c) -> auto& { return c.train.val_fraction; });
    return k;
  }();
  return keys;
}

}  // namespace

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& [name, k] : registry()) {
    if (name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_config_text(const RunConfig& config) {
  std::string out;
  for (const auto& [name, k] : registry()) out += name + "=" + k.get(config) + "\n";
  return out;
}

}  // namespace srvp
