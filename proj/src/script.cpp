#include "acai/script.hpp"

#include <charconv>
#include <sstream>

#include "acai/io_paths.hpp"

namespace acai {

std::optional<std::uint64_t> parse_number(std::string_view s) {
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto at = s.find(sep);
    out.push_back(s.substr(0, at));
    if (at == std::string_view::npos) break;
    s.remove_prefix(at + 1);
  }
  return out;
}

}  // namespace

std::optional<std::vector<SgEntry>> parse_regions(std::string_view s) {
  std::vector<SgEntry> out;
  for (auto item : split(s, ',')) {
    auto colon = item.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto ipa = parse_number(item.substr(0, colon));
    auto size = parse_number(item.substr(colon + 1));
    if (!ipa || !size) return std::nullopt;
    out.push_back({Ipa{*ipa}, *size});
  }
  return out;
}

std::optional<std::vector<std::uint32_t>> parse_counts(std::string_view s) {
  std::vector<std::uint32_t> out;
  if (s.empty()) return out;
  for (auto item : split(s, ',')) {
    auto n = parse_number(item);
    if (!n || *n > 0xffff) return std::nullopt;
    out.push_back(static_cast<std::uint32_t>(*n));
  }
  return out;
}

std::uint64_t Command::num(const std::string& key, std::uint64_t fallback) const {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  return parse_number(it->second).value_or(fallback);
}

std::uint64_t Command::pos_num(std::size_t i) const { return parse_number(positional.at(i)).value_or(0); }

std::string Command::text() const {
  std::string out = name;
  for (const auto& p : positional) out += " " + p;
  for (const auto& f : flags) out += " " + f;
  for (const auto& [k, v] : kv) out += " " + k + "=" + v;
  return out;
}

std::optional<Command> tokenize(std::string_view line, std::size_t line_no) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::istringstream in{std::string(line)};
  std::string tok;
  Command cmd;
  cmd.line = line_no;
  if (!(in >> cmd.name)) return std::nullopt;
  while (in >> tok) {
    if (auto eq = tok.find('='); eq != std::string::npos) {
      cmd.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    } else if (cmd.kv.empty() && cmd.flags.empty() && tok != "attach_dev" && tok != "debug") {
      cmd.positional.push_back(tok);
    } else {
      cmd.flags.insert(tok);
    }
  }
  return cmd;
}

namespace {

enum class Kind { Number, Regions, Counts, HexData, ErrName, Word, Bit };

struct Schema {
  std::size_t min_pos;
  std::size_t max_pos;
  std::map<std::string, Kind> required;
  std::map<std::string, Kind> optional;
  std::set<std::string> flags;
  bool open_keys = false;  // `policy` accepts arbitrary key=value pairs
};

const std::map<std::string, Schema>& grammar() {
  using K = Kind;
  static const std::map<std::string, Schema> g{
      {"boot", {0, 0, {}, {}, {}}},
      {"plug", {1, 1, {}, {{"bars", K::Counts}, {"firmware", K::Word}, {"serial", K::Number}}, {"debug"}}},
      {"emulate", {1, 1, {}, {{"bars", K::Counts}, {"firmware", K::Word}, {"serial", K::Number}}, {"debug"}}},
      {"unplug", {1, 1, {}, {}, {}}},
      {"delegate", {1, 1, {}, {}, {}}},
      {"undelegate", {1, 1, {}, {}, {}}},
      {"realm_create", {1, 1, {}, {}, {}}},
      {"data_create",
       {1,
        1,
        {{"src", K::Number}, {"dst", K::Number}, {"ipa", K::Number}},
        {{"dev", K::Number}, {"bars", K::Regions}},
        {"attach_dev"}}},
      {"activate", {1, 1, {}, {}, {}}},
      {"destroy", {1, 1, {}, {}, {}}},
      {"prot_mem", {1, 1, {{"dev", K::Number}, {"sg", K::Regions}}, {}, {}}},
      {"dma",
       {2, 2, {{"ipa", K::Number}, {"len", K::Number}}, {{"t", K::Bit}, {"rid", K::Number}, {"off", K::Number}}, {}}},
      {"compute",
       {1,
        1,
        {{"kernel", K::Word}, {"src", K::Number}, {"dst", K::Number}, {"len", K::Number}},
        {{"t", K::Bit}},
        {}}},
      {"mmio", {2, 2, {{"ipa", K::Number}}, {{"len", K::Number}, {"data", K::HexData}}, {}}},
      {"mem",
       {2, 2, {}, {{"ipa", K::Number}, {"pa", K::Number}, {"len", K::Number}, {"data", K::HexData}}, {}}},
      {"attest", {1, 1, {}, {}, {}}},
      {"verify", {1, 1, {{"policy", K::Word}}, {}, {}}},
      {"policy", {1, 1, {}, {}, {}, true}},
      {"attack", {1, 1, {}, {}, {}}},
      {"expect", {0, 0, {}, {{"error", K::ErrName}, {"data", K::HexData}}, {}}},
      {"check", {0, 0, {}, {}, {}}},
      {"smmu",
       {1,
        1,
        {},
        {{"sid", K::Number}, {"ipa", K::Number}, {"pa", K::Number}, {"field", K::Word}, {"value", K::Number}},
        {}}},
      {"replay", {0, 0, {}, {}, {}}},
      {"ide_key", {0, 0, {{"rid", K::Number}}, {{"key", K::Number}}, {}}},
  };
  return g;
}

bool value_ok(Kind k, const std::string& v) {
  switch (k) {
    case Kind::Number: return parse_number(v).has_value();
    case Kind::Regions: return parse_regions(v).has_value();
    case Kind::Counts: return parse_counts(v).has_value();
    case Kind::HexData: return from_hex(v.starts_with("0x") ? v.substr(2) : v).has_value();
    case Kind::ErrName: return parse_err(v).has_value();
    case Kind::Word: return !v.empty();
    case Kind::Bit: return v == "0" || v == "1";
  }
  return false;
}

}  // namespace

std::optional<std::string> validate(const Command& cmd) {
  auto it = grammar().find(cmd.name);
  if (it == grammar().end()) return "unknown command '" + cmd.name + "'";
  const Schema& s = it->second;
  if (cmd.positional.size() < s.min_pos || cmd.positional.size() > s.max_pos)
    return cmd.name + ": expected " + std::to_string(s.min_pos) + (s.min_pos == s.max_pos ? "" : "-" + std::to_string(s.max_pos)) +
           " positional argument(s)";
  for (const auto& f : cmd.flags)
    if (!s.flags.contains(f)) return cmd.name + ": unexpected token '" + f + "'";
  for (const auto& [key, kind] : s.required)
    if (!cmd.kv.contains(key)) return cmd.name + ": missing " + key + "=";
  for (const auto& [key, value] : cmd.kv) {
    if (s.open_keys) continue;
    auto req = s.required.find(key);
    auto opt = s.optional.find(key);
    if (req == s.required.end() && opt == s.optional.end()) return cmd.name + ": unknown key '" + key + "'";
    Kind kind = req != s.required.end() ? req->second : opt->second;
    if (!value_ok(kind, value)) return cmd.name + ": bad value for " + key + ": '" + value + "'";
  }

  auto pos_number = [&](std::size_t i) -> std::optional<std::string> {
    if (!parse_number(cmd.positional[i])) return cmd.name + ": '" + cmd.positional[i] + "' is not a number";
    return std::nullopt;
  };
  auto read_write = [&](std::size_t i) -> std::optional<std::string> {
    if (cmd.positional[i] != "read" && cmd.positional[i] != "write") return cmd.name + ": expected read or write";
    return std::nullopt;
  };

  const std::string& n = cmd.name;
  if (n == "plug" || n == "emulate" || n == "unplug" || n == "delegate" || n == "undelegate") return pos_number(0);
  if (n == "data_create" && cmd.flags.contains("attach_dev") && !cmd.has("dev")) return "data_create: attach_dev needs dev=";
  if (n == "data_create" && !cmd.flags.contains("attach_dev") && (cmd.has("dev") || cmd.has("bars")))
    return "data_create: dev= and bars= need attach_dev";
  if (n == "dma") {
    if (auto e = pos_number(0)) return e;
    return read_write(1);
  }
  if (n == "compute") {
    if (auto e = pos_number(0)) return e;
    if (!known_kernel(cmd.kv.at("kernel"))) return "compute: unknown kernel '" + cmd.kv.at("kernel") + "'";
  }
  if (n == "mmio") {
    if (auto e = read_write(1)) return e;
    if (cmd.positional[1] == "write" && !cmd.has("data")) return "mmio write: missing data=";
  }
  if (n == "mem") {
    if (auto e = read_write(1)) return e;
    bool physical = cmd.positional[0] == "hv" || cmd.positional[0] == "monitor" || cmd.positional[0] == "secure";
    if (physical && !cmd.has("pa")) return "mem: " + cmd.positional[0] + " needs pa=";
    if (!physical && !cmd.has("ipa")) return "mem: realm access needs ipa=";
    if (cmd.positional[1] == "write" && !cmd.has("data")) return "mem write: missing data=";
    if (cmd.positional[1] == "read" && !cmd.has("len")) return "mem read: missing len=";
  }
  if (n == "policy") {
    std::string text;
    for (const auto& [k, v] : cmd.kv) text += k + "=" + v + "\n";
    if (!parse_policy(text)) return "policy: unrecognised key or value";
  }
  if (n == "expect" && cmd.kv.size() != 1) return "expect: give exactly one of error= or data=";
  if (n == "smmu") {
    const std::string& sub = cmd.positional[0];
    auto need = [&](std::initializer_list<const char*> keys) -> std::optional<std::string> {
      for (const char* k : keys)
        if (!cmd.has(k)) return "smmu " + sub + ": missing " + k + "=";
      return std::nullopt;
    };
    if (sub == "map") return need({"sid", "ipa", "pa"});
    if (sub == "unmap") return need({"sid", "ipa"});
    if (sub == "config") return need({"field", "value"});
    if (sub == "ats") return need({"sid"});
    return "smmu: unknown request '" + sub + "'";
  }
  return std::nullopt;
}

std::variant<std::vector<Command>, ParseFailure> parse_script(std::string_view text) {
  std::vector<Command> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    auto cmd = tokenize(line, line_no);
    if (!cmd) continue;
    if (auto problem = validate(*cmd)) return ParseFailure{line_no, *problem};
    if (cmd->name == "expect" && (out.empty() || out.back().name == "expect"))
      return ParseFailure{line_no, "expect must follow a command"};
    out.push_back(std::move(*cmd));
  }
  return out;
}

}  // namespace acai
