#pragma once

#include <map>
#include <optional>
#include <set>
#include <variant>
#include <string>
#include <vector>

#include "acai/common.hpp"
#include "acai/rmm.hpp"

namespace acai {

/// One scenario line: `name pos... key=value... flag...`.
struct Command {
  std::size_t line = 0;
  std::string name;
  std::vector<std::string> positional;
  std::map<std::string, std::string> kv;
  std::set<std::string> flags;

  bool has(const std::string& key) const { return kv.contains(key); }
  std::uint64_t num(const std::string& key, std::uint64_t fallback = 0) const;
  std::uint64_t pos_num(std::size_t i) const;
  std::string text() const;  // canonical single-line form
};

/// `0x` prefix means hexadecimal, otherwise decimal.
std::optional<std::uint64_t> parse_number(std::string_view s);

/// `ipa:bytes[,ipa:bytes...]`
std::optional<std::vector<SgEntry>> parse_regions(std::string_view s);

/// `n[,n...]` granule counts.
std::optional<std::vector<std::uint32_t>> parse_counts(std::string_view s);

/// Tokenizes one line; empty for blank or comment-only lines.
std::optional<Command> tokenize(std::string_view line, std::size_t line_no);

/// Checks a command against the grammar: arity, known keys, value syntax.
/// Returns a human-readable problem, or nothing when the command is well formed.
std::optional<std::string> validate(const Command& cmd);

struct ParseFailure {
  std::size_t line = 0;
  std::string message;
};

/// Parses and validates a whole script; nothing runs if any line is bad.
std::variant<std::vector<Command>, ParseFailure> parse_script(std::string_view text);

}  // namespace acai
