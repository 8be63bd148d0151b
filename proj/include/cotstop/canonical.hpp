#pragma once

// Answer canonicalization and the per-trace answer set Ω.
//
// Closed tasks map a surface form onto a single option letter. Open tasks keep
// a normalized expression string; integers, decimals and simple fractions get
// numeric normalization, everything else is whitespace-normalized text.

#include <cctype>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cotstop/errors.hpp"

namespace cotstop {

enum class TaskKind { closed, open };

inline std::string_view to_string(TaskKind kind) { return kind == TaskKind::closed ? "closed" : "open"; }

inline TaskKind task_kind_from_string(std::string_view s) {
  if (s == "closed") return TaskKind::closed;
  if (s == "open") return TaskKind::open;
  throw ValidationError("task_kind", "expected \"closed\" or \"open\", got \"" + std::string(s) + "\"");
}

/// Index into Ω plus its canonical text. id < 0 is the unknown sentinel.
struct AnswerId {
  int id = -1;
  std::string raw;

  bool known() const noexcept { return id >= 0; }
  static AnswerId unknown() { return {}; }
  friend bool operator==(const AnswerId&, const AnswerId&) = default;
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::string collapse_whitespace(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!is_digit(c)) return false;
  return true;
}

inline std::string strip_leading_zeros(std::string_view digits) {
  std::size_t i = 0;
  while (i + 1 < digits.size() && digits[i] == '0') ++i;
  return std::string(digits.substr(i));
}

struct SignedDigits {
  bool negative = false;
  std::string digits;  // no leading zeros, "0" for zero
};

inline std::optional<SignedDigits> parse_integer(std::string_view s) {
  SignedDigits out;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    out.negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) return std::nullopt;
  out.digits = strip_leading_zeros(s);
  if (out.digits == "0") out.negative = false;
  return out;
}

inline std::string render(const SignedDigits& v) { return (v.negative ? "-" : "") + v.digits; }

inline std::optional<std::string> normalize_decimal(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  if (dot == std::string_view::npos || s.find('.', dot + 1) != std::string_view::npos) return std::nullopt;
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part = s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  if (!int_part.empty() && !all_digits(int_part)) return std::nullopt;
  if (!frac_part.empty() && !all_digits(frac_part)) return std::nullopt;
  std::string whole = int_part.empty() ? "0" : strip_leading_zeros(int_part);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.remove_suffix(1);
  if (whole == "0" && frac_part.empty()) negative = false;
  std::string out = (negative ? "-" : "") + whole;
  if (!frac_part.empty()) out += "." + std::string(frac_part);
  return out;
}

inline std::optional<std::string> normalize_fraction(std::string_view s) {
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto num = parse_integer(s.substr(0, slash));
  auto den = parse_integer(s.substr(slash + 1));
  if (!num || !den || den->digits == "0") return std::nullopt;
  const bool negative = num->digits != "0" && (num->negative != den->negative);
  if (num->digits == "0") return std::string("0");
  std::string n = num->digits;
  std::string d = den->digits;
  if (n.size() <= 18 && d.size() <= 18) {
    const std::uint64_t nv = std::stoull(n);
    const std::uint64_t dv = std::stoull(d);
    const std::uint64_t g = std::gcd(nv, dv);
    n = std::to_string(nv / g);
    d = std::to_string(dv / g);
  }
  std::string out = (negative ? "-" : "") + n;
  if (d != "1") out += "/" + d;
  return out;
}

}  // namespace detail

/// Integer / decimal / fraction normalization. Returns nullopt when the text
/// (ignoring whitespace) is not one of those numeric forms.
inline std::optional<std::string> normalize_numeric(std::string_view text) {
  std::string compact;
  for (char c : text)
    if (!detail::is_space(c)) compact.push_back(c);
  if (auto v = detail::parse_integer(compact)) return detail::render(*v);
  if (auto v = detail::normalize_decimal(compact)) return v;
  if (auto v = detail::normalize_fraction(compact)) return v;
  return std::nullopt;
}

/// Canonical text form, or nullopt for unmappable input. Idempotent.
inline std::optional<std::string> canonical_form(std::string_view raw, TaskKind kind) {
  if (kind == TaskKind::closed) {
    std::string letters;
    for (char c : raw) {
      if (detail::is_space(c) || std::ispunct(static_cast<unsigned char>(c))) continue;
      letters.push_back(c);
    }
    if (letters.size() != 1 || !std::isalpha(static_cast<unsigned char>(letters[0]))) return std::nullopt;
    return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(letters[0]))));
  }
  std::string text = detail::collapse_whitespace(raw);
  if (text.empty()) return std::nullopt;
  if (auto numeric = normalize_numeric(text)) return numeric;
  return text;
}

/// The finite answer set Ω of one trace.
class AnswerSet {
 public:
  AnswerSet() = default;

  explicit AnswerSet(TaskKind kind) : kind_(kind) {}

  AnswerSet(TaskKind kind, const std::vector<std::string>& answers) : kind_(kind) {
    for (const auto& a : answers) {
      auto canon = canonical_form(a, kind);
      if (!canon) throw ValidationError("answer_set", "unmappable answer \"" + a + "\"");
      if (index_.count(*canon)) throw ValidationError("answer_set", "duplicate answer \"" + *canon + "\"");
      add(std::move(*canon));
    }
  }

  TaskKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  const std::vector<std::string>& values() const noexcept { return values_; }

  const std::string& at(int id) const { return values_.at(static_cast<std::size_t>(id)); }

  AnswerId id(int index) const { return {index, at(index)}; }

  /// Canonicalize and look up; unknown sentinel when unmappable or not in Ω.
  AnswerId lookup(std::string_view raw) const {
    auto canon = canonical_form(raw, kind_);
    if (!canon) return AnswerId::unknown();
    auto it = index_.find(*canon);
    if (it == index_.end()) return AnswerId::unknown();
    return {it->second, *canon};
  }

  /// Like lookup, but grows Ω with new canonical forms.
  AnswerId intern(std::string_view raw) {
    auto canon = canonical_form(raw, kind_);
    if (!canon) return AnswerId::unknown();
    auto it = index_.find(*canon);
    if (it != index_.end()) return {it->second, *canon};
    return {add(*canon), *canon};
  }

  friend bool operator==(const AnswerSet& a, const AnswerSet& b) {
    return a.kind_ == b.kind_ && a.values_ == b.values_;
  }

 private:
  int add(std::string canon) {
    const int id = static_cast<int>(values_.size());
    index_.emplace(canon, id);
    values_.push_back(std::move(canon));
    return id;
  }

  TaskKind kind_ = TaskKind::closed;
  std::vector<std::string> values_;
  std::unordered_map<std::string, int> index_;
};

/// Canonicalize `raw` against Ω.
inline AnswerId canonicalize_answer(std::string_view raw, const AnswerSet& omega) { return omega.lookup(raw); }

}  // namespace cotstop
