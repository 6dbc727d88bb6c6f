#pragma once

// Text forms of signals: s-expression form trees, JSON variant records and
// delimited sample files.
//
//   elementary  := kind | "(" kind (":" key number)* ")"
//   form        := elementary | "(" ("add" | "mul" | "compose") form elementary ")"
//
// kind is one of square, saw, sin, tan, poly; keys are period, phase,
// amplitude, order and clamp. (compose g f) denotes f(g(x)). Numbers are
// printed in shortest round-trip form so parse(print(e)) == e exactly.

#include <cctype>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "perigen/errors.hpp"
#include "perigen/signals.hpp"
#include "perigen/text.hpp"

namespace perigen {

namespace detail {

inline void print_elementary(std::string& out, const ElementaryForm& f, bool coefficients) {
  if (!coefficients) {
    out += to_string(f.kind);
    return;
  }
  out += '(';
  out += to_string(f.kind);
  out += " :period " + text::shortest(f.period);
  out += " :phase " + text::shortest(f.phase);
  out += " :amplitude " + text::shortest(f.amplitude);
  if (f.kind == WaveKind::PolyWave) out += " :order " + std::to_string(f.poly_order);
  if (std::isfinite(f.clamp)) out += " :clamp " + text::shortest(f.clamp);
  out += ')';
}

class SexprReader {
 public:
  explicit SexprReader(std::string_view s) : s_(s) {}

  FormExpr form() {
    skip();
    if (peek() != '(') return leaf(elementary_symbol(atom()));
    const std::size_t mark = pos_;
    ++pos_;
    const std::string head = atom();
    if (auto op = combinator(head)) {
      FormExpr g = form();
      ElementaryForm f = elementary();
      expect(')');
      g.steps.push_back({*op, f});
      return g;
    }
    pos_ = mark;
    return leaf(elementary());
  }

  void finish() {
    skip();
    if (pos_ != s_.size()) fail("trailing characters");
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("form expression: " + what + " at offset " + std::to_string(pos_));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  char peek() {
    skip();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string atom() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != '(' &&
           s_[pos_] != ')')
      ++pos_;
    if (start == pos_) fail("expected a token");
    return std::string(s_.substr(start, pos_ - start));
  }

  static std::optional<Combinator> combinator(std::string_view s) {
    for (Combinator c : {Combinator::Sum, Combinator::Product, Combinator::Compose})
      if (to_string(c) == s) return c;
    return std::nullopt;
  }

  ElementaryForm elementary_symbol(const std::string& name) {
    auto kind = wave_kind_from_string(name);
    if (!kind) fail("unknown waveform '" + name + "'");
    return ElementaryForm{.kind = *kind};
  }

  ElementaryForm elementary() {
    if (peek() != '(') return elementary_symbol(atom());
    ++pos_;
    ElementaryForm f = elementary_symbol(atom());
    while (peek() != ')') {
      const std::string key = atom();
      const std::string value = atom();
      if (key == ":period") f.period = text::parse_double(value);
      else if (key == ":phase") f.phase = text::parse_double(value);
      else if (key == ":amplitude") f.amplitude = text::parse_double(value);
      else if (key == ":order") f.poly_order = static_cast<int>(text::parse_int(value));
      else if (key == ":clamp") f.clamp = text::parse_double(value);
      else fail("unknown key '" + key + "'");
    }
    expect(')');
    validate(f);
    return f;
  }
};

}  // namespace detail

/// Skeleton string (kinds only) when coefficients is false.
inline std::string to_sexpr(const FormExpr& e, bool coefficients = true) {
  std::string out;
  for (std::size_t i = 0; i < e.steps.size(); ++i) {
    out += '(';
    out += to_string(e.steps[e.steps.size() - 1 - i].op);
    out += ' ';
  }
  detail::print_elementary(out, e.base, coefficients);
  for (const auto& s : e.steps) {
    out += ' ';
    detail::print_elementary(out, s.form, coefficients);
    out += ')';
  }
  return out;
}

inline FormExpr parse_form(std::string_view s) {
  detail::SexprReader r(s);
  FormExpr e = r.form();
  r.finish();
  return e;
}

inline nlohmann::json variant_to_json(const SignalVariant& v) {
  nlohmann::json j;
  j["form"] = to_sexpr(v.periodic, true);
  if (v.trend) {
    j["trend"] = {{"kind", std::string(to_string(v.trend->kind))},
                  {"coefficients", v.trend->coefficients}};
  } else {
    j["trend"] = nullptr;
  }
  j["master_period"] = v.master_period;
  j["normalization"] = v.normalization;
  j["noise_variance"] = v.noise_variance;
  j["seed"] = v.seed;
  return j;
}

inline SignalVariant variant_from_json(const nlohmann::json& j) {
  try {
    SignalVariant v;
    v.periodic = parse_form(j.at("form").get<std::string>());
    if (j.contains("trend") && !j.at("trend").is_null()) {
      TrendForm t;
      const auto kind = j.at("trend").at("kind").get<std::string>();
      if (kind == "polynomial") t.kind = TrendForm::Kind::Polynomial;
      else if (kind == "exponential") t.kind = TrendForm::Kind::Exponential;
      else throw ParseError("unknown trend kind '" + kind + "'");
      t.coefficients = j.at("trend").at("coefficients").get<std::vector<double>>();
      v.trend = t;
    }
    v.master_period = j.at("master_period").get<double>();
    v.normalization = j.at("normalization").get<double>();
    v.noise_variance = j.at("noise_variance").get<double>();
    v.seed = j.at("seed").get<std::uint64_t>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("variant record: ") + e.what());
  }
}

inline std::string samples_to_csv(const SampleSet& s) {
  std::string out = "x,y,domain_tag\n";
  for (const auto& p : s.points) {
    out += text::g17(p.x);
    out += ',';
    out += text::g17(p.y);
    out += ',';
    out += to_string(s.tag);
    out += '\n';
  }
  return out;
}

inline SampleSet samples_from_csv(std::string_view csv) {
  SampleSet s;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || text::split(line) != std::vector<std::string>{"x", "y", "domain_tag"})
    throw ParseError("sample file: bad header");
  bool tagged = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = text::split(line);
    if (f.size() != 3) throw ParseError("sample file: expected 3 columns");
    const DomainTag tag = f[2] == "train" ? DomainTag::Training : DomainTag::Evaluation;
    if (f[2] != "train" && f[2] != "eval") throw ParseError("sample file: bad domain tag '" + f[2] + "'");
    if (tagged && tag != s.tag) throw ParseError("sample file: mixed domain tags");
    s.tag = tag;
    tagged = true;
    s.points.push_back({text::parse_double(f[0]), text::parse_double(f[1])});
  }
  return s;
}

}  // namespace perigen
