#include "isi/wordvec.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "isi/errors.hpp"

namespace isi {

namespace {

double norm(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

void WordVectorTable::insert(std::string_view token, std::span<const double> vec) {
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_)
    throw InvalidArgument("word vector for '" + std::string(token) + "' has dimension " +
                          std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
  const double n = norm(vec);
  if (!(n > 0) || !std::isfinite(n)) throw InvalidArgument("zero or non-finite word vector: " + std::string(token));
  std::vector<double> stored(vec.begin(), vec.end());
  for (auto& x : stored) x /= n;
  vectors_.insert_or_assign(std::string(token), std::move(stored));
}

const std::vector<double>* WordVectorTable::find(std::string_view token) const {
  auto it = vectors_.find(std::string(token));
  return it == vectors_.end() ? nullptr : &it->second;
}

std::vector<std::string> WordVectorTable::tokens() const {
  std::vector<std::string> out;
  out.reserve(vectors_.size());
  for (const auto& [k, v] : vectors_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

WordVectorTable parse_word_vectors(std::istream& in, const std::string& source) {
  WordVectorTable table;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2) {
      std::size_t count = 0, dim = 0;
      if (parse_number(fields[0], count) && parse_number(fields[1], dim)) {
        if (dim == 0) throw ParseError(source, lineno, "header declares zero dimension");
        table = WordVectorTable(dim);
        continue;
      }
    }
    if (fields.size() < 2) throw ParseError(source, lineno, "word vector line needs a token and values");
    values.clear();
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0;
      if (!parse_number(fields[i], v)) throw ParseError(source, lineno, "bad number '" + std::string(fields[i]) + "'");
      values.push_back(v);
    }
    if (table.dim() != 0 && values.size() != table.dim())
      throw ParseError(source, lineno,
                       "inconsistent dimension " + std::to_string(values.size()) + " (expected " +
                           std::to_string(table.dim()) + ")");
    if (table.find(fields[0])) spdlog::warn("{}:{}: duplicate token '{}', keeping the last", source, lineno, fields[0]);
    try {
      table.insert(fields[0], values);
    } catch (const InvalidArgument& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return table;
}

WordVectorTable load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return parse_word_vectors(in, path.string());
}

void save_word_vectors(std::ostream& out, const WordVectorTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (const auto& token : table.tokens()) {
    out << token;
    for (double v : *table.find(token)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ' ';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

std::vector<std::string> tokenize_entity_name(std::string_view name) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(lower(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < name.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(name[i]);
    if (c == ' ' || c == '_' || c == '-' || c == '\t') {
      flush();
      continue;
    }
    if (std::isupper(c) && i > 0 && std::islower(static_cast<unsigned char>(name[i - 1]))) flush();
    cur.push_back(static_cast<char>(c));
  }
  flush();
  return tokens;
}

std::optional<std::vector<double>> entity_vector(const WordVectorTable& table, std::string_view name) {
  if (const auto* whole = table.find(name)) return *whole;
  std::vector<double> sum(table.dim(), 0.0);
  std::size_t found = 0;
  for (const auto& tok : tokenize_entity_name(name)) {
    const auto* v = table.find(tok);
    if (!v) continue;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*v)[i];
    ++found;
  }
  if (found == 0) return std::nullopt;
  const double n = norm(sum);
  if (!(n > 0)) return std::nullopt;  // tokens cancelled exactly
  for (auto& x : sum) x /= n;
  return sum;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw InvalidArgument("cosine of vectors with different dimensions");
  const double nu = norm(u), nv = norm(v);
  if (!(nu > 0) || !(nv > 0)) throw InvalidArgument("cosine of a zero-norm vector");
  const double c = std::inner_product(u.begin(), u.end(), v.begin(), 0.0) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace isi
