#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace isi {

// Token -> L2-normalized vector, all of one dimension.
class WordVectorTable {
 public:
  WordVectorTable() = default;
  explicit WordVectorTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool empty() const noexcept { return vectors_.empty(); }

  // Normalizes and stores; replaces an existing token. Throws on a dimension
  // mismatch or a zero vector.
  void insert(std::string_view token, std::span<const double> vec);
  const std::vector<double>* find(std::string_view token) const;

  // Tokens in sorted order, for deterministic output.
  std::vector<std::string> tokens() const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// `token v1 ... vd` per line, optional `count dim` header line.
WordVectorTable parse_word_vectors(std::istream& in, const std::string& source = "<stream>");
WordVectorTable load_word_vectors(const std::filesystem::path& path);
void save_word_vectors(std::ostream& out, const WordVectorTable& table);

// Splits on spaces, underscores, hyphens and lower->upper camel-case
// boundaries; tokens are lowercased.
std::vector<std::string> tokenize_entity_name(std::string_view name);

// Vector for an entity name: the whole name if the table has it, otherwise
// the renormalized mean of its known tokens. nullopt when nothing matches.
std::optional<std::vector<double>> entity_vector(const WordVectorTable& table, std::string_view name);

double cosine(std::span<const double> u, std::span<const double> v);

}  // namespace isi
