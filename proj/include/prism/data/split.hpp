#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prism/data/record.hpp"
#include "prism/errors.hpp"

namespace prism::data {

/// "chr3", "Chr3" and "3" all name the same chromosome.
inline std::string canonical_chromosome(std::string_view name) {
  if (name.size() > 3 && (name.substr(0, 3) == "chr" || name.substr(0, 3) == "Chr" || name.substr(0, 3) == "CHR"))
    name.remove_prefix(3);
  std::string out(name);
  if (out == "x") out = "X";
  if (out == "y") out = "Y";
  return out;
}

/// Chromosome-level hold-out. Everything not listed is training data.
struct SplitSpec {
  std::set<std::string> validation_chromosomes{"3", "21"};
  std::set<std::string> test_chromosomes{"22", "X"};

  void validate() const {
    for (const auto& c : validation_chromosomes)
      PRISM_REQUIRE(!test_chromosomes.count(c), "split: chromosome " + c + " is in both validation and test");
  }
};

struct SplitResult {
  std::vector<GeneRecord> train;
  std::vector<GeneRecord> validation;
  std::vector<GeneRecord> test;
};

enum class Part { train, validation, test };

inline Part assign_part(const SplitSpec& spec, std::string_view chromosome) {
  const auto c = canonical_chromosome(chromosome);
  auto listed = [&](const std::set<std::string>& s) {
    for (const auto& x : s)
      if (canonical_chromosome(x) == c) return true;
    return false;
  };
  if (listed(spec.validation_chromosomes)) return Part::validation;
  if (listed(spec.test_chromosomes)) return Part::test;
  return Part::train;
}

/// Partition records by chromosome; each part is sorted by gene_id.
inline SplitResult split(std::vector<GeneRecord> records, const SplitSpec& spec = {}) {
  spec.validate();
  SplitResult out;
  for (auto& r : records) {
    switch (assign_part(spec, r.chromosome)) {
      case Part::train: out.train.push_back(std::move(r)); break;
      case Part::validation: out.validation.push_back(std::move(r)); break;
      case Part::test: out.test.push_back(std::move(r)); break;
    }
  }
  auto by_id = [](const GeneRecord& a, const GeneRecord& b) { return a.gene_id < b.gene_id; };
  std::sort(out.train.begin(), out.train.end(), by_id);
  std::sort(out.validation.begin(), out.validation.end(), by_id);
  std::sort(out.test.begin(), out.test.end(), by_id);
  return out;
}

}  // namespace prism::data
