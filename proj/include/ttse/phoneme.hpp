#pragma once

#include <map>
#include <string>
#include <vector>

namespace ttse {

// Project phoneme inventory: ARPAbet symbols plus "sil". Ids are stable
// across the project; the mask token occupies one extra embedding row past
// the inventory.
class PhonemeInventory {
 public:
  static const PhonemeInventory& instance();

  int id_of(const std::string& symbol) const;   // throws on unknown symbol
  bool contains(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;
  int size() const { return static_cast<int>(symbols_.size()); }
  int mask_id() const { return size(); }        // extra row, not a real phoneme
  int sil_id() const { return sil_id_; }

 private:
  PhonemeInventory();
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
  int sil_id_ = 0;
};

// Flat pronouncing lexicon: TSV rows `word<TAB>ph1 ph2 ...`. Lookup is
// case-insensitive; out-of-lexicon words are errors.
class Lexicon {
 public:
  static Lexicon load(const std::string& path);
  void add(const std::string& word, const std::vector<std::string>& phonemes);
  const std::vector<int>& phonemes_of(const std::string& word) const;
  bool contains(const std::string& word) const;
  void save(const std::string& path) const;

 private:
  std::map<std::string, std::vector<int>> entries_;
};

std::string lowercase(const std::string& s);
std::vector<std::string> split_words(const std::string& text);

}  // namespace ttse
