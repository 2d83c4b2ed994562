#include "ttse/phoneme.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ttse/common.hpp"

namespace ttse {

PhonemeInventory::PhonemeInventory() {
  symbols_ = {"sil", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",
              "DH",  "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH",
              "K",   "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",
              "SH",  "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
  for (int i = 0; i < static_cast<int>(symbols_.size()); ++i) index_[symbols_[i]] = i;
  sil_id_ = index_.at("sil");
}

const PhonemeInventory& PhonemeInventory::instance() {
  static PhonemeInventory inv;
  return inv;
}

int PhonemeInventory::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  require(it != index_.end(), Error::Kind::validation, "unknown phoneme symbol: " + symbol);
  return it->second;
}

bool PhonemeInventory::contains(const std::string& symbol) const {
  return index_.count(symbol) > 0;
}

const std::string& PhonemeInventory::symbol_of(int id) const {
  require(id >= 0 && id < size(), Error::Kind::validation,
          "phoneme id out of range: " + std::to_string(id));
  return symbols_[id];
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream iss(text);
  std::string w;
  while (iss >> w) words.push_back(w);
  return words;
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), Error::Kind::io, "cannot open lexicon: " + path);
  Lexicon lex;
  std::string line;
  int row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    require(tab != std::string::npos, Error::Kind::format,
            "lexicon row " + std::to_string(row) + ": missing tab");
    std::string word = line.substr(0, tab);
    std::istringstream iss(line.substr(tab + 1));
    std::vector<std::string> phs;
    std::string p;
    while (iss >> p) phs.push_back(p);
    require(!phs.empty(), Error::Kind::format,
            "lexicon row " + std::to_string(row) + ": no phonemes");
    lex.add(word, phs);
  }
  return lex;
}

void Lexicon::add(const std::string& word, const std::vector<std::string>& phonemes) {
  const auto& inv = PhonemeInventory::instance();
  std::vector<int> ids;
  ids.reserve(phonemes.size());
  for (const auto& p : phonemes) ids.push_back(inv.id_of(p));
  entries_[lowercase(word)] = std::move(ids);
}

const std::vector<int>& Lexicon::phonemes_of(const std::string& word) const {
  auto it = entries_.find(lowercase(word));
  require(it != entries_.end(), Error::Kind::validation, "out-of-lexicon word: " + word);
  return it->second;
}

bool Lexicon::contains(const std::string& word) const {
  return entries_.count(lowercase(word)) > 0;
}

void Lexicon::save(const std::string& path) const {
  std::ofstream f(path);
  require(f.good(), Error::Kind::io, "cannot write lexicon: " + path);
  const auto& inv = PhonemeInventory::instance();
  for (const auto& [word, ids] : entries_) {
    f << word << '\t';
    for (size_t i = 0; i < ids.size(); ++i) f << (i ? " " : "") << inv.symbol_of(ids[i]);
    f << '\n';
  }
}

}  // namespace ttse
