#include "prefalign/model.hpp"

namespace prefalign {

Vocabulary::Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {
  index_.fill(-1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto& slot = index_[static_cast<unsigned char>(symbols_[i])];
    if (slot != -1) throw DomainError("duplicate symbol in vocabulary");
    slot = static_cast<int>(i);
  }
  if (size() < 8) throw DomainError("vocabulary must have at least 8 entries");
}

Vocabulary Vocabulary::byte_level() {
  std::string all(256, '\0');
  for (int b = 0; b < 256; ++b) all[static_cast<std::size_t>(b)] = static_cast<char>(b);
  return Vocabulary(std::move(all));
}

Vocabulary Vocabulary::from_alphabet(std::string_view alphabet) { return Vocabulary(std::string(alphabet)); }

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence out;
  out.reserve(text.size());
  for (char c : text) {
    const int id = index_[static_cast<unsigned char>(c)];
    out.push_back(id >= 0 ? id : unk());
  }
  return out;
}

std::string Vocabulary::decode(const TokenSequence& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw DomainError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(size()));
    }
    if (id < base()) out.push_back(symbols_[static_cast<std::size_t>(id)]);
  }
  return out;
}

json Vocabulary::to_json() const {
  if (symbols_.size() == 256) return {{"kind", "bytes"}};
  json codes = json::array();
  for (char c : symbols_) codes.push_back(static_cast<int>(static_cast<unsigned char>(c)));
  return {{"kind", "alphabet"}, {"symbols", codes}};
}

Vocabulary Vocabulary::from_json(const json& j) {
  if (j.value("kind", std::string("bytes")) == "bytes") return byte_level();
  std::string s;
  for (const auto& c : j.at("symbols")) s.push_back(static_cast<char>(c.get<int>()));
  return Vocabulary(std::move(s));
}

}  // namespace prefalign
