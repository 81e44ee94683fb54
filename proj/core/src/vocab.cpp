#include "thinktuning/vocab.hpp"

#include <stdexcept>
#include <unordered_set>

namespace thinktuning {

Vocab Vocab::standard() {
  return Vocab({
      "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
      "+", "-", "*", "=", "?",
      "<ans>", "</ans>",
      "<eos>",
      "<opinion:correct>", "<opinion:incorrect>",
      "<reflect:conflict>", "<reflect:critique>", "<reflect:agree>", "<reflect:consult>",
      "<marker>",
  });
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_)
    if (!seen.insert(t).second)
      throw std::invalid_argument("vocab: duplicate token \"" + t + "\"");
  index();
}

void Vocab::index() {
  digit0_ = id_of("0");
  for (int d = 1; d < 10; ++d)
    if (id_of(std::to_string(d)) != digit0_ + d)
      throw std::invalid_argument("vocab: digits 0-9 must be contiguous");
  plus_ = id_of("+");
  eq_ = id_of("=");
  question_ = id_of("?");
  ans_open_ = id_of("<ans>");
  ans_close_ = id_of("</ans>");
  eos_ = id_of("<eos>");
  opinion_correct_ = id_of("<opinion:correct>");
  opinion_incorrect_ = id_of("<opinion:incorrect>");
  reflect_[0] = id_of("<reflect:conflict>");
  reflect_[1] = id_of("<reflect:critique>");
  reflect_[2] = id_of("<reflect:agree>");
  reflect_[3] = id_of("<reflect:consult>");
  marker_ = id_of("<marker>");
  for (int needed : {digit0_, plus_, eq_, question_, ans_open_, ans_close_, eos_,
                     opinion_correct_, opinion_incorrect_, reflect_[0], reflect_[1],
                     reflect_[2], reflect_[3], marker_})
    if (needed < 0) throw std::invalid_argument("vocab: required token missing");
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocab: token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id_of(const std::string& token) const {
  for (int i = 0; i < size(); ++i)
    if (tokens_[static_cast<std::size_t>(i)] == token) return i;
  return -1;
}

int Vocab::digit(int d) const {
  if (d < 0 || d > 9) throw std::out_of_range("vocab: digit out of range");
  return digit0_ + d;
}

int Vocab::reflect(int behavior) const {
  if (behavior < 0 || behavior > 3) throw std::out_of_range("vocab: behavior index out of range");
  return reflect_[behavior];
}

bool Vocab::is_digit(int id, int* out_digit) const {
  if (id >= digit0_ && id < digit0_ + 10) {
    if (out_digit) *out_digit = id - digit0_;
    return true;
  }
  return false;
}

std::string Vocab::render(const std::vector<int>& ids) const {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += " ";
    s += token(ids[i]);
  }
  return s;
}

}  // namespace thinktuning
