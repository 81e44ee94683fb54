#pragma once

#include <string>
#include <vector>

namespace thinktuning {

// Fixed token table for the toy setting: digits, arithmetic symbols, answer
// delimiters, EOS, the teacher's opinion and reflective-phrase tokens, and a
// distinguished marker token for the behavior-instillation experiment. Ids
// are dense 0..size()-1 in the order listed by standard().
class Vocab {
 public:
  static Vocab standard();

  // Rebuild from an explicit token list (checkpoint load). Throws if tokens
  // are not distinct or any required token is missing.
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  int id_of(const std::string& token) const;  // -1 if absent

  int digit(int d) const;     // 0..9
  int plus() const { return plus_; }
  int eq() const { return eq_; }
  int question() const { return question_; }
  int ans_open() const { return ans_open_; }
  int ans_close() const { return ans_close_; }
  int eos() const { return eos_; }
  int opinion(bool correct) const { return correct ? opinion_correct_ : opinion_incorrect_; }
  int reflect(int behavior) const;  // 0..3, order matches teacher::Behavior
  int marker() const { return marker_; }

  bool is_digit(int id, int* out_digit = nullptr) const;

  // Render a token-id sequence as a display string (ids joined by spaces).
  std::string render(const std::vector<int>& ids) const;

 private:
  void index();

  std::vector<std::string> tokens_;
  int digit0_ = -1, plus_ = -1, eq_ = -1, question_ = -1;
  int ans_open_ = -1, ans_close_ = -1, eos_ = -1;
  int opinion_correct_ = -1, opinion_incorrect_ = -1;
  int reflect_[4] = {-1, -1, -1, -1};
  int marker_ = -1;
};

}  // namespace thinktuning
