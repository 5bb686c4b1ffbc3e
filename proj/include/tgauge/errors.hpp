#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tgauge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vector with (numerically) zero spread was fed to strict layer norm.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Non-finite value (NaN/Inf) in an input or an intermediate result.
class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling gave up; usually an unreasonable condition bound.
class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  RankDeficient(int block, int head, const std::string& what)
      : Error(what), block_(block), head_(head) {}
  int block() const { return block_; }
  int head() const { return head_; }

 private:
  int block_;
  int head_;
};

class Overflow : public Error {
 public:
  using Error::Error;
};

/// Weight or gauge file does not match the expected JSON layout. Carries one
/// entry per offending field path.
class SchemaError : public Error {
 public:
  explicit SchemaError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "schema error:";
    for (const auto& s : p) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

/// File is a valid weight file, but for the other architecture variant.
class ModeMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace tgauge
