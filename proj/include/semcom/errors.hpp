#pragma once

#include <stdexcept>
#include <string>

namespace semcom {

// I/O and wire-format failures carry a category so callers (and tests) can
// tell apart a bad header, a short read, and an inconsistent packet without
// string matching.
class ParseError : public std::runtime_error {
 public:
  enum class Kind {
    BadMagic,
    BadVersion,
    Truncated,
    BadExtent,
    BadValue,
    CorruptPacket,
  };

  ParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace semcom
