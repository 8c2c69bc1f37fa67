#pragma once

#include <stdexcept>
#include <string>

namespace nugr {

// Base of every error thrown by the library. `where` is a JSON-style path
// (e.g. "frames[3].instances[0].category") or a file:line location.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, std::string where, const std::string& what)
      : std::runtime_error(where.empty() ? kind + ": " + what
                                         : kind + " at " + where + ": " + what),
        kind_(std::move(kind)),
        where_(std::move(where)),
        message_(what) {}

  const std::string& kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string kind_;
  std::string where_;
  std::string message_;
};

#define NUGR_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what, std::string where = {})        \
        : Error(#Name, std::move(where), what) {}                         \
  };

NUGR_DEFINE_ERROR(ParseError)
NUGR_DEFINE_ERROR(ValidationError)
NUGR_DEFINE_ERROR(IoError)
NUGR_DEFINE_ERROR(InstanceNotFound)
NUGR_DEFINE_ERROR(DegenerateInput)
NUGR_DEFINE_ERROR(MissingValue)
NUGR_DEFINE_ERROR(UnknownPromptId)
NUGR_DEFINE_ERROR(DimensionMismatch)
NUGR_DEFINE_ERROR(ProtocolError)
NUGR_DEFINE_ERROR(Truncated)
NUGR_DEFINE_ERROR(ZeroVector)

#undef NUGR_DEFINE_ERROR

}  // namespace nugr
