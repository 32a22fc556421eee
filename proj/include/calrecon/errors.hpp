#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace calrecon {

// Every failure the library reports derives from Error so callers (the CLI
// in particular) can map categories onto exit codes.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error
{
public:
  using Error::Error;
};

class NumericError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

// Malformed file contents. offset is the byte position of the offending
// field, or npos when the problem is not tied to a position (e.g. a
// descriptor key).
class FormatError : public Error
{
public:
  static constexpr std::uint64_t npos = ~std::uint64_t{0};

  explicit FormatError(std::string const &what, std::uint64_t offset = npos)
    : Error(offset == npos ? what : what + " (at byte " + std::to_string(offset) + ")")
    , offset_(offset)
  {
  }

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

inline void require(bool cond, char const *msg)
{
  if (!cond) { throw InvalidArgument(msg); }
}

} // namespace calrecon
